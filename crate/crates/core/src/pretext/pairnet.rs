use super::arch::PairNetConfig;
use crate::error::Result;
use crate::nn::gradcheck::Block;
use crate::nn::ops::softmax_xent;
use crate::nn::{Net, Objective, Param, Tape, Tensor};
use crate::rng::Rng;
use crate::sampler::Patch;

/// Stacks preprocessed patches into a `[N, 3, P, P]` tensor.
pub fn patch_batch(patches: &[&Patch]) -> Result<Tensor> {
    let size = patches.first().map(|p| p.size).unwrap_or(0);
    let planes: Vec<Vec<f64>> = patches.iter().map(|p| p.to_chw()).collect();
    let refs: Vec<&[f64]> = planes.iter().map(|v| &v[..]).collect();
    Tensor::stack(&[3, size, size], &refs)
}

/// Late-fusion pair classifier. One trunk serves both patches, so the two
/// branches share storage by construction; the fusion net sees
/// `[embed(a) ‖ embed(b)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairNet {
    pub config: PairNetConfig,
    pub trunk: Net,
    pub fusion: Net,
}

pub struct PairTape {
    trunk: Tape,
    fusion: Tape,
    batch: usize,
    embed_dim: usize,
}

impl PairTape {
    pub fn signature(&self) -> u64 {
        self.trunk.signature() ^ self.fusion.signature().rotate_left(1)
    }
}

fn stack_branches(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let mut data = Vec::with_capacity(a.len() + b.len());
    data.extend_from_slice(a.data());
    data.extend_from_slice(b.data());
    let mut shape = a.shape().to_vec();
    shape[0] += b.batch();
    Tensor::new(shape, data)
}

fn split_branches(x: &Tensor, n: usize) -> Result<(Tensor, Tensor)> {
    let per = x.sample_len();
    let mut shape = x.shape().to_vec();
    shape[0] = n;
    let a = Tensor::new(shape.clone(), x.data()[..n * per].to_vec())?;
    let b = Tensor::new(shape, x.data()[n * per..].to_vec())?;
    Ok((a, b))
}

impl PairNet {
    pub fn new(config: PairNetConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let trunk = Net::new(config.trunk.clone(), rng)?;
        let fusion = Net::new(config.fusion.clone(), rng)?;
        Ok(Self { config, trunk, fusion })
    }

    pub fn embed_dim(&self) -> usize {
        self.trunk.output_shape().iter().product()
    }

    /// Training-mode logits. Both patch batches go through the trunk as one
    /// `2N` batch, so batch-norm statistics pool over both branches.
    pub fn forward_train(&self, a: &Tensor, b: &Tensor) -> Result<(Tensor, PairTape)> {
        let n = a.batch();
        let (e, trunk) = self.trunk.forward_train(&stack_branches(a, b)?)?;
        let (ea, eb) = split_branches(&e, n)?;
        let fused = Tensor::concat_features(&ea, &eb)?;
        let (logits, fusion) = self.fusion.forward_train(&fused)?;
        let embed_dim = ea.sample_len();
        Ok((logits, PairTape { trunk, fusion, batch: n, embed_dim }))
    }

    /// Accumulates gradients; trunk gradients are the sum of both branches'
    /// contributions.
    pub fn backward(&mut self, tape: &PairTape, dlogits: &Tensor) -> Result<()> {
        let dfused = self.fusion.backward(&tape.fusion, dlogits)?;
        let (da, db) = dfused.split_features(tape.embed_dim)?;
        let de = stack_branches(&da, &db)?;
        debug_assert_eq!(de.batch(), 2 * tape.batch);
        self.trunk.backward(&tape.trunk, &de)?;
        Ok(())
    }

    pub fn commit_running_stats(&mut self, tape: &PairTape) {
        self.trunk.commit_running_stats(&tape.trunk);
        self.fusion.commit_running_stats(&tape.fusion);
    }

    /// Inference-mode logits `[N, 8]`.
    pub fn forward_infer(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        let ea = self.trunk.forward_infer(a)?;
        let eb = self.trunk.forward_infer(b)?;
        self.fusion.forward_infer(&Tensor::concat_features(&ea, &eb)?)
    }

    /// Inference-mode single-stack activations after layer `layer`.
    pub fn embed(&self, x: &Tensor, layer: &str) -> Result<Tensor> {
        let end = self.config.trunk.index_of(layer)? + 1;
        self.trunk.forward_infer_to(x, end)
    }

    pub fn zero_grad(&mut self) {
        self.trunk.zero_grad();
        self.fusion.zero_grad();
    }

    pub fn params_mut(&mut self) -> Vec<(String, &mut Param)> {
        let mut out: Vec<(String, &mut Param)> =
            self.trunk.params_mut().into_iter().map(|(n, p)| (format!("trunk.{n}"), p)).collect();
        out.extend(self.fusion.params_mut().into_iter().map(|(n, p)| (format!("fusion.{n}"), p)));
        out
    }

    pub fn params(&self) -> Vec<(String, &Param)> {
        let mut out: Vec<(String, &Param)> =
            self.trunk.params().into_iter().map(|(n, p)| (format!("trunk.{n}"), p)).collect();
        out.extend(self.fusion.params().into_iter().map(|(n, p)| (format!("fusion.{n}"), p)));
        out
    }

    pub fn running_stats(&self) -> Vec<(String, Tensor)> {
        let mut out: Vec<_> = self.trunk.running_stats().into_iter().map(|(n, t)| (format!("trunk.{n}"), t)).collect();
        out.extend(self.fusion.running_stats().into_iter().map(|(n, t)| (format!("fusion.{n}"), t)));
        out
    }
}

/// Gradient-check objective over every pair-net parameter, with the loss
/// being cross-entropy on fixed labels.
pub struct PairObjective {
    pub net: PairNet,
    pub a: Tensor,
    pub b: Tensor,
    pub labels: Vec<usize>,
}

impl PairObjective {
    fn param(&mut self, block: usize) -> &mut Param {
        let mut all = self.net.params_mut();
        all.swap_remove(block).1
    }
}

impl Objective for PairObjective {
    fn blocks(&self) -> Vec<Block> {
        self.net
            .params()
            .into_iter()
            .map(|(name, p)| Block {
                layer: name.rsplit_once('.').map(|(l, _)| l.to_owned()).unwrap_or(name.clone()),
                len: p.value.len(),
            })
            .collect()
    }

    fn analytic(&mut self) -> Result<Vec<Vec<f64>>> {
        self.net.zero_grad();
        let (logits, tape) = self.net.forward_train(&self.a, &self.b)?;
        let (_, d) = softmax_xent(&logits, &self.labels)?;
        self.net.backward(&tape, &d)?;
        Ok(self.net.params().into_iter().map(|(_, p)| p.grad.data().to_vec()).collect())
    }

    fn perturbed(&mut self, block: usize, i: usize, delta: f64) -> Result<(f64, u64)> {
        let orig = self.param(block).value.data()[i];
        self.param(block).value.data_mut()[i] = orig + delta;
        let out = self
            .net
            .forward_train(&self.a, &self.b)
            .and_then(|(logits, tape)| Ok((softmax_xent(&logits, &self.labels)?.0, tape.signature())));
        self.param(block).value.data_mut()[i] = orig;
        out
    }
}
