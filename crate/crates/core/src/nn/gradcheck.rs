//! Central-difference gradient checking.
//!
//! A model exposes named coordinate blocks (parameters and layer inputs)
//! through [`Objective`]. Coordinates whose ±h perturbation changes a ReLU
//! mask or pool routing are skipped, since the loss is not differentiable
//! across those boundaries.

use rand::seq::index::sample;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use super::net::{Net, Tape};
use super::ops::softmax_xent;
use super::spec::LayerSpec;
use super::tensor::Tensor;
use crate::error::Result;
use crate::rng::{self, Rng};

#[derive(Debug, Clone)]
pub struct Block {
    /// Layer the block is reported under.
    pub layer: String,
    pub len: usize,
}

pub trait Objective {
    fn blocks(&self) -> Vec<Block>;
    /// Analytic gradient of every block, in `blocks()` order.
    fn analytic(&mut self) -> Result<Vec<Vec<f64>>>;
    /// Loss and activation signature with coordinate `i` of block `b`
    /// shifted by `delta` (the model is restored afterwards).
    fn perturbed(&mut self, b: usize, i: usize, delta: f64) -> Result<(f64, u64)>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckOptions {
    pub h: f64,
    pub coords_per_block: usize,
    /// Denominator floor of the relative error. Structurally zero gradients
    /// (biases feeding batch norm) only see roundoff near 1e-10.
    pub floor: f64,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            h: 1e-5,
            coords_per_block: 200,
            floor: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerCheck {
    pub layer: String,
    pub checked: usize,
    pub skipped: usize,
    pub max_rel_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradReport {
    pub layers: Vec<LayerCheck>,
}

impl GradReport {
    pub fn max_rel_err(&self) -> f64 {
        self.layers.iter().map(|l| l.max_rel_err).fold(0.0, f64::max)
    }

    pub fn checked(&self) -> usize {
        self.layers.iter().map(|l| l.checked).sum()
    }
}

pub fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

pub fn grad_check(obj: &mut dyn Objective, opts: &GradCheckOptions) -> Result<GradReport> {
    let blocks = obj.blocks();
    let analytic = obj.analytic()?;
    let mut rng = rng::seeded(opts.seed);
    let mut layers: Vec<LayerCheck> = Vec::new();
    for (bi, block) in blocks.iter().enumerate() {
        let coords: Vec<usize> = if block.len <= opts.coords_per_block {
            (0..block.len).collect()
        } else {
            let mut v = sample(&mut rng, block.len, opts.coords_per_block).into_vec();
            v.sort_unstable();
            v
        };
        let (_, base_sig) = obj.perturbed(bi, 0, 0.0)?;
        let (mut checked, mut skipped, mut worst) = (0, 0, 0.0f64);
        for i in coords {
            let (lp, sp) = obj.perturbed(bi, i, opts.h)?;
            let (lm, sm) = obj.perturbed(bi, i, -opts.h)?;
            if sp != base_sig || sm != base_sig {
                skipped += 1;
                continue;
            }
            let numeric = (lp - lm) / (2.0 * opts.h);
            worst = worst.max(rel_err(analytic[bi][i], numeric, opts.floor));
            checked += 1;
        }
        match layers.last_mut() {
            Some(l) if l.layer == block.layer => {
                l.checked += checked;
                l.skipped += skipped;
                l.max_rel_err = l.max_rel_err.max(worst);
            }
            _ => layers.push(LayerCheck {
                layer: block.layer.clone(),
                checked,
                skipped,
                max_rel_err: worst,
            }),
        }
    }
    Ok(GradReport { layers })
}

/// Scalar head used to turn a net's output into a loss.
#[derive(Debug, Clone)]
pub enum LossHead {
    /// `L = Σ r ⊙ y` for a fixed random `r`.
    Projection(Tensor),
    /// Mean cross-entropy against fixed labels.
    Xent(Vec<usize>),
}

impl LossHead {
    pub fn eval(&self, y: &Tensor) -> Result<(f64, Tensor)> {
        match self {
            LossHead::Projection(r) => {
                let loss = r.data().iter().zip(y.data()).map(|(a, b)| a * b).sum();
                Ok((loss, Tensor::new(y.shape().to_vec(), r.data().to_vec())?))
            }
            LossHead::Xent(labels) => softmax_xent(y, labels),
        }
    }

    /// Cross-entropy on random labels when the net ends in a softmax head,
    /// otherwise a random projection.
    pub fn for_net(net: &Net, batch: usize, rng: &mut Rng) -> Self {
        let out: usize = net.output_shape().iter().product();
        match net.spec().layers.last().map(|l| &l.spec) {
            Some(LayerSpec::SoftmaxXent { classes }) => {
                LossHead::Xent((0..batch).map(|_| rand::Rng::random_range(rng, 0..*classes)).collect())
            }
            _ => {
                let r = (0..batch * out).map(|_| StandardNormal.sample(rng)).collect();
                LossHead::Projection(Tensor::new(vec![batch, out], r).expect("sized"))
            }
        }
    }
}

enum Target {
    Param { layer: usize, which: usize },
    Input { layer: usize },
}

/// Gradient-check objective for a single [`Net`] in training mode. Checks
/// every parameter and the input of every layer.
pub struct NetObjective {
    pub net: Net,
    pub x: Tensor,
    pub head: LossHead,
    targets: Vec<(Block, Target)>,
    /// Activation entering each layer on the unperturbed input.
    acts: Vec<Tensor>,
}

impl NetObjective {
    pub fn new(net: Net, x: Tensor, head: LossHead) -> Result<Self> {
        let mut targets = Vec::new();
        let mut acts = Vec::with_capacity(net.len());
        let mut cur = x.clone();
        for i in 0..net.len() {
            let name = net.layer_name(i).to_owned();
            let layer = net.layer_params(i).iter().map(|p| p.value.len()).collect::<Vec<_>>();
            for (which, len) in layer.into_iter().enumerate() {
                targets.push((Block { layer: name.clone(), len }, Target::Param { layer: i, which }));
            }
            targets.push((Block { layer: name, len: cur.len() }, Target::Input { layer: i }));
            acts.push(cur.clone());
            cur = net.forward_range(i, i + 1, &cur)?.0;
        }
        Ok(Self { net, x, head, targets, acts })
    }

    fn loss_from(&self, start: usize, input: &Tensor) -> Result<(f64, Tape)> {
        let (y, tape) = self.net.forward_range(start, self.net.len(), input)?;
        Ok((self.head.eval(&y)?.0, tape))
    }
}

impl Objective for NetObjective {
    fn blocks(&self) -> Vec<Block> {
        self.targets.iter().map(|(b, _)| b.clone()).collect()
    }

    fn analytic(&mut self) -> Result<Vec<Vec<f64>>> {
        self.net.zero_grad();
        let (y, tape) = self.net.forward_train(&self.x)?;
        let (_, dy) = self.head.eval(&y)?;
        self.net.backward(&tape, &dy)?;
        let mut out = Vec::with_capacity(self.targets.len());
        for (_, t) in &self.targets {
            out.push(match *t {
                Target::Param { layer, which } => self.net.layer_params_mut(layer)[which].grad.data().to_vec(),
                Target::Input { layer } => {
                    let mut scratch = self.net.clone();
                    let (y, tape) = scratch.forward_range(layer, scratch.len(), &self.acts[layer])?;
                    let (_, dy) = self.head.eval(&y)?;
                    scratch.backward(&tape, &dy)?.into_data()
                }
            });
        }
        Ok(out)
    }

    fn perturbed(&mut self, b: usize, i: usize, delta: f64) -> Result<(f64, u64)> {
        match self.targets[b].1 {
            Target::Param { layer, which } => {
                let orig = self.net.layer_params_mut(layer)[which].value.data()[i];
                self.net.layer_params_mut(layer)[which].value.data_mut()[i] = orig + delta;
                let r = self.loss_from(0, &self.x);
                self.net.layer_params_mut(layer)[which].value.data_mut()[i] = orig;
                let (loss, tape) = r?;
                Ok((loss, tape.signature()))
            }
            Target::Input { layer } => {
                let mut a = self.acts[layer].clone();
                a.data_mut()[i] += delta;
                let (loss, tape) = self.loss_from(layer, &a)?;
                Ok((loss, tape.signature()))
            }
        }
    }
}
