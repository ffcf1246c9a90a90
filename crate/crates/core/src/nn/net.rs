use std::hash::{DefaultHasher, Hash, Hasher};

use rand_distr::{Distribution, Normal};

use super::ops::{self, BatchNormCache};
use super::spec::{LayerSpec, NetSpec};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Momentum of the running batch-norm statistics used in inference mode.
pub const BN_RUNNING_MOMENTUM: f64 = 0.9;

/// A trainable array with its gradient accumulator and momentum buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Tensor,
    pub grad: Tensor,
    pub velocity: Tensor,
}

impl Param {
    pub fn new(value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape());
        let velocity = Tensor::zeros(value.shape());
        Self { value, grad, velocity }
    }

    fn accumulate(&mut self, g: &Tensor) {
        for (a, b) in self.grad.data_mut().iter_mut().zip(g.data()) {
            *a += b;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Layer {
    Conv { w: Param, b: Param, stride: usize, pad: usize },
    Pool { kernel: usize, stride: usize },
    Relu,
    Lrn { size: usize, alpha: f64, beta: f64, k: f64 },
    BatchNorm { eps: f64, mean: Vec<f64>, var: Vec<f64> },
    Fc { w: Param, b: Param },
    Xent,
}

#[derive(Debug, Clone)]
enum Cache {
    Input(Tensor),
    Pool { shape: Vec<usize>, argmax: Vec<u32> },
    Lrn { x: Tensor, scale: Tensor },
    BatchNorm(BatchNormCache),
    Nothing,
}

/// Everything a training-mode forward pass saves for backward.
#[derive(Debug, Clone)]
pub struct Tape {
    start: usize,
    caches: Vec<Cache>,
}

impl Tape {
    /// Hash of every ReLU mask and max-pool routing decision. Two forward
    /// passes with the same signature lie on the same linear piece.
    pub fn signature(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.start.hash(&mut h);
        for c in &self.caches {
            match c {
                Cache::Pool { argmax, .. } => argmax.hash(&mut h),
                Cache::Input(x) => {
                    for v in x.data() {
                        (*v > 0.0).hash(&mut h);
                    }
                }
                _ => {}
            }
        }
        h.finish()
    }

    /// Batch statistics of every batch-norm layer: `(layer index, mean, var)`.
    pub fn batch_stats(&self) -> Vec<(usize, &[f64], &[f64])> {
        self.caches
            .iter()
            .enumerate()
            .filter_map(|(i, c)| match c {
                Cache::BatchNorm(bn) => Some((self.start + i, &bn.mean[..], &bn.var[..])),
                _ => None,
            })
            .collect()
    }
}

/// A feed-forward stack built from a [`NetSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct Net {
    spec: NetSpec,
    shapes: Vec<Vec<usize>>,
    layers: Vec<Layer>,
}

fn gaussian(shape: &[usize], std: f64, rng: &mut Rng) -> Tensor {
    let normal = Normal::new(0.0, std).expect("finite std");
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| normal.sample(rng)).collect()).expect("sized")
}

impl Net {
    /// Builds the net with `N(0, 2/fan_in)` weights and zero biases.
    pub fn new(spec: NetSpec, rng: &mut Rng) -> Result<Self> {
        let shapes = spec.shapes()?;
        let mut layers = Vec::with_capacity(spec.layers.len());
        let mut cur = spec.input.clone();
        for (l, out) in spec.layers.iter().zip(&shapes) {
            let layer = match l.spec {
                LayerSpec::Conv { kernel, out_channels, stride, pad } => {
                    let fan_in = cur[0] * kernel * kernel;
                    let w = gaussian(&[out_channels, cur[0], kernel, kernel], (2.0 / fan_in as f64).sqrt(), rng);
                    Layer::Conv {
                        w: Param::new(w),
                        b: Param::new(Tensor::zeros(&[out_channels])),
                        stride,
                        pad,
                    }
                }
                LayerSpec::Fc { out_units } => {
                    let fan_in: usize = cur.iter().product();
                    let w = gaussian(&[out_units, fan_in], (2.0 / fan_in as f64).sqrt(), rng);
                    Layer::Fc {
                        w: Param::new(w),
                        b: Param::new(Tensor::zeros(&[out_units])),
                    }
                }
                LayerSpec::Pool { kernel, stride } => Layer::Pool { kernel, stride },
                LayerSpec::Relu => Layer::Relu,
                LayerSpec::Lrn { size, alpha, beta, k } => Layer::Lrn { size, alpha, beta, k },
                LayerSpec::BatchnormNa { epsilon } => Layer::BatchNorm {
                    eps: epsilon,
                    mean: vec![0.0; cur[0]],
                    var: vec![1.0; cur[0]],
                },
                LayerSpec::SoftmaxXent { .. } => Layer::Xent,
            };
            layers.push(layer);
            cur = out.clone();
        }
        Ok(Self { spec, shapes, layers })
    }

    pub fn spec(&self) -> &NetSpec {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn layer_name(&self, i: usize) -> &str {
        &self.spec.layers[i].name
    }

    /// Per-sample shape entering layer `i`.
    pub fn input_shape(&self, i: usize) -> &[usize] {
        if i == 0 {
            &self.spec.input
        } else {
            &self.shapes[i - 1]
        }
    }

    pub fn output_shape(&self) -> &[usize] {
        self.shapes.last().map(|s| &s[..]).unwrap_or(&self.spec.input)
    }

    fn shaped_input(&self, start: usize, x: &Tensor) -> Result<Tensor> {
        let want = self.input_shape(start);
        if x.sample_len() != want.iter().product::<usize>() {
            return Err(Error::ShapeMismatch(format!(
                "layer {start} expects per-sample {want:?}, got {:?}",
                &x.shape()[1.min(x.shape().len())..]
            )));
        }
        let mut shape = vec![x.batch()];
        shape.extend_from_slice(want);
        x.clone().reshape(&shape)
    }

    /// Training-mode pass over layers `start..end` (batch statistics,
    /// caches recorded).
    pub fn forward_range(&self, start: usize, end: usize, x: &Tensor) -> Result<(Tensor, Tape)> {
        let mut cur = self.shaped_input(start, x)?;
        let mut caches = Vec::with_capacity(end - start);
        for layer in &self.layers[start..end] {
            let (y, cache) = match layer {
                Layer::Conv { w, b, stride, pad } => {
                    (ops::conv2d_forward(&cur, &w.value, &b.value, *stride, *pad)?, Cache::Input(cur))
                }
                Layer::Fc { w, b } => (ops::fc_forward(&cur, &w.value, &b.value)?, Cache::Input(cur)),
                Layer::Pool { kernel, stride } => {
                    let (y, argmax) = ops::maxpool_forward(&cur, *kernel, *stride)?;
                    (y, Cache::Pool { shape: cur.shape().to_vec(), argmax })
                }
                Layer::Relu => (ops::relu_forward(&cur), Cache::Input(cur)),
                Layer::Lrn { size, alpha, beta, k } => {
                    let (y, scale) = ops::lrn_forward(&cur, *size, *alpha, *beta, *k)?;
                    (y, Cache::Lrn { x: cur, scale })
                }
                Layer::BatchNorm { eps, .. } => {
                    let (y, c) = ops::batchnorm_na_forward_train(&cur, *eps)?;
                    (y, Cache::BatchNorm(c))
                }
                Layer::Xent => (cur, Cache::Nothing),
            };
            cur = y;
            caches.push(cache);
        }
        Ok((cur, Tape { start, caches }))
    }

    pub fn forward_train(&self, x: &Tensor) -> Result<(Tensor, Tape)> {
        self.forward_range(0, self.len(), x)
    }

    /// Inference-mode pass: batch norm uses running statistics, so each
    /// sample's output is independent of the rest of the batch.
    pub fn forward_infer(&self, x: &Tensor) -> Result<Tensor> {
        self.forward_infer_to(x, self.len())
    }

    /// Inference-mode pass through layers `0..end`.
    pub fn forward_infer_to(&self, x: &Tensor, end: usize) -> Result<Tensor> {
        let mut cur = self.shaped_input(0, x)?;
        for layer in &self.layers[..end] {
            cur = match layer {
                Layer::Conv { w, b, stride, pad } => ops::conv2d_forward(&cur, &w.value, &b.value, *stride, *pad)?,
                Layer::Fc { w, b } => ops::fc_forward(&cur, &w.value, &b.value)?,
                Layer::Pool { kernel, stride } => ops::maxpool_forward(&cur, *kernel, *stride)?.0,
                Layer::Relu => ops::relu_forward(&cur),
                Layer::Lrn { size, alpha, beta, k } => ops::lrn_forward(&cur, *size, *alpha, *beta, *k)?.0,
                Layer::BatchNorm { eps, mean, var } => ops::batchnorm_na_forward_infer(&cur, *eps, mean, var)?,
                Layer::Xent => cur,
            };
        }
        Ok(cur)
    }

    /// Backpropagates `dy` through the layers recorded in `tape`, adding
    /// parameter gradients into the accumulators. Returns the gradient
    /// with respect to the tape's input.
    pub fn backward(&mut self, tape: &Tape, dy: &Tensor) -> Result<Tensor> {
        let mut g = dy.clone();
        for (offset, cache) in tape.caches.iter().enumerate().rev() {
            let i = tape.start + offset;
            let out_shape = {
                let mut s = vec![g.batch()];
                s.extend_from_slice(&self.shapes[i]);
                s
            };
            g = g.reshape(&out_shape)?;
            g = match (&mut self.layers[i], cache) {
                (Layer::Conv { w, b, stride, pad }, Cache::Input(x)) => {
                    let grads = ops::conv2d_backward(x, &w.value, &g, *stride, *pad)?;
                    w.accumulate(&grads.dw);
                    b.accumulate(&grads.db);
                    grads.dx
                }
                (Layer::Fc { w, b }, Cache::Input(x)) => {
                    let grads = ops::fc_backward(x, &w.value, &g)?;
                    w.accumulate(&grads.dw);
                    b.accumulate(&grads.db);
                    grads.dx
                }
                (Layer::Pool { .. }, Cache::Pool { shape, argmax }) => ops::maxpool_backward(shape, argmax, &g)?,
                (Layer::Relu, Cache::Input(x)) => ops::relu_backward(x, &g)?,
                (Layer::Lrn { size, alpha, beta, .. }, Cache::Lrn { x, scale }) => {
                    ops::lrn_backward(x, scale, &g, *size, *alpha, *beta)?
                }
                (Layer::BatchNorm { .. }, Cache::BatchNorm(c)) => ops::batchnorm_na_backward(c, &g)?,
                (Layer::Xent, Cache::Nothing) => g,
                _ => return Err(Error::ShapeMismatch(format!("tape does not match layer {i}"))),
            };
        }
        Ok(g)
    }

    /// Folds a tape's batch statistics into the running estimates.
    pub fn commit_running_stats(&mut self, tape: &Tape) {
        for (i, bm, bv) in tape.batch_stats() {
            if let Layer::BatchNorm { mean, var, .. } = &mut self.layers[i] {
                for (r, b) in mean.iter_mut().zip(bm) {
                    *r = BN_RUNNING_MOMENTUM * *r + (1.0 - BN_RUNNING_MOMENTUM) * b;
                }
                for (r, b) in var.iter_mut().zip(bv) {
                    *r = BN_RUNNING_MOMENTUM * *r + (1.0 - BN_RUNNING_MOMENTUM) * b;
                }
            }
        }
    }

    /// Named parameters in layer order (`"<layer>.w"`, `"<layer>.b"`).
    pub fn params(&self) -> Vec<(String, &Param)> {
        let mut out = Vec::new();
        for (l, spec) in self.layers.iter().zip(&self.spec.layers) {
            if let Layer::Conv { w, b, .. } | Layer::Fc { w, b } = l {
                out.push((format!("{}.w", spec.name), w));
                out.push((format!("{}.b", spec.name), b));
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<(String, &mut Param)> {
        let mut out = Vec::new();
        for (l, spec) in self.layers.iter_mut().zip(&self.spec.layers) {
            if let Layer::Conv { w, b, .. } | Layer::Fc { w, b } = l {
                out.push((format!("{}.w", spec.name), w));
                out.push((format!("{}.b", spec.name), b));
            }
        }
        out
    }

    /// Parameters of layer `i`, empty for parameter-free layers.
    pub fn layer_params(&self, i: usize) -> Vec<&Param> {
        match &self.layers[i] {
            Layer::Conv { w, b, .. } | Layer::Fc { w, b } => vec![w, b],
            _ => Vec::new(),
        }
    }

    pub fn layer_params_mut(&mut self, i: usize) -> Vec<&mut Param> {
        match &mut self.layers[i] {
            Layer::Conv { w, b, .. } | Layer::Fc { w, b } => vec![w, b],
            _ => Vec::new(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|(_, p)| p.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for (_, p) in self.params_mut() {
            p.grad.data_mut().fill(0.0);
        }
    }

    /// Running statistics as named tensors (`"<layer>.mean"`, `"<layer>.var"`).
    pub fn running_stats(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        for (l, spec) in self.layers.iter().zip(&self.spec.layers) {
            if let Layer::BatchNorm { mean, var, .. } = l {
                out.push((format!("{}.mean", spec.name), Tensor::new(vec![mean.len()], mean.clone()).expect("1-d")));
                out.push((format!("{}.var", spec.name), Tensor::new(vec![var.len()], var.clone()).expect("1-d")));
            }
        }
        out
    }

    /// Replaces parameter values and running statistics from named
    /// tensors. Every tensor the net owns must be present with a matching
    /// shape.
    pub fn load_state(&mut self, params: &[(String, Tensor)], stats: &[(String, Tensor)], prefix: &str) -> Result<()> {
        let find = |set: &[(String, Tensor)], name: &str, shape: &[usize]| -> Result<Tensor> {
            let full = format!("{prefix}{name}");
            let (_, t) = set
                .iter()
                .find(|(n, _)| *n == full)
                .ok_or_else(|| Error::Format(format!("checkpoint lacks tensor {full}")))?;
            if t.shape() != shape {
                return Err(Error::ShapeMismatch(format!(
                    "{full}: checkpoint {:?}, net {shape:?}",
                    t.shape()
                )));
            }
            Ok(t.clone())
        };
        for (name, p) in self.params_mut() {
            p.value = find(params, &name, p.value.shape())?;
        }
        for (l, spec) in self.layers.iter_mut().zip(&self.spec.layers) {
            if let Layer::BatchNorm { mean, var, .. } = l {
                *mean = find(stats, &format!("{}.mean", spec.name), &[mean.len()])?.into_data();
                *var = find(stats, &format!("{}.var", spec.name), &[var.len()])?.into_data();
            }
        }
        Ok(())
    }
}
