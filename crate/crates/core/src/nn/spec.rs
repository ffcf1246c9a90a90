use serde::{Deserialize, Serialize};

use super::ops::conv_out_extent;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv {
        kernel: usize,
        out_channels: usize,
        stride: usize,
        pad: usize,
    },
    Pool {
        kernel: usize,
        stride: usize,
    },
    Relu,
    Lrn {
        size: usize,
        alpha: f64,
        beta: f64,
        k: f64,
    },
    BatchnormNa {
        epsilon: f64,
    },
    Fc {
        out_units: usize,
    },
    /// Loss head marker; identity in the forward pass.
    SoftmaxXent {
        classes: usize,
    },
}

impl LayerSpec {
    pub fn lrn_default() -> Self {
        LayerSpec::Lrn {
            size: 5,
            alpha: 1e-4,
            beta: 0.75,
            k: 2.0,
        }
    }

    pub fn batchnorm() -> Self {
        LayerSpec::BatchnormNa { epsilon: 1e-5 }
    }

    pub fn has_params(&self) -> bool {
        matches!(self, LayerSpec::Conv { .. } | LayerSpec::Fc { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedLayer {
    pub name: String,
    #[serde(flatten)]
    pub spec: LayerSpec,
}

/// Ordered layer list applied to per-sample inputs of shape `input`
/// (`[c, h, w]` or `[features]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetSpec {
    pub input: Vec<usize>,
    pub layers: Vec<NamedLayer>,
}

impl NetSpec {
    pub fn new(input: Vec<usize>) -> Self {
        Self {
            input,
            layers: Vec::new(),
        }
    }

    pub fn push(mut self, name: &str, spec: LayerSpec) -> Self {
        self.layers.push(NamedLayer {
            name: name.to_owned(),
            spec,
        });
        self
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.layers
            .iter()
            .position(|l| l.name == name)
            .ok_or_else(|| Error::LayerNotFound(name.to_owned()))
    }

    /// Per-sample output shape of every layer, validating compatibility.
    pub fn shapes(&self) -> Result<Vec<Vec<usize>>> {
        let mut names = std::collections::HashSet::new();
        let mut cur = self.input.clone();
        if cur.is_empty() || cur.contains(&0) {
            return Err(Error::ShapeMismatch(format!("input shape {cur:?}")));
        }
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, l) in self.layers.iter().enumerate() {
            if !names.insert(l.name.as_str()) {
                return Err(Error::Config(format!("duplicate layer name {:?}", l.name)));
            }
            let bad = |why: String| Error::ShapeMismatch(format!("layer {}: {why}", l.name));
            cur = match &l.spec {
                LayerSpec::Conv { kernel, out_channels, stride, pad } => {
                    let [_, h, w] = cur[..] else {
                        return Err(bad(format!("conv needs [c, h, w], got {cur:?}")));
                    };
                    match (conv_out_extent(h, *kernel, *stride, *pad), conv_out_extent(w, *kernel, *stride, *pad)) {
                        (Some(ho), Some(wo)) if *out_channels > 0 => vec![*out_channels, ho, wo],
                        _ => return Err(bad(format!("kernel {kernel} does not fit {h}x{w}"))),
                    }
                }
                LayerSpec::Pool { kernel, stride } => {
                    let [c, h, w] = cur[..] else {
                        return Err(bad(format!("pool needs [c, h, w], got {cur:?}")));
                    };
                    if *kernel == 0 || *stride == 0 || *kernel > h || *kernel > w {
                        return Err(bad(format!("pool {kernel}/{stride} on {h}x{w}")));
                    }
                    vec![c, (h - kernel) / stride + 1, (w - kernel) / stride + 1]
                }
                LayerSpec::Lrn { size, .. } => {
                    if size % 2 == 0 {
                        return Err(bad(format!("lrn size {size} must be odd")));
                    }
                    cur
                }
                LayerSpec::Relu | LayerSpec::BatchnormNa { .. } => cur,
                LayerSpec::Fc { out_units } => {
                    if *out_units == 0 {
                        return Err(bad("fc with zero outputs".into()));
                    }
                    vec![*out_units]
                }
                LayerSpec::SoftmaxXent { classes } => {
                    if i + 1 != self.layers.len() {
                        return Err(bad("softmax_xent must be last".into()));
                    }
                    if cur != [*classes] {
                        return Err(bad(format!("{classes} classes on input {cur:?}")));
                    }
                    cur
                }
            };
            out.push(cur.clone());
        }
        Ok(out)
    }

    pub fn output_shape(&self) -> Result<Vec<usize>> {
        Ok(self.shapes()?.pop().unwrap_or_else(|| self.input.clone()))
    }

    pub fn output_len(&self) -> Result<usize> {
        Ok(self.output_shape()?.iter().product())
    }

    /// Prefix of the net ending at (and including) `name`.
    pub fn truncated(&self, name: &str) -> Result<NetSpec> {
        let i = self.index_of(name)?;
        Ok(NetSpec {
            input: self.input.clone(),
            layers: self.layers[..=i].to_vec(),
        })
    }
}
