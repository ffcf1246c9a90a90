use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{LayerSpec, NetSpec};
use crate::sampler::NUM_CLASSES;

/// Layer whose output is the per-patch embedding.
pub const EMBEDDING_LAYER: &str = "relu6";

/// Per-patch stack: conv(5,16)-bn-relu-pool-conv(3,32)-bn-relu-pool-fc(128)-bn-relu,
/// with optional LRN after each pool.
pub fn desk_trunk(patch_size: usize, lrn: bool) -> NetSpec {
    let mut s = NetSpec::new(vec![3, patch_size, patch_size])
        .push("conv1", LayerSpec::Conv { kernel: 5, out_channels: 16, stride: 1, pad: 0 })
        .push("bn1", LayerSpec::batchnorm())
        .push("relu1", LayerSpec::Relu)
        .push("pool1", LayerSpec::Pool { kernel: 2, stride: 2 });
    if lrn {
        s = s.push("lrn1", LayerSpec::lrn_default());
    }
    s = s
        .push("conv2", LayerSpec::Conv { kernel: 3, out_channels: 32, stride: 1, pad: 0 })
        .push("bn2", LayerSpec::batchnorm())
        .push("relu2", LayerSpec::Relu)
        .push("pool2", LayerSpec::Pool { kernel: 2, stride: 2 });
    if lrn {
        s = s.push("lrn2", LayerSpec::lrn_default());
    }
    s.push("fc6", LayerSpec::Fc { out_units: 128 })
        .push("bn6", LayerSpec::batchnorm())
        .push(EMBEDDING_LAYER, LayerSpec::Relu)
}

/// Layers fed by both patches: fc(128)-bn-relu-fc(8) into the softmax head.
pub fn desk_fusion(embed_dim: usize) -> NetSpec {
    NetSpec::new(vec![2 * embed_dim])
        .push("fc7", LayerSpec::Fc { out_units: 128 })
        .push("bn7", LayerSpec::batchnorm())
        .push("relu7", LayerSpec::Relu)
        .push("fc8", LayerSpec::Fc { out_units: NUM_CLASSES })
        .push("loss", LayerSpec::SoftmaxXent { classes: NUM_CLASSES })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairNetConfig {
    pub trunk: NetSpec,
    pub fusion: NetSpec,
    pub patch_size: usize,
}

impl PairNetConfig {
    pub fn desk(patch_size: usize, lrn: bool) -> Self {
        let trunk = desk_trunk(patch_size, lrn);
        let fusion = desk_fusion(128);
        Self { trunk, fusion, patch_size }
    }

    pub fn validate(&self) -> Result<()> {
        let embed = self.trunk.output_len()?;
        if self.trunk.input != [3, self.patch_size, self.patch_size] {
            return Err(Error::Config(format!(
                "trunk input {:?} does not match patch size {}",
                self.trunk.input, self.patch_size
            )));
        }
        if self.fusion.input != [2 * embed] {
            return Err(Error::Config(format!(
                "fusion input {:?}, expected [{}] for two {embed}-d embeddings",
                self.fusion.input,
                2 * embed
            )));
        }
        if self.fusion.output_len()? != NUM_CLASSES {
            return Err(Error::Config(format!("fusion must end in {NUM_CLASSES} classes")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbsLocNetConfig {
    pub net: NetSpec,
    pub patch_size: usize,
}

impl AbsLocNetConfig {
    /// The pair-net trunk followed by a linear `(x̂, ŷ)` head.
    pub fn desk(patch_size: usize, lrn: bool) -> Self {
        let net = desk_trunk(patch_size, lrn).push("loc", LayerSpec::Fc { out_units: 2 });
        Self { net, patch_size }
    }

    pub fn validate(&self) -> Result<()> {
        if self.net.output_len()? != 2 {
            return Err(Error::Config("abs-loc net must end in 2 outputs".into()));
        }
        if self.net.input != [3, self.patch_size, self.patch_size] {
            return Err(Error::Config("abs-loc input does not match patch size".into()));
        }
        Ok(())
    }
}
