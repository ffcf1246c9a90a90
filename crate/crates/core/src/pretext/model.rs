//! Model files: a `CPNET1` checkpoint plus a JSON sidecar (`<path>.json`)
//! holding the architecture and sampler settings needed to rebuild it.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::absloc::AbsLocNet;
use super::arch::{AbsLocNetConfig, PairNetConfig, EMBEDDING_LAYER};
use super::pairnet::PairNet;
use crate::error::{Error, Result};
use crate::nn::{write_atomic, Checkpoint};
use crate::rng;
use crate::sampler::SamplerConfig;

pub const MODEL_FORMAT: &str = "patchwork-model/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Architecture {
    Pairnet(PairNetConfig),
    Absloc(AbsLocNetConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub format: String,
    pub architecture: Architecture,
    pub sampler: SamplerConfig,
    pub embedding_layer: String,
    /// Embeddings are read after the layer's activation.
    pub embedding_activation: String,
    /// Fusion input order: the first-sampled patch fills the leading half.
    pub fusion_order: String,
    pub seed: u64,
    pub step: usize,
}

impl ModelMeta {
    pub fn new(architecture: Architecture, sampler: SamplerConfig, seed: u64, step: usize) -> Self {
        Self {
            format: MODEL_FORMAT.to_owned(),
            architecture,
            sampler,
            embedding_layer: EMBEDDING_LAYER.to_owned(),
            embedding_activation: "post-relu".to_owned(),
            fusion_order: "a_then_b".to_owned(),
            seed,
            step,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Pair(PairNet),
    AbsLoc(AbsLocNet),
}

impl Model {
    /// Fresh random-weight model for an architecture.
    pub fn init(arch: &Architecture, seed: u64) -> Result<Self> {
        let mut r = rng::seeded(seed);
        Ok(match arch {
            Architecture::Pairnet(c) => Model::Pair(PairNet::new(c.clone(), &mut r)?),
            Architecture::Absloc(c) => Model::AbsLoc(AbsLocNet::new(c.clone(), &mut r)?),
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        match self {
            Model::Pair(p) => Checkpoint {
                params: p.params().into_iter().map(|(n, t)| (n, t.value.clone())).collect(),
                stats: p.running_stats(),
            },
            Model::AbsLoc(a) => Checkpoint {
                params: a.net.params().into_iter().map(|(n, t)| (format!("net.{n}"), t.value.clone())).collect(),
                stats: a.net.running_stats().into_iter().map(|(n, t)| (format!("net.{n}"), t)).collect(),
            },
        }
    }

    fn load_checkpoint(&mut self, ck: &Checkpoint) -> Result<()> {
        match self {
            Model::Pair(p) => {
                p.trunk.load_state(&ck.params, &ck.stats, "trunk.")?;
                p.fusion.load_state(&ck.params, &ck.stats, "fusion.")
            }
            Model::AbsLoc(a) => a.net.load_state(&ck.params, &ck.stats, "net."),
        }
    }

    pub fn as_pair(&self) -> Result<&PairNet> {
        match self {
            Model::Pair(p) => Ok(p),
            Model::AbsLoc(_) => Err(Error::Config("expected a pair-net model, got abs-loc".into())),
        }
    }

    pub fn as_absloc(&self) -> Result<&AbsLocNet> {
        match self {
            Model::AbsLoc(a) => Ok(a),
            Model::Pair(_) => Err(Error::Config("expected an abs-loc model, got pair-net".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SavedModel {
    pub meta: ModelMeta,
    pub model: Model,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

impl SavedModel {
    /// Writes the checkpoint and its sidecar, each atomically.
    pub fn save(&self, path: &Path) -> Result<()> {
        self.model.checkpoint().save(path)?;
        let json = serde_json::to_string_pretty(&self.meta).map_err(|e| Error::Format(e.to_string()))?;
        write_atomic(&sidecar_path(path), format!("{json}\n").as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let side = sidecar_path(path);
        let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
        let meta: ModelMeta =
            serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", side.display())))?;
        if meta.format != MODEL_FORMAT {
            return Err(Error::Format(format!("{}: unknown model format {:?}", side.display(), meta.format)));
        }
        let ck = Checkpoint::load(path)?;
        let mut model = Model::init(&meta.architecture, 0)?;
        model.load_checkpoint(&ck)?;
        Ok(Self { meta, model })
    }
}
