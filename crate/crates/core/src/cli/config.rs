use std::path::Path;

use crate::corpus::{AberrationSpec, SceneFamily, SynthConfig};
use crate::error::{Error, Result};
use crate::mining::MiningConfig;
use crate::pretext::TrainConfig;
use crate::sampler::{ColorMode, MeanMode, PairScheme, SamplerConfig};

/// Values that live in a flat `key = value` file.
pub trait ConfigValue: Sized {
    fn parse_value(s: &str) -> Result<Self>;
    fn render(&self) -> String;
}

macro_rules! display_value {
    ($($t:ty),*) => {$(
        impl ConfigValue for $t {
            fn parse_value(s: &str) -> Result<Self> {
                s.parse().map_err(|e| Error::Config(format!("bad value {s:?}: {e}")))
            }
            fn render(&self) -> String {
                self.to_string()
            }
        }
    )*};
}
display_value!(usize, u64, f64, bool, String);

macro_rules! enum_value {
    ($t:ty { $($name:literal => $v:expr),* $(,)? }) => {
        impl ConfigValue for $t {
            fn parse_value(s: &str) -> Result<Self> {
                s.parse()
            }
            fn render(&self) -> String {
                match self {
                    $(x if *x == $v => $name.to_string(),)*
                    _ => unreachable!(),
                }
            }
        }
    };
}
enum_value!(ColorMode { "projection" => ColorMode::Projection, "drop" => ColorMode::Drop, "none" => ColorMode::None });
enum_value!(PairScheme { "two_stage" => PairScheme::TwoStage, "label_balanced" => PairScheme::LabelBalanced });
enum_value!(SceneFamily { "structured" => SceneFamily::Structured, "texture" => SceneFamily::Texture, "noise" => SceneFamily::Noise });

macro_rules! run_config {
    ($($(#[doc = $doc:literal])* $key:ident : $t:ty = $default:expr;)*) => {
        /// Every tunable of every subcommand. Unset keys keep their defaults.
        #[derive(Debug, Clone, PartialEq)]
        pub struct RunConfig {
            $($(#[doc = $doc])* pub $key: $t,)*
        }

        impl Default for RunConfig {
            fn default() -> Self {
                Self { $($key: $default,)* }
            }
        }

        impl RunConfig {
            pub const KEYS: &'static [&'static str] = &[$(stringify!($key)),*];

            pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
                match key {
                    $(stringify!($key) => {
                        self.$key = <$t>::parse_value(value)
                            .map_err(|e| Error::Config(format!("{key}: {e}")))?;
                    })*
                    _ => return Err(Error::Config(format!("unknown config key {key:?}"))),
                }
                Ok(())
            }

            /// All keys in declaration order, one `key = value` line each.
            pub fn resolved(&self) -> String {
                let mut out = String::new();
                $(out.push_str(&format!("{} = {}\n", stringify!($key), self.$key.render()));)*
                out
            }
        }
    };
}

run_config! {
    seed: u64 = 0;
    // inputs
    manifest: String = String::new();
    val_manifest: String = String::new();
    model: String = String::new();
    table: String = String::new();
    clusters: String = String::new();
    selection: String = String::new();
    /// Pixel budget applied on load; `0` leaves images as stored.
    budget_min: usize = 0;
    budget_max: usize = 0;
    // synthesis
    n_images: usize = 2000;
    width: usize = 160;
    height: usize = 160;
    family: SceneFamily = SceneFamily::Structured;
    /// `0` disables injected aberration.
    aberration_green_scale: f64 = 0.0;
    // sampler
    patch_size: usize = 32;
    gap: usize = 16;
    jitter: usize = 2;
    color_mode: ColorMode = ColorMode::Projection;
    pixelation_min_px: usize = 100;
    pixelation_prob: f64 = 0.2;
    /// `per_patch`, or `dataset` to subtract training-corpus channel means.
    mean_mode: String = "per_patch".into();
    pair_scheme: PairScheme = PairScheme::TwoStage;
    n_pairs: usize = 256;
    // network
    lrn: bool = false;
    // training
    batch_size: usize = 32;
    lr: f64 = 1e-4;
    momentum: f64 = 0.999;
    steps: usize = 5000;
    eval_interval: usize = 500;
    lr_decay: f64 = 1.0;
    lr_decay_every: usize = 0;
    shuffle_labels: bool = false;
    val_images: usize = 200;
    val_pairs_per_image: usize = 16;
    checkpoint_every: usize = 0;
    log: bool = true;
    // embeddings and retrieval
    layer: String = crate::pretext::EMBEDDING_LAYER.into();
    /// Grid stride for extraction; `0` means the patch size.
    stride: usize = 0;
    k: usize = 10;
    queries: String = String::new();
    n_queries: usize = 8;
    // mining
    n_seeds: usize = 512;
    top_k: usize = 20;
    n_sets: usize = 100;
    // evaluation
    eval_images: usize = 500;
    eval_pairs_per_image: usize = 32;
    chance_samples: usize = 10000;
    rmse_per_image: usize = 16;
    // grad-check
    net: String = "desk-default".into();
    grad_batch: usize = 4;
    grad_coords: usize = 200;
    // montage
    montage_rows: usize = 8;
    montage_cols: usize = 8;
    montage_cell: usize = 64;
}

impl RunConfig {
    /// Applies a `key = value` file. `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(k.trim(), v.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        self.apply_text(&text)
    }

    pub fn sampler(&self) -> Result<SamplerConfig> {
        let mean_mode = match self.mean_mode.as_str() {
            "per_patch" => MeanMode::PerPatch,
            // placeholder, filled from the training corpus
            "dataset" => MeanMode::Dataset { mean: [0.0; 3] },
            other => return Err(Error::Config(format!("unknown mean_mode {other:?} (per_patch|dataset)"))),
        };
        let cfg = SamplerConfig {
            patch_size: self.patch_size,
            gap: self.gap,
            jitter: self.jitter,
            color_mode: self.color_mode,
            pixelation_min_px: self.pixelation_min_px,
            pixelation_prob: self.pixelation_prob,
            mean_mode,
            pair_scheme: self.pair_scheme,
        };
        cfg.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn train(&self) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            batch_size: self.batch_size,
            lr: self.lr,
            momentum: self.momentum,
            steps: self.steps,
            seed: self.seed,
            eval_interval: self.eval_interval,
            lr_decay: self.lr_decay,
            lr_decay_every: self.lr_decay_every,
            shuffle_labels: self.shuffle_labels,
            val_images: self.val_images,
            val_pairs_per_image: self.val_pairs_per_image,
            checkpoint_every: self.checkpoint_every,
            log: self.log,
        };
        cfg.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn synth(&self) -> Result<SynthConfig> {
        let aberration = if self.aberration_green_scale == 0.0 {
            AberrationSpec::disabled()
        } else {
            AberrationSpec::new(self.aberration_green_scale).map_err(|e| Error::Config(e.to_string()))?
        };
        Ok(SynthConfig {
            width: self.width,
            height: self.height,
            family: self.family,
            aberration,
        })
    }

    pub fn mining(&self) -> MiningConfig {
        MiningConfig {
            n_seeds: self.n_seeds,
            top_k: self.top_k,
            seed: self.seed,
        }
    }

    pub fn budget(&self) -> Option<(usize, usize)> {
        (self.budget_max > 0).then_some((self.budget_min, self.budget_max))
    }

    pub fn grid_stride(&self) -> usize {
        if self.stride == 0 {
            self.patch_size
        } else {
            self.stride
        }
    }
}
