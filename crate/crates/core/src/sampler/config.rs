use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColorMode {
    /// Multiply every pixel by the green-magenta nulling projection.
    Projection,
    /// Keep one random channel, replace the others with faint noise.
    Drop,
    None,
}

impl std::str::FromStr for ColorMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "projection" => Ok(Self::Projection),
            "drop" => Ok(Self::Drop),
            "none" => Ok(Self::None),
            _ => Err(Error::Config(format!(
                "unknown color_mode {s:?} (projection|drop|none)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum MeanMode {
    PerPatch,
    /// Subtract fixed per-channel means computed over a corpus.
    Dataset { mean: [f32; 3] },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairScheme {
    /// Uniform cell with a neighbor, then a uniform valid neighbor.
    TwoStage,
    /// Uniform label, then a uniform cell for which that neighbor exists.
    LabelBalanced,
}

impl std::str::FromStr for PairScheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two_stage" => Ok(Self::TwoStage),
            "label_balanced" => Ok(Self::LabelBalanced),
            _ => Err(Error::Config(format!(
                "unknown pair_scheme {s:?} (two_stage|label_balanced)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub patch_size: usize,
    pub gap: usize,
    pub jitter: usize,
    pub color_mode: ColorMode,
    pub pixelation_min_px: usize,
    pub pixelation_prob: f64,
    pub mean_mode: MeanMode,
    pub pair_scheme: PairScheme,
}

impl Default for SamplerConfig {
    /// Full-scale settings: 96 px patches, 48 px gap, ±7 px jitter.
    fn default() -> Self {
        Self {
            patch_size: 96,
            gap: 48,
            jitter: 7,
            color_mode: ColorMode::Projection,
            pixelation_min_px: 100,
            pixelation_prob: 0.2,
            mean_mode: MeanMode::PerPatch,
            pair_scheme: PairScheme::TwoStage,
        }
    }
}

impl SamplerConfig {
    /// 32 px patches with the gap and jitter scaled by the same factor.
    pub fn desk() -> Self {
        Self {
            patch_size: 32,
            gap: 16,
            jitter: 2,
            pixelation_min_px: 100,
            ..Self::default()
        }
    }

    pub fn pitch(&self) -> usize {
        self.patch_size + self.gap
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_size == 0 {
            return Err(Error::InvalidArgument("patch_size must be positive".into()));
        }
        if self.pixelation_min_px == 0 || self.pixelation_min_px > self.patch_size * self.patch_size {
            return Err(Error::InvalidArgument(format!(
                "pixelation_min_px {} not in 1..={}",
                self.pixelation_min_px,
                self.patch_size * self.patch_size
            )));
        }
        if !(0.0..=1.0).contains(&self.pixelation_prob) {
            return Err(Error::InvalidArgument(format!(
                "pixelation_prob {} not a probability",
                self.pixelation_prob
            )));
        }
        Ok(())
    }
}
