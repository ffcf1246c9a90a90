use rand::Rng as _;

use super::color::{apply_color_drop, apply_color_projection};
use super::config::{ColorMode, MeanMode, SamplerConfig};
use super::patch::Patch;
use crate::corpus::{resample_bilinear, Corpus};
use crate::rng::Rng;

/// Bilinear down-sample to a `side`×`side` raster and back up.
pub fn pixelate(patch: &mut Patch, side: usize) {
    let p = patch.size;
    if side >= p {
        return;
    }
    let small = resample_bilinear(&patch.data, p, p, 3, side, side);
    patch.data = resample_bilinear(&small, side, side, 3, p, p);
}

pub fn subtract_mean(patch: &mut Patch, mode: &MeanMode) {
    let mean = match mode {
        MeanMode::PerPatch => [0, 1, 2].map(|c| patch.channel_mean(c)),
        MeanMode::Dataset { mean } => mean.map(|m| m as f64),
    };
    for px in patch.pixels_mut() {
        for (v, m) in px.iter_mut().zip(mean) {
            *v = (*v as f64 - m) as f32;
        }
    }
}

/// Training-time preprocessing, in order: color step, random pixelation,
/// mean subtraction.
pub fn preprocess_patch(patch: &mut Patch, cfg: &SamplerConfig, rng: &mut Rng) {
    match cfg.color_mode {
        ColorMode::Projection => apply_color_projection(patch),
        ColorMode::Drop => {
            apply_color_drop(patch, rng);
        }
        ColorMode::None => {}
    }
    if cfg.pixelation_prob > 0.0 && rng.random_bool(cfg.pixelation_prob) {
        let full = patch.size * patch.size;
        let n = rng.random_range(cfg.pixelation_min_px..=full);
        let side = ((n as f64).sqrt().round() as usize).clamp(1, patch.size);
        pixelate(patch, side);
    }
    subtract_mean(patch, &cfg.mean_mode);
}

/// Deterministic preprocessing for feature extraction: projection when the
/// config uses it, then mean subtraction. No augmentation.
pub fn preprocess_inference(patch: &mut Patch, cfg: &SamplerConfig) {
    if cfg.color_mode == ColorMode::Projection {
        apply_color_projection(patch);
    }
    subtract_mean(patch, &cfg.mean_mode);
}

/// Per-channel means over every pixel of a corpus.
pub fn dataset_channel_means(corpus: &Corpus) -> [f32; 3] {
    let mut sum = [0.0f64; 3];
    let mut n = 0usize;
    for img in &corpus.images {
        for px in img.data().chunks_exact(3) {
            for c in 0..3 {
                sum[c] += px[c] as f64;
            }
        }
        n += img.pixel_count();
    }
    sum.map(|s| (s / n.max(1) as f64) as f32)
}
