use rand::Rng as _;

use super::arch::AbsLocNetConfig;
use crate::corpus::ImageBuffer;
use crate::error::{Error, Result};
use crate::nn::{Net, Tensor};
use crate::rng::Rng;
use crate::sampler::{crop_patch, preprocess_inference, preprocess_patch, GridCell, Patch, SamplerConfig};

/// Absolute-location regressor: trunk plus a linear `(x̂, ŷ)` head in
/// normalized image coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct AbsLocNet {
    pub config: AbsLocNetConfig,
    pub net: Net,
}

impl AbsLocNet {
    pub fn new(config: AbsLocNetConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let net = Net::new(config.net.clone(), rng)?;
        Ok(Self { config, net })
    }
}

/// Top-left corner drawn uniformly over the central `region` fraction of
/// the feasible positions (`region = 1` is every position). Returns
/// `(x, y)`.
pub fn sample_location(width: usize, height: usize, patch: usize, region: f64, rng: &mut Rng) -> Result<(usize, usize)> {
    if width < patch || height < patch {
        return Err(Error::ImageTooSmall {
            width,
            height,
            min_width: patch,
            min_height: patch,
        });
    }
    let axis = |span: usize, rng: &mut Rng| {
        let lo = (span as f64 * (1.0 - region) / 2.0).round() as usize;
        let hi = span - lo;
        if hi <= lo {
            span / 2
        } else {
            rng.random_range(lo..=hi)
        }
    };
    let x = axis(width - patch, rng);
    let y = axis(height - patch, rng);
    Ok((x, y))
}

/// Patch center divided by image extent, as `[x, y]`.
pub fn location_target(width: usize, height: usize, patch: usize, x: usize, y: usize) -> [f64; 2] {
    let half = patch as f64 / 2.0;
    [(x as f64 + half) / width as f64, (y as f64 + half) / height as f64]
}

/// One training example: a randomly placed, preprocessed patch and its
/// normalized center.
pub fn sample_location_patch(img: &ImageBuffer, cfg: &SamplerConfig, rng: &mut Rng) -> Result<(Patch, [f64; 2])> {
    let p = cfg.patch_size;
    let (x, y) = sample_location(img.width(), img.height(), p, 1.0, rng)?;
    let mut patch = crop_patch(img, &GridCell { row: 0, col: 0, y, x }, p)?;
    preprocess_patch(&mut patch, cfg, rng);
    Ok((patch, location_target(img.width(), img.height(), p, x, y)))
}

/// Evaluation variant: no augmentation beyond the deterministic steps.
pub fn location_patch_infer(img: &ImageBuffer, cfg: &SamplerConfig, x: usize, y: usize) -> Result<(Patch, [f64; 2])> {
    let p = cfg.patch_size;
    let mut patch = crop_patch(img, &GridCell { row: 0, col: 0, y, x }, p)?;
    preprocess_inference(&mut patch, cfg);
    Ok((patch, location_target(img.width(), img.height(), p, x, y)))
}

pub fn targets_tensor(targets: &[[f64; 2]]) -> Tensor {
    Tensor::new(vec![targets.len(), 2], targets.iter().flatten().copied().collect()).expect("sized")
}
