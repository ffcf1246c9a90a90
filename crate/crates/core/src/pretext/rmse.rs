use rand::Rng as _;
use rayon::prelude::*;
use serde::Serialize;

use super::absloc::{location_patch_infer, sample_location, AbsLocNet};
use super::pairnet::patch_batch;
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::rng;
use crate::sampler::SamplerConfig;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RmseReport {
    /// Root of the mean squared center error over every sampled patch.
    pub overall: f64,
    /// Mean per-image RMSE over the best-predicted tenth of images.
    pub top_decile: f64,
    /// `(image_id, rmse)` ascending by RMSE.
    pub per_image: Vec<(String, f64)>,
}

/// Summarizes per-image squared errors (one list per image).
pub fn summarize(ids: &[&str], sq_errors: &[Vec<f64>]) -> Result<RmseReport> {
    if ids.is_empty() {
        return Err(Error::InvalidArgument("rmse report over an empty manifest".into()));
    }
    let total: f64 = sq_errors.iter().flatten().sum();
    let count: usize = sq_errors.iter().map(Vec::len).sum();
    let mut per_image: Vec<(String, f64)> = ids
        .iter()
        .zip(sq_errors)
        .map(|(id, e)| (id.to_string(), (e.iter().sum::<f64>() / e.len().max(1) as f64).sqrt()))
        .collect();
    per_image.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    let k = per_image.len().div_ceil(10);
    let top_decile = per_image[..k].iter().map(|(_, r)| r).sum::<f64>() / k as f64;
    Ok(RmseReport {
        overall: (total / count.max(1) as f64).sqrt(),
        top_decile,
        per_image,
    })
}

/// Per-image RMSE of predicted patch centers over `per_image` uniformly
/// placed patches per image.
pub fn rmse_report(model: &AbsLocNet, corpus: &Corpus, cfg: &SamplerConfig, per_image: usize, seed: u64) -> Result<RmseReport> {
    let errors: Vec<Vec<f64>> = (0..corpus.len())
        .into_par_iter()
        .map(|j| {
            let img = &corpus.images[j];
            let mut r = rng::stream2(seed, j as u64, 2);
            let mut patches = Vec::with_capacity(per_image);
            let mut targets = Vec::with_capacity(per_image);
            for _ in 0..per_image {
                let (x, y) = sample_location(img.width(), img.height(), cfg.patch_size, 1.0, &mut r)?;
                let (p, t) = location_patch_infer(img, cfg, x, y)?;
                patches.push(p);
                targets.push(t);
            }
            let y = model.net.forward_infer(&patch_batch(&patches.iter().collect::<Vec<_>>())?)?;
            Ok(targets
                .iter()
                .enumerate()
                .map(|(i, t)| {
                    let p = y.sample(i);
                    (p[0] - t[0]).powi(2) + (p[1] - t[1]).powi(2)
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let ids: Vec<&str> = (0..corpus.len()).map(|j| corpus.id(j)).collect();
    summarize(&ids, &errors)
}

/// Monte-Carlo RMSE of always predicting the image center, over patch
/// centers placed by the abs-loc sampler within the central `region`
/// fraction of feasible positions.
pub fn chance_rmse_region(corpus: &Corpus, cfg: &SamplerConfig, n_samples: usize, seed: u64, region: f64) -> Result<f64> {
    if n_samples < 1000 {
        return Err(Error::InvalidArgument(format!("n_samples {n_samples} < 1000")));
    }
    if corpus.is_empty() {
        return Err(Error::InvalidArgument("chance rmse over an empty manifest".into()));
    }
    let mut r = rng::stream(seed, 3);
    let mut acc = 0.0;
    let p = cfg.patch_size;
    for _ in 0..n_samples {
        let img = &corpus.images[r.random_range(0..corpus.len())];
        let (w, h) = (img.width(), img.height());
        let (x, y) = sample_location(w, h, p, region, &mut r)?;
        let t = super::absloc::location_target(w, h, p, x, y);
        acc += (t[0] - 0.5).powi(2) + (t[1] - 0.5).powi(2);
    }
    Ok((acc / n_samples as f64).sqrt())
}

pub fn chance_rmse(corpus: &Corpus, cfg: &SamplerConfig, n_samples: usize, seed: u64) -> Result<f64> {
    chance_rmse_region(corpus, cfg, n_samples, seed, 1.0)
}
