use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::pretext::{predict_pairs, sample_eval_pairs, SavedModel};
use crate::sampler::PatchPair;

pub const N_CLASSES: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretextReport {
    pub n_pairs: usize,
    pub accuracy: f64,
    /// `None` for a class with no samples.
    pub per_class_accuracy: Vec<Option<f64>>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

impl PretextReport {
    pub fn from_predictions(truth: &[usize], pred: &[usize]) -> Result<Self> {
        if truth.len() != pred.len() {
            return Err(Error::ShapeMismatch(format!("{} labels vs {} predictions", truth.len(), pred.len())));
        }
        let mut confusion = vec![vec![0usize; N_CLASSES]; N_CLASSES];
        for (&t, &p) in truth.iter().zip(pred) {
            if t >= N_CLASSES || p >= N_CLASSES {
                return Err(Error::InvalidArgument(format!("class out of range: {t}/{p}")));
            }
            confusion[t][p] += 1;
        }
        let hits: usize = (0..N_CLASSES).map(|c| confusion[c][c]).sum();
        let per_class_accuracy = confusion
            .iter()
            .enumerate()
            .map(|(c, row)| {
                let n: usize = row.iter().sum();
                (n > 0).then(|| row[c] as f64 / n as f64)
            })
            .collect();
        Ok(Self {
            n_pairs: truth.len(),
            accuracy: hits as f64 / truth.len().max(1) as f64,
            per_class_accuracy,
            confusion,
        })
    }
}

/// Pairs drawn with the checkpoint's own sampler settings, classified in
/// inference mode.
pub fn pretext_accuracy(
    model: &SavedModel,
    corpus: &Corpus,
    n_images: usize,
    pairs_per_image: usize,
    seed: u64,
) -> Result<PretextReport> {
    let net = model.model.as_pair()?;
    let pairs = sample_eval_pairs(corpus, &model.meta.sampler, n_images, pairs_per_image, seed)?;
    pair_report(net, &pairs)
}

pub fn pair_report(net: &crate::pretext::PairNet, pairs: &[PatchPair]) -> Result<PretextReport> {
    let pred = predict_pairs(net, pairs)?;
    let truth: Vec<usize> = pairs.iter().map(|p| p.label.index()).collect();
    PretextReport::from_predictions(&truth, &pred)
}
