use std::fmt::Write as _;
use std::path::Path;

use rand::seq::index::sample;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::absloc::{sample_location_patch, targets_tensor, AbsLocNet};
use super::arch::{AbsLocNetConfig, PairNetConfig};
use super::model::{Architecture, Model, ModelMeta, SavedModel};
use super::pairnet::{patch_batch, PairNet};
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::nn::ops::{argmax, l2_loss, softmax_xent};
use crate::nn::{write_atomic, Sgd};
use crate::rng;
use crate::sampler::{sample_pair, PatchPair, RelativeLabel, SamplerConfig, NUM_CLASSES};

/// Stream index reserved for weight initialization.
const INIT_STREAM: u64 = u64::MAX;
/// Salt separating evaluation pair streams from training streams.
const EVAL_SALT: u64 = 0x5eed_e7a1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub steps: usize,
    pub seed: u64,
    /// Validate every this many steps (and after the last step); 0 disables.
    pub eval_interval: usize,
    /// Multiply the learning rate by `lr_decay` every `lr_decay_every`
    /// steps; 0 keeps it constant.
    pub lr_decay: f64,
    pub lr_decay_every: usize,
    /// Replace every training label by a uniform random one (no-signal
    /// control).
    pub shuffle_labels: bool,
    pub val_images: usize,
    pub val_pairs_per_image: usize,
    /// Write the model every this many steps when an output directory is
    /// given; the final model is always written.
    pub checkpoint_every: usize,
    pub log: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            lr: 1e-4,
            momentum: 0.999,
            steps: 5000,
            seed: 0,
            eval_interval: 500,
            lr_decay: 1.0,
            lr_decay_every: 0,
            shuffle_labels: false,
            val_images: 200,
            val_pairs_per_image: 16,
            checkpoint_every: 0,
            log: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::Config(format!("batch_size {} < 2 (batch norm needs 2)", self.batch_size)));
        }
        if self.steps < 1 {
            return Err(Error::Config("steps must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("lr {} / momentum {} out of range", self.lr, self.momentum)));
        }
        Ok(())
    }

    pub fn lr_at(&self, step: usize) -> f64 {
        if self.lr_decay_every == 0 {
            self.lr
        } else {
            self.lr * self.lr_decay.powi((step / self.lr_decay_every) as i32)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricRow {
    pub step: usize,
    pub loss: f64,
    /// Batch accuracy for the pair net, batch RMSE for abs-loc.
    pub acc: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValRow {
    pub step: usize,
    /// Accuracy for the pair net, RMSE for abs-loc.
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct TrainRun<M> {
    pub model: M,
    pub meta: ModelMeta,
    pub metrics: Vec<MetricRow>,
    pub val: Vec<ValRow>,
}

pub fn metrics_csv(rows: &[MetricRow], third: &str) -> String {
    let mut s = format!("step,loss,{third},lr\n");
    for r in rows {
        writeln!(s, "{},{},{},{}", r.step, r.loss, r.acc, r.lr).expect("string write");
    }
    s
}

pub fn val_csv(rows: &[ValRow], column: &str) -> String {
    let mut s = format!("step,{column}\n");
    for r in rows {
        writeln!(s, "{},{}", r.step, r.value).expect("string write");
    }
    s
}

/// Pairs for evaluation: `per_image` pairs from each of up to `n_images`
/// images (a seeded subset when the corpus is larger), preprocessed as in
/// training.
pub fn sample_eval_pairs(
    corpus: &Corpus,
    cfg: &SamplerConfig,
    n_images: usize,
    per_image: usize,
    seed: u64,
) -> Result<Vec<PatchPair>> {
    if corpus.is_empty() {
        return Err(Error::InvalidArgument("evaluation corpus is empty".into()));
    }
    let chosen: Vec<usize> = if n_images >= corpus.len() {
        (0..corpus.len()).collect()
    } else {
        let mut v = sample(&mut rng::stream(seed ^ EVAL_SALT, 0), corpus.len(), n_images).into_vec();
        v.sort_unstable();
        v
    };
    let per: Vec<Vec<PatchPair>> = chosen
        .par_iter()
        .map(|&j| {
            let mut r = rng::stream2(seed ^ EVAL_SALT, j as u64, 1);
            (0..per_image)
                .map(|_| sample_pair(&corpus.images[j], corpus.id(j), cfg, &mut r))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(per.into_iter().flatten().collect())
}

/// Inference-mode argmax predictions, in input order.
pub fn predict_pairs(net: &PairNet, pairs: &[PatchPair]) -> Result<Vec<usize>> {
    let chunks: Vec<Vec<usize>> = pairs
        .par_chunks(128)
        .map(|chunk| {
            let a = patch_batch(&chunk.iter().map(|p| &p.patch_a).collect::<Vec<_>>())?;
            let b = patch_batch(&chunk.iter().map(|p| &p.patch_b).collect::<Vec<_>>())?;
            let logits = net.forward_infer(&a, &b)?;
            Ok((0..chunk.len()).map(|i| argmax(logits.sample(i))).collect())
        })
        .collect::<Result<_>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

pub fn pair_accuracy(net: &PairNet, pairs: &[PatchPair]) -> Result<f64> {
    let pred = predict_pairs(net, pairs)?;
    let hits = pred.iter().zip(pairs).filter(|(p, q)| **p == q.label.index()).count();
    Ok(hits as f64 / pairs.len().max(1) as f64)
}

fn training_batch(corpus: &Corpus, cfg: &SamplerConfig, tcfg: &TrainConfig, step: usize) -> Result<Vec<PatchPair>> {
    (0..tcfg.batch_size)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream2(tcfg.seed, step as u64, i as u64);
            let idx = r.random_range(0..corpus.len());
            let mut pair = sample_pair(&corpus.images[idx], corpus.id(idx), cfg, &mut r)?;
            if tcfg.shuffle_labels {
                pair.label = RelativeLabel::new(r.random_range(0..NUM_CLASSES))?;
            }
            Ok(pair)
        })
        .collect()
}

fn check_loss(loss: f64, step: usize) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::Numeric(format!("loss is {loss} at step {step}; aborting")))
    }
}

fn write_outputs(out: &Path, saved: &SavedModel, metrics: &str, val: &str) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    saved.save(&out.join("model.cpnet"))?;
    write_atomic(&out.join("metrics.csv"), metrics.as_bytes())?;
    write_atomic(&out.join("val.csv"), val.as_bytes())
}

/// SGD-with-momentum training of the pair classifier on pairs sampled
/// from `train`. Deterministic for a fixed seed at any thread count.
pub fn train_pairnet(
    net_cfg: &PairNetConfig,
    tcfg: &TrainConfig,
    sampler: &SamplerConfig,
    train: &Corpus,
    val: Option<&Corpus>,
    out: Option<&Path>,
) -> Result<TrainRun<PairNet>> {
    tcfg.validate()?;
    sampler.validate()?;
    if train.is_empty() {
        return Err(Error::InvalidArgument("training corpus is empty".into()));
    }
    if net_cfg.patch_size != sampler.patch_size {
        return Err(Error::Config(format!(
            "net patch size {} but sampler patch size {}",
            net_cfg.patch_size, sampler.patch_size
        )));
    }
    let mut net = PairNet::new(net_cfg.clone(), &mut rng::stream(tcfg.seed, INIT_STREAM))?;
    let val_pairs = match val {
        Some(v) if tcfg.eval_interval > 0 => Some(sample_eval_pairs(v, sampler, tcfg.val_images, tcfg.val_pairs_per_image, tcfg.seed)?),
        _ => None,
    };
    let meta = |step| ModelMeta::new(Architecture::Pairnet(net_cfg.clone()), sampler.clone(), tcfg.seed, step);
    let mut metrics = Vec::with_capacity(tcfg.steps);
    let mut val_rows = Vec::new();
    for step in 1..=tcfg.steps {
        let batch = training_batch(train, sampler, tcfg, step)?;
        let a = patch_batch(&batch.iter().map(|p| &p.patch_a).collect::<Vec<_>>())?;
        let b = patch_batch(&batch.iter().map(|p| &p.patch_b).collect::<Vec<_>>())?;
        let labels: Vec<usize> = batch.iter().map(|p| p.label.index()).collect();
        net.zero_grad();
        let (logits, tape) = net.forward_train(&a, &b)?;
        let (loss, dlogits) = softmax_xent(&logits, &labels)?;
        check_loss(loss, step)?;
        net.backward(&tape, &dlogits)?;
        let lr = tcfg.lr_at(step - 1);
        Sgd::new(lr, tcfg.momentum).step(net.params_mut().into_iter().map(|(_, p)| p));
        net.commit_running_stats(&tape);
        let hits = (0..labels.len()).filter(|&i| argmax(logits.sample(i)) == labels[i]).count();
        metrics.push(MetricRow { step, loss, acc: hits as f64 / labels.len() as f64, lr });

        let last = step == tcfg.steps;
        if let Some(vp) = &val_pairs {
            if step % tcfg.eval_interval == 0 || last {
                let acc = pair_accuracy(&net, vp)?;
                val_rows.push(ValRow { step, value: acc });
                if tcfg.log {
                    eprintln!("step {step}: loss {loss:.4} val_acc {acc:.4}");
                }
            }
        }
        if let Some(dir) = out {
            if last || (tcfg.checkpoint_every > 0 && step % tcfg.checkpoint_every == 0) {
                let saved = SavedModel { meta: meta(step), model: Model::Pair(net.clone()) };
                write_outputs(dir, &saved, &metrics_csv(&metrics, "acc"), &val_csv(&val_rows, "val_acc"))?;
            }
        }
    }
    Ok(TrainRun { model: net, meta: meta(tcfg.steps), metrics, val: val_rows })
}

/// Training of the absolute-location regressor with an L2 loss on
/// normalized patch centers. `sampler.color_mode` selects the color
/// preprocessing.
pub fn train_absloc(
    net_cfg: &AbsLocNetConfig,
    tcfg: &TrainConfig,
    sampler: &SamplerConfig,
    train: &Corpus,
    val: Option<&Corpus>,
    out: Option<&Path>,
) -> Result<TrainRun<AbsLocNet>> {
    tcfg.validate()?;
    sampler.validate()?;
    if train.is_empty() {
        return Err(Error::InvalidArgument("training corpus is empty".into()));
    }
    if net_cfg.patch_size != sampler.patch_size {
        return Err(Error::Config("net and sampler patch sizes differ".into()));
    }
    let mut model = AbsLocNet::new(net_cfg.clone(), &mut rng::stream(tcfg.seed, INIT_STREAM))?;
    let meta = |step| ModelMeta::new(Architecture::Absloc(net_cfg.clone()), sampler.clone(), tcfg.seed, step);
    let mut metrics = Vec::with_capacity(tcfg.steps);
    let mut val_rows = Vec::new();
    for step in 1..=tcfg.steps {
        let batch: Vec<_> = (0..tcfg.batch_size)
            .into_par_iter()
            .map(|i| {
                let mut r = rng::stream2(tcfg.seed, step as u64, i as u64);
                let idx = r.random_range(0..train.len());
                sample_location_patch(&train.images[idx], sampler, &mut r)
            })
            .collect::<Result<_>>()?;
        let x = patch_batch(&batch.iter().map(|(p, _)| p).collect::<Vec<_>>())?;
        let t = targets_tensor(&batch.iter().map(|(_, t)| *t).collect::<Vec<_>>());
        model.net.zero_grad();
        let (y, tape) = model.net.forward_train(&x)?;
        let (loss, dy) = l2_loss(&y, &t)?;
        check_loss(loss, step)?;
        model.net.backward(&tape, &dy)?;
        let lr = tcfg.lr_at(step - 1);
        Sgd::new(lr, tcfg.momentum).step(model.net.params_mut().into_iter().map(|(_, p)| p));
        model.net.commit_running_stats(&tape);
        // loss is half the mean squared distance
        metrics.push(MetricRow { step, loss, acc: (2.0 * loss).sqrt(), lr });

        let last = step == tcfg.steps;
        if let Some(v) = val {
            if tcfg.eval_interval > 0 && (step % tcfg.eval_interval == 0 || last) {
                let rep = super::rmse::rmse_report(&model, v, sampler, tcfg.val_pairs_per_image, tcfg.seed)?;
                val_rows.push(ValRow { step, value: rep.overall });
                if tcfg.log {
                    eprintln!("step {step}: loss {loss:.5} val_rmse {:.4} top10 {:.4}", rep.overall, rep.top_decile);
                }
            }
        }
        if let Some(dir) = out {
            if last || (tcfg.checkpoint_every > 0 && step % tcfg.checkpoint_every == 0) {
                let saved = SavedModel { meta: meta(step), model: Model::AbsLoc(model.clone()) };
                write_outputs(dir, &saved, &metrics_csv(&metrics, "rmse"), &val_csv(&val_rows, "val_rmse"))?;
            }
        }
    }
    Ok(TrainRun { model, meta: meta(tcfg.steps), metrics, val: val_rows })
}
