use std::fs::File;
use std::io::BufReader;

use rand::seq::index::sample;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use serde_json::json;

use super::{required, Invocation, RunConfig};
use crate::corpus::{synth_corpus, Corpus, CorpusManifest};
use crate::embed::{extract_embeddings, knn_query_row, write_montage, EmbeddingTable, NeighborList, PatchRef, Sampling};
use crate::error::{Error, Result};
use crate::eval::{
    chance_rmse, curve_csv, pretext_accuracy, purity_coverage, rank_sets, reference, Provenance,
};
use crate::mining::{
    cluster_montage_rows, mine_constellations, read_clusters, select_clusters, write_clusters, ClusterRecord,
    SelectedSet, MIN_CORPUS_IMAGES,
};
use crate::nn::{grad_check, GradCheckOptions, GradReport, Tensor};
use crate::pretext::{
    rmse_report, train_absloc, train_pairnet, AbsLocNetConfig, PairNet, PairNetConfig, PairObjective, SavedModel,
};
use crate::rng;
use crate::sampler::{dataset_channel_means, sample_pair, write_pair_dump, MeanMode, SamplerConfig};

/// Largest relative error `grad-check` accepts.
const GRAD_TOLERANCE: f64 = 1e-3;

pub(super) fn dispatch(inv: &mut Invocation) -> Result<()> {
    match inv.command {
        "synth-corpus" => synth(inv),
        "sample-pairs" => sample_pairs(inv),
        "train-pretext" => train_pretext(inv),
        "train-absloc" => train_abs(inv),
        "extract" => extract(inv),
        "knn" => knn(inv),
        "mine" => mine(inv),
        "select-clusters" => select(inv),
        "eval-purity" => eval_purity(inv),
        "eval-pretext" => eval_pretext(inv),
        "chance-rmse" => chance(inv),
        "grad-check" => gradcheck(inv),
        _ => montage(inv),
    }
}

fn json_bytes<T: Serialize>(v: &T) -> Vec<u8> {
    (serde_json::to_string_pretty(v).expect("serializable") + "\n").into_bytes()
}

fn jsonl_bytes<T: Serialize>(items: &[T]) -> Vec<u8> {
    let mut out = String::new();
    for it in items {
        out.push_str(&serde_json::to_string(it).expect("serializable"));
        out.push('\n');
    }
    out.into_bytes()
}

fn load_corpus(cfg: &RunConfig, key: &str, path: &str) -> Result<Corpus> {
    Corpus::from_manifest_path(required(path, key)?, cfg.budget())
}

/// Sampler settings with dataset means filled in from `corpus` when asked.
fn sampler_for(cfg: &RunConfig, corpus: &Corpus) -> Result<SamplerConfig> {
    let mut s = cfg.sampler()?;
    if let MeanMode::Dataset { .. } = s.mean_mode {
        s.mean_mode = MeanMode::Dataset {
            mean: dataset_channel_means(corpus),
        };
    }
    Ok(s)
}

fn provenance(cfg: &RunConfig, checkpoint: Option<&str>) -> Result<Provenance> {
    let bytes = match checkpoint {
        Some(p) => Some(std::fs::read(p).map_err(|e| Error::io(p, e))?),
        None => None,
    };
    Ok(Provenance::new(bytes.as_deref(), &cfg.resolved(), cfg.seed))
}

/// The pair net from `cfg.model`, or a fresh one at `cfg.seed`, with the
/// sampler settings its inputs need.
fn pair_model(cfg: &RunConfig, corpus: &Corpus) -> Result<(PairNet, SamplerConfig)> {
    if cfg.model.is_empty() {
        let net_cfg = PairNetConfig::desk(cfg.patch_size, cfg.lrn);
        let net = PairNet::new(net_cfg, &mut rng::stream(cfg.seed, u64::MAX))?;
        Ok((net, sampler_for(cfg, corpus)?))
    } else {
        let saved = SavedModel::load(cfg.model.as_ref())?;
        let net = saved.model.as_pair()?.clone();
        Ok((net, saved.meta.sampler))
    }
}

fn synth(inv: &mut Invocation) -> Result<()> {
    let cfg = &inv.config;
    let manifest = synth_corpus(cfg.n_images, &cfg.synth()?, cfg.seed, &inv.out)?;
    let names: Vec<String> = manifest.entries.iter().map(|e| e.path.clone()).collect();
    for n in names {
        inv.record(&n);
    }
    inv.record("manifest.jsonl");
    println!("wrote {} images to {}", manifest.len(), inv.out.display());
    Ok(())
}

fn sample_pairs(inv: &mut Invocation) -> Result<()> {
    let cfg = inv.config.clone();
    let corpus = load_corpus(&cfg, "manifest", &cfg.manifest)?;
    if corpus.is_empty() {
        return Err(Error::InvalidArgument("empty manifest".into()));
    }
    let sampler = sampler_for(&cfg, &corpus)?;
    let mut pairs = Vec::with_capacity(cfg.n_pairs);
    let mut csv = String::from("index,source_image,label,row,col\n");
    for i in 0..cfg.n_pairs {
        let mut r = rng::stream(cfg.seed, i as u64);
        let j = r.random_range(0..corpus.len());
        let p = sample_pair(&corpus.images[j], corpus.id(j), &sampler, &mut r)?;
        csv.push_str(&format!("{i},{},{},{},{}\n", p.source_image, p.label.index(), p.grid_cell_a.0, p.grid_cell_a.1));
        pairs.push(p);
    }
    let mut dump = Vec::new();
    write_pair_dump(&mut dump, &pairs).map_err(|e| Error::io(inv.path("pairs.bin"), e))?;
    inv.write("pairs.bin", &dump)?;
    inv.write("pairs.csv", csv.as_bytes())
}

fn record_training(inv: &mut Invocation) {
    for n in ["model.cpnet", "model.cpnet.json", "metrics.csv", "val.csv"] {
        inv.record(n);
    }
}

fn optional_corpus(cfg: &RunConfig) -> Result<Option<Corpus>> {
    if cfg.val_manifest.is_empty() {
        Ok(None)
    } else {
        Ok(Some(load_corpus(cfg, "val_manifest", &cfg.val_manifest)?))
    }
}

fn train_pretext(inv: &mut Invocation) -> Result<()> {
    let cfg = inv.config.clone();
    let train = load_corpus(&cfg, "manifest", &cfg.manifest)?;
    let val = optional_corpus(&cfg)?;
    let sampler = sampler_for(&cfg, &train)?;
    let net_cfg = PairNetConfig::desk(cfg.patch_size, cfg.lrn);
    let run = train_pairnet(&net_cfg, &cfg.train()?, &sampler, &train, val.as_ref(), Some(&inv.out))?;
    record_training(inv);
    if let Some(v) = run.val.last() {
        println!("step {}: val_acc {:.4}", v.step, v.value);
    }
    Ok(())
}

fn train_abs(inv: &mut Invocation) -> Result<()> {
    let cfg = inv.config.clone();
    let train = load_corpus(&cfg, "manifest", &cfg.manifest)?;
    let val = optional_corpus(&cfg)?;
    let sampler = sampler_for(&cfg, &train)?;
    let net_cfg = AbsLocNetConfig::desk(cfg.patch_size, cfg.lrn);
    let run = train_absloc(&net_cfg, &cfg.train()?, &sampler, &train, val.as_ref(), Some(&inv.out))?;
    record_training(inv);
    let eval_corpus = val.as_ref().unwrap_or(&train);
    let rep = rmse_report(&run.model, eval_corpus, &sampler, cfg.rmse_per_image, cfg.seed)?;
    let chance = chance_rmse(eval_corpus, &sampler, cfg.chance_samples, cfg.seed)?;
    let body = json!({
        "provenance": provenance(&cfg, Some(inv.path("model.cpnet").to_str().unwrap_or_default()))?,
        "overall_rmse": rep.overall,
        "top_decile_rmse": rep.top_decile,
        "chance_rmse": chance,
        "per_image": rep.per_image,
        "reference": {
            "top_decile_rmse_raw": reference::ABSLOC_TOP_DECILE_RMSE_RAW,
            "top_decile_rmse_projected": reference::ABSLOC_TOP_DECILE_RMSE_PROJECTED,
            "chance_rmse": reference::ABSLOC_CHANCE_RMSE,
        },
    });
    inv.write("rmse.json", &json_bytes(&body))?;
    println!("top-decile rmse {:.4}, chance {:.4}", rep.top_decile, chance);
    Ok(())
}

fn embed_corpus(cfg: &RunConfig, corpus: &Corpus) -> Result<EmbeddingTable> {
    let (net, sampler) = pair_model(cfg, corpus)?;
    let stride = if cfg.stride == 0 { sampler.patch_size } else { cfg.stride };
    extract_embeddings(&net, &sampler, corpus, &Sampling::Grid { stride }, &cfg.layer)
}

fn extract(inv: &mut Invocation) -> Result<()> {
    let cfg = inv.config.clone();
    let corpus = load_corpus(&cfg, "manifest", &cfg.manifest)?;
    let table = embed_corpus(&cfg, &corpus)?;
    inv.write("embeddings.emb", &table.encode())?;
    println!("{} embeddings of dimension {}", table.len(), table.dim());
    Ok(())
}

fn knn(inv: &mut Invocation) -> Result<()> {
    let cfg = inv.config.clone();
    let table = EmbeddingTable::load(required(&cfg.table, "table")?)?;
    let rows: Vec<usize> = if cfg.queries.is_empty() {
        let n = cfg.n_queries.min(table.len());
        sample(&mut rng::stream(cfg.seed, 0), table.len(), n).into_vec()
    } else {
        cfg.queries
            .split(',')
            .map(|q| {
                let r: PatchRef = q.trim().parse()?;
                table
                    .position(&r)
                    .ok_or_else(|| Error::InvalidArgument(format!("query {r} is not in the table")))
            })
            .collect::<Result<_>>()?
    };
    let lists: Vec<NeighborList> = rows.iter().map(|&r| knn_query_row(&table, r, cfg.k)).collect::<Result<_>>()?;
    inv.write("neighbors.jsonl", &jsonl_bytes(&lists))?;
    if !cfg.manifest.is_empty() {
        let corpus = load_corpus(&cfg, "manifest", &cfg.manifest)?;
        let grid: Vec<Vec<PatchRef>> = rows
            .iter()
            .zip(&lists)
            .map(|(&r, l)| {
                let mut row = vec![table.patch(r).clone()];
                row.extend(l.hits.iter().map(|h| table.patch(h.row).clone()));
                row
            })
            .collect();
        write_montage(&inv.path("knn.png"), &corpus, &grid, cfg.montage_cell)?;
        inv.record("knn.png");
    }
    Ok(())
}

fn write_cluster_montage(inv: &mut Invocation, corpus: &Corpus, records: &[ClusterRecord], name: &str) -> Result<()> {
    let cfg = &inv.config;
    let rows = cluster_montage_rows(records, corpus, cfg.montage_rows, cfg.montage_cols)?;
    if rows.is_empty() {
        return Ok(());
    }
    write_montage(&inv.path(name), corpus, &rows, cfg.montage_cell)?;
    inv.record(name);
    Ok(())
}

fn mine(inv: &mut Invocation) -> Result<()> {
    let cfg = inv.config.clone();
    let manifest = CorpusManifest::load(required(&cfg.manifest, "manifest")?)?;
    let needed = MIN_CORPUS_IMAGES.max(cfg.top_k + 1);
    if manifest.len() < needed {
        return Err(Error::CorpusTooSmall {
            found: manifest.len(),
            required: needed,
        });
    }
    let corpus = Corpus::load(manifest, cfg.budget())?;
    let table = if cfg.table.is_empty() {
        embed_corpus(&cfg, &corpus)?
    } else {
        EmbeddingTable::load(cfg.table.as_ref())?
    };
    let records = mine_constellations(&table, &cfg.mining())?;
    let mut buf = Vec::new();
    write_clusters(&mut buf, &records)?;
    inv.write("clusters.jsonl", &buf)?;
    write_cluster_montage(inv, &corpus, &records, "mining.png")?;
    let mean = records.iter().map(|r| r.verify_count as f64).sum::<f64>() / records.len().max(1) as f64;
    println!("{} constellations, mean verify_count {mean:.3}", records.len());
    Ok(())
}

fn load_records(path: &str) -> Result<Vec<ClusterRecord>> {
    let p = required(path, "clusters")?;
    read_clusters(BufReader::new(File::open(p).map_err(|e| Error::io(p, e))?))
}

fn select(inv: &mut Invocation) -> Result<()> {
    let records = load_records(&inv.config.clusters)?;
    let sets = select_clusters(&records, inv.config.n_sets);
    inv.write("selection.jsonl", &jsonl_bytes(&sets))?;
    println!("selected {} sets", sets.len());
    Ok(())
}

fn eval_purity(inv: &mut Invocation) -> Result<()> {
    let cfg = inv.config.clone();
    let manifest = CorpusManifest::load(required(&cfg.manifest, "manifest")?)?;
    let selection: Vec<SelectedSet> = if !cfg.selection.is_empty() {
        let text = std::fs::read_to_string(&cfg.selection).map_err(|e| Error::io(&cfg.selection, e))?;
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(|e| Error::Format(format!("selection: {e}"))))
            .collect::<Result<_>>()?
    } else {
        select_clusters(&load_records(&cfg.clusters)?, cfg.n_sets)
    };
    let sets = rank_sets(&selection, &manifest)?;
    let curve = purity_coverage(&sets, &manifest)?;
    let prov = provenance(&cfg, None)?;
    inv.write("purity.csv", (prov.csv_comment() + &curve_csv(&curve)).as_bytes())?;
    let body = json!({
        "provenance": prov,
        "n_sets": sets.len(),
        "auc": curve.auc,
        "auc_at_half": curve.auc_at_half,
        "points": curve.points,
        "sets": sets,
        "reference": { "purity_auc": reference::PURITY_AUC },
    });
    inv.write("purity.json", &json_bytes(&body))?;
    println!("{} sets, auc {:.4} (to coverage .5: {:.4})", sets.len(), curve.auc, curve.auc_at_half);
    Ok(())
}

fn eval_pretext(inv: &mut Invocation) -> Result<()> {
    let cfg = inv.config.clone();
    let model_path = required(&cfg.model, "model")?;
    let saved = SavedModel::load(model_path)?;
    let corpus = load_corpus(&cfg, "manifest", &cfg.manifest)?;
    let report = pretext_accuracy(&saved, &corpus, cfg.eval_images, cfg.eval_pairs_per_image, cfg.seed)?;
    let body = json!({
        "provenance": provenance(&cfg, Some(&cfg.model))?,
        "report": report,
        "reference": {
            "accuracy": reference::PRETEXT_ACCURACY,
            "train_accuracy": reference::PRETEXT_TRAIN_ACCURACY,
            "val_accuracy": reference::PRETEXT_VAL_ACCURACY,
            "chance": reference::PRETEXT_CHANCE,
        },
    });
    inv.write("pretext_report.json", &json_bytes(&body))?;
    println!("{} pairs, accuracy {:.4}", report.n_pairs, report.accuracy);
    Ok(())
}

fn chance(inv: &mut Invocation) -> Result<()> {
    let cfg = inv.config.clone();
    let corpus = load_corpus(&cfg, "manifest", &cfg.manifest)?;
    let sampler = sampler_for(&cfg, &corpus)?;
    let rmse = chance_rmse(&corpus, &sampler, cfg.chance_samples, cfg.seed)?;
    let body = json!({
        "provenance": provenance(&cfg, None)?,
        "n_samples": cfg.chance_samples,
        "chance_rmse": rmse,
        "reference": { "chance_rmse": reference::ABSLOC_CHANCE_RMSE },
    });
    inv.write("chance_rmse.json", &json_bytes(&body))?;
    println!("chance rmse {rmse:.4}");
    Ok(())
}

#[derive(Serialize)]
struct GradLine {
    layer: String,
    checked: usize,
    skipped: usize,
    max_rel_err: f64,
}

fn gradcheck(inv: &mut Invocation) -> Result<()> {
    let cfg = inv.config.clone();
    let lrn = match cfg.net.as_str() {
        "desk-default" => false,
        "desk-lrn" => true,
        other => return Err(Error::Config(format!("unknown net {other:?} (desk-default|desk-lrn)"))),
    };
    let mut r = rng::stream(cfg.seed, 0);
    let net = PairNet::new(PairNetConfig::desk(cfg.patch_size, lrn), &mut r)?;
    let n = cfg.grad_batch;
    let p = cfg.patch_size;
    let mut input = || {
        let data = (0..n * 3 * p * p).map(|_| StandardNormal.sample(&mut r)).collect();
        Tensor::new(vec![n, 3, p, p], data)
    };
    let (a, b) = (input()?, input()?);
    let labels = (0..n).map(|_| r.random_range(0..8)).collect();
    let mut obj = PairObjective { net, a, b, labels };
    let opts = GradCheckOptions {
        coords_per_block: cfg.grad_coords,
        seed: cfg.seed,
        ..GradCheckOptions::default()
    };
    let rep: GradReport = grad_check(&mut obj, &opts)?;
    let lines: Vec<GradLine> = rep
        .layers
        .iter()
        .map(|l| GradLine {
            layer: l.layer.clone(),
            checked: l.checked,
            skipped: l.skipped,
            max_rel_err: l.max_rel_err,
        })
        .collect();
    let worst = rep.max_rel_err();
    let body = json!({ "net": cfg.net, "h": opts.h, "tolerance": GRAD_TOLERANCE, "max_rel_err": worst, "layers": lines });
    inv.write("gradcheck.json", &json_bytes(&body))?;
    println!("max relative error {worst:.3e} over {} coordinates", rep.checked());
    if worst < GRAD_TOLERANCE {
        Ok(())
    } else {
        Err(Error::Numeric(format!("gradient check failed: {worst:.3e} >= {GRAD_TOLERANCE}")))
    }
}

fn montage(inv: &mut Invocation) -> Result<()> {
    let cfg = inv.config.clone();
    let corpus = load_corpus(&cfg, "manifest", &cfg.manifest)?;
    let records = load_records(&cfg.clusters)?;
    write_cluster_montage(inv, &corpus, &records, "montage.png")
}
