use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::square::fit_square;
use crate::embed::{EmbeddingTable, PatchRef};
use crate::error::{Error, Result};
use crate::rng;

/// Smallest corpus the miner accepts: a seed image plus a full top-100.
pub const MIN_CORPUS_IMAGES: usize = 101;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiningConfig {
    pub n_seeds: usize,
    /// Matched images retrieved per constellation.
    pub top_k: usize,
    pub seed: u64,
}

impl Default for MiningConfig {
    fn default() -> Self {
        Self {
            n_seeds: 512,
            top_k: 20,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Match {
    pub image_id: String,
    /// Best-match centers `[x, y]` for the TL, TR, BL, BR roles.
    pub centers: [[f64; 2]; 4],
    pub score: f64,
    pub verified: bool,
    /// `None` in files stands for an infinite error.
    #[serde(with = "finite_or_null")]
    pub normalized_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolePatch {
    pub y: usize,
    pub x: usize,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRecord {
    pub seed_image: String,
    pub roles: [RolePatch; 4],
    pub matches: Vec<Match>,
    pub verify_count: usize,
    #[serde(default)]
    pub rank: usize,
}

impl ClusterRecord {
    /// Verified matched images in retrieval order.
    pub fn verified_images(&self) -> impl Iterator<Item = &str> {
        self.matches.iter().filter(|m| m.verified).map(|m| m.image_id.as_str())
    }
}

mod finite_or_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// Grid of unit-normalized embeddings for one image.
struct ImageGrid {
    image_id: String,
    rows: usize,
    cols: usize,
    /// Row-major cells: patch and normalized vector.
    cells: Vec<(PatchRef, Vec<f64>)>,
}

impl ImageGrid {
    fn cell(&self, r: usize, c: usize) -> &(PatchRef, Vec<f64>) {
        &self.cells[r * self.cols + c]
    }
}

fn unit(v: &[f32]) -> Vec<f64> {
    let n = v.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
    if n == 0.0 {
        vec![0.0; v.len()]
    } else {
        v.iter().map(|&x| x as f64 / n).collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Groups table rows by image into full rectangular grids.
fn build_grids(table: &EmbeddingTable) -> Result<Vec<ImageGrid>> {
    let mut order: Vec<String> = Vec::new();
    let mut by_image: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, r) in table.patches().iter().enumerate() {
        by_image
            .entry(r.image_id.as_str())
            .or_insert_with(|| {
                order.push(r.image_id.clone());
                Vec::new()
            })
            .push(i);
    }
    order.sort();
    order
        .into_iter()
        .map(|id| {
            let rows_idx = &by_image[id.as_str()];
            let ys: BTreeMap<usize, usize> = rows_idx.iter().map(|&i| (table.patch(i).y, 0)).collect();
            let xs: BTreeMap<usize, usize> = rows_idx.iter().map(|&i| (table.patch(i).x, 0)).collect();
            let (rows, cols) = (ys.len(), xs.len());
            if rows * cols != rows_idx.len() {
                return Err(Error::InvalidArgument(format!("embeddings of {id} do not form a full grid")));
            }
            let yi: HashMap<usize, usize> = ys.keys().enumerate().map(|(k, &y)| (y, k)).collect();
            let xi: HashMap<usize, usize> = xs.keys().enumerate().map(|(k, &x)| (x, k)).collect();
            let mut slots: Vec<Option<(PatchRef, Vec<f64>)>> = vec![None; rows * cols];
            for &i in rows_idx {
                let p = table.patch(i);
                slots[yi[&p.y] * cols + xi[&p.x]] = Some((p.clone(), unit(table.vector(i))));
            }
            Ok(ImageGrid {
                image_id: id,
                rows,
                cols,
                cells: slots.into_iter().map(|s| s.expect("full grid")).collect(),
            })
        })
        .collect()
}

/// For each seed: four adjacent grid patches of one image, their best
/// match per role in every other image, the `top_k` images by summed best
/// scores, and a square fit to each image's four match centers. Records
/// come back sorted by verification count (ties by seed image id).
pub fn mine_constellations(table: &EmbeddingTable, cfg: &MiningConfig) -> Result<Vec<ClusterRecord>> {
    let grids = build_grids(table)?;
    let required = MIN_CORPUS_IMAGES.max(cfg.top_k + 1);
    if grids.len() < required {
        return Err(Error::CorpusTooSmall {
            found: grids.len(),
            required,
        });
    }
    let eligible: Vec<usize> = (0..grids.len()).filter(|&g| grids[g].rows >= 2 && grids[g].cols >= 2).collect();
    if eligible.is_empty() {
        return Err(Error::InvalidArgument("no image has a 2x2 embedding grid".into()));
    }
    let mut records: Vec<(usize, ClusterRecord)> = (0..cfg.n_seeds)
        .into_par_iter()
        .map(|s| {
            let mut r = rng::stream(cfg.seed, s as u64);
            let src = &grids[eligible[r.random_range(0..eligible.len())]];
            let (gr, gc) = (r.random_range(0..src.rows - 1), r.random_range(0..src.cols - 1));
            let roles = [src.cell(gr, gc), src.cell(gr, gc + 1), src.cell(gr + 1, gc), src.cell(gr + 1, gc + 1)];
            let avg_side = roles.iter().map(|(p, _)| p.size as f64).sum::<f64>() / 4.0;
            let mut scored: Vec<(f64, usize, [[f64; 2]; 4])> = grids
                .iter()
                .enumerate()
                .filter(|(_, g)| g.image_id != src.image_id)
                .map(|(gi, g)| {
                    let mut total = 0.0;
                    let mut centers = [[0.0; 2]; 4];
                    for (k, (_, q)) in roles.iter().enumerate() {
                        let mut best = (f64::NEG_INFINITY, 0);
                        for (ci, (_, v)) in g.cells.iter().enumerate() {
                            let sc = dot(q, v);
                            if sc > best.0 {
                                best = (sc, ci);
                            }
                        }
                        total += best.0;
                        centers[k] = g.cells[best.1].0.center();
                    }
                    (total, gi, centers)
                })
                .collect();
            scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| grids[a.1].image_id.cmp(&grids[b.1].image_id)));
            scored.truncate(cfg.top_k);
            let matches = scored
                .into_iter()
                .map(|(score, gi, centers)| {
                    let fit = fit_square(&centers, avg_side)?;
                    Ok(Match {
                        image_id: grids[gi].image_id.clone(),
                        centers,
                        score,
                        verified: fit.verified,
                        normalized_error: fit.normalized_error,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let verify_count = matches.iter().filter(|m| m.verified).count();
            let roles = roles.map(|(p, _)| RolePatch { y: p.y, x: p.x, size: p.size });
            Ok((s, ClusterRecord { seed_image: src.image_id.clone(), roles, matches, verify_count, rank: 0 }))
        })
        .collect::<Result<_>>()?;
    records.sort_by(|(sa, a), (sb, b)| {
        b.verify_count.cmp(&a.verify_count).then_with(|| a.seed_image.cmp(&b.seed_image)).then(sa.cmp(sb))
    });
    Ok(records
        .into_iter()
        .enumerate()
        .map(|(rank, (_, mut rec))| {
            rec.rank = rank;
            rec
        })
        .collect())
}

pub fn write_clusters<W: Write>(mut w: W, records: &[ClusterRecord]) -> Result<()> {
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| Error::Format(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| Error::Format(e.to_string()))?;
    }
    Ok(())
}

pub fn read_clusters<R: BufRead>(r: R) -> Result<Vec<ClusterRecord>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::Format(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Format(format!("cluster line {}: {e}", i + 1)))?);
    }
    Ok(out)
}
