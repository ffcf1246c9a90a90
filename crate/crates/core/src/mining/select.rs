use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::mine::ClusterRecord;

/// Images a selected cluster contributes.
pub const SET_SIZE: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedSet {
    /// Rank of the source record.
    pub rank: usize,
    pub seed_image: String,
    pub images: Vec<String>,
}

/// The set a record contributes (its first `SET_SIZE` verified matches),
/// or `None` when it has fewer.
pub fn cluster_set(rec: &ClusterRecord) -> Option<Vec<String>> {
    let imgs: Vec<String> = rec.verified_images().take(SET_SIZE).map(str::to_owned).collect();
    (imgs.len() == SET_SIZE).then_some(imgs)
}

/// Greedy coverage selection over records in rank order. Pass `t` takes
/// every not-yet-selected cluster holding an image covered fewer than `t`
/// times, for `t = 1, 2, …`, until `n_sets` are chosen or nothing is left.
pub fn select_clusters(records: &[ClusterRecord], n_sets: usize) -> Vec<SelectedSet> {
    let mut ranked: Vec<&ClusterRecord> = records.iter().collect();
    ranked.sort_by_key(|r| r.rank);
    let candidates: Vec<(&ClusterRecord, Vec<String>)> =
        ranked.into_iter().filter_map(|r| cluster_set(r).map(|s| (r, s))).collect();
    let mut taken = vec![false; candidates.len()];
    let mut coverage: HashMap<&str, usize> = HashMap::new();
    let mut out = Vec::new();
    let mut target = 1;
    while out.len() < n_sets && taken.iter().any(|t| !t) {
        for (i, (rec, set)) in candidates.iter().enumerate() {
            if out.len() == n_sets {
                break;
            }
            if taken[i] || !set.iter().any(|im| coverage.get(im.as_str()).copied().unwrap_or(0) < target) {
                continue;
            }
            taken[i] = true;
            for im in set {
                *coverage.entry(im.as_str()).or_insert(0) += 1;
            }
            out.push(SelectedSet {
                rank: rec.rank,
                seed_image: rec.seed_image.clone(),
                images: set.clone(),
            });
        }
        target += 1;
    }
    out
}
