use std::cmp::Ordering;

use serde::Serialize;

use super::table::{EmbeddingTable, PatchRef};
use crate::error::{Error, Result};

/// Cosine similarity `⟨u,v⟩ / (‖u‖‖v‖)` without mean-centering, computed in
/// `f64`. A zero operand scores 0.
pub fn normalized_correlation(u: &[f32], v: &[f32]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::ShapeMismatch(format!("dims {} and {}", u.len(), v.len())));
    }
    let (mut uv, mut uu, mut vv) = (0.0f64, 0.0f64, 0.0f64);
    for (&a, &b) in u.iter().zip(v) {
        let (a, b) = (a as f64, b as f64);
        uv += a * b;
        uu += a * a;
        vv += b * b;
    }
    if uu == 0.0 || vv == 0.0 {
        return Ok(0.0);
    }
    Ok((uv / (uu.sqrt() * vv.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Hit {
    pub patch: String,
    #[serde(skip)]
    pub row: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NeighborList {
    pub query: Option<String>,
    pub hits: Vec<Hit>,
}

/// Descending score, then ascending `(image_id, y, x)`.
fn rank(a: &(f64, usize), b: &(f64, usize), refs: &[PatchRef]) -> Ordering {
    b.0.total_cmp(&a.0).then_with(|| {
        let (ra, rb) = (&refs[a.1], &refs[b.1]);
        (&ra.image_id, ra.y, ra.x, ra.size).cmp(&(&rb.image_id, rb.y, rb.x, rb.size))
    })
}

fn top_k(table: &EmbeddingTable, query: &[f32], k: usize, skip: Option<usize>) -> Result<Vec<Hit>> {
    if table.is_empty() {
        return Err(Error::InvalidArgument("k-NN over an empty table".into()));
    }
    let available = table.len() - usize::from(skip.is_some());
    if k > available {
        return Err(Error::InvalidArgument(format!("k = {k} exceeds {available} candidate rows")));
    }
    let mut scored = Vec::with_capacity(table.len());
    for i in 0..table.len() {
        if Some(i) != skip {
            scored.push((normalized_correlation(query, table.vector(i))?, i));
        }
    }
    let refs = table.patches();
    if k < scored.len() && k > 0 {
        scored.select_nth_unstable_by(k - 1, |a, b| rank(a, b, refs));
    }
    scored.truncate(k);
    scored.sort_by(|a, b| rank(a, b, refs));
    Ok(scored
        .into_iter()
        .map(|(score, row)| Hit {
            patch: refs[row].to_string(),
            row,
            score,
        })
        .collect())
}

/// Exact top-`k` rows by normalized correlation with `query`.
pub fn knn_query(table: &EmbeddingTable, query: &[f32], k: usize) -> Result<NeighborList> {
    Ok(NeighborList {
        query: None,
        hits: top_k(table, query, k, None)?,
    })
}

/// Neighbors of a stored row, excluding the row itself.
pub fn knn_query_row(table: &EmbeddingTable, row: usize, k: usize) -> Result<NeighborList> {
    if row >= table.len() {
        return Err(Error::InvalidArgument(format!("row {row} of {}", table.len())));
    }
    Ok(NeighborList {
        query: Some(table.patch(row).to_string()),
        hits: top_k(table, table.vector(row), k, Some(row))?,
    })
}

/// Reference implementation: full stable sort of every row.
pub fn knn_brute_force(table: &EmbeddingTable, query: &[f32], k: usize) -> Result<Vec<(usize, f64)>> {
    let mut all: Vec<(f64, usize)> = (0..table.len())
        .map(|i| Ok((normalized_correlation(query, table.vector(i))?, i)))
        .collect::<Result<_>>()?;
    let refs = table.patches();
    all.sort_by(|a, b| rank(a, b, refs));
    Ok(all.into_iter().take(k).map(|(s, i)| (i, s)).collect())
}
