use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::corpus::CorpusManifest;
use crate::error::{Error, Result};
use crate::mining::SelectedSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSet {
    pub images: Vec<String>,
    pub dominant_category: String,
    pub purity: f64,
}

impl EvalSet {
    /// Labels the set from manifest categories. Dominant-category ties go to
    /// the lexicographically smallest name.
    pub fn new(images: Vec<String>, categories: &BTreeMap<&str, Option<&str>>) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::InvalidArgument("empty evaluation set".into()));
        }
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for im in &images {
            let cat = categories
                .get(im.as_str())
                .ok_or_else(|| Error::UnknownImage(im.clone()))?
                .ok_or_else(|| Error::InvalidArgument(format!("image {im} has no category")))?;
            *counts.entry(cat).or_insert(0) += 1;
        }
        // BTreeMap iterates in name order and the fold keeps the first maximum,
        // so ties resolve to the smallest name
        let (dom, n) = counts
            .iter()
            .fold(None::<(&str, usize)>, |best, (&c, &n)| match best {
                Some((_, bn)) if bn >= n => best,
                _ => Some((c, n)),
            })
            .expect("nonempty");
        Ok(Self {
            purity: n as f64 / images.len() as f64,
            dominant_category: dom.to_owned(),
            images,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub coverage: f64,
    pub avg_purity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PurityCoverageCurve {
    pub points: Vec<CurvePoint>,
    pub auc: f64,
    pub auc_at_half: f64,
}

/// Builds labeled sets from a cluster selection and orders them by purity
/// descending. Equal purities keep selection order.
pub fn rank_sets(selection: &[SelectedSet], manifest: &CorpusManifest) -> Result<Vec<EvalSet>> {
    let cats = manifest.categories();
    let mut sets = selection
        .iter()
        .map(|s| EvalSet::new(s.images.clone(), &cats))
        .collect::<Result<Vec<_>>>()?;
    sets.sort_by(|a, b| b.purity.total_cmp(&a.purity));
    Ok(sets)
}

/// Walks the ranking in the given order. The curve is integrated by
/// trapezoids, starting from an implicit point at coverage 0 carrying the
/// first set's purity.
pub fn purity_coverage(sets: &[EvalSet], manifest: &CorpusManifest) -> Result<PurityCoverageCurve> {
    let cats = manifest.categories();
    if cats.is_empty() {
        return Err(Error::InvalidArgument("empty manifest".into()));
    }
    let total = cats.len() as f64;
    let mut seen: HashSet<&str> = HashSet::new();
    let mut purity_sum = 0.0;
    let mut points = Vec::with_capacity(sets.len());
    for (i, s) in sets.iter().enumerate() {
        for im in &s.images {
            if !cats.contains_key(im.as_str()) {
                return Err(Error::UnknownImage(im.clone()));
            }
            seen.insert(im.as_str());
        }
        purity_sum += s.purity;
        points.push(CurvePoint {
            coverage: seen.len() as f64 / total,
            avg_purity: purity_sum / (i + 1) as f64,
        });
    }
    Ok(PurityCoverageCurve {
        auc: area(&points, 1.0),
        auc_at_half: area(&points, 0.5),
        points,
    })
}

fn area(points: &[CurvePoint], limit: f64) -> f64 {
    let Some(first) = points.first() else {
        return 0.0;
    };
    let mut prev = CurvePoint { coverage: 0.0, avg_purity: first.avg_purity };
    let mut acc = 0.0;
    for &p in points {
        if prev.coverage >= limit {
            break;
        }
        let seg = if p.coverage > limit {
            let t = (limit - prev.coverage) / (p.coverage - prev.coverage);
            CurvePoint {
                coverage: limit,
                avg_purity: prev.avg_purity + t * (p.avg_purity - prev.avg_purity),
            }
        } else {
            p
        };
        acc += (seg.coverage - prev.coverage) * (seg.avg_purity + prev.avg_purity) / 2.0;
        prev = p;
    }
    acc
}

pub fn curve_csv(curve: &PurityCoverageCurve) -> String {
    let mut out = String::from("rank,coverage,avg_purity\n");
    for (i, p) in curve.points.iter().enumerate() {
        out.push_str(&format!("{},{},{}\n", i + 1, p.coverage, p.avg_purity));
    }
    out
}
