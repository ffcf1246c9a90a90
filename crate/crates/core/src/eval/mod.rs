//! Purity-coverage curves, pretext accuracy reports, and chance baselines.

mod pretext;
mod purity;
mod report;

pub use pretext::{pair_report, pretext_accuracy, PretextReport, N_CLASSES};
pub use purity::{curve_csv, purity_coverage, rank_sets, CurvePoint, EvalSet, PurityCoverageCurve};
pub use report::{reference, sha256_hex, Provenance};
pub use crate::pretext::{chance_rmse, chance_rmse_region};
