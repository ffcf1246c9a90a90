//! The relative-position pair classifier, the absolute-location
//! regressor, and their training loops.

mod absloc;
mod arch;
mod model;
mod pairnet;
mod rmse;
mod train;

pub use absloc::{location_patch_infer, location_target, sample_location, sample_location_patch, AbsLocNet};
pub use arch::{desk_fusion, desk_trunk, AbsLocNetConfig, PairNetConfig, EMBEDDING_LAYER};
pub use model::{sidecar_path, Architecture, Model, ModelMeta, SavedModel, MODEL_FORMAT};
pub use pairnet::{patch_batch, PairNet, PairObjective, PairTape};
pub use rmse::{chance_rmse, chance_rmse_region, rmse_report, summarize, RmseReport};
pub use train::{
    metrics_csv, pair_accuracy, predict_pairs, sample_eval_pairs, train_absloc, train_pairnet, val_csv, MetricRow,
    TrainConfig, TrainRun, ValRow,
};
