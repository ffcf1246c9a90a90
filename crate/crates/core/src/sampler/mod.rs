//! Labeled patch-pair sampling and anti-shortcut preprocessing.

mod color;
mod config;
mod grid;
mod label;
mod pairs;
mod patch;
mod preprocess;

pub use color::{apply_color_drop, apply_color_projection, ColorProjection, GREEN_MAGENTA_AXIS};
pub use config::{ColorMode, MeanMode, PairScheme, SamplerConfig};
pub use grid::{grid_positions, GridCell, GridLayout};
pub use label::{label_to_offset, offset_to_label, RelativeLabel, NUM_CLASSES, OFFSETS};
pub use pairs::{
    choose_cells, crop_patch, read_pair_dump, sample_pair, valid_offsets, write_pair_dump, PatchPair,
};
pub use patch::Patch;
pub use preprocess::{
    dataset_channel_means, pixelate, preprocess_inference, preprocess_patch, subtract_mean,
};
