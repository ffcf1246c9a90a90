//! Constellation mining with square-fit geometric verification, and
//! greedy cluster selection for evaluation.

mod mine;
mod montage;
mod select;
mod square;

pub use mine::{
    mine_constellations, read_clusters, write_clusters, ClusterRecord, Match, MiningConfig, RolePatch,
    MIN_CORPUS_IMAGES,
};
pub use montage::cluster_montage_rows;
pub use select::{cluster_set, select_clusters, SelectedSet, SET_SIZE};
pub use square::{fit_square, square_error, SquareFit, ROLE_OFFSETS, SIDE_MAX, SIDE_MIN};
