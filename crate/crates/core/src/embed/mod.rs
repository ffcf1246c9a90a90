//! Patch embeddings from a trained (or random) trunk and exact
//! nearest-neighbor retrieval by normalized correlation.

mod extract;
mod knn;
mod montage;
mod table;

pub use extract::{embedding_grid, extract_embeddings, Sampling};
pub use knn::{knn_brute_force, knn_query, knn_query_row, normalized_correlation, Hit, NeighborList};
pub use montage::{montage, write_montage};
pub use table::{EmbeddingTable, PatchRef, MAGIC};
