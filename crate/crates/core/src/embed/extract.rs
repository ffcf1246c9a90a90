use rayon::prelude::*;

use super::table::{EmbeddingTable, PatchRef};
use crate::corpus::{Corpus, ImageBuffer};
use crate::error::{Error, Result};
use crate::pretext::{patch_batch, PairNet};
use crate::sampler::{crop_patch, preprocess_inference, GridCell, GridLayout, SamplerConfig};

/// Which patches of each image to embed.
#[derive(Debug, Clone, PartialEq)]
pub enum Sampling {
    /// Centered grid of `patch_size` patches spaced `stride` apart.
    Grid { stride: usize },
    /// Explicit patches, all of the sampler's patch size.
    List(Vec<PatchRef>),
}

/// Grid positions `(row, col, y, x)` for embedding one image.
pub fn embedding_grid(img: &ImageBuffer, patch: usize, stride: usize) -> Result<(GridLayout, Vec<GridCell>)> {
    let layout = GridLayout::fit(img.width(), img.height(), patch, stride, 0, 1)?;
    let mut cells = Vec::with_capacity(layout.len());
    for row in 0..layout.rows {
        for col in 0..layout.cols {
            let (y, x) = layout.base(row, col);
            cells.push(GridCell { row, col, y, x });
        }
    }
    Ok((layout, cells))
}

fn embed_refs(model: &PairNet, cfg: &SamplerConfig, img: &ImageBuffer, refs: &[PatchRef], layer: &str) -> Result<Vec<Vec<f32>>> {
    let mut out = Vec::with_capacity(refs.len());
    for chunk in refs.chunks(64) {
        let patches = chunk
            .iter()
            .map(|r| {
                let mut p = crop_patch(img, &GridCell { row: 0, col: 0, y: r.y, x: r.x }, cfg.patch_size)?;
                preprocess_inference(&mut p, cfg);
                Ok(p)
            })
            .collect::<Result<Vec<_>>>()?;
        let e = model.embed(&patch_batch(&patches.iter().collect::<Vec<_>>())?, layer)?;
        for i in 0..chunk.len() {
            out.push(e.sample(i).iter().map(|&v| v as f32).collect());
        }
    }
    Ok(out)
}

/// Single-stack activations of `layer` (inference-mode batch norm) for
/// the chosen patches. Rows are ordered by image, then by position.
pub fn extract_embeddings(
    model: &PairNet,
    cfg: &SamplerConfig,
    corpus: &Corpus,
    sampling: &Sampling,
    layer: &str,
) -> Result<EmbeddingTable> {
    model.config.trunk.index_of(layer)?;
    let p = cfg.patch_size;
    let per_image: Vec<Vec<PatchRef>> = match sampling {
        Sampling::Grid { stride } => (0..corpus.len())
            .map(|j| {
                let (_, cells) = embedding_grid(&corpus.images[j], p, *stride)?;
                Ok(cells.iter().map(|c| PatchRef::new(corpus.id(j), c.y, c.x, p)).collect())
            })
            .collect::<Result<_>>()?,
        Sampling::List(refs) => {
            let mut by_image = vec![Vec::new(); corpus.len()];
            for r in refs {
                if r.size != p {
                    return Err(Error::InvalidArgument(format!("{r} is not a {p} px patch")));
                }
                let j = corpus.index_of(&r.image_id).ok_or_else(|| Error::UnknownImage(r.image_id.clone()))?;
                by_image[j].push(r.clone());
            }
            by_image
        }
    };
    let vectors: Vec<Vec<Vec<f32>>> = per_image
        .par_iter()
        .enumerate()
        .map(|(j, refs)| embed_refs(model, cfg, &corpus.images[j], refs, layer))
        .collect::<Result<_>>()?;
    let dim = model.config.trunk.truncated(layer)?.output_len()?;
    let mut table = EmbeddingTable::new(dim);
    for (refs, vecs) in per_image.into_iter().zip(vectors) {
        for (r, v) in refs.into_iter().zip(vecs) {
            table.push(r, &v)?;
        }
    }
    Ok(table)
}
