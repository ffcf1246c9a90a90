use std::path::Path;

use super::table::PatchRef;
use crate::corpus::{resample_bilinear, save_png, Corpus, ImageBuffer};
use crate::error::{Error, Result};

const BORDER: usize = 2;
const BACKGROUND: f32 = 0.15;

/// Tiles patches into a grid, one row per inner list, each patch scaled to
/// `cell` pixels. Short rows are padded with background.
pub fn montage(corpus: &Corpus, rows: &[Vec<PatchRef>], cell: usize) -> Result<ImageBuffer> {
    if rows.is_empty() || cell == 0 {
        return Err(Error::InvalidArgument("montage needs at least one row and a positive cell size".into()));
    }
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0).max(1);
    let pitch = cell + BORDER;
    let (w, h) = (cols * pitch + BORDER, rows.len() * pitch + BORDER);
    let mut data = vec![BACKGROUND; w * h * 3];
    for (ri, row) in rows.iter().enumerate() {
        for (ci, r) in row.iter().enumerate() {
            let j = corpus.index_of(&r.image_id).ok_or_else(|| Error::UnknownImage(r.image_id.clone()))?;
            let crop = corpus.images[j].crop(r.x, r.y, r.size)?;
            let tile = resample_bilinear(&crop, r.size, r.size, 3, cell, cell);
            let (oy, ox) = (BORDER + ri * pitch, BORDER + ci * pitch);
            for y in 0..cell {
                let dst = ((oy + y) * w + ox) * 3;
                data[dst..dst + cell * 3].copy_from_slice(&tile[y * cell * 3..(y + 1) * cell * 3]);
            }
        }
    }
    let data = data.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
    ImageBuffer::new(w, h, data)
}

pub fn write_montage(path: &Path, corpus: &Corpus, rows: &[Vec<PatchRef>], cell: usize) -> Result<()> {
    save_png(&montage(corpus, rows, cell)?, path)
}
