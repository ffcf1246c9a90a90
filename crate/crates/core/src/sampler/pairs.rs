use std::io::{Read, Write};

use rand::Rng as _;

use super::config::{PairScheme, SamplerConfig};
use super::grid::{GridCell, GridLayout};
use super::label::{RelativeLabel, OFFSETS};
use super::patch::Patch;
use super::preprocess::preprocess_patch;
use crate::corpus::ImageBuffer;
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct PatchPair {
    pub patch_a: Patch,
    pub patch_b: Patch,
    pub label: RelativeLabel,
    pub source_image: String,
    pub grid_cell_a: (usize, usize),
}

/// Offsets from `(row, col)` that stay inside the grid.
pub fn valid_offsets(layout: &GridLayout, row: usize, col: usize) -> Vec<RelativeLabel> {
    RelativeLabel::all()
        .filter(|l| {
            let (dr, dc) = l.offset();
            layout.contains(row as i64 + dr as i64, col as i64 + dc as i64)
        })
        .collect()
}

/// Picks the first cell and the label of the second under `scheme`.
pub fn choose_cells(layout: &GridLayout, scheme: PairScheme, rng: &mut Rng) -> ((usize, usize), RelativeLabel) {
    match scheme {
        PairScheme::TwoStage => {
            // every cell of a grid with at least 2x2 cells has a neighbor
            let idx = rng.random_range(0..layout.len());
            let (row, col) = (idx / layout.cols, idx % layout.cols);
            let offsets = valid_offsets(layout, row, col);
            let label = offsets[rng.random_range(0..offsets.len())];
            ((row, col), label)
        }
        PairScheme::LabelBalanced => {
            let label = RelativeLabel::new(rng.random_range(0..OFFSETS.len())).expect("in range");
            let (dr, dc) = label.offset();
            let rows = if dr == 0 { 0..layout.rows } else if dr < 0 { 1..layout.rows } else { 0..layout.rows - 1 };
            let cols = if dc == 0 { 0..layout.cols } else if dc < 0 { 1..layout.cols } else { 0..layout.cols - 1 };
            let row = rng.random_range(rows);
            let col = rng.random_range(cols);
            ((row, col), label)
        }
    }
}

pub fn crop_patch(img: &ImageBuffer, cell: &GridCell, size: usize) -> Result<Patch> {
    Ok(Patch::new(size, img.crop(cell.x, cell.y, size)?))
}

/// Samples one labeled pair from a single image and preprocesses both
/// patches independently.
pub fn sample_pair(img: &ImageBuffer, image_id: &str, cfg: &SamplerConfig, rng: &mut Rng) -> Result<PatchPair> {
    let layout = GridLayout::for_pairs(img, cfg)?;
    let ((row, col), label) = choose_cells(&layout, cfg.pair_scheme, rng);
    let (dr, dc) = label.offset();
    let (rb, cb) = ((row as i64 + dr as i64) as usize, (col as i64 + dc as i64) as usize);
    let cell_a = layout.jittered(row, col, rng);
    let cell_b = layout.jittered(rb, cb, rng);
    let mut patch_a = crop_patch(img, &cell_a, cfg.patch_size)?;
    let mut patch_b = crop_patch(img, &cell_b, cfg.patch_size)?;
    preprocess_patch(&mut patch_a, cfg, rng);
    preprocess_patch(&mut patch_b, cfg, rng);
    Ok(PatchPair {
        patch_a,
        patch_b,
        label,
        source_image: image_id.to_owned(),
        grid_cell_a: (row, col),
    })
}

/// Binary dump: per record `u32` id length, id bytes, `u8` label, then both
/// patches as little-endian `f32` in row-major RGB order.
pub fn write_pair_dump<W: Write>(mut w: W, pairs: &[PatchPair]) -> std::io::Result<()> {
    for p in pairs {
        w.write_all(&(p.source_image.len() as u32).to_le_bytes())?;
        w.write_all(p.source_image.as_bytes())?;
        w.write_all(&[p.label.index() as u8])?;
        for patch in [&p.patch_a, &p.patch_b] {
            for v in &patch.data {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

/// Reads a pair dump. Grid cells are not stored and come back as `(0, 0)`.
pub fn read_pair_dump<R: Read>(mut r: R, patch_size: usize) -> Result<Vec<PatchPair>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)
        .map_err(|e| Error::Format(format!("pair dump: {e}")))?;
    let mut cur = &bytes[..];
    fn take<'a>(cur: &mut &'a [u8], n: usize) -> Result<&'a [u8]> {
        if cur.len() < n {
            return Err(Error::Format("truncated pair dump".into()));
        }
        let (head, rest) = cur.split_at(n);
        *cur = rest;
        Ok(head)
    }
    let n_vals = patch_size * patch_size * 3;
    let mut pairs = Vec::new();
    while !cur.is_empty() {
        let len = u32::from_le_bytes(take(&mut cur, 4)?.try_into().unwrap()) as usize;
        let id = String::from_utf8(take(&mut cur, len)?.to_vec())
            .map_err(|_| Error::Format("pair dump id is not UTF-8".into()))?;
        let label = RelativeLabel::new(take(&mut cur, 1)?[0] as usize)?;
        let mut patches = [0, 1].map(|_| Patch::new(patch_size, vec![0.0; n_vals]));
        for patch in patches.iter_mut() {
            let raw = take(&mut cur, n_vals * 4)?;
            for (v, c) in patch.data.iter_mut().zip(raw.chunks_exact(4)) {
                *v = f32::from_le_bytes(c.try_into().unwrap());
            }
        }
        let [patch_a, patch_b] = patches;
        pairs.push(PatchPair {
            patch_a,
            patch_b,
            label,
            source_image: id,
            grid_cell_a: (0, 0),
        });
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::sampler::ColorMode;

    fn textured(w: usize, h: usize) -> ImageBuffer {
        let data = (0..w * h * 3).map(|i| ((i * 2654435761usize) % 1000) as f32 / 999.0).collect();
        ImageBuffer::new(w, h, data).unwrap()
    }

    #[test]
    fn corner_cell_labels() {
        let img = ImageBuffer::filled(300, 300, [0.5; 3]);
        let cfg = SamplerConfig::default();
        let layout = GridLayout::for_pairs(&img, &cfg).unwrap();
        assert_eq!((layout.rows, layout.cols), (2, 2));
        let labels: Vec<_> = valid_offsets(&layout, 0, 0).iter().map(|l| l.index()).collect();
        assert_eq!(labels, vec![4, 6, 7]);
        let mut r = rng::seeded(0);
        for _ in 0..200 {
            let p = sample_pair(&img, "x", &cfg, &mut r).unwrap();
            if p.grid_cell_a == (0, 0) {
                assert!([4, 6, 7].contains(&p.label.index()));
            }
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let img = textured(200, 200);
        let cfg = SamplerConfig { color_mode: ColorMode::Drop, pixelation_prob: 0.5, ..SamplerConfig::desk() };
        let a = sample_pair(&img, "i", &cfg, &mut rng::seeded(17)).unwrap();
        let b = sample_pair(&img, "i", &cfg, &mut rng::seeded(17)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn too_small_propagates() {
        let img = ImageBuffer::filled(100, 100, [0.5; 3]);
        let err = sample_pair(&img, "s", &SamplerConfig::default(), &mut rng::seeded(0)).unwrap_err();
        assert!(matches!(err, Error::ImageTooSmall { .. }));
    }

    #[test]
    fn pair_center_distance_at_zero_jitter() {
        let img = textured(400, 400);
        let cfg = SamplerConfig { jitter: 0, ..SamplerConfig::default() };
        let layout = GridLayout::for_pairs(&img, &cfg).unwrap();
        let mut r = rng::seeded(2);
        for _ in 0..100 {
            let ((row, col), label) = choose_cells(&layout, cfg.pair_scheme, &mut r);
            let (dr, dc) = label.offset();
            let a = layout.jittered(row, col, &mut r);
            let b = layout.jittered((row as i32 + dr) as usize, (col as i32 + dc) as usize, &mut r);
            if dr != 0 {
                assert_eq!((b.y as i64 - a.y as i64).abs(), 144);
            }
            if dc != 0 {
                assert_eq!((b.x as i64 - a.x as i64).abs(), 144);
            }
        }
    }

    #[test]
    fn dump_round_trip() {
        let img = textured(120, 120);
        let cfg = SamplerConfig::desk();
        let mut r = rng::seeded(8);
        let pairs: Vec<_> = (0..3).map(|_| sample_pair(&img, "img_7", &cfg, &mut r).unwrap()).collect();
        let mut buf = Vec::new();
        write_pair_dump(&mut buf, &pairs).unwrap();
        assert_eq!(buf.len(), 3 * (4 + 5 + 1 + 2 * 32 * 32 * 3 * 4));
        let back = read_pair_dump(&buf[..], 32).unwrap();
        for (p, q) in pairs.iter().zip(&back) {
            assert_eq!((p.label, &p.source_image, &p.patch_a, &p.patch_b), (q.label, &q.source_image, &q.patch_a, &q.patch_b));
        }
        assert!(read_pair_dump(&buf[..buf.len() - 1], 32).is_err());
    }
}
