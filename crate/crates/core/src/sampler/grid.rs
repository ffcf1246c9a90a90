use rand::Rng as _;

use super::config::SamplerConfig;
use crate::corpus::ImageBuffer;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// One sampled grid cell: grid coordinates and the top-left pixel of its
/// (jittered) patch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridCell {
    pub row: usize,
    pub col: usize,
    pub y: usize,
    pub x: usize,
}

/// Cell arrangement of a grid before jitter is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridLayout {
    pub rows: usize,
    pub cols: usize,
    pub origin_y: usize,
    pub origin_x: usize,
    pub pitch: usize,
    pub jitter: usize,
}

fn cells_along(dim: usize, patch: usize, pitch: usize, jitter: usize) -> usize {
    let reserved = patch + 2 * jitter;
    if dim < reserved {
        0
    } else {
        (dim - reserved) / pitch + 1
    }
}

impl GridLayout {
    /// Centers as many cells as fit (with jitter headroom on both sides)
    /// and splits the leftover margin evenly.
    pub fn fit(
        width: usize,
        height: usize,
        patch: usize,
        pitch: usize,
        jitter: usize,
        min_cells: usize,
    ) -> Result<Self> {
        let rows = cells_along(height, patch, pitch, jitter);
        let cols = cells_along(width, patch, pitch, jitter);
        if rows < min_cells || cols < min_cells {
            let need = patch + (min_cells - 1) * pitch + 2 * jitter;
            return Err(Error::ImageTooSmall {
                width,
                height,
                min_width: need,
                min_height: need,
            });
        }
        let span = |n: usize| patch + (n - 1) * pitch;
        Ok(Self {
            rows,
            cols,
            origin_y: (height - span(rows)) / 2,
            origin_x: (width - span(cols)) / 2,
            pitch,
            jitter,
        })
    }

    pub fn for_pairs(img: &ImageBuffer, cfg: &SamplerConfig) -> Result<Self> {
        Self::fit(img.width(), img.height(), cfg.patch_size, cfg.pitch(), cfg.jitter, 2)
    }

    /// Unjittered top-left corner of cell `(row, col)`.
    pub fn base(&self, row: usize, col: usize) -> (usize, usize) {
        (self.origin_y + row * self.pitch, self.origin_x + col * self.pitch)
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, row: i64, col: i64) -> bool {
        row >= 0 && col >= 0 && (row as usize) < self.rows && (col as usize) < self.cols
    }

    /// Draws the jittered position of one cell.
    pub fn jittered(&self, row: usize, col: usize, rng: &mut Rng) -> GridCell {
        let (by, bx) = self.base(row, col);
        let j = self.jitter as i64;
        let (dy, dx) = if j == 0 {
            (0, 0)
        } else {
            (rng.random_range(-j..=j), rng.random_range(-j..=j))
        };
        GridCell {
            row,
            col,
            y: (by as i64 + dy) as usize,
            x: (bx as i64 + dx) as usize,
        }
    }

    pub fn all_jittered(&self, rng: &mut Rng) -> Vec<GridCell> {
        let mut out = Vec::with_capacity(self.len());
        for row in 0..self.rows {
            for col in 0..self.cols {
                out.push(self.jittered(row, col, rng));
            }
        }
        out
    }
}

/// Every cell of the pair-sampling grid with independently jittered
/// positions, row-major.
pub fn grid_positions(img: &ImageBuffer, cfg: &SamplerConfig, rng: &mut Rng) -> Result<Vec<GridCell>> {
    Ok(GridLayout::for_pairs(img, cfg)?.all_jittered(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn cfg(patch: usize, gap: usize, jitter: usize) -> SamplerConfig {
        SamplerConfig {
            patch_size: patch,
            gap,
            jitter,
            ..SamplerConfig::default()
        }
    }

    #[test]
    fn centered_two_by_two() {
        // (300 - 96) / 144 -> 2 cells spanning 96 + 144 = 240 px; the 60 px
        // leftover splits as 30 on each side.
        let img = ImageBuffer::filled(300, 300, [0.5; 3]);
        let cells = grid_positions(&img, &cfg(96, 48, 0), &mut rng::seeded(0)).unwrap();
        let ys: Vec<_> = cells.iter().map(|c| c.y).collect();
        let xs: Vec<_> = cells.iter().map(|c| c.x).collect();
        assert_eq!(ys, vec![30, 30, 174, 174]);
        assert_eq!(xs, vec![30, 174, 30, 174]);
        assert_eq!(174 - 30, 96 + 48);
    }

    #[test]
    fn jitter_stays_within_bound() {
        let img = ImageBuffer::filled(400, 330, [0.5; 3]);
        let layout = GridLayout::for_pairs(&img, &cfg(96, 48, 7)).unwrap();
        let mut r = rng::seeded(1);
        for _ in 0..200 {
            for c in layout.all_jittered(&mut r) {
                let (by, bx) = layout.base(c.row, c.col);
                assert!((c.y as i64 - by as i64).abs() <= 7);
                assert!((c.x as i64 - bx as i64).abs() <= 7);
            }
        }
    }

    #[test]
    fn too_small() {
        let img = ImageBuffer::filled(100, 100, [0.5; 3]);
        let err = grid_positions(&img, &cfg(96, 48, 7), &mut rng::seeded(0)).unwrap_err();
        match err {
            Error::ImageTooSmall { min_width, .. } => assert_eq!(min_width, 96 + 144 + 14),
            other => panic!("{other}"),
        }
    }
}
