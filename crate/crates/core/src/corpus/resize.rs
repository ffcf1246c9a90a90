use super::image::ImageBuffer;
use crate::error::{Error, Result};

/// Largest upscale factor `resize_to_budget` accepts before treating the
/// input as degenerate.
pub const MAX_UPSCALE: f64 = 8.0;

/// Bilinear resample of an interleaved raster with half-pixel-centered
/// sampling. Every output value is a convex combination of inputs.
pub fn resample_bilinear(
    src: &[f32],
    sw: usize,
    sh: usize,
    channels: usize,
    dw: usize,
    dh: usize,
) -> Vec<f32> {
    assert_eq!(src.len(), sw * sh * channels);
    if sw == dw && sh == dh {
        return src.to_vec();
    }
    let axis = |dst: usize, s: usize, d: usize| -> (usize, usize, f32) {
        let pos = ((dst as f64 + 0.5) * (s as f64 / d as f64) - 0.5).clamp(0.0, (s - 1) as f64);
        let i0 = pos.floor() as usize;
        let i1 = (i0 + 1).min(s - 1);
        (i0, i1, (pos - i0 as f64) as f32)
    };
    let xs: Vec<_> = (0..dw).map(|x| axis(x, sw, dw)).collect();
    let mut out = vec![0.0f32; dw * dh * channels];
    for y in 0..dh {
        let (y0, y1, fy) = axis(y, sh, dh);
        for (x, &(x0, x1, fx)) in xs.iter().enumerate() {
            let o = (y * dw + x) * channels;
            for c in 0..channels {
                let at = |yy: usize, xx: usize| src[(yy * sw + xx) * channels + c];
                let top = at(y0, x0) + (at(y0, x1) - at(y0, x0)) * fx;
                let bot = at(y1, x0) + (at(y1, x1) - at(y1, x0)) * fx;
                out[o + c] = top + (bot - top) * fy;
            }
        }
    }
    out
}

pub fn resize(img: &ImageBuffer, width: usize, height: usize) -> ImageBuffer {
    let data = resample_bilinear(img.data(), img.width(), img.height(), 3, width, height);
    // convex combinations of [0,1] values may drift by an ulp
    let data = data.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
    ImageBuffer::from_raw_unchecked(width, height, data)
}

/// Target dimensions for bringing `w`×`h` into `[min_px, max_px]` total
/// pixels at a preserved aspect ratio. Returns `None` when already inside.
pub fn budget_dimensions(
    w: usize,
    h: usize,
    min_px: usize,
    max_px: usize,
) -> Result<Option<(usize, usize)>> {
    if min_px >= max_px {
        return Err(Error::InvalidArgument(format!(
            "pixel budget [{min_px}, {max_px}] is empty"
        )));
    }
    if w == 0 || h == 0 {
        return Err(Error::InvalidArgument("image must be nonempty".into()));
    }
    let px = w * h;
    if (min_px..=max_px).contains(&px) {
        return Ok(None);
    }
    let target = if px > max_px { max_px } else { min_px } as f64;
    let scale = (target / px as f64).sqrt();
    if scale > MAX_UPSCALE {
        return Err(Error::Degenerate(format!(
            "{w}x{h} needs {scale:.2}x upscale to reach {min_px} px (limit {MAX_UPSCALE}x)"
        )));
    }
    let (fw, fh) = (w as f64 * scale, h as f64 * scale);
    // Among floor/ceil roundings, prefer in-budget candidates, then the
    // least aspect distortion, then the one closest to the targeted endpoint.
    let aspect = w as f64 / h as f64;
    let mut best: Option<(bool, f64, f64, (usize, usize))> = None;
    for cw in [fw.floor(), fw.ceil()] {
        for ch in [fh.floor(), fh.ceil()] {
            let (cw, ch) = ((cw as usize).max(1), (ch as usize).max(1));
            let n = cw * ch;
            let inside = (min_px..=max_px).contains(&n);
            let skew = ((cw as f64 / ch as f64) / aspect).ln().abs();
            let dist = (n as f64 - target).abs();
            let better = match best {
                None => true,
                Some((bi, bs, bd, _)) => {
                    (inside && !bi)
                        || (inside == bi && (skew < bs - 1e-12 || (skew <= bs + 1e-12 && dist < bd)))
                }
            };
            if better {
                best = Some((inside, skew, dist, (cw, ch)));
            }
        }
    }
    Ok(best.map(|(_, _, _, dims)| dims))
}

/// Rescales `img` so its pixel count falls in `[min_px, max_px]`, targeting
/// `max_px` from above and `min_px` from below. In-budget images are
/// returned unchanged.
pub fn resize_to_budget(img: &ImageBuffer, min_px: usize, max_px: usize) -> Result<ImageBuffer> {
    match budget_dimensions(img.width(), img.height(), min_px, max_px)? {
        None => Ok(img.clone()),
        Some((w, h)) => Ok(resize(img, w, h)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gradient(w: usize, h: usize) -> ImageBuffer {
        let mut data = Vec::with_capacity(w * h * 3);
        for y in 0..h {
            for x in 0..w {
                data.push(x as f32 / w as f32);
                data.push(y as f32 / h as f32);
                data.push(((x + y) % 7) as f32 / 6.0);
            }
        }
        ImageBuffer::new(w, h, data).unwrap()
    }

    #[test]
    fn in_budget_unchanged() {
        let img = gradient(600, 500);
        let out = resize_to_budget(&img, 150_000, 450_000).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn downscale_to_max() {
        // sqrt(450000/1e6) * 1000 = 670.8; 671^2 would exceed the budget
        assert_eq!(
            budget_dimensions(1000, 1000, 150_000, 450_000).unwrap(),
            Some((670, 670))
        );
        assert_eq!(670 * 670, 448_900);
    }

    #[test]
    fn upscale_to_min() {
        // sqrt(15) * 100 = 387.3; 387^2 = 149,769 is short of the budget so
        // the ceiling 388^2 = 150,544 is chosen.
        let dims = budget_dimensions(100, 100, 150_000, 450_000).unwrap().unwrap();
        assert_eq!(dims, (388, 388));
        let n = dims.0 * dims.1;
        assert!((150_000..=450_000).contains(&n));
    }

    #[test]
    fn too_small_is_degenerate() {
        let err = budget_dimensions(10, 10, 150_000, 450_000).unwrap_err();
        assert!(matches!(err, Error::Degenerate(_)));
    }

    #[test]
    fn empty_budget_rejected() {
        assert!(budget_dimensions(10, 10, 100, 100).is_err());
    }

    #[test]
    fn same_size_resample_is_identity() {
        let img = gradient(13, 9);
        let out = resample_bilinear(img.data(), 13, 9, 3, 13, 9);
        assert_eq!(out, img.data());
    }

    proptest! {
        #[test]
        fn budget_resize_idempotent_and_in_range(w in 20usize..400, h in 20usize..400) {
            let (lo, hi) = (20_000usize, 60_000usize);
            let img = ImageBuffer::filled(w, h, [0.2, 0.4, 0.6]);
            let once = resize_to_budget(&img, lo, hi).unwrap();
            let n = once.pixel_count();
            prop_assert!((lo..=hi).contains(&n), "{}x{} -> {}", w, h, n);
            // each side is a floor or ceiling of the exact scaled side
            let px = w * h;
            let target = if px > hi { hi } else if px < lo { lo } else { px };
            let s = (target as f64 / px as f64).sqrt();
            prop_assert!((once.width() as f64 - w as f64 * s).abs() < 1.0);
            prop_assert!((once.height() as f64 - h as f64 * s).abs() < 1.0);
            let twice = resize_to_budget(&once, lo, hi).unwrap();
            prop_assert_eq!(twice, once);
        }

        #[test]
        fn resize_preserves_range(w in 2usize..40, h in 2usize..40, dw in 1usize..60, dh in 1usize..60, seed in any::<u64>()) {
            let mut state = seed | 1;
            let data: Vec<f32> = (0..w * h * 3).map(|_| {
                state ^= state << 13; state ^= state >> 7; state ^= state << 17;
                (state % 1001) as f32 / 1000.0
            }).collect();
            let img = ImageBuffer::new(w, h, data).unwrap();
            let out = resize(&img, dw, dh);
            prop_assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
