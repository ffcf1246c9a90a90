use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::patch::Patch;
use crate::rng::Rng;

/// The green-magenta color axis in RGB.
pub const GREEN_MAGENTA_AXIS: [f64; 3] = [-1.0, 2.0, -1.0];

/// `B = I - aᵀa / (a aᵀ)`: removes each color's component along `a`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColorProjection {
    pub matrix: [[f64; 3]; 3],
}

impl ColorProjection {
    pub fn along(a: [f64; 3]) -> Self {
        let norm2: f64 = a.iter().map(|v| v * v).sum();
        let mut matrix = [[0.0; 3]; 3];
        for (i, row) in matrix.iter_mut().enumerate() {
            for (j, m) in row.iter_mut().enumerate() {
                let id = if i == j { 1.0 } else { 0.0 };
                *m = id - a[i] * a[j] / norm2;
            }
        }
        Self { matrix }
    }

    pub fn green_magenta() -> Self {
        Self::along(GREEN_MAGENTA_AXIS)
    }

    pub fn apply_pixel(&self, p: [f64; 3]) -> [f64; 3] {
        let m = &self.matrix;
        [
            m[0][0] * p[0] + m[0][1] * p[1] + m[0][2] * p[2],
            m[1][0] * p[0] + m[1][1] * p[1] + m[1][2] * p[2],
            m[2][0] * p[0] + m[2][1] * p[1] + m[2][2] * p[2],
        ]
    }
}

/// Replaces every pixel `p` with `B·p`. No clamping.
pub fn apply_color_projection(patch: &mut Patch) {
    let b = ColorProjection::green_magenta();
    for px in patch.pixels_mut() {
        let q = b.apply_pixel([px[0] as f64, px[1] as f64, px[2] as f64]);
        px[0] = q[0] as f32;
        px[1] = q[1] as f32;
        px[2] = q[2] as f32;
    }
}

/// Keeps one uniformly chosen channel and fills the other two with
/// Gaussian noise of the kept channel's mean and 1/100 of its standard
/// deviation. Returns the kept channel.
pub fn apply_color_drop(patch: &mut Patch, rng: &mut Rng) -> usize {
    let keep = rng.random_range(0..3);
    let mean = patch.channel_mean(keep);
    let sigma = patch.channel_std(keep) / 100.0;
    let noise = Normal::new(mean, sigma).expect("finite sigma");
    for px in patch.pixels_mut() {
        for (c, v) in px.iter_mut().enumerate() {
            if c != keep {
                *v = if sigma > 0.0 {
                    noise.sample(rng) as f32
                } else {
                    mean as f32
                };
            }
        }
    }
    keep
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn projection_matrix_entries() {
        // a = [-1, 2, -1], a·aᵀ = 6: B = I - (1/6) [[1,-2,1],[-2,4,-2],[1,-2,1]]
        let b = ColorProjection::green_magenta().matrix;
        let expect = [
            [5.0 / 6.0, 1.0 / 3.0, -1.0 / 6.0],
            [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
            [-1.0 / 6.0, 1.0 / 3.0, 5.0 / 6.0],
        ];
        for i in 0..3 {
            for j in 0..3 {
                assert!((b[i][j] - expect[i][j]).abs() < 1e-15);
            }
        }
        let red = ColorProjection::green_magenta().apply_pixel([1.0, 0.0, 0.0]);
        assert!((red[0] - 5.0 / 6.0).abs() < 1e-15);
        assert!((red[1] - 1.0 / 3.0).abs() < 1e-15);
        assert!((red[2] + 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn gray_fixed_axis_annihilated() {
        let b = ColorProjection::green_magenta();
        let g = b.apply_pixel([0.3, 0.3, 0.3]);
        assert!(g.iter().all(|v| (v - 0.3).abs() < 1e-15));
        let t = 0.7;
        let z = b.apply_pixel([-t, 2.0 * t, -t]);
        assert!(z.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn drop_constant_channel_gives_exact_mean() {
        let mut p = Patch::new(8, [0.4f32, 0.4, 0.4].repeat(64));
        let keep = apply_color_drop(&mut p, &mut rng::seeded(3));
        for px in p.pixels() {
            for (c, &v) in px.iter().enumerate() {
                if c != keep {
                    assert_eq!(v, 0.4f64 as f32);
                }
            }
        }
    }

    #[test]
    fn drop_noise_std_is_one_percent() {
        let mut r = rng::seeded(9);
        let mut ratios = Vec::new();
        for _ in 0..20 {
            let data: Vec<f32> = (0..96 * 96 * 3).map(|_| r.random::<f32>()).collect();
            let mut p = Patch::new(96, data);
            let keep = apply_color_drop(&mut p, &mut r);
            let kept = p.channel_std(keep);
            for c in (0..3).filter(|&c| c != keep) {
                ratios.push(p.channel_std(c) / (kept / 100.0));
            }
        }
        let mean_ratio = ratios.iter().sum::<f64>() / ratios.len() as f64;
        assert!((mean_ratio - 1.0).abs() < 0.2, "{mean_ratio}");
    }

    #[test]
    fn drop_deterministic() {
        let data: Vec<f32> = (0..16 * 16 * 3).map(|i| (i % 17) as f32 / 16.0).collect();
        let mut a = Patch::new(16, data.clone());
        let mut b = Patch::new(16, data);
        apply_color_drop(&mut a, &mut rng::seeded(5));
        apply_color_drop(&mut b, &mut rng::seeded(5));
        assert_eq!(a, b);
    }
}
