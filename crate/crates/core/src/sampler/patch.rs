/// Square RGB patch, row-major interleaved. Unlike `ImageBuffer`, values
/// are unconstrained once preprocessing has run.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub size: usize,
    pub data: Vec<f32>,
}

impl Patch {
    pub fn new(size: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), size * size * 3, "patch data length");
        Self { size, data }
    }

    pub fn pixels(&self) -> std::slice::ChunksExact<'_, f32> {
        self.data.chunks_exact(3)
    }

    pub fn pixels_mut(&mut self) -> std::slice::ChunksExactMut<'_, f32> {
        self.data.chunks_exact_mut(3)
    }

    pub fn channel_mean(&self, c: usize) -> f64 {
        let n = self.size * self.size;
        self.data.iter().skip(c).step_by(3).map(|&v| v as f64).sum::<f64>() / n as f64
    }

    pub fn channel_std(&self, c: usize) -> f64 {
        let n = (self.size * self.size) as f64;
        let m = self.channel_mean(c);
        let var = self
            .data
            .iter()
            .skip(c)
            .step_by(3)
            .map(|&v| (v as f64 - m).powi(2))
            .sum::<f64>()
            / n;
        var.sqrt()
    }

    /// Planar (channel, row, col) copy for network input.
    pub fn to_chw(&self) -> Vec<f64> {
        let n = self.size * self.size;
        let mut out = vec![0.0; 3 * n];
        for (i, px) in self.pixels().enumerate() {
            out[i] = px[0] as f64;
            out[n + i] = px[1] as f64;
            out[2 * n + i] = px[2] as f64;
        }
        out
    }
}
