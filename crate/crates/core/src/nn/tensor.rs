use crate::error::{Error, Result};

/// Dense row-major `f64` array. Activations are `[batch, channels, height,
/// width]` or `[batch, features]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "shape {shape:?} holds {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn filled(shape: &[usize], v: f64) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![v; shape.iter().product()],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Leading extent.
    pub fn batch(&self) -> usize {
        self.shape.first().copied().unwrap_or(0)
    }

    /// Values per batch element.
    pub fn sample_len(&self) -> usize {
        self.shape.iter().skip(1).product()
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        let n = self.sample_len();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::ShapeMismatch(format!(
                "cannot reshape {:?} to {shape:?}",
                self.shape
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Stacks equally shaped per-sample arrays into a batch.
    pub fn stack(sample_shape: &[usize], samples: &[&[f64]]) -> Result<Self> {
        let n: usize = sample_shape.iter().product();
        let mut data = Vec::with_capacity(n * samples.len());
        for s in samples {
            if s.len() != n {
                return Err(Error::ShapeMismatch(format!(
                    "sample of {} values for shape {sample_shape:?}",
                    s.len()
                )));
            }
            data.extend_from_slice(s);
        }
        let mut shape = vec![samples.len()];
        shape.extend_from_slice(sample_shape);
        Ok(Self { shape, data })
    }

    /// Concatenates two `[N, a]` and `[N, b]` tensors into `[N, a + b]`.
    pub fn concat_features(a: &Tensor, b: &Tensor) -> Result<Self> {
        if a.batch() != b.batch() {
            return Err(Error::ShapeMismatch(format!(
                "batch {} vs {}",
                a.batch(),
                b.batch()
            )));
        }
        let (na, nb) = (a.sample_len(), b.sample_len());
        let mut data = Vec::with_capacity(a.len() + b.len());
        for i in 0..a.batch() {
            data.extend_from_slice(a.sample(i));
            data.extend_from_slice(b.sample(i));
        }
        Tensor::new(vec![a.batch(), na + nb], data)
    }

    /// Inverse of [`Tensor::concat_features`].
    pub fn split_features(&self, left: usize) -> Result<(Tensor, Tensor)> {
        let n = self.sample_len();
        if left > n {
            return Err(Error::ShapeMismatch(format!("split {left} of {n}")));
        }
        let b = self.batch();
        let (mut l, mut r) = (Vec::with_capacity(b * left), Vec::with_capacity(b * (n - left)));
        for i in 0..b {
            let s = self.sample(i);
            l.extend_from_slice(&s[..left]);
            r.extend_from_slice(&s[left..]);
        }
        Ok((Tensor::new(vec![b, left], l)?, Tensor::new(vec![b, n - left], r)?))
    }
}
