//! Layer kernels. Each forward has a matching backward; shapes follow
//! `[batch, channels, height, width]` for spatial tensors.

use super::gemm::gemm;
use super::tensor::Tensor;
use crate::error::{Error, Result};

fn dims4(x: &Tensor, what: &str) -> Result<(usize, usize, usize, usize)> {
    match *x.shape() {
        [n, c, h, w] => Ok((n, c, h, w)),
        _ => Err(Error::ShapeMismatch(format!(
            "{what} expects a 4-d tensor, got {:?}",
            x.shape()
        ))),
    }
}

/// `(batch, channels, spatial)` view of a tensor of rank ≥ 2.
fn channel_view(x: &Tensor) -> Result<(usize, usize, usize)> {
    let s = x.shape();
    if s.len() < 2 {
        return Err(Error::ShapeMismatch(format!("need rank >= 2, got {s:?}")));
    }
    Ok((s[0], s[1], s[2..].iter().product()))
}

pub fn conv_out_extent(input: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = input + 2 * pad;
    if stride == 0 || kernel == 0 || padded < kernel {
        None
    } else {
        Some((padded - kernel) / stride + 1)
    }
}

struct ConvGeom {
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

impl ConvGeom {
    fn new(x: &Tensor, w: &Tensor, stride: usize, pad: usize) -> Result<(usize, usize, Self)> {
        let (n, c, h, wd) = dims4(x, "conv2d")?;
        let (o, wc, kh, kw) = dims4(w, "conv2d weights")?;
        if wc != c || kh != kw {
            return Err(Error::ShapeMismatch(format!(
                "conv weights {:?} against input {:?}",
                w.shape(),
                x.shape()
            )));
        }
        let (ho, wo) = match (conv_out_extent(h, kh, stride, pad), conv_out_extent(wd, kw, stride, pad)) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                return Err(Error::ShapeMismatch(format!(
                    "kernel {kh} stride {stride} pad {pad} does not fit {h}x{wd}"
                )))
            }
        };
        Ok((n, o, Self { c, h, w: wd, k: kh, stride, pad, ho, wo }))
    }

    fn rows(&self) -> usize {
        self.c * self.k * self.k
    }

    fn cols(&self) -> usize {
        self.ho * self.wo
    }

    /// Unrolls one sample into `[c·k·k, ho·wo]`.
    fn im2col(&self, x: &[f64], out: &mut [f64]) {
        let (k, s, p) = (self.k, self.stride, self.pad as isize);
        let cols = self.cols();
        for ci in 0..self.c {
            let plane = &x[ci * self.h * self.w..(ci + 1) * self.h * self.w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = (ci * k + ky) * k + kx;
                    let dst = &mut out[row * cols..(row + 1) * cols];
                    for oy in 0..self.ho {
                        let iy = (oy * s + ky) as isize - p;
                        let line = &mut dst[oy * self.wo..(oy + 1) * self.wo];
                        if iy < 0 || iy >= self.h as isize {
                            line.fill(0.0);
                            continue;
                        }
                        let src = &plane[iy as usize * self.w..(iy as usize + 1) * self.w];
                        for (ox, v) in line.iter_mut().enumerate() {
                            let ix = (ox * s + kx) as isize - p;
                            *v = if ix < 0 || ix >= self.w as isize { 0.0 } else { src[ix as usize] };
                        }
                    }
                }
            }
        }
    }

    /// Scatter-adds `[c·k·k, ho·wo]` columns back into one sample.
    fn col2im(&self, cols_buf: &[f64], dx: &mut [f64]) {
        let (k, s, p) = (self.k, self.stride, self.pad as isize);
        let cols = self.cols();
        for ci in 0..self.c {
            let plane = &mut dx[ci * self.h * self.w..(ci + 1) * self.h * self.w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = (ci * k + ky) * k + kx;
                    let src = &cols_buf[row * cols..(row + 1) * cols];
                    for oy in 0..self.ho {
                        let iy = (oy * s + ky) as isize - p;
                        if iy < 0 || iy >= self.h as isize {
                            continue;
                        }
                        let line = &mut plane[iy as usize * self.w..(iy as usize + 1) * self.w];
                        for ox in 0..self.wo {
                            let ix = (ox * s + kx) as isize - p;
                            if ix >= 0 && ix < self.w as isize {
                                line[ix as usize] += src[oy * self.wo + ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

fn check_bias(b: &Tensor, o: usize) -> Result<()> {
    if b.len() != o {
        return Err(Error::ShapeMismatch(format!("bias of {} for {o} outputs", b.len())));
    }
    Ok(())
}

/// Cross-correlation through im2col and GEMM.
pub fn conv2d_forward(x: &Tensor, w: &Tensor, b: &Tensor, stride: usize, pad: usize) -> Result<Tensor> {
    let (n, o, g) = ConvGeom::new(x, w, stride, pad)?;
    check_bias(b, o)?;
    let (rows, cols) = (g.rows(), g.cols());
    let mut out = vec![0.0; n * o * cols];
    let mut buf = vec![0.0; rows * cols];
    for i in 0..n {
        g.im2col(x.sample(i), &mut buf);
        let y = &mut out[i * o * cols..(i + 1) * o * cols];
        for (oc, line) in y.chunks_exact_mut(cols).enumerate() {
            line.fill(b.data()[oc]);
        }
        gemm(o, rows, cols, 1.0, w.data(), false, &buf, false, 1.0, y);
    }
    Tensor::new(vec![n, o, g.ho, g.wo], out)
}

/// Reference cross-correlation by direct loops.
pub fn conv2d_forward_direct(x: &Tensor, w: &Tensor, b: &Tensor, stride: usize, pad: usize) -> Result<Tensor> {
    let (n, o, g) = ConvGeom::new(x, w, stride, pad)?;
    check_bias(b, o)?;
    let mut out = Tensor::zeros(&[n, o, g.ho, g.wo]);
    let (xs, ws) = (x.data(), w.data());
    let od = out.data_mut();
    for i in 0..n {
        for oc in 0..o {
            for oy in 0..g.ho {
                for ox in 0..g.wo {
                    let mut acc = b.data()[oc];
                    for ci in 0..g.c {
                        for ky in 0..g.k {
                            let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                            if iy < 0 || iy >= g.h as isize {
                                continue;
                            }
                            for kx in 0..g.k {
                                let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                                if ix < 0 || ix >= g.w as isize {
                                    continue;
                                }
                                let xv = xs[((i * g.c + ci) * g.h + iy as usize) * g.w + ix as usize];
                                acc += xv * ws[((oc * g.c + ci) * g.k + ky) * g.k + kx];
                            }
                        }
                    }
                    od[((i * o + oc) * g.ho + oy) * g.wo + ox] = acc;
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct ConvGrads {
    pub dx: Tensor,
    pub dw: Tensor,
    pub db: Tensor,
}

pub fn conv2d_backward(x: &Tensor, w: &Tensor, dy: &Tensor, stride: usize, pad: usize) -> Result<ConvGrads> {
    let (n, o, g) = ConvGeom::new(x, w, stride, pad)?;
    if dy.shape() != [n, o, g.ho, g.wo] {
        return Err(Error::ShapeMismatch(format!(
            "conv output grad {:?}, expected {:?}",
            dy.shape(),
            [n, o, g.ho, g.wo]
        )));
    }
    let (rows, cols) = (g.rows(), g.cols());
    let mut dx = Tensor::zeros(x.shape());
    let mut dw = Tensor::zeros(w.shape());
    let mut db = Tensor::zeros(&[o]);
    let mut buf = vec![0.0; rows * cols];
    let mut dcols = vec![0.0; rows * cols];
    let sample = x.sample_len();
    for i in 0..n {
        let g_out = dy.sample(i);
        for (oc, line) in g_out.chunks_exact(cols).enumerate() {
            db.data_mut()[oc] += line.iter().sum::<f64>();
        }
        g.im2col(x.sample(i), &mut buf);
        gemm(o, cols, rows, 1.0, g_out, false, &buf, true, 1.0, dw.data_mut());
        gemm(rows, o, cols, 1.0, w.data(), true, g_out, false, 0.0, &mut dcols);
        g.col2im(&dcols, &mut dx.data_mut()[i * sample..(i + 1) * sample]);
    }
    Ok(ConvGrads { dx, dw, db })
}

/// Windowed max. Returns the output and, per output element, the flat
/// input index of its (first) maximum.
pub fn maxpool_forward(x: &Tensor, kernel: usize, stride: usize) -> Result<(Tensor, Vec<u32>)> {
    let (n, c, h, w) = dims4(x, "maxpool")?;
    if kernel > h || kernel > w || kernel == 0 || stride == 0 {
        return Err(Error::ShapeMismatch(format!(
            "pool kernel {kernel} stride {stride} on {h}x{w}"
        )));
    }
    let (ho, wo) = ((h - kernel) / stride + 1, (w - kernel) / stride + 1);
    let mut out = Vec::with_capacity(n * c * ho * wo);
    let mut arg = Vec::with_capacity(n * c * ho * wo);
    let xs = x.data();
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..ho {
            for ox in 0..wo {
                let mut best = base + oy * stride * w + ox * stride;
                for ky in 0..kernel {
                    for kx in 0..kernel {
                        let idx = base + (oy * stride + ky) * w + ox * stride + kx;
                        if xs[idx] > xs[best] {
                            best = idx;
                        }
                    }
                }
                out.push(xs[best]);
                arg.push(best as u32);
            }
        }
    }
    Ok((Tensor::new(vec![n, c, ho, wo], out)?, arg))
}

pub fn maxpool_backward(input_shape: &[usize], argmax: &[u32], dy: &Tensor) -> Result<Tensor> {
    if argmax.len() != dy.len() {
        return Err(Error::ShapeMismatch("pool grad does not match argmax".into()));
    }
    let mut dx = Tensor::zeros(input_shape);
    let d = dx.data_mut();
    for (&i, &g) in argmax.iter().zip(dy.data()) {
        d[i as usize] += g;
    }
    Ok(dx)
}

pub fn relu_forward(x: &Tensor) -> Tensor {
    let data = x.data().iter().map(|&v| v.max(0.0)).collect();
    Tensor::new(x.shape().to_vec(), data).expect("same shape")
}

/// Gradient passes where the input was strictly positive.
pub fn relu_backward(x: &Tensor, dy: &Tensor) -> Result<Tensor> {
    if x.shape() != dy.shape() {
        return Err(Error::ShapeMismatch("relu grad shape".into()));
    }
    let data = x
        .data()
        .iter()
        .zip(dy.data())
        .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::new(x.shape().to_vec(), data)
}

fn lrn_window(c: usize, channels: usize, size: usize) -> std::ops::Range<usize> {
    let half = size / 2;
    c.saturating_sub(half)..(c + half + 1).min(channels)
}

/// Across-channel local response normalization:
/// `y = x / (k + alpha/size · Σ x²)^beta`. Also returns the denominator
/// base `k + alpha/size · Σ x²` for the backward pass.
pub fn lrn_forward(x: &Tensor, size: usize, alpha: f64, beta: f64, k: f64) -> Result<(Tensor, Tensor)> {
    if size % 2 == 0 {
        return Err(Error::InvalidArgument(format!("lrn size {size} must be odd")));
    }
    let (n, c, s) = channel_view(x)?;
    let xs = x.data();
    let mut scale = vec![0.0; xs.len()];
    let mut y = vec![0.0; xs.len()];
    for i in 0..n {
        for ch in 0..c {
            for p in 0..s {
                let sum: f64 = lrn_window(ch, c, size)
                    .map(|j| {
                        let v = xs[(i * c + j) * s + p];
                        v * v
                    })
                    .sum();
                let idx = (i * c + ch) * s + p;
                scale[idx] = k + alpha / size as f64 * sum;
                y[idx] = xs[idx] * scale[idx].powf(-beta);
            }
        }
    }
    Ok((
        Tensor::new(x.shape().to_vec(), y)?,
        Tensor::new(x.shape().to_vec(), scale)?,
    ))
}

pub fn lrn_backward(x: &Tensor, scale: &Tensor, dy: &Tensor, size: usize, alpha: f64, beta: f64) -> Result<Tensor> {
    let (n, c, s) = channel_view(x)?;
    if scale.shape() != x.shape() || dy.shape() != x.shape() {
        return Err(Error::ShapeMismatch("lrn grad shape".into()));
    }
    let (xs, sc, g) = (x.data(), scale.data(), dy.data());
    // t_j = dy_j · x_j · scale_j^(-beta-1)
    let t: Vec<f64> = (0..xs.len()).map(|i| g[i] * xs[i] * sc[i].powf(-beta - 1.0)).collect();
    let coef = 2.0 * alpha * beta / size as f64;
    let mut dx = vec![0.0; xs.len()];
    for i in 0..n {
        for ch in 0..c {
            for p in 0..s {
                let idx = (i * c + ch) * s + p;
                // channel ch lies in the window of j exactly when j lies in
                // the window of ch
                let acc: f64 = lrn_window(ch, c, size).map(|j| t[(i * c + j) * s + p]).sum();
                dx[idx] = g[idx] * sc[idx].powf(-beta) - coef * xs[idx] * acc;
            }
        }
    }
    Tensor::new(x.shape().to_vec(), dx)
}

/// Saved state of a training-mode batch normalization.
#[derive(Debug, Clone)]
pub struct BatchNormCache {
    pub xhat: Tensor,
    pub inv_std: Vec<f64>,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// Per-channel normalization by batch statistics, with no learned scale
/// or shift. Statistics pool over the batch and all spatial positions.
pub fn batchnorm_na_forward_train(x: &Tensor, eps: f64) -> Result<(Tensor, BatchNormCache)> {
    let (n, c, s) = channel_view(x)?;
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "batch norm needs a batch of at least 2 in training mode, got {n}"
        )));
    }
    let m = (n * s) as f64;
    let xs = x.data();
    let mut mean = vec![0.0; c];
    let mut var = vec![0.0; c];
    for ch in 0..c {
        let mut sum = 0.0;
        for i in 0..n {
            sum += xs[(i * c + ch) * s..(i * c + ch + 1) * s].iter().sum::<f64>();
        }
        let mu = sum / m;
        let mut sq = 0.0;
        for i in 0..n {
            sq += xs[(i * c + ch) * s..(i * c + ch + 1) * s]
                .iter()
                .map(|v| (v - mu) * (v - mu))
                .sum::<f64>();
        }
        mean[ch] = mu;
        var[ch] = sq / m;
    }
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
    let mut y = vec![0.0; xs.len()];
    for i in 0..n {
        for ch in 0..c {
            let o = (i * c + ch) * s;
            for p in 0..s {
                y[o + p] = (xs[o + p] - mean[ch]) * inv_std[ch];
            }
        }
    }
    let xhat = Tensor::new(x.shape().to_vec(), y)?;
    Ok((xhat.clone(), BatchNormCache { xhat, inv_std, mean, var }))
}

pub fn batchnorm_na_forward_infer(x: &Tensor, eps: f64, mean: &[f64], var: &[f64]) -> Result<Tensor> {
    let (n, c, s) = channel_view(x)?;
    if mean.len() != c || var.len() != c {
        return Err(Error::ShapeMismatch(format!("running stats for {} channels, input has {c}", mean.len())));
    }
    let xs = x.data();
    let mut y = vec![0.0; xs.len()];
    for i in 0..n {
        for ch in 0..c {
            let inv = 1.0 / (var[ch] + eps).sqrt();
            let o = (i * c + ch) * s;
            for p in 0..s {
                y[o + p] = (xs[o + p] - mean[ch]) * inv;
            }
        }
    }
    Tensor::new(x.shape().to_vec(), y)
}

/// `dx = inv_std/m · (m·dy − Σdy − x̂·Σ(dy·x̂))` per channel.
pub fn batchnorm_na_backward(cache: &BatchNormCache, dy: &Tensor) -> Result<Tensor> {
    let xhat = &cache.xhat;
    if dy.shape() != xhat.shape() {
        return Err(Error::ShapeMismatch("batch norm grad shape".into()));
    }
    let (n, c, s) = channel_view(xhat)?;
    let m = (n * s) as f64;
    let (g, xh) = (dy.data(), xhat.data());
    let mut dx = vec![0.0; g.len()];
    for ch in 0..c {
        let (mut sum_g, mut sum_gx) = (0.0, 0.0);
        for i in 0..n {
            let o = (i * c + ch) * s;
            for p in 0..s {
                sum_g += g[o + p];
                sum_gx += g[o + p] * xh[o + p];
            }
        }
        let k = cache.inv_std[ch] / m;
        for i in 0..n {
            let o = (i * c + ch) * s;
            for p in 0..s {
                dx[o + p] = k * (m * g[o + p] - sum_g - xh[o + p] * sum_gx);
            }
        }
    }
    Tensor::new(xhat.shape().to_vec(), dx)
}

/// `y = x·Wᵀ + b` with `x` viewed as `[N, in]` and `W` as `[out, in]`.
pub fn fc_forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (n, d) = (x.batch(), x.sample_len());
    let (o, wi) = match *w.shape() {
        [o, i] => (o, i),
        _ => return Err(Error::ShapeMismatch(format!("fc weights {:?}", w.shape()))),
    };
    if wi != d {
        return Err(Error::ShapeMismatch(format!("fc expects {wi} inputs, got {d}")));
    }
    check_bias(b, o)?;
    let mut y = Vec::with_capacity(n * o);
    for _ in 0..n {
        y.extend_from_slice(b.data());
    }
    gemm(n, d, o, 1.0, x.data(), false, w.data(), true, 1.0, &mut y);
    Tensor::new(vec![n, o], y)
}

#[derive(Debug, Clone)]
pub struct FcGrads {
    pub dx: Tensor,
    pub dw: Tensor,
    pub db: Tensor,
}

pub fn fc_backward(x: &Tensor, w: &Tensor, dy: &Tensor) -> Result<FcGrads> {
    let (n, d) = (x.batch(), x.sample_len());
    let o = w.shape()[0];
    if dy.shape() != [n, o] {
        return Err(Error::ShapeMismatch(format!("fc grad {:?}, expected [{n}, {o}]", dy.shape())));
    }
    let mut dx = Tensor::zeros(x.shape());
    gemm(n, o, d, 1.0, dy.data(), false, w.data(), false, 0.0, dx.data_mut());
    let mut dw = Tensor::zeros(w.shape());
    gemm(o, n, d, 1.0, dy.data(), true, x.data(), false, 0.0, dw.data_mut());
    let mut db = Tensor::zeros(&[o]);
    for i in 0..n {
        for (acc, g) in db.data_mut().iter_mut().zip(dy.sample(i)) {
            *acc += g;
        }
    }
    Ok(FcGrads { dx, dw, db })
}

/// Mean cross-entropy of `[N, C]` logits against labels, stabilized by
/// max subtraction. Gradient is `(softmax − onehot) / N`.
pub fn softmax_xent(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let (n, c) = (logits.batch(), logits.sample_len());
    if labels.len() != n {
        return Err(Error::ShapeMismatch(format!("{} labels for batch {n}", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::InvalidArgument(format!("label {bad} out of range for {c} classes")));
    }
    let mut loss = 0.0;
    let mut grad = vec![0.0; n * c];
    for (i, &label) in labels.iter().enumerate() {
        let row = logits.sample(i);
        let p = softmax(row);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - row[label];
        let g = &mut grad[i * c..(i + 1) * c];
        for (j, gj) in g.iter_mut().enumerate() {
            *gj = (p[j] - if j == label { 1.0 } else { 0.0 }) / n as f64;
        }
    }
    Ok((loss / n as f64, Tensor::new(vec![n, c], grad)?))
}

pub fn softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

/// Mean over the batch of `½‖y − t‖²` and its gradient.
pub fn l2_loss(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    if pred.shape() != target.shape() {
        return Err(Error::ShapeMismatch(format!("{:?} vs {:?}", pred.shape(), target.shape())));
    }
    let n = pred.batch().max(1) as f64;
    let mut loss = 0.0;
    let grad: Vec<f64> = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| {
            loss += 0.5 * (p - t) * (p - t);
            (p - t) / n
        })
        .collect();
    Ok((loss / n, Tensor::new(pred.shape().to_vec(), grad)?))
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}
