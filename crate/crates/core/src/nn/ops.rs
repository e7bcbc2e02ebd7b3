//! Layer kernels. Forward functions take `T` tensors; backward functions
//! return input gradients as `T` and parameter gradients as `f64`.

use rand::Rng;

use super::{Mode, Padding, Scalar, Tensor4};
use crate::error::{invalid, Result};
use crate::rng;

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

fn widen_all<T: Scalar>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.widen()).collect()
}

fn narrow_all<T: Scalar>(v: Vec<f64>) -> Vec<T> {
    v.into_iter().map(T::narrow).collect()
}

/// Geometry of a stride-1 convolution.
#[derive(Debug, Clone, Copy)]
pub struct ConvGeometry {
    pub batch: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub in_c: usize,
    pub kernel: usize,
    pub out_c: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    pub fn new(input: [usize; 4], kernel: usize, out_c: usize, padding: Padding) -> Result<Self> {
        let [batch, in_h, in_w, in_c] = input;
        let pad = padding.amount(kernel);
        if kernel > in_h + 2 * pad || kernel > in_w + 2 * pad {
            return invalid(format!("kernel {kernel} larger than padded input {in_h}x{in_w}"));
        }
        Ok(Self {
            batch,
            in_h,
            in_w,
            in_c,
            kernel,
            out_c,
            pad,
            out_h: in_h + 2 * pad - kernel + 1,
            out_w: in_w + 2 * pad - kernel + 1,
        })
    }

    /// Input rows/cols touched by output `o` and kernel tap `k`, or `None` in the padding.
    #[inline(always)]
    fn src(&self, o: usize, k: usize, extent: usize) -> Option<usize> {
        let p = o + k;
        (p >= self.pad && p - self.pad < extent).then(|| p - self.pad)
    }
}

/// Cross-correlation with kernel `weight[ky][kx][ci][co]` and per-filter bias.
pub fn conv2d_forward<T: Scalar>(
    input: &Tensor4<T>,
    weight: &[T],
    bias: &[T],
    kernel: usize,
    padding: Padding,
) -> Result<Tensor4<T>> {
    let out_c = bias.len();
    let g = ConvGeometry::new(input.shape, kernel, out_c, padding)?;
    if weight.len() != kernel * kernel * g.in_c * out_c {
        return invalid(format!(
            "kernel has {} weights, expected {}x{}x{}x{}",
            weight.len(),
            kernel,
            kernel,
            g.in_c,
            out_c
        ));
    }
    let w = widen_all(weight);
    let b = widen_all(bias);
    let x = widen_all(&input.data);
    let mut out = vec![0.0f64; g.batch * g.out_h * g.out_w * out_c];
    let mut acc = vec![0.0f64; out_c];
    for n in 0..g.batch {
        for oy in 0..g.out_h {
            for ox in 0..g.out_w {
                acc.copy_from_slice(&b);
                for ky in 0..kernel {
                    let Some(iy) = g.src(oy, ky, g.in_h) else { continue };
                    for kx in 0..kernel {
                        let Some(ix) = g.src(ox, kx, g.in_w) else { continue };
                        let xin = &x[((n * g.in_h + iy) * g.in_w + ix) * g.in_c..][..g.in_c];
                        let wtap = &w[(ky * kernel + kx) * g.in_c * out_c..][..g.in_c * out_c];
                        for (ci, &xv) in xin.iter().enumerate() {
                            let wrow = &wtap[ci * out_c..(ci + 1) * out_c];
                            for (a, &wv) in acc.iter_mut().zip(wrow) {
                                *a += xv * wv;
                            }
                        }
                    }
                }
                let o = ((n * g.out_h + oy) * g.out_w + ox) * out_c;
                out[o..o + out_c].copy_from_slice(&acc);
            }
        }
    }
    Tensor4::new([g.batch, g.out_h, g.out_w, out_c], narrow_all(out))
}

/// Gradients of a convolution: `(dx, dweight, dbias)`.
pub fn conv2d_backward<T: Scalar>(
    input: &Tensor4<T>,
    weight: &[T],
    grad_out: &Tensor4<T>,
    kernel: usize,
    padding: Padding,
) -> Result<(Tensor4<T>, Vec<f64>, Vec<f64>)> {
    let out_c = grad_out.shape[3];
    let g = ConvGeometry::new(input.shape, kernel, out_c, padding)?;
    if grad_out.shape != [g.batch, g.out_h, g.out_w, out_c] {
        return invalid("convolution output gradient has the wrong shape");
    }
    let w = widen_all(weight);
    let x = widen_all(&input.data);
    let dy = widen_all(&grad_out.data);
    let mut dx = vec![0.0f64; x.len()];
    let mut dw = vec![0.0f64; w.len()];
    let mut db = vec![0.0f64; out_c];
    for n in 0..g.batch {
        for oy in 0..g.out_h {
            for ox in 0..g.out_w {
                let d = &dy[((n * g.out_h + oy) * g.out_w + ox) * out_c..][..out_c];
                for (acc, &v) in db.iter_mut().zip(d) {
                    *acc += v;
                }
                for ky in 0..kernel {
                    let Some(iy) = g.src(oy, ky, g.in_h) else { continue };
                    for kx in 0..kernel {
                        let Some(ix) = g.src(ox, kx, g.in_w) else { continue };
                        let base = ((n * g.in_h + iy) * g.in_w + ix) * g.in_c;
                        let tap = (ky * kernel + kx) * g.in_c * out_c;
                        for ci in 0..g.in_c {
                            let xv = x[base + ci];
                            let wrow = &w[tap + ci * out_c..][..out_c];
                            let dwrow = &mut dw[tap + ci * out_c..][..out_c];
                            let mut s = 0.0;
                            for co in 0..out_c {
                                dwrow[co] += xv * d[co];
                                s += wrow[co] * d[co];
                            }
                            dx[base + ci] += s;
                        }
                    }
                }
            }
        }
    }
    Ok((Tensor4::new(input.shape, narrow_all(dx))?, dw, db))
}

/// `y = Wᵀx + b` for every sample, with `W` stored `inputs × units`.
pub fn fc_forward<T: Scalar>(input: &Tensor4<T>, weight: &[T], bias: &[T]) -> Result<Tensor4<T>> {
    let units = bias.len();
    let fan_in = input.sample_len();
    if weight.len() != fan_in * units {
        return invalid(format!(
            "fully connected weight has {} entries, expected {fan_in}x{units}",
            weight.len()
        ));
    }
    let w = widen_all(weight);
    let b = widen_all(bias);
    let mut out = vec![0.0f64; input.batch() * units];
    for n in 0..input.batch() {
        let acc = &mut out[n * units..(n + 1) * units];
        acc.copy_from_slice(&b);
        for (i, xv) in input.sample(n).iter().enumerate() {
            let xv = xv.widen();
            if xv == 0.0 {
                continue;
            }
            for (a, &wv) in acc.iter_mut().zip(&w[i * units..(i + 1) * units]) {
                *a += xv * wv;
            }
        }
    }
    Tensor4::new([input.batch(), 1, 1, units], narrow_all(out))
}

/// Gradients of a fully connected layer: `(dx, dweight, dbias)`; `dx` keeps the input's shape.
pub fn fc_backward<T: Scalar>(
    input: &Tensor4<T>,
    weight: &[T],
    grad_out: &Tensor4<T>,
) -> Result<(Tensor4<T>, Vec<f64>, Vec<f64>)> {
    let units = grad_out.sample_len();
    let fan_in = input.sample_len();
    if weight.len() != fan_in * units || grad_out.batch() != input.batch() {
        return invalid("fully connected gradient shapes disagree");
    }
    let w = widen_all(weight);
    let mut dx = vec![0.0f64; input.data.len()];
    let mut dw = vec![0.0f64; w.len()];
    let mut db = vec![0.0f64; units];
    for n in 0..input.batch() {
        let d = widen_all(grad_out.sample(n));
        for (acc, &v) in db.iter_mut().zip(&d) {
            *acc += v;
        }
        let x = input.sample(n);
        for i in 0..fan_in {
            let xv = x[i].widen();
            let wrow = &w[i * units..(i + 1) * units];
            let dwrow = &mut dw[i * units..(i + 1) * units];
            let mut s = 0.0;
            for u in 0..units {
                dwrow[u] += xv * d[u];
                s += wrow[u] * d[u];
            }
            dx[n * fan_in + i] = s;
        }
    }
    Ok((Tensor4::new(input.shape, narrow_all(dx))?, dw, db))
}

/// Per-channel statistics saved by a training-mode normalization pass.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormCache {
    pub normalized: Vec<f64>,
    pub inv_std: Vec<f64>,
    pub batch_mean: Vec<f64>,
    pub batch_var: Vec<f64>,
}

/// Batch normalization over every axis except channels.
///
/// Train mode standardizes with the biased batch variance; infer mode uses
/// the running statistics. Returns the output and, in train mode, the cache.
pub fn batchnorm_forward<T: Scalar>(
    input: &Tensor4<T>,
    gamma: &[T],
    beta: &[T],
    running_mean: &[T],
    running_var: &[T],
    train: bool,
) -> Result<(Tensor4<T>, Option<BatchNormCache>)> {
    let c = input.shape[3];
    if gamma.len() != c || beta.len() != c || running_mean.len() != c || running_var.len() != c {
        return invalid("normalization parameters do not match channel count");
    }
    let count = input.data.len() / c.max(1);
    let x = widen_all(&input.data);
    let (mean, var) = if train {
        if input.batch() < 2 {
            return invalid("training-mode normalization needs a batch of at least 2");
        }
        let mut mean = vec![0.0; c];
        for px in x.chunks_exact(c) {
            for (m, &v) in mean.iter_mut().zip(px) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= count as f64);
        let mut var = vec![0.0; c];
        for px in x.chunks_exact(c) {
            for ((s, &v), &m) in var.iter_mut().zip(px).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        var.iter_mut().for_each(|s| *s /= count as f64);
        (mean, var)
    } else {
        (widen_all(running_mean), widen_all(running_var))
    };
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPSILON).sqrt()).collect();
    let g = widen_all(gamma);
    let b = widen_all(beta);
    let mut normalized = vec![0.0; x.len()];
    let mut out = vec![0.0; x.len()];
    for (i, (&v, (nv, o))) in x.iter().zip(normalized.iter_mut().zip(out.iter_mut())).enumerate() {
        let ch = i % c;
        *nv = (v - mean[ch]) * inv_std[ch];
        *o = g[ch] * *nv + b[ch];
    }
    let out = Tensor4::new(input.shape, narrow_all(out))?;
    let cache = train.then(|| BatchNormCache { normalized, inv_std, batch_mean: mean, batch_var: var });
    Ok((out, cache))
}

/// Gradients of training-mode normalization: `(dx, dgamma, dbeta)`.
pub fn batchnorm_backward<T: Scalar>(
    cache: &BatchNormCache,
    gamma: &[T],
    grad_out: &Tensor4<T>,
) -> Result<(Tensor4<T>, Vec<f64>, Vec<f64>)> {
    let c = gamma.len();
    let count = (grad_out.data.len() / c) as f64;
    let dy = widen_all(&grad_out.data);
    let mut dgamma = vec![0.0; c];
    let mut dbeta = vec![0.0; c];
    for (i, (&d, &nv)) in dy.iter().zip(&cache.normalized).enumerate() {
        dgamma[i % c] += d * nv;
        dbeta[i % c] += d;
    }
    let g = widen_all(gamma);
    let dx: Vec<f64> = dy
        .iter()
        .zip(&cache.normalized)
        .enumerate()
        .map(|(i, (&d, &nv))| {
            let ch = i % c;
            g[ch] * cache.inv_std[ch] / count * (count * d - dbeta[ch] - nv * dgamma[ch])
        })
        .collect();
    Ok((Tensor4::new(grad_out.shape, narrow_all(dx))?, dgamma, dbeta))
}

/// Running-statistics update `r ← (1 − 0.1)·r + 0.1·batch`.
pub fn update_running<T: Scalar>(running: &mut [T], batch: &[f64]) {
    for (r, &b) in running.iter_mut().zip(batch) {
        *r = T::narrow((1.0 - BN_MOMENTUM) * r.widen() + BN_MOMENTUM * b);
    }
}

pub fn relu<T: Scalar>(input: &Tensor4<T>) -> Tensor4<T> {
    input.map(|v| if v > T::zero() { v } else { T::zero() })
}

pub fn relu_backward<T: Scalar>(input: &Tensor4<T>, grad_out: &Tensor4<T>) -> Tensor4<T> {
    let data = input
        .data
        .iter()
        .zip(&grad_out.data)
        .map(|(&x, &d)| if x > T::zero() { d } else { T::zero() })
        .collect();
    Tensor4 { shape: input.shape, data }
}

/// Inverted dropout multiplier per element (`0` or `1/(1−p)`); `None` in infer mode or for `p = 0`.
pub fn dropout_mask(len: usize, p: f64, mode: Mode, stream: u64) -> Option<Vec<f64>> {
    match mode {
        Mode::Train { dropout_seed } if p > 0.0 => {
            let mut rng = rng::stream(dropout_seed, stream);
            let keep = 1.0 / (1.0 - p);
            Some((0..len).map(|_| if rng.random::<f64>() < p { 0.0 } else { keep }).collect())
        }
        _ => None,
    }
}

pub fn dropout<T: Scalar>(input: &Tensor4<T>, p: f64, mode: Mode, stream: u64) -> (Tensor4<T>, Option<Vec<f64>>) {
    match dropout_mask(input.data.len(), p, mode, stream) {
        Some(mask) => {
            let data = input.data.iter().zip(&mask).map(|(&x, &m)| T::narrow(x.widen() * m)).collect();
            (Tensor4 { shape: input.shape, data }, Some(mask))
        }
        None => (input.clone(), None),
    }
}

pub fn dropout_backward<T: Scalar>(mask: Option<&[f64]>, grad_out: &Tensor4<T>) -> Tensor4<T> {
    match mask {
        Some(mask) => Tensor4 {
            shape: grad_out.shape,
            data: grad_out.data.iter().zip(mask).map(|(&d, &m)| T::narrow(d.widen() * m)).collect(),
        },
        None => grad_out.clone(),
    }
}

/// Max-shifted softmax of one vector.
pub fn softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|&v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Softmax over the features of every sample.
pub fn softmax_forward<T: Scalar>(input: &Tensor4<T>) -> Tensor4<T> {
    let mut data = Vec::with_capacity(input.data.len());
    for b in 0..input.batch() {
        let s = softmax(&widen_all(input.sample(b)));
        data.extend(s.into_iter().map(T::narrow));
    }
    Tensor4 { shape: input.shape, data }
}

/// `dx = y ⊙ (dy − ⟨dy, y⟩)` per sample, from the softmax output `y`.
pub fn softmax_backward<T: Scalar>(output: &Tensor4<T>, grad_out: &Tensor4<T>) -> Tensor4<T> {
    let n = output.sample_len();
    let mut data = Vec::with_capacity(output.data.len());
    for b in 0..output.batch() {
        let y = &output.data[b * n..(b + 1) * n];
        let d = &grad_out.data[b * n..(b + 1) * n];
        let dot: f64 = y.iter().zip(d).map(|(a, b)| a.widen() * b.widen()).sum();
        data.extend(y.iter().zip(d).map(|(&yv, &dv)| T::narrow(yv.widen() * (dv.widen() - dot))));
    }
    Tensor4 { shape: output.shape, data }
}

/// `(1/L)·Σ(pred − target)²` and its gradient `(2/L)(pred − target)`.
pub fn mse_loss(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    if pred.len() != target.len() || pred.is_empty() {
        return invalid("prediction and target lengths differ");
    }
    let l = pred.len() as f64;
    let loss = pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / l;
    let grad = pred.iter().zip(target).map(|(p, t)| 2.0 * (p - t) / l).collect();
    Ok((loss, grad))
}

/// Mean per-sample MSE over a batch and the gradient of that mean.
pub fn mse_batch<T: Scalar>(pred: &Tensor4<T>, target: &[T]) -> Result<(f64, Tensor4<T>)> {
    if pred.data.len() != target.len() {
        return invalid(format!("{} predictions for {} targets", pred.data.len(), target.len()));
    }
    let n = pred.sample_len();
    let batch = pred.batch() as f64;
    let mut total = 0.0;
    let mut grad = Vec::with_capacity(pred.data.len());
    for b in 0..pred.batch() {
        let (loss, g) = mse_loss(&widen_all(pred.sample(b)), &widen_all(&target[b * n..(b + 1) * n]))?;
        total += loss;
        grad.extend(g.into_iter().map(|v| T::narrow(v / batch)));
    }
    Ok((total / batch, Tensor4 { shape: pred.shape, data: grad }))
}
