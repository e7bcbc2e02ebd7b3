//! Reference implementations shared by the integration tests and the acceptance suite.
#![allow(dead_code)]

use deepmusic::array::{ArrayConfig, SourceConfig};
use deepmusic::nn::{build_deepmusic_network, ops, ArchConfig, Mode, Network, Padding, Scalar, Tensor4};
use deepmusic::{rng, CMatrix, Complex64};
use nalgebra::DMatrix;
use rand::Rng;

/// `‖a − b‖₂ / max(‖a‖₂, ‖b‖₂)`, zero when both vanish.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 { 0.0 } else { norm(&diff) / scale }
}

/// `max|a − b| / max|b|`.
pub fn max_rel_err(a: &[f64], oracle: &[f64]) -> f64 {
    assert_eq!(a.len(), oracle.len());
    let scale = oracle.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    a.iter().zip(oracle).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

pub fn uniform(rng: &mut impl Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

pub fn tensor(rng: &mut impl Rng, shape: [usize; 4]) -> Tensor4<f64> {
    Tensor4::new(shape, uniform(rng, shape.iter().product(), -1.0, 1.0)).unwrap()
}

fn widen<T: Scalar>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.widen()).collect()
}

/// Central difference of `f` with respect to every entry of `x`.
pub fn numeric_grad(x: &mut [f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + h;
            let up = f(x);
            x[i] = orig - h;
            let down = f(x);
            x[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

const H: f64 = 1e-6;

/// Worst relative gradient error of each layer type checked alone against
/// central differences of the projected loss `⟨w, y⟩`.
pub fn layer_gradient_errors(seed: u64) -> Vec<(&'static str, f64)> {
    let mut rng = rng::stream(seed, 0);
    let mut out = Vec::new();

    let mut worst = 0.0f64;
    for (kernel, padding, shape) in
        [(3, Padding::Valid, [2, 5, 4, 3]), (5, Padding::Same, [2, 4, 4, 2]), (1, Padding::Valid, [1, 3, 2, 4])]
    {
        let filters = 3;
        let x = tensor(&mut rng, shape);
        let w = uniform(&mut rng, kernel * kernel * shape[3] * filters, -0.5, 0.5);
        let b = uniform(&mut rng, filters, -0.5, 0.5);
        let y = ops::conv2d_forward(&x, &w, &b, kernel, padding).unwrap();
        let proj = tensor(&mut rng, y.shape);
        let (dx, dw, db) = ops::conv2d_backward(&x, &w, &proj, kernel, padding).unwrap();
        let loss = |x: &Tensor4<f64>, w: &[f64], b: &[f64]| {
            dot(&ops::conv2d_forward(x, w, b, kernel, padding).unwrap().data, &proj.data)
        };
        let mut xd = x.data.clone();
        let nx = numeric_grad(&mut xd, H, |v| loss(&Tensor4::new(x.shape, v.to_vec()).unwrap(), &w, &b));
        let nw = numeric_grad(&mut w.clone(), H, |v| loss(&x, v, &b));
        let nb = numeric_grad(&mut b.clone(), H, |v| loss(&x, &w, v));
        worst = worst.max(rel_err(&dx.data, &nx)).max(rel_err(&dw, &nw)).max(rel_err(&db, &nb));
    }
    out.push(("conv", worst));

    let x = tensor(&mut rng, [3, 2, 2, 3]);
    let units = 5;
    let w = uniform(&mut rng, 12 * units, -0.5, 0.5);
    let b = uniform(&mut rng, units, -0.5, 0.5);
    let proj = tensor(&mut rng, [3, 1, 1, units]);
    let (dx, dw, db) = ops::fc_backward(&x, &w, &proj).unwrap();
    let loss = |x: &Tensor4<f64>, w: &[f64], b: &[f64]| dot(&ops::fc_forward(x, w, b).unwrap().data, &proj.data);
    let nx = numeric_grad(&mut x.data.clone(), H, |v| loss(&Tensor4::new(x.shape, v.to_vec()).unwrap(), &w, &b));
    let nw = numeric_grad(&mut w.clone(), H, |v| loss(&x, v, &b));
    let nb = numeric_grad(&mut b.clone(), H, |v| loss(&x, &w, v));
    out.push(("fully_connected", rel_err(&dx.data, &nx).max(rel_err(&dw, &nw)).max(rel_err(&db, &nb))));

    let x = tensor(&mut rng, [3, 2, 3, 4]);
    let gamma = uniform(&mut rng, 4, 0.5, 1.5);
    let beta = uniform(&mut rng, 4, -0.5, 0.5);
    let (rm, rv) = (vec![0.0; 4], vec![1.0; 4]);
    let (_, cache) = ops::batchnorm_forward(&x, &gamma, &beta, &rm, &rv, true).unwrap();
    let proj = tensor(&mut rng, x.shape);
    let (dx, dg, db) = ops::batchnorm_backward(&cache.unwrap(), &gamma, &proj).unwrap();
    let loss = |x: &Tensor4<f64>, g: &[f64], b: &[f64]| {
        dot(&ops::batchnorm_forward(x, g, b, &rm, &rv, true).unwrap().0.data, &proj.data)
    };
    let nx = numeric_grad(&mut x.data.clone(), H, |v| loss(&Tensor4::new(x.shape, v.to_vec()).unwrap(), &gamma, &beta));
    let ng = numeric_grad(&mut gamma.clone(), H, |v| loss(&x, v, &beta));
    let nb = numeric_grad(&mut beta.clone(), H, |v| loss(&x, &gamma, v));
    out.push(("batchnorm", rel_err(&dx.data, &nx).max(rel_err(&dg, &ng)).max(rel_err(&db, &nb))));

    // Keep every input at least 0.05 away from the kink.
    let data: Vec<f64> = uniform(&mut rng, 24, 0.05, 1.0)
        .into_iter()
        .map(|v| if rng.random::<bool>() { v } else { -v })
        .collect();
    let x = Tensor4::new([2, 3, 2, 2], data).unwrap();
    let proj = tensor(&mut rng, x.shape);
    let dx = ops::relu_backward(&x, &proj);
    let nx = numeric_grad(&mut x.data.clone(), H, |v| dot(&ops::relu(&Tensor4::new(x.shape, v.to_vec()).unwrap()).data, &proj.data));
    out.push(("relu", rel_err(&dx.data, &nx)));

    let x = tensor(&mut rng, [2, 1, 1, 16]);
    let mode = Mode::Train { dropout_seed: seed };
    let (_, mask) = ops::dropout(&x, 0.5, mode, 3);
    let proj = tensor(&mut rng, x.shape);
    let dx = ops::dropout_backward(mask.as_deref(), &proj);
    let nx = numeric_grad(&mut x.data.clone(), H, |v| {
        dot(&ops::dropout(&Tensor4::new(x.shape, v.to_vec()).unwrap(), 0.5, mode, 3).0.data, &proj.data)
    });
    out.push(("dropout", rel_err(&dx.data, &nx)));

    let x = Tensor4::new([3, 1, 1, 6], uniform(&mut rng, 18, -3.0, 3.0)).unwrap();
    let proj = tensor(&mut rng, x.shape);
    let y = ops::softmax_forward(&x);
    let dx = ops::softmax_backward(&y, &proj);
    let nx = numeric_grad(&mut x.data.clone(), H, |v| {
        dot(&ops::softmax_forward(&Tensor4::new(x.shape, v.to_vec()).unwrap()).data, &proj.data)
    });
    out.push(("softmax", rel_err(&dx.data, &nx)));

    let pred = uniform(&mut rng, 7, 0.0, 1.0);
    let target = uniform(&mut rng, 7, 0.0, 1.0);
    let (_, g) = ops::mse_loss(&pred, &target).unwrap();
    let n = numeric_grad(&mut pred.clone(), H, |v| ops::mse_loss(v, &target).unwrap().0);
    out.push(("mse", rel_err(&g, &n)));
    out
}

/// The full 17-layer stack on a 4×4×3 input with 2 filters and `L = 4`.
/// Same padding keeps the spatial side at 4 through the 5,5,3,3 kernels.
pub fn toy_network(seed: u64) -> Network<f64> {
    let arch = ArchConfig { fc_width: 8, padding: Padding::Same, ..ArchConfig::new(4, 4, 2) };
    let specs = build_deepmusic_network(&arch).unwrap();
    Network::new([4, 4, 3], &specs, seed).unwrap()
}

/// Relative error between backpropagated and central-difference gradients
/// of the batch MSE over every parameter and the input, in train mode with
/// a fixed dropout mask. Returns `(error, layer count)`.
pub fn toy_network_gradient_error(seed: u64) -> (f64, usize) {
    let mut net = toy_network(seed);
    let mut rng = rng::stream(seed, 1);
    let x = tensor(&mut rng, [3, 4, 4, 3]);
    let targets: Vec<f64> = (0..3).flat_map(|_| ops::softmax(&uniform(&mut rng, 4, -1.0, 1.0))).collect();
    let mode = Mode::Train { dropout_seed: seed ^ 0x55 };
    let (_, grads, _) = net.loss_and_gradients(&x, &targets, mode).unwrap();

    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    for t in 0..grads.params.len() {
        let n = net.params()[t].len();
        for i in 0..n {
            let orig = net.params()[t][i];
            net.params_mut()[t][i] = orig + H;
            let up = net.loss(&x, &targets, mode).unwrap();
            net.params_mut()[t][i] = orig - H;
            let down = net.loss(&x, &targets, mode).unwrap();
            net.params_mut()[t][i] = orig;
            numeric.push((up - down) / (2.0 * H));
        }
        analytic.extend_from_slice(&grads.params[t]);
    }
    let nx = numeric_grad(&mut x.data.clone(), H, |v| {
        net.loss(&Tensor4::new(x.shape, v.to_vec()).unwrap(), &targets, mode).unwrap()
    });
    analytic.extend_from_slice(&grads.input);
    numeric.extend(nx);
    (rel_err(&analytic, &numeric), net.layers.len() + 1)
}

fn naive_conv(x: &Tensor4<f64>, w: &[f64], b: &[f64], k: usize, pad: usize) -> Vec<f64> {
    let [n, h, wd, ci] = x.shape;
    let co = b.len();
    let (oh, ow) = (h + 2 * pad - k + 1, wd + 2 * pad - k + 1);
    let mut out = vec![0.0; n * oh * ow * co];
    for s in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                for f in 0..co {
                    let mut acc = b[f];
                    for ky in 0..k {
                        for kx in 0..k {
                            let iy = oy as isize + ky as isize - pad as isize;
                            let ix = ox as isize + kx as isize - pad as isize;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                continue;
                            }
                            for c in 0..ci {
                                let xv = x.data[((s * h + iy as usize) * wd + ix as usize) * ci + c];
                                acc += xv * w[((ky * k + kx) * ci + c) * co + f];
                            }
                        }
                    }
                    out[((s * oh + oy) * ow + ox) * co + f] = acc;
                }
            }
        }
    }
    out
}

fn naive_fc(x: &Tensor4<f64>, w: &[f64], b: &[f64]) -> Vec<f64> {
    let n = x.shape[0];
    let fan_in = x.data.len() / n;
    let units = b.len();
    let mut out = Vec::new();
    for s in 0..n {
        for u in 0..units {
            let mut acc = b[u];
            for i in 0..fan_in {
                acc += x.data[s * fan_in + i] * w[i * units + u];
            }
            out.push(acc);
        }
    }
    out
}

fn naive_batchnorm(x: &Tensor4<f64>, g: &[f64], b: &[f64], stats: Option<(&[f64], &[f64])>) -> Vec<f64> {
    let c = x.shape[3];
    let count = x.data.len() / c;
    let mut out = vec![0.0; x.data.len()];
    for ch in 0..c {
        let vals: Vec<f64> = (0..count).map(|i| x.data[i * c + ch]).collect();
        let (mean, var) = match stats {
            Some((m, v)) => (m[ch], v[ch]),
            None => {
                let mean = vals.iter().sum::<f64>() / count as f64;
                (mean, vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / count as f64)
            }
        };
        for (i, v) in vals.iter().enumerate() {
            out[i * c + ch] = g[ch] * (v - mean) / (var + 1e-5).sqrt() + b[ch];
        }
    }
    out
}

fn naive_softmax(x: &Tensor4<f64>) -> Vec<f64> {
    let n = x.shape[0];
    let len = x.data.len() / n;
    let mut out = Vec::new();
    for s in 0..n {
        let e: Vec<f64> = x.data[s * len..(s + 1) * len].iter().map(|v| v.exp()).collect();
        let total: f64 = e.iter().sum();
        out.extend(e.iter().map(|v| v / total));
    }
    out
}

fn as_f32(v: &[f64]) -> Vec<f32> {
    v.iter().map(|&x| x as f32).collect()
}

/// Worst `max|y − oracle| / max|oracle|` of the binary32 forward ops against
/// binary64 loop oracles over `shapes` random shapes, per op.
pub fn forward_oracle_errors(seed: u64, shapes: usize) -> Vec<(&'static str, f64)> {
    let mut rng = rng::stream(seed, 2);
    let mut worst = [0.0f64; 5];
    for _ in 0..shapes {
        let n = rng.random_range(1..4usize);
        let h = rng.random_range(1..9usize);
        let w = rng.random_range(1..9usize);
        let c = rng.random_range(1..5usize);
        // Inputs are rounded to binary32 first so both sides see the same values.
        let x64 = Tensor4::new([n, h, w, c], uniform(&mut rng, n * h * w * c, -2.0, 2.0).iter().map(|&v| v as f32 as f64).collect()).unwrap();
        let x32: Tensor4<f32> = x64.cast();

        let k = [1usize, 3, 5][rng.random_range(0..3)];
        let padding = if rng.random::<bool>() || h.min(w) < k { Padding::Same } else { Padding::Valid };
        let pad = padding.amount(k);
        let filters = rng.random_range(1..5usize);
        let cw = as_f32(&uniform(&mut rng, k * k * c * filters, -1.0, 1.0));
        let cb = as_f32(&uniform(&mut rng, filters, -1.0, 1.0));
        let y = ops::conv2d_forward(&x32, &cw, &cb, k, padding).unwrap();
        let o = naive_conv(&x64, &widen(&cw), &widen(&cb), k, pad);
        worst[0] = worst[0].max(max_rel_err(&widen(&y.data), &o));

        let units = rng.random_range(1..9usize);
        let fw = as_f32(&uniform(&mut rng, h * w * c * units, -1.0, 1.0));
        let fb = as_f32(&uniform(&mut rng, units, -1.0, 1.0));
        let y = ops::fc_forward(&x32, &fw, &fb).unwrap();
        worst[1] = worst[1].max(max_rel_err(&widen(&y.data), &naive_fc(&x64, &widen(&fw), &widen(&fb))));

        let g = as_f32(&uniform(&mut rng, c, 0.5, 2.0));
        let b = as_f32(&uniform(&mut rng, c, -1.0, 1.0));
        let rm = as_f32(&uniform(&mut rng, c, -0.5, 0.5));
        let rv = as_f32(&uniform(&mut rng, c, 0.2, 2.0));
        let (y, _) = ops::batchnorm_forward(&x32, &g, &b, &rm, &rv, false).unwrap();
        let o = naive_batchnorm(&x64, &widen(&g), &widen(&b), Some((&widen(&rm), &widen(&rv))));
        worst[2] = worst[2].max(max_rel_err(&widen(&y.data), &o));
        if n * h * w >= 2 && n >= 2 {
            let (y, _) = ops::batchnorm_forward(&x32, &g, &b, &rm, &rv, true).unwrap();
            let o = naive_batchnorm(&x64, &widen(&g), &widen(&b), None);
            worst[3] = worst[3].max(max_rel_err(&widen(&y.data), &o));
        }

        let y = ops::softmax_forward(&x32);
        worst[4] = worst[4].max(max_rel_err(&widen(&y.data), &naive_softmax(&x64)));
    }
    ["conv", "fully_connected", "batchnorm_infer", "batchnorm_train", "softmax"].into_iter().zip(worst).collect()
}

fn oracle_steering(theta_deg: f64, m: usize, d: f64) -> Vec<Complex64> {
    let phase = -2.0 * std::f64::consts::PI * d * theta_deg.to_radians().sin();
    (0..m).map(|i| Complex64::from_polar(1.0, phase * i as f64)).collect()
}

/// `R = A Γ A^H + σ² I` parameterized by a real vector
/// `[θ (deg), diag Γ, Re/Im of the upper triangle of Γ, σ²]`.
fn oracle_covariance(p: &[f64], k: usize, m: usize, d: f64) -> DMatrix<Complex64> {
    let mut gamma = DMatrix::<Complex64>::zeros(k, k);
    let mut idx = k;
    for i in 0..k {
        gamma[(i, i)] = Complex64::new(p[idx], 0.0);
        idx += 1;
    }
    for i in 0..k {
        for j in i + 1..k {
            let v = Complex64::new(p[idx], p[idx + 1]);
            gamma[(i, j)] = v;
            gamma[(j, i)] = v.conj();
            idx += 2;
        }
    }
    let sigma2 = p[idx];
    let a = DMatrix::from_fn(m, k, |r, c| oracle_steering(p[c], m, d)[r]);
    &a * gamma * a.adjoint() + DMatrix::<Complex64>::identity(m, m) * Complex64::new(sigma2, 0.0)
}

/// Stochastic CRB (degrees) from the Slepian–Bangs Fisher information
/// `F_ij = T·tr(R⁻¹ ∂_i R R⁻¹ ∂_j R)` over the DOAs and every nuisance
/// parameter, with `∂R` taken by central differences.
pub fn fd_fisher_crb(src: &SourceConfig, array: &ArrayConfig, t: usize) -> Vec<f64> {
    let k = src.num_sources();
    let (m, d) = (array.num_elements, array.spacing_wavelengths);
    let gamma: &CMatrix = &src.signal_covariance;
    let mut p = src.doas_deg.clone();
    for i in 0..k {
        p.push(gamma[(i, i)].re);
    }
    for i in 0..k {
        for j in i + 1..k {
            p.push(gamma[(i, j)].re);
            p.push(gamma[(i, j)].im);
        }
    }
    p.push(src.noise_variance);
    let np = p.len();
    let r = oracle_covariance(&p, k, m, d);
    let r_inv = r.clone().try_inverse().unwrap();
    let derivs: Vec<DMatrix<Complex64>> = (0..np)
        .map(|i| {
            let h = if i < k { 1e-5 } else { 1e-4 };
            let (mut up, mut down) = (p.clone(), p.clone());
            up[i] += h;
            down[i] -= h;
            (oracle_covariance(&up, k, m, d) - oracle_covariance(&down, k, m, d)) / Complex64::new(2.0 * h, 0.0)
        })
        .collect();
    let left: Vec<DMatrix<Complex64>> = derivs.iter().map(|dr| &r_inv * dr).collect();
    let fim = DMatrix::<f64>::from_fn(np, np, |i, j| t as f64 * (&left[i] * &left[j]).trace().re);
    let inv = fim.try_inverse().unwrap();
    (0..k).map(|i| inv[(i, i)].sqrt()).collect()
}

/// Spot scenarios for the CRB comparison: `(M, d, DOAs, Γ, σ², T)`.
pub fn crb_spot_configs() -> Vec<(ArrayConfig, SourceConfig, usize)> {
    let c = |re: f64, im: f64| Complex64::new(re, im);
    let corr = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.3, 0.4), c(0.3, -0.4), c(2.0, 0.0)]);
    let three = CMatrix::from_row_slice(
        3,
        3,
        &[c(1.0, 0.0), c(0.2, 0.1), c(0.0, 0.0), c(0.2, -0.1), c(1.5, 0.0), c(-0.3, 0.2), c(0.0, 0.0), c(-0.3, -0.2), c(0.8, 0.0)],
    );
    vec![
        (ArrayConfig::new(16, 0.5).unwrap(), SourceConfig::unit_power_at_snr(vec![10.0], 0.0).unwrap(), 100),
        (ArrayConfig::new(16, 0.5).unwrap(), SourceConfig::unit_power_at_snr(vec![-30.0, 20.0], 10.0).unwrap(), 100),
        (ArrayConfig::new(8, 0.5).unwrap(), SourceConfig::new(vec![-5.0, 7.0], corr, 0.5).unwrap(), 50),
        (ArrayConfig::new(10, 0.4).unwrap(), SourceConfig::new(vec![-40.0, 0.0, 35.0], three, 0.1).unwrap(), 200),
        (ArrayConfig::new(12, 0.5).unwrap(), SourceConfig::uncorrelated(vec![-50.0, -20.0, 15.0, 45.0], &[1.0, 0.5, 2.0, 1.0], 2.0).unwrap(), 30),
    ]
}
