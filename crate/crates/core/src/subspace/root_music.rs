use nalgebra::{DMatrix, Schur};
use num_complex::Complex64;

use super::EigenBasis;
use crate::array::ArrayConfig;
use crate::error::{invalid, Error, Result};

/// Root-MUSIC output.
#[derive(Debug, Clone, PartialEq)]
pub struct RootMusic {
    pub angles_deg: Vec<f64>,
    /// Fewer than `K` admissible roots were found.
    pub degraded: bool,
}

/// Coefficients of `z^{M-1} · a(z)^H U_N U_N^H a(z)` in ascending powers of `z`.
///
/// Entry `i` is the sum of the `(i − (M−1))`-th diagonal of `C = U_N U_N^H`,
/// where diagonal `l` holds the entries `C[m][n]` with `m − n = l`.
pub fn root_music_polynomial(basis: &EigenBasis) -> Vec<Complex64> {
    let c = basis.noise_projector();
    let m = c.nrows();
    let mut coeffs = vec![Complex64::new(0.0, 0.0); 2 * m - 1];
    for row in 0..m {
        for col in 0..m {
            coeffs[row + (m - 1) - col] += c[(row, col)];
        }
    }
    coeffs
}

/// Roots of the polynomial with ascending coefficients `coeffs`, via the
/// eigenvalues of its companion matrix.
pub fn polynomial_roots(coeffs: &[Complex64]) -> Result<Vec<Complex64>> {
    let scale = coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return invalid("zero polynomial");
    }
    let mut deg = coeffs.len() - 1;
    while deg > 0 && coeffs[deg].norm() <= 1e-14 * scale {
        deg -= 1;
    }
    if deg == 0 {
        return Ok(Vec::new());
    }
    let lead = coeffs[deg];
    let mut companion = DMatrix::<Complex64>::zeros(deg, deg);
    for i in 1..deg {
        companion[(i, i - 1)] = Complex64::new(1.0, 0.0);
    }
    for i in 0..deg {
        companion[(i, deg - 1)] = -coeffs[i] / lead;
    }
    let schur = Schur::try_new(companion, 1e-15, 10_000)
        .ok_or_else(|| Error::Numerical("companion Schur iteration did not converge".into()))?;
    let (_, t) = schur.unpack();
    Ok((0..deg).map(|i| t[(i, i)]).collect())
}

/// Grid-free MUSIC: roots the noise-subspace polynomial and maps the `K`
/// roots closest to the unit circle back to angles.
///
/// Roots come in pairs `(z, 1/z̄)`. Each pair is reduced to a single
/// candidate whose phase is the mean of the two members' phases; for a pair
/// straddling the circle both phases agree, and for a double root that
/// rounding split along the circle the mean restores the exact phase.
pub fn root_music(basis: &EigenBasis, cfg: &ArrayConfig) -> Result<RootMusic> {
    if cfg.spacing_wavelengths > 0.5 {
        return invalid("Root-MUSIC requires spacing of at most half a wavelength");
    }
    let k = basis.signal_dim;
    let roots = polynomial_roots(&root_music_polynomial(basis))?;

    let mut order: Vec<usize> = (0..roots.len()).collect();
    order.sort_by(|&a, &b| circle_distance(roots[a]).total_cmp(&circle_distance(roots[b])));
    let mut used = vec![false; roots.len()];
    let mut candidates = Vec::new();
    for &i in &order {
        if used[i] {
            continue;
        }
        used[i] = true;
        let mirror = Complex64::new(1.0, 0.0) / roots[i].conj();
        let partner = order
            .iter()
            .copied()
            .filter(|&j| !used[j])
            .min_by(|&a, &b| (roots[a] - mirror).norm().total_cmp(&(roots[b] - mirror).norm()))
            .filter(|&j| (roots[j] - mirror).norm() < 1e-3 * mirror.norm().max(1.0));
        let phase = match partner {
            Some(j) => {
                used[j] = true;
                let rel = roots[j] * roots[i].conj();
                roots[i].arg() + 0.5 * rel.arg()
            }
            None => roots[i].arg(),
        };
        candidates.push(phase);
    }

    let w = 2.0 * std::f64::consts::PI * cfg.spacing_wavelengths;
    let mut angles: Vec<f64> = candidates
        .into_iter()
        .filter_map(|phase| {
            let s = phase / w;
            (s.abs() <= 1.0).then(|| s.asin().to_degrees())
        })
        .take(k)
        .collect();
    let degraded = angles.len() < k;
    angles.sort_by(f64::total_cmp);
    Ok(RootMusic { angles_deg: angles, degraded })
}

fn circle_distance(z: Complex64) -> f64 {
    (z.norm() - 1.0).abs()
}
