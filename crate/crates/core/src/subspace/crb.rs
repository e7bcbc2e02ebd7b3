use crate::array::{ideal_covariance, steering_derivative, steering_matrix, ArrayConfig, SourceConfig};
use crate::error::{invalid, Result};
use crate::linalg::inverse;
use crate::CMatrix;

/// Stochastic (unconditional) CRB on each DOA, as a standard deviation in degrees.
///
/// `CRB = σ²/(2T) · Re[(D^H Π⊥ D) ⊙ (Γ A^H R⁻¹ A Γ)^T]⁻¹` with `D` the
/// steering derivatives with respect to θ in radians.
pub fn stochastic_crb(src: &SourceConfig, cfg: &ArrayConfig, t: usize) -> Result<Vec<f64>> {
    let k = src.num_sources();
    let m = cfg.num_elements;
    if k == 0 || k >= m {
        return invalid(format!("CRB needs 0 < K < M, got K={k}, M={m}"));
    }
    if t == 0 {
        return invalid("CRB needs at least one snapshot");
    }
    if !(src.noise_variance > 0.0) {
        return invalid("CRB needs positive noise variance");
    }
    let a = steering_matrix(&src.doas_deg, cfg)?;
    let mut d = CMatrix::zeros(m, k);
    for (i, &th) in src.doas_deg.iter().enumerate() {
        d.set_column(i, &steering_derivative(th, cfg));
    }
    let aha_inv = inverse(&(a.adjoint() * &a)).ok_or_else(|| crate::Error::InvalidArgument("A^H A is singular".into()))?;
    let proj_perp = CMatrix::identity(m, m) - &a * aha_inv * a.adjoint();
    let r = ideal_covariance(src, cfg)?;
    let r_inv = inverse(&r.data).ok_or_else(|| crate::Error::Numerical("covariance is singular".into()))?;
    let gamma = &src.signal_covariance;

    let h = d.adjoint() * proj_perp * &d;
    let g = gamma * a.adjoint() * r_inv * &a * gamma;
    let b = nalgebra::DMatrix::<f64>::from_fn(k, k, |i, j| (h[(i, j)] * g[(j, i)]).re);
    let b_inv = b.try_inverse().ok_or_else(|| crate::Error::Numerical("CRB information matrix is singular".into()))?;
    let scale = src.noise_variance / (2.0 * t as f64);
    Ok((0..k).map(|i| (scale * b_inv[(i, i)]).max(0.0).sqrt().to_degrees()).collect())
}
