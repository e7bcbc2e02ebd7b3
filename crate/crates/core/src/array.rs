//! Far-field narrowband sources on a uniform linear array.
//!
//! Angles are in degrees at every public entry point and measured from
//! broadside. Element `m` (0-based) of the steering vector is
//! `exp(-j 2π d m sin θ)` with `d` the spacing in wavelengths.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};
use crate::linalg::{hermitian_defect, hermitian_eigen, hermitian_part};
use crate::{rng, CMatrix, CVector};

/// Uniform linear array geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrayConfig {
    pub num_elements: usize,
    /// Element spacing divided by the carrier wavelength.
    pub spacing_wavelengths: f64,
}

impl ArrayConfig {
    pub fn new(num_elements: usize, spacing_wavelengths: f64) -> Result<Self> {
        if num_elements < 2 {
            return invalid(format!("array needs at least 2 elements, got {num_elements}"));
        }
        if !(spacing_wavelengths > 0.0 && spacing_wavelengths.is_finite()) {
            return invalid(format!("element spacing must be positive, got {spacing_wavelengths}"));
        }
        Ok(Self { num_elements, spacing_wavelengths })
    }

    /// Half-wavelength array with `num_elements` sensors.
    pub fn half_wavelength(num_elements: usize) -> Result<Self> {
        Self::new(num_elements, 0.5)
    }
}

impl Default for ArrayConfig {
    fn default() -> Self {
        Self { num_elements: 16, spacing_wavelengths: 0.5 }
    }
}

/// Source scenario: DOAs, signal covariance and noise power.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceConfig {
    pub doas_deg: Vec<f64>,
    /// K×K Hermitian PSD signal covariance Γ.
    pub signal_covariance: CMatrix,
    pub noise_variance: f64,
}

impl SourceConfig {
    pub fn new(doas_deg: Vec<f64>, signal_covariance: CMatrix, noise_variance: f64) -> Result<Self> {
        let k = doas_deg.len();
        check_angles(&doas_deg)?;
        if signal_covariance.nrows() != k || signal_covariance.ncols() != k {
            return invalid(format!(
                "signal covariance is {}x{}, expected {k}x{k}",
                signal_covariance.nrows(),
                signal_covariance.ncols()
            ));
        }
        if hermitian_defect(&signal_covariance) > 1e-10 {
            return invalid("signal covariance is not Hermitian");
        }
        if (0..k).any(|i| !(signal_covariance[(i, i)].re > 0.0)) {
            return invalid("signal powers must be positive");
        }
        if k > 0 {
            let (vals, _) = hermitian_eigen(&signal_covariance);
            if vals[k - 1] < -1e-10 * vals[0].abs().max(f64::MIN_POSITIVE) {
                return invalid("signal covariance is not positive semidefinite");
            }
        }
        if !(noise_variance >= 0.0 && noise_variance.is_finite()) {
            return invalid(format!("noise variance must be nonnegative, got {noise_variance}"));
        }
        Ok(Self { doas_deg, signal_covariance, noise_variance })
    }

    /// Mutually uncorrelated sources with the given powers.
    pub fn uncorrelated(doas_deg: Vec<f64>, powers: &[f64], noise_variance: f64) -> Result<Self> {
        if powers.len() != doas_deg.len() {
            return invalid("one power per source required");
        }
        let gamma = CMatrix::from_diagonal(&CVector::from_iterator(
            powers.len(),
            powers.iter().map(|&p| Complex64::new(p, 0.0)),
        ));
        Self::new(doas_deg, gamma, noise_variance)
    }

    /// Unit-power uncorrelated sources at the given SNR in dB (`σ_n² = 10^(-snr/10)`).
    pub fn unit_power_at_snr(doas_deg: Vec<f64>, snr_db: f64) -> Result<Self> {
        let k = doas_deg.len();
        Self::uncorrelated(doas_deg, &vec![1.0; k], snr_to_noise_variance(snr_db))
    }

    pub fn num_sources(&self) -> usize {
        self.doas_deg.len()
    }
}

/// Noise variance for unit signal power at `snr_db`.
pub fn snr_to_noise_variance(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

fn check_angles(doas_deg: &[f64]) -> Result<()> {
    for &t in doas_deg {
        if !(t > -90.0 && t < 90.0) {
            return invalid(format!("angle {t}° outside (-90°, 90°)"));
        }
    }
    for (i, a) in doas_deg.iter().enumerate() {
        if doas_deg[i + 1..].iter().any(|b| b == a) {
            return invalid(format!("duplicate angle {a}°"));
        }
    }
    Ok(())
}

/// M×T array outputs, one snapshot per column.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotMatrix {
    pub data: CMatrix,
}

impl SnapshotMatrix {
    pub fn num_snapshots(&self) -> usize {
        self.data.ncols()
    }
}

/// M×M Hermitian covariance (ideal or sample).
#[derive(Debug, Clone, PartialEq)]
pub struct CovMatrix {
    pub data: CMatrix,
}

impl CovMatrix {
    /// Wraps `data` after checking squareness and Hermitian symmetry (relative 1e-10).
    pub fn new(data: CMatrix) -> Result<Self> {
        if data.nrows() != data.ncols() {
            return invalid("covariance must be square");
        }
        if hermitian_defect(&data) > 1e-10 {
            return invalid("covariance is not Hermitian");
        }
        Ok(Self { data })
    }

    pub(crate) fn from_hermitian(data: CMatrix) -> Self {
        Self { data: hermitian_part(&data) }
    }

    pub fn size(&self) -> usize {
        self.data.nrows()
    }

    /// Eigenvalues, descending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigen(&self.data).0
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { data: self.data.map(|z| z * c) }
    }
}

/// Steering vector `a(θ)`.
pub fn steering_vector(theta_deg: f64, cfg: &ArrayConfig) -> Result<CVector> {
    check_angles(&[theta_deg])?;
    Ok(steering_vector_unchecked(theta_deg, cfg))
}

pub(crate) fn steering_vector_unchecked(theta_deg: f64, cfg: &ArrayConfig) -> CVector {
    let phase = -2.0 * std::f64::consts::PI * cfg.spacing_wavelengths * theta_deg.to_radians().sin();
    CVector::from_fn(cfg.num_elements, |m, _| Complex64::from_polar(1.0, phase * m as f64))
}

/// Derivative of the steering vector with respect to θ in radians.
pub(crate) fn steering_derivative(theta_deg: f64, cfg: &ArrayConfig) -> CVector {
    let th = theta_deg.to_radians();
    let w = 2.0 * std::f64::consts::PI * cfg.spacing_wavelengths;
    let a = steering_vector_unchecked(theta_deg, cfg);
    CVector::from_fn(cfg.num_elements, |m, _| {
        a[m] * Complex64::new(0.0, -w * m as f64 * th.cos())
    })
}

/// Steering matrix `A = [a(θ_1) … a(θ_K)]`.
pub fn steering_matrix(doas_deg: &[f64], cfg: &ArrayConfig) -> Result<CMatrix> {
    check_angles(doas_deg)?;
    let mut a = CMatrix::zeros(cfg.num_elements, doas_deg.len());
    for (k, &t) in doas_deg.iter().enumerate() {
        a.set_column(k, &steering_vector_unchecked(t, cfg));
    }
    Ok(a)
}

/// `R = A Γ A^H + σ_n² I`.
pub fn ideal_covariance(src: &SourceConfig, cfg: &ArrayConfig) -> Result<CovMatrix> {
    let a = steering_matrix(&src.doas_deg, cfg)?;
    let mut r = &a * &src.signal_covariance * a.adjoint();
    for i in 0..cfg.num_elements {
        r[(i, i)] += Complex64::new(src.noise_variance, 0.0);
    }
    Ok(CovMatrix::from_hermitian(r))
}

/// Two-source covariance `[[σ1², ρ], [ρ, σ2²]]`.
pub fn correlated_pair_covariance(sigma1_sq: f64, sigma2_sq: f64, rho: f64) -> Result<CMatrix> {
    if !(sigma1_sq > 0.0 && sigma2_sq > 0.0) {
        return invalid("source powers must be positive");
    }
    if !(0.0..=1.0).contains(&rho) {
        return invalid(format!("correlation coefficient {rho} outside [0, 1]"));
    }
    if rho * rho > sigma1_sq * sigma2_sq {
        return invalid(format!("rho={rho} makes the signal covariance indefinite"));
    }
    let c = |x: f64| Complex64::new(x, 0.0);
    Ok(CMatrix::from_row_slice(2, 2, &[c(sigma1_sq), c(rho), c(rho), c(sigma2_sq)]))
}

/// Factor `F` with `F F^H = Γ`, dropping eigenvalues below `1e-12·λ_max`.
pub(crate) fn covariance_factor(gamma: &CMatrix) -> CMatrix {
    let k = gamma.nrows();
    if k == 0 {
        return CMatrix::zeros(0, 0);
    }
    let (vals, vecs) = hermitian_eigen(gamma);
    let tol = 1e-12 * vals[0].max(0.0);
    let rank = vals.iter().take_while(|&&v| v > tol).count();
    let mut f = CMatrix::zeros(k, rank);
    for c in 0..rank {
        let s = vals[c].sqrt();
        for r in 0..k {
            f[(r, c)] = vecs[(r, c)] * s;
        }
    }
    f
}

/// One draw from CN(0, variance).
pub(crate) fn complex_normal<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * s, im * s)
}

/// `T` snapshots of `y = A s + n`, reproducible from `seed`.
pub fn simulate_snapshots(src: &SourceConfig, cfg: &ArrayConfig, t: usize, seed: u64) -> Result<SnapshotMatrix> {
    let mut rng = rng::stream(seed, 0);
    simulate_snapshots_with(src, cfg, t, &mut rng)
}

/// As [`simulate_snapshots`], drawing from a caller-owned generator.
pub fn simulate_snapshots_with<R: Rng + ?Sized>(
    src: &SourceConfig,
    cfg: &ArrayConfig,
    t: usize,
    rng: &mut R,
) -> Result<SnapshotMatrix> {
    if t == 0 {
        return invalid("at least one snapshot required");
    }
    let a = steering_matrix(&src.doas_deg, cfg)?;
    let factor = covariance_factor(&src.signal_covariance);
    let rank = factor.ncols();
    let m = cfg.num_elements;

    let white = DMatrix::from_fn(rank, t, |_, _| complex_normal(rng, 1.0));
    let mut y = if rank > 0 { &a * (&factor * white) } else { CMatrix::zeros(m, t) };
    if src.noise_variance > 0.0 {
        for col in 0..t {
            for row in 0..m {
                y[(row, col)] += complex_normal(rng, src.noise_variance);
            }
        }
    }
    Ok(SnapshotMatrix { data: y })
}

/// `R̂ = Y Y^H / T`.
pub fn sample_covariance(y: &SnapshotMatrix) -> Result<CovMatrix> {
    let t = y.num_snapshots();
    if t == 0 {
        return invalid("empty snapshot matrix");
    }
    let r = (&y.data * y.data.adjoint()).map(|z| z / t as f64);
    Ok(CovMatrix::from_hermitian(r))
}

impl From<CovMatrix> for CMatrix {
    fn from(c: CovMatrix) -> Self {
        c.data
    }
}

impl TryFrom<CMatrix> for CovMatrix {
    type Error = Error;
    fn try_from(m: CMatrix) -> Result<Self> {
        CovMatrix::new(m)
    }
}
