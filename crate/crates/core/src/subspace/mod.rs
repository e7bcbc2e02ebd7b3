//! Classical subspace DOA estimators and the stochastic Cramér–Rao bound.
//!
//! All routines take the source count `K` as an input; nothing here
//! estimates it.

mod crb;
pub(crate) mod music;
mod root_music;
mod smoothing;

pub use crb::stochastic_crb;
pub use music::{music_spectrum, spectral_peaks, PeakSearch, Spectrum};
pub use root_music::{polynomial_roots, root_music, root_music_polynomial, RootMusic};
pub use smoothing::{exchange_conjugate, forward_backward_smooth};

use crate::array::CovMatrix;
use crate::error::{invalid, Result};
use crate::linalg::hermitian_eigen;
use crate::CMatrix;

/// Eigenvalues (descending) and eigenvectors of a covariance, split at `signal_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenBasis {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: CMatrix,
    pub signal_dim: usize,
}

impl EigenBasis {
    pub fn size(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `U_S`, the first `signal_dim` eigenvectors.
    pub fn signal_subspace(&self) -> CMatrix {
        self.eigenvectors.columns(0, self.signal_dim).into_owned()
    }

    /// `U_N`, the trailing `M − signal_dim` eigenvectors.
    pub fn noise_subspace(&self) -> CMatrix {
        let m = self.size();
        self.eigenvectors.columns(self.signal_dim, m - self.signal_dim).into_owned()
    }

    /// `U_N U_N^H`.
    pub fn noise_projector(&self) -> CMatrix {
        let un = self.noise_subspace();
        &un * un.adjoint()
    }

    /// Re-splits the basis at `signal_dim`.
    pub fn with_signal_dim(mut self, signal_dim: usize) -> Result<Self> {
        if signal_dim >= self.size() {
            return invalid(format!("signal dimension {signal_dim} must be below {}", self.size()));
        }
        self.signal_dim = signal_dim;
        Ok(self)
    }
}

/// `R = U Λ U^H` with `K` signal eigenvectors.
pub fn eigendecompose(r: &CovMatrix, k: usize) -> Result<EigenBasis> {
    let m = r.size();
    if k >= m {
        return invalid(format!("source count {k} must be below array size {m}"));
    }
    let (eigenvalues, eigenvectors) = hermitian_eigen(&r.data);
    Ok(EigenBasis { eigenvalues, eigenvectors, signal_dim: k })
}

/// Eigen-decomposition whose signal dimension counts eigenvalues above `rel_tol·λ_max`.
///
/// Used for noiseless covariances where the noise eigenvalues are zero up to
/// rounding. The signal dimension is capped at `M − 1`.
pub fn eigendecompose_by_threshold(r: &CovMatrix, rel_tol: f64) -> EigenBasis {
    let (eigenvalues, eigenvectors) = hermitian_eigen(&r.data);
    let tol = rel_tol * eigenvalues[0].max(0.0);
    let k = eigenvalues.iter().take_while(|&&v| v > tol).count().min(r.size() - 1);
    EigenBasis { eigenvalues, eigenvectors, signal_dim: k }
}
