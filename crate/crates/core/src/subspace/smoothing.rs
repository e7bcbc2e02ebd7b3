use crate::array::CovMatrix;
use crate::error::{invalid, Result};
use crate::CMatrix;

/// `J conj(R) J` with `J` the exchange matrix.
pub fn exchange_conjugate(r: &CMatrix) -> CMatrix {
    let n = r.nrows();
    CMatrix::from_fn(n, n, |i, j| r[(n - 1 - i, n - 1 - j)].conj())
}

/// Forward–backward spatial smoothing over all `M − L + 1` subarrays of size `L`.
pub fn forward_backward_smooth(r: &CovMatrix, subarray_size: usize) -> Result<CovMatrix> {
    let m = r.size();
    if subarray_size == 0 || subarray_size > m {
        return invalid(format!("subarray size {subarray_size} must lie in 1..={m}"));
    }
    let count = m - subarray_size + 1;
    let mut forward = CMatrix::zeros(subarray_size, subarray_size);
    for p in 0..count {
        forward += r.data.view((p, p), (subarray_size, subarray_size));
    }
    forward /= num_complex::Complex64::new(count as f64, 0.0);
    let fb = (&forward + exchange_conjugate(&forward)) * num_complex::Complex64::new(0.5, 0.0);
    Ok(CovMatrix::from_hermitian(fb))
}
