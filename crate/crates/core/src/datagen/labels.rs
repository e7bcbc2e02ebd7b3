use crate::array::{covariance_factor, ideal_covariance, ArrayConfig, SourceConfig};
use crate::error::{invalid, Result};
use crate::grid::Partition;
use crate::subspace::{eigendecompose_by_threshold, forward_backward_smooth, music_spectrum};
use crate::CMatrix;

/// Relative eigenvalue threshold separating signal from noise subspace in a
/// noiseless covariance.
pub const LABEL_RANK_TOL: f64 = 1e-10;

/// Sum-normalized noiseless MUSIC spectrum over the full grid.
///
/// Builds `R̃ = A Γ A^H` without a noise term and takes its null space as the
/// noise subspace. When `Γ` is rank deficient the covariance is first
/// forward–backward smoothed with subarrays of `M − K` elements.
pub fn normalized_label_spectrum(
    doas_deg: &[f64],
    partition: &Partition,
    cfg: &ArrayConfig,
    gamma: &CMatrix,
) -> Result<Vec<f64>> {
    let k = doas_deg.len();
    if k == 0 {
        return invalid("labels need at least one source");
    }
    if k >= cfg.num_elements {
        return invalid(format!("{k} sources do not fit an {}-element array", cfg.num_elements));
    }
    let mut seen = vec![false; partition.num_regions];
    for &d in doas_deg {
        let q = partition
            .region_of_angle(d)
            .ok_or_else(|| crate::Error::InvalidArgument(format!("DOA {d}° lies outside the grid")))?;
        if seen[q] {
            return invalid(format!("two DOAs fall in region {q}"));
        }
        seen[q] = true;
    }

    let src = SourceConfig::new(doas_deg.to_vec(), gamma.clone(), 0.0)?;
    let mut r = ideal_covariance(&src, cfg)?;
    let mut scan_cfg = *cfg;
    if covariance_factor(gamma).ncols() < k {
        let sub = cfg.num_elements - k;
        r = forward_backward_smooth(&r, sub)?;
        scan_cfg = ArrayConfig::new(sub, cfg.spacing_wavelengths)?;
    }
    let basis = eigendecompose_by_threshold(&r, LABEL_RANK_TOL);
    let spectrum = music_spectrum(&basis, &partition.grid, &scan_cfg)?;
    let total: f64 = spectrum.values.iter().sum();
    Ok(spectrum.values.iter().map(|v| v / total).collect())
}

/// Per-region label vectors: the normalized spectrum cut into `Q` slices of `L`.
pub fn label_spectra(
    doas_deg: &[f64],
    partition: &Partition,
    cfg: &ArrayConfig,
    gamma: &CMatrix,
) -> Result<Vec<Vec<f64>>> {
    let full = normalized_label_spectrum(doas_deg, partition, cfg, gamma)?;
    Ok(full.chunks(partition.region_len).map(<[f64]>::to_vec).collect())
}
