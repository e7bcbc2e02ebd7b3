use num_complex::Complex64;
use rayon::prelude::*;

use super::EigenBasis;
use crate::array::{steering_vector_unchecked, ArrayConfig};
use crate::error::{invalid, Result};
use crate::grid::AngularGrid;

/// Denominators below this are clamped.
pub const DENOMINATOR_FLOOR: f64 = 1e-18;

/// Pseudo-spectrum sampled on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub values: Vec<f64>,
    pub grid: AngularGrid,
    /// Set when at least one denominator hit [`DENOMINATOR_FLOOR`].
    pub saturated: bool,
}

impl Spectrum {
    pub fn argmax(&self) -> usize {
        argmax(&self.values)
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// `P(θ) = 1 / ‖U_N^H a(θ)‖²` on every grid point.
pub fn music_spectrum(basis: &EigenBasis, grid: &AngularGrid, cfg: &ArrayConfig) -> Result<Spectrum> {
    if grid.is_empty() {
        return invalid("empty grid");
    }
    if basis.size() != cfg.num_elements {
        return invalid(format!(
            "basis size {} does not match array size {}",
            basis.size(),
            cfg.num_elements
        ));
    }
    let m = cfg.num_elements;
    let noise_dim = m - basis.signal_dim;
    // Row-major U_N^H so each output element is a contiguous dot product.
    let un_h: Vec<Complex64> = basis.noise_subspace().adjoint().transpose().as_slice().to_vec();

    let denoms: Vec<f64> = (0..grid.num_points)
        .into_par_iter()
        .map(|i| {
            let a = steering_vector_unchecked(grid.angle(i), cfg);
            let mut power = 0.0;
            for r in 0..noise_dim {
                let row = &un_h[r * m..(r + 1) * m];
                let mut acc = Complex64::new(0.0, 0.0);
                for (u, x) in row.iter().zip(a.iter()) {
                    acc += u * x;
                }
                power += acc.norm_sqr();
            }
            power
        })
        .collect();

    let saturated = denoms.iter().any(|&d| d < DENOMINATOR_FLOOR);
    let values = denoms.into_iter().map(|d| 1.0 / d.max(DENOMINATOR_FLOOR)).collect();
    Ok(Spectrum { values, grid: *grid, saturated })
}

/// Result of a peak search.
#[derive(Debug, Clone, PartialEq)]
pub struct PeakSearch {
    pub angles_deg: Vec<f64>,
    /// Grid indices matching `angles_deg`.
    pub indices: Vec<usize>,
    /// Fewer than `K` strict local maxima existed; the rest were padded.
    pub degraded: bool,
}

/// Grid angles of the `K` largest strict local maxima, sorted ascending.
///
/// Endpoints compare against their single neighbour. Ties in value go to the
/// lower index. When there are not enough maxima, the largest remaining
/// samples fill the list and `degraded` is set.
pub fn spectral_peaks(p: &Spectrum, k: usize) -> Result<PeakSearch> {
    let v = &p.values;
    let n = v.len();
    if k == 0 {
        return invalid("peak count must be at least 1");
    }
    if k > n {
        return invalid(format!("{k} peaks requested from a {n}-point spectrum"));
    }
    let is_peak = |i: usize| {
        let left = i == 0 || v[i] > v[i - 1];
        let right = i + 1 == n || v[i] > v[i + 1];
        n > 1 && left && right
    };
    let by_value = |a: &usize, b: &usize| v[*b].total_cmp(&v[*a]).then(a.cmp(b));

    let mut peaks: Vec<usize> = (0..n).filter(|&i| is_peak(i)).collect();
    peaks.sort_by(by_value);
    peaks.truncate(k);
    let degraded = peaks.len() < k;
    if degraded {
        let mut rest: Vec<usize> = (0..n).filter(|i| !peaks.contains(i)).collect();
        rest.sort_by(by_value);
        peaks.extend(rest.into_iter().take(k - peaks.len()));
    }
    peaks.sort_unstable();
    Ok(PeakSearch {
        angles_deg: peaks.iter().map(|&i| p.grid.angle(i)).collect(),
        indices: peaks,
        degraded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::{ideal_covariance, SourceConfig};
    use crate::grid::make_grid;
    use crate::subspace::eigendecompose;

    fn noiseless(doas: &[f64], scale: f64) -> EigenBasis {
        let cfg = ArrayConfig::half_wavelength(16).unwrap();
        let src = SourceConfig::uncorrelated(doas.to_vec(), &vec![1.0; doas.len()], 0.0).unwrap();
        eigendecompose(&ideal_covariance(&src, &cfg).unwrap().scaled(scale), doas.len()).unwrap()
    }

    /// Direct evaluation of `a^H U_N U_N^H a` through the projector.
    fn brute_force(basis: &EigenBasis, grid: &AngularGrid, cfg: &ArrayConfig) -> Vec<f64> {
        let pn = basis.noise_projector();
        grid.angles()
            .map(|t| {
                let a = steering_vector_unchecked(t, cfg);
                let q = (a.adjoint() * &pn * &a)[(0, 0)].re;
                1.0 / q.max(DENOMINATOR_FLOOR)
            })
            .collect()
    }

    #[test]
    fn matches_projector_evaluation() {
        let cfg = ArrayConfig::half_wavelength(16).unwrap();
        let src = SourceConfig::uncorrelated(vec![-22.3, 14.1], &[1.0, 1.0], 0.1).unwrap();
        let b = eigendecompose(&ideal_covariance(&src, &cfg).unwrap(), 2).unwrap();
        let g = make_grid(-60.0, 60.0, 480).unwrap();
        let s = music_spectrum(&b, &g, &cfg).unwrap();
        for (x, y) in s.values.iter().zip(brute_force(&b, &g, &cfg)) {
            assert!((x - y).abs() <= 1e-9 * y);
        }
    }

    #[test]
    fn single_source_peaks_on_its_grid_index() {
        let cfg = ArrayConfig::half_wavelength(16).unwrap();
        let g = make_grid(-60.0, 60.0, 4096).unwrap();
        let idx = g.nearest_index(10.0);
        let theta = g.angle(idx);
        let s = music_spectrum(&noiseless(&[theta], 1.0), &g, &cfg).unwrap();
        assert_eq!(s.argmax(), idx);
        assert_eq!(argmax(&brute_force(&noiseless(&[theta], 1.0), &g, &cfg)), idx);
    }

    #[test]
    fn scaling_covariance_keeps_peaks() {
        let cfg = ArrayConfig::half_wavelength(16).unwrap();
        let g = make_grid(-60.0, 60.0, 1200).unwrap();
        let a = spectral_peaks(&music_spectrum(&noiseless(&[-30.0, 20.0], 1.0), &g, &cfg).unwrap(), 2).unwrap();
        let b = spectral_peaks(&music_spectrum(&noiseless(&[-30.0, 20.0], 7.0), &g, &cfg).unwrap(), 2).unwrap();
        assert_eq!(a.indices, b.indices);
    }

    #[test]
    fn two_sources_found_on_grid() {
        let cfg = ArrayConfig::half_wavelength(16).unwrap();
        let g = make_grid(-60.0, 60.0, 1200).unwrap();
        let s = music_spectrum(&noiseless(&[-30.0, 20.0], 1.0), &g, &cfg).unwrap();
        let peaks = spectral_peaks(&s, 2).unwrap();
        assert_eq!(peaks.indices, vec![g.nearest_index(-30.0), g.nearest_index(20.0)]);
        assert!(!peaks.degraded);
    }

    #[test]
    fn spike_and_flat_spectra() {
        let g = make_grid(0.0, 10.0, 10).unwrap();
        let mut values = vec![1.0; 10];
        values[6] = 5.0;
        let s = Spectrum { values, grid: g, saturated: false };
        let p = spectral_peaks(&s, 1).unwrap();
        assert_eq!(p.angles_deg, vec![6.0]);
        assert!(!p.degraded);

        let flat = Spectrum { values: vec![2.0; 10], grid: g, saturated: false };
        let p = spectral_peaks(&flat, 2).unwrap();
        assert!(p.degraded);
        assert_eq!(p.indices, vec![0, 1]);
        assert!(spectral_peaks(&flat, 11).is_err());
        assert!(spectral_peaks(&flat, 0).is_err());
    }

    #[test]
    fn endpoint_maxima_count() {
        let g = make_grid(0.0, 5.0, 5).unwrap();
        let s = Spectrum { values: vec![9.0, 1.0, 3.0, 1.0, 4.0], grid: g, saturated: false };
        let p = spectral_peaks(&s, 3).unwrap();
        assert_eq!(p.indices, vec![0, 2, 4]);
    }

    #[test]
    fn on_grid_noiseless_is_flagged_saturated() {
        let cfg = ArrayConfig::half_wavelength(16).unwrap();
        let g = make_grid(-60.0, 60.0, 120).unwrap();
        let s = music_spectrum(&noiseless(&[10.0], 1.0), &g, &cfg).unwrap();
        assert!(s.values.iter().all(|&v| v > 0.0));
        assert!(s.saturated || s.values[s.argmax()] > 1e12);
    }
}
