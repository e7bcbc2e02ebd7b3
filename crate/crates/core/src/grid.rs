//! The DOA search grid and its split into contiguous subregions.

use crate::error::{invalid, Result};

/// Half-open uniform grid `start, start+γ, …, final−γ` with `γ = (final−start)/N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngularGrid {
    pub start_deg: f64,
    pub final_deg: f64,
    pub num_points: usize,
    pub resolution_deg: f64,
}

impl AngularGrid {
    pub fn new(start_deg: f64, final_deg: f64, num_points: usize) -> Result<Self> {
        if num_points == 0 {
            return invalid("grid needs at least one point");
        }
        if !(start_deg < final_deg) || !start_deg.is_finite() || !final_deg.is_finite() {
            return invalid(format!("grid bounds [{start_deg}, {final_deg}) are not increasing"));
        }
        Ok(Self {
            start_deg,
            final_deg,
            num_points,
            resolution_deg: (final_deg - start_deg) / num_points as f64,
        })
    }

    pub fn len(&self) -> usize {
        self.num_points
    }

    pub fn is_empty(&self) -> bool {
        self.num_points == 0
    }

    /// Angle of grid point `index`.
    pub fn angle(&self, index: usize) -> f64 {
        self.start_deg + index as f64 * self.resolution_deg
    }

    pub fn angles(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.num_points).map(|i| self.angle(i))
    }

    /// Index of the grid point nearest to `angle_deg`, clamped to the grid.
    pub fn nearest_index(&self, angle_deg: f64) -> usize {
        let pos = ((angle_deg - self.start_deg) / self.resolution_deg).round();
        pos.clamp(0.0, (self.num_points - 1) as f64) as usize
    }

    /// Fractional grid coordinate of `angle_deg`.
    pub fn position(&self, angle_deg: f64) -> f64 {
        (angle_deg - self.start_deg) / self.resolution_deg
    }
}

/// `Q` disjoint contiguous subregions of `L = N/Q` grid points each.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub grid: AngularGrid,
    pub num_regions: usize,
    pub region_len: usize,
    /// `(start, final)` of each region; `final` of region q is `start` of region q+1.
    pub region_bounds: Vec<(f64, f64)>,
}

impl Partition {
    pub fn new(grid: AngularGrid, num_regions: usize) -> Result<Self> {
        if num_regions == 0 || grid.num_points % num_regions != 0 {
            return invalid(format!(
                "{num_regions} regions do not divide {} grid points",
                grid.num_points
            ));
        }
        let region_len = grid.num_points / num_regions;
        let region_bounds = (0..num_regions)
            .map(|q| {
                let s = grid.angle(q * region_len);
                let f = if q + 1 == num_regions { grid.final_deg } else { grid.angle((q + 1) * region_len) };
                (s, f)
            })
            .collect();
        Ok(Self { grid, num_regions, region_len, region_bounds })
    }

    /// Grid index range of region `q`.
    pub fn region_range(&self, q: usize) -> std::ops::Range<usize> {
        q * self.region_len..(q + 1) * self.region_len
    }

    pub fn region_of_index(&self, index: usize) -> usize {
        (index / self.region_len).min(self.num_regions - 1)
    }

    /// Region holding `angle_deg`, or `None` outside `[start, final)`.
    pub fn region_of_angle(&self, angle_deg: f64) -> Option<usize> {
        if angle_deg < self.grid.start_deg || angle_deg >= self.grid.final_deg {
            return None;
        }
        self.region_bounds.iter().position(|&(s, f)| angle_deg >= s && angle_deg < f)
    }
}

/// Builds the grid (−start..final with `n` points).
pub fn make_grid(start_deg: f64, final_deg: f64, n: usize) -> Result<AngularGrid> {
    AngularGrid::new(start_deg, final_deg, n)
}

/// Splits `grid` into `q` regions.
pub fn partition_grid(grid: AngularGrid, q: usize) -> Result<Partition> {
    Partition::new(grid, q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn paper_scale_grid() {
        let g = make_grid(-60.0, 60.0, 4096).unwrap();
        assert_eq!(g.resolution_deg, 120.0 / 4096.0);
        assert!((g.resolution_deg - 0.029297).abs() < 1e-6);
    }

    #[test]
    fn one_degree_grid() {
        let g = make_grid(-60.0, 60.0, 120).unwrap();
        assert_eq!(g.resolution_deg, 1.0);
        assert_eq!(g.angle(0), -60.0);
        assert_eq!(g.angle(119), 59.0);
    }

    #[test]
    fn quarter_grid() {
        let g = make_grid(0.0, 1.0, 4).unwrap();
        assert_eq!(g.angles().collect::<Vec<_>>(), vec![0.0, 0.25, 0.5, 0.75]);
    }

    #[test]
    fn bad_grids_rejected() {
        assert!(make_grid(0.0, 1.0, 0).is_err());
        assert!(make_grid(1.0, 1.0, 4).is_err());
    }

    #[test]
    fn eight_regions_on_paper_grid() {
        let p = partition_grid(make_grid(-60.0, 60.0, 4096).unwrap(), 8).unwrap();
        assert_eq!(p.region_len, 512);
        assert_eq!(p.region_bounds[0], (-60.0, -45.0));
        for q in 0..7 {
            assert_eq!(p.region_bounds[q].1, p.region_bounds[q + 1].0);
        }
        assert_eq!(p.region_bounds[7].1, 60.0);
    }

    #[test]
    fn single_region_is_whole_grid() {
        let g = make_grid(-60.0, 60.0, 64).unwrap();
        let p = partition_grid(g, 1).unwrap();
        assert_eq!(p.region_range(0), 0..64);
        assert_eq!(p.region_bounds[0], (-60.0, 60.0));
    }

    #[test]
    fn small_partition_indices() {
        let p = partition_grid(make_grid(0.0, 8.0, 8).unwrap(), 4).unwrap();
        let ranges: Vec<_> = (0..4).map(|q| p.region_range(q).collect::<Vec<_>>()).collect();
        assert_eq!(ranges, vec![vec![0, 1], vec![2, 3], vec![4, 5], vec![6, 7]]);
        assert!(partition_grid(make_grid(0.0, 8.0, 8).unwrap(), 3).is_err());
    }

    proptest! {
        #[test]
        fn index_angle_roundtrip(n in 1usize..5000, start in -80.0f64..0.0, width in 1.0f64..80.0) {
            let g = make_grid(start, start + width, n).unwrap();
            for i in [0, n / 3, n / 2, n - 1] {
                prop_assert_eq!(g.nearest_index(g.angle(i)), i);
            }
        }

        #[test]
        fn regions_cover_grid(q in 1usize..16, l in 1usize..64) {
            let g = make_grid(-60.0, 60.0, q * l).unwrap();
            let p = partition_grid(g, q).unwrap();
            let all: Vec<usize> = (0..q).flat_map(|r| p.region_range(r)).collect();
            prop_assert_eq!(all, (0..q * l).collect::<Vec<_>>());
            for i in 0..q * l {
                prop_assert_eq!(p.region_of_angle(g.angle(i)), Some(p.region_of_index(i)));
            }
        }
    }
}
