use std::f64::consts::PI;

use num_complex::Complex64;

use crate::array::CovMatrix;
use crate::CMatrix;

/// M×M×3 network input built from a covariance: real part, imaginary part
/// and principal phase (radians) of every entry.
///
/// Stored channel-major, row-major within a channel:
/// `data[c·M² + i·M + j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct InputTensor<T = f64> {
    pub side: usize,
    pub data: Vec<T>,
}

pub const NUM_CHANNELS: usize = 3;

impl<T: Copy> InputTensor<T> {
    pub fn get(&self, channel: usize, i: usize, j: usize) -> T {
        self.data[channel * self.side * self.side + i * self.side + j]
    }

    pub fn channel(&self, channel: usize) -> &[T] {
        let n = self.side * self.side;
        &self.data[channel * n..(channel + 1) * n]
    }
}

impl InputTensor<f64> {
    pub fn to_f32(&self) -> InputTensor<f32> {
        InputTensor { side: self.side, data: self.data.iter().map(|&v| v as f32).collect() }
    }

    /// `channel1 + j·channel2`.
    pub fn reconstruct(&self) -> CMatrix {
        CMatrix::from_fn(self.side, self.side, |i, j| Complex64::new(self.get(0, i, j), self.get(1, i, j)))
    }
}

impl InputTensor<f32> {
    pub fn to_f64(&self) -> InputTensor<f64> {
        InputTensor { side: self.side, data: self.data.iter().map(|&v| v as f64).collect() }
    }
}

/// Splits `R` into the three real channels.
pub fn build_input_tensor(r: &CovMatrix) -> InputTensor<f64> {
    let m = r.size();
    let mut data = vec![0.0; NUM_CHANNELS * m * m];
    for i in 0..m {
        for j in 0..m {
            let z = r.data[(i, j)];
            data[i * m + j] = z.re;
            data[m * m + i * m + j] = z.im;
            data[2 * m * m + i * m + j] = phase(z);
        }
    }
    InputTensor { side: m, data }
}

/// Principal phase in (−π, π]; zero for an exact zero.
fn phase(z: Complex64) -> f64 {
    if z.re == 0.0 && z.im == 0.0 {
        return 0.0;
    }
    let a = z.im.atan2(z.re);
    if a == -PI {
        PI
    } else {
        a
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identity_channels() {
        let x = build_input_tensor(&CovMatrix::new(CMatrix::identity(3, 3)).unwrap());
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(x.get(0, i, j), if i == j { 1.0 } else { 0.0 });
                assert_eq!(x.get(1, i, j), 0.0);
                assert_eq!(x.get(2, i, j), 0.0);
            }
        }
    }

    #[test]
    fn imaginary_unit_entry() {
        let mut r = CMatrix::identity(2, 2);
        r[(0, 1)] = Complex64::new(0.0, 1.0);
        r[(1, 0)] = Complex64::new(0.0, -1.0);
        let x = build_input_tensor(&CovMatrix::new(r).unwrap());
        assert_eq!(x.get(0, 0, 1), 0.0);
        assert_eq!(x.get(1, 0, 1), 1.0);
        assert_eq!(x.get(2, 0, 1), PI / 2.0);
        assert_eq!(x.get(2, 1, 0), -PI / 2.0);
    }

    #[test]
    fn negative_real_axis_maps_to_plus_pi() {
        assert_eq!(phase(Complex64::new(-1.0, 0.0)), PI);
        assert_eq!(phase(Complex64::new(-1.0, -0.0)), PI);
    }

    fn hermitian(vals: &[(f64, f64)], m: usize) -> CovMatrix {
        let mut r = CMatrix::zeros(m, m);
        let mut it = vals.iter().cycle();
        for i in 0..m {
            r[(i, i)] = Complex64::new(it.next().unwrap().0.abs(), 0.0);
            for j in i + 1..m {
                let &(a, b) = it.next().unwrap();
                r[(i, j)] = Complex64::new(a, b);
                r[(j, i)] = Complex64::new(a, -b);
            }
        }
        CovMatrix::new(r).unwrap()
    }

    proptest! {
        #[test]
        fn tensor_invariants(vals in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..40), m in 1usize..7) {
            let r = hermitian(&vals, m);
            let x = build_input_tensor(&r);
            prop_assert_eq!(x.reconstruct(), r.data.clone());
            for i in 0..m {
                for j in 0..m {
                    prop_assert_eq!(x.get(0, i, j), x.get(0, j, i));
                    prop_assert_eq!(x.get(1, i, j), -x.get(1, j, i));
                    let a = x.get(2, i, j);
                    prop_assert!(a > -PI && a <= PI);
                }
            }
        }
    }
}
