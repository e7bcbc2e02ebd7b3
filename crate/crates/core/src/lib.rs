//! Direction-of-arrival estimation on uniform linear arrays.
//!
//! The crate covers the whole pipeline: snapshot simulation ([`array`]),
//! classical subspace baselines ([`subspace`]), the partitioned-spectrum
//! training corpus ([`datagen`]), a small CPU convolutional network engine
//! ([`nn`]), the multi-network spectrum estimator ([`estimator`]) and the
//! Monte-Carlo benchmark harness ([`bench`]).

pub mod array;
pub mod bench;
pub mod datagen;
pub mod error;
pub mod estimator;
pub mod grid;
pub(crate) mod io;
pub mod linalg;
pub mod nn;
pub mod rng;
pub mod subspace;

pub use error::{Error, Result};
pub use grid::{AngularGrid, Partition};

pub use num_complex::Complex64;

/// Dense complex matrix used for covariances, steering matrices and subspaces.
pub type CMatrix = nalgebra::DMatrix<Complex64>;
/// Dense complex column vector.
pub type CVector = nalgebra::DVector<Complex64>;
