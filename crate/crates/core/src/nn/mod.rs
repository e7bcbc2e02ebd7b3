//! A small CPU engine for the region networks: NHWC tensors, the layer
//! kinds the architecture needs, reverse-mode gradients, momentum SGD with a
//! step learning-rate schedule, early stopping, and the `DMNN` checkpoint.
//!
//! Activations and parameters are stored as `T` (binary32 in production,
//! binary64 for gradient checking); every reduction accumulates in `f64`.

mod arch;
mod checkpoint;
mod network;
pub mod ops;
mod optim;
mod train;

pub use arch::{build_deepmusic_network, ArchConfig};
pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint, InputStats,
    CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use network::{Gradients, Layer, Network, Trace};
pub use optim::{lr_at_epoch, sgd_momentum_step, EarlyStopping, StopDecision};
pub use train::{evaluate, train_network, EpochRecord, TrainConfig, TrainLog, TrainSet};

use std::fmt::Debug;

use num_traits::Float;

use crate::error::{invalid, Result};

/// Storage type for activations and parameters.
pub trait Scalar: Float + Debug + Default + Send + Sync + 'static {
    fn narrow(v: f64) -> Self;
    fn widen(self) -> f64;
}

impl Scalar for f32 {
    #[inline(always)]
    fn narrow(v: f64) -> Self {
        v as f32
    }
    #[inline(always)]
    fn widen(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    #[inline(always)]
    fn narrow(v: f64) -> Self {
        v
    }
    #[inline(always)]
    fn widen(self) -> f64 {
        self
    }
}

/// Row-major `(batch, height, width, channels)` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4<T> {
    pub shape: [usize; 4],
    pub data: Vec<T>,
}

impl<T: Scalar> Tensor4<T> {
    pub fn new(shape: [usize; 4], data: Vec<T>) -> Result<Self> {
        if shape.iter().product::<usize>() != data.len() {
            return invalid(format!("tensor shape {shape:?} does not match {} values", data.len()));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: [usize; 4]) -> Self {
        Self { shape, data: vec![T::zero(); shape.iter().product()] }
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    /// Values per sample.
    pub fn sample_len(&self) -> usize {
        self.shape[1] * self.shape[2] * self.shape[3]
    }

    pub fn sample(&self, b: usize) -> &[T] {
        let n = self.sample_len();
        &self.data[b * n..(b + 1) * n]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { shape: self.shape, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn cast<U: Scalar>(&self) -> Tensor4<U> {
        Tensor4 { shape: self.shape, data: self.data.iter().map(|v| U::narrow(v.widen())).collect() }
    }
}

/// Spatial padding of a convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// No padding; output side `h − k + 1`.
    Valid,
    /// Zero padding of `(k − 1)/2`; output side equals input side.
    Same,
}

impl Padding {
    pub fn amount(self, kernel: usize) -> usize {
        match self {
            Padding::Valid => 0,
            Padding::Same => (kernel - 1) / 2,
        }
    }
}

/// Forward-pass mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics in normalization layers, dropout masks drawn from the seed.
    Train { dropout_seed: u64 },
    /// Running statistics, dropout disabled.
    Infer,
}

/// One layer of a network description.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    Conv { kernel: usize, filters: usize, padding: Padding },
    BatchNorm,
    Relu,
    /// Flattens its input and applies `y = Wᵀx + b`.
    FullyConnected { units: usize },
    Dropout { p: f64 },
    Softmax,
}

impl LayerSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            LayerSpec::Conv { kernel, filters, .. } => {
                if kernel == 0 || kernel % 2 == 0 {
                    return invalid(format!("convolution kernel {kernel} must be odd and ≥ 1"));
                }
                if filters == 0 {
                    return invalid("convolution needs at least one filter");
                }
            }
            LayerSpec::FullyConnected { units } if units == 0 => {
                return invalid("fully connected layer needs at least one unit");
            }
            LayerSpec::Dropout { p } if !(0.0..1.0).contains(&p) => {
                return invalid(format!("dropout probability {p} outside [0, 1)"));
            }
            _ => {}
        }
        Ok(())
    }
}
