use rand::Rng;

use super::ops::{self, BatchNormCache};
use super::{LayerSpec, Mode, Padding, Scalar, Tensor4};
use crate::error::{invalid, Result};
use crate::rng;

/// A layer together with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T> {
    Conv { kernel: usize, padding: Padding, in_channels: usize, weight: Vec<T>, bias: Vec<T> },
    BatchNorm { gamma: Vec<T>, beta: Vec<T>, running_mean: Vec<T>, running_var: Vec<T> },
    Relu,
    FullyConnected { fan_in: usize, weight: Vec<T>, bias: Vec<T> },
    Dropout { p: f64 },
    Softmax,
}

impl<T: Scalar> Layer<T> {
    pub fn spec(&self) -> LayerSpec {
        match self {
            Layer::Conv { kernel, padding, bias, .. } => {
                LayerSpec::Conv { kernel: *kernel, filters: bias.len(), padding: *padding }
            }
            Layer::BatchNorm { .. } => LayerSpec::BatchNorm,
            Layer::Relu => LayerSpec::Relu,
            Layer::FullyConnected { bias, .. } => LayerSpec::FullyConnected { units: bias.len() },
            Layer::Dropout { p } => LayerSpec::Dropout { p: *p },
            Layer::Softmax => LayerSpec::Softmax,
        }
    }

    /// Trainable tensors in checkpoint order.
    fn trainable(&self) -> Vec<&[T]> {
        match self {
            Layer::Conv { weight, bias, .. } | Layer::FullyConnected { weight, bias, .. } => {
                vec![weight, bias]
            }
            Layer::BatchNorm { gamma, beta, .. } => vec![gamma, beta],
            _ => Vec::new(),
        }
    }

    fn trainable_mut(&mut self) -> Vec<&mut [T]> {
        match self {
            Layer::Conv { weight, bias, .. } | Layer::FullyConnected { weight, bias, .. } => {
                vec![weight, bias]
            }
            Layer::BatchNorm { gamma, beta, .. } => vec![gamma, beta],
            _ => Vec::new(),
        }
    }

    fn cast<U: Scalar>(&self) -> Layer<U> {
        let c = |v: &Vec<T>| v.iter().map(|x| U::narrow(x.widen())).collect::<Vec<U>>();
        match self {
            Layer::Conv { kernel, padding, in_channels, weight, bias } => Layer::Conv {
                kernel: *kernel,
                padding: *padding,
                in_channels: *in_channels,
                weight: c(weight),
                bias: c(bias),
            },
            Layer::BatchNorm { gamma, beta, running_mean, running_var } => Layer::BatchNorm {
                gamma: c(gamma),
                beta: c(beta),
                running_mean: c(running_mean),
                running_var: c(running_var),
            },
            Layer::Relu => Layer::Relu,
            Layer::FullyConnected { fan_in, weight, bias } => {
                Layer::FullyConnected { fan_in: *fan_in, weight: c(weight), bias: c(bias) }
            }
            Layer::Dropout { p } => Layer::Dropout { p: *p },
            Layer::Softmax => Layer::Softmax,
        }
    }
}

/// Per-sample output shape `(h, w, c)` of a layer, or an error if it cannot accept `shape`.
fn output_shape(spec: &LayerSpec, shape: [usize; 3]) -> Result<[usize; 3]> {
    spec.validate()?;
    let [h, w, c] = shape;
    Ok(match *spec {
        LayerSpec::Conv { kernel, filters, padding } => {
            let g = ops::ConvGeometry::new([1, h, w, c], kernel, filters, padding)?;
            [g.out_h, g.out_w, filters]
        }
        LayerSpec::FullyConnected { units } => [1, 1, units],
        _ => shape,
    })
}

/// Stored values (trainable and running statistics) of a chain, without allocating it.
pub(crate) fn stored_len(input_shape: [usize; 3], specs: &[LayerSpec]) -> Result<usize> {
    let mut shape = input_shape;
    let mut total = 0usize;
    for spec in specs {
        let next = output_shape(spec, shape)?;
        let n = match *spec {
            LayerSpec::Conv { kernel, filters, .. } => kernel
                .checked_mul(kernel)
                .and_then(|v| v.checked_mul(shape[2]))
                .and_then(|v| v.checked_mul(filters))
                .and_then(|v| v.checked_add(filters)),
            LayerSpec::BatchNorm => shape[2].checked_mul(4),
            LayerSpec::FullyConnected { units } => shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .and_then(|v| v.checked_mul(units))
                .and_then(|v| v.checked_add(units)),
            _ => Some(0),
        };
        total = n.and_then(|n| total.checked_add(n)).ok_or_else(|| crate::Error::InvalidArgument("network too large".into()))?;
        shape = next;
    }
    Ok(total)
}

/// Everything a backward pass needs from the matching forward pass.
#[derive(Debug, Clone)]
pub struct Trace<T> {
    /// Input of each layer.
    pub inputs: Vec<Tensor4<T>>,
    pub output: Tensor4<T>,
    bn: Vec<Option<BatchNormCache>>,
    masks: Vec<Option<Vec<f64>>>,
}

/// Parameter gradients in [`Network::params`] order, plus the input gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub params: Vec<Vec<f64>>,
    pub input: Vec<f64>,
}

/// A feed-forward chain over a fixed per-sample input shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    pub input_shape: [usize; 3],
    pub layers: Vec<Layer<T>>,
}

impl<T: Scalar> Network<T> {
    /// Builds the chain with fan-in scaled uniform weights, zero biases and
    /// identity normalization. Layer `i` draws from stream `i` of `seed`.
    pub fn new(input_shape: [usize; 3], specs: &[LayerSpec], seed: u64) -> Result<Self> {
        let mut shape = input_shape;
        let mut layers = Vec::with_capacity(specs.len());
        for (i, spec) in specs.iter().enumerate() {
            let next = output_shape(spec, shape)?;
            let mut rng = rng::stream(seed, i as u64);
            let mut uniform = |n: usize, fan_in: usize| -> Vec<T> {
                let bound = 1.0 / (fan_in as f64).sqrt();
                (0..n).map(|_| T::narrow(rng.random_range(-bound..bound))).collect()
            };
            let layer = match *spec {
                LayerSpec::Conv { kernel, filters, padding } => {
                    let fan_in = kernel * kernel * shape[2];
                    Layer::Conv {
                        kernel,
                        padding,
                        in_channels: shape[2],
                        weight: uniform(fan_in * filters, fan_in),
                        bias: vec![T::zero(); filters],
                    }
                }
                LayerSpec::BatchNorm => Layer::BatchNorm {
                    gamma: vec![T::one(); shape[2]],
                    beta: vec![T::zero(); shape[2]],
                    running_mean: vec![T::zero(); shape[2]],
                    running_var: vec![T::one(); shape[2]],
                },
                LayerSpec::Relu => Layer::Relu,
                LayerSpec::FullyConnected { units } => {
                    let fan_in = shape.iter().product();
                    Layer::FullyConnected { fan_in, weight: uniform(fan_in * units, fan_in), bias: vec![T::zero(); units] }
                }
                LayerSpec::Dropout { p } => Layer::Dropout { p },
                LayerSpec::Softmax => Layer::Softmax,
            };
            layers.push(layer);
            shape = next;
        }
        Ok(Self { input_shape, layers })
    }

    /// Checks that stored parameter sizes agree with the layer chain.
    pub fn validate(&self) -> Result<()> {
        let mut shape = self.input_shape;
        for (i, layer) in self.layers.iter().enumerate() {
            let spec = layer.spec();
            let next = output_shape(&spec, shape)?;
            let ok = match layer {
                Layer::Conv { kernel, in_channels, weight, bias, .. } => {
                    *in_channels == shape[2] && weight.len() == kernel * kernel * shape[2] * bias.len()
                }
                Layer::BatchNorm { gamma, beta, running_mean, running_var } => {
                    let c = shape[2];
                    gamma.len() == c
                        && beta.len() == c
                        && running_mean.len() == c
                        && running_var.len() == c
                        && running_var.iter().all(|v| v.widen() > 0.0)
                }
                Layer::FullyConnected { fan_in, weight, bias } => {
                    *fan_in == shape.iter().product::<usize>() && weight.len() == fan_in * bias.len()
                }
                _ => true,
            };
            if !ok {
                return invalid(format!("layer {i} ({spec:?}) has inconsistent parameters"));
            }
            shape = next;
        }
        Ok(())
    }

    pub fn output_shape(&self) -> Result<[usize; 3]> {
        let mut shape = self.input_shape;
        for layer in &self.layers {
            shape = output_shape(&layer.spec(), shape)?;
        }
        Ok(shape)
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(Layer::spec).collect()
    }

    /// Trainable tensors: conv and fc weight then bias, normalization scale then shift.
    pub fn params(&self) -> Vec<&[T]> {
        self.layers.iter().flat_map(Layer::trainable).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut [T]> {
        self.layers.iter_mut().flat_map(Layer::trainable_mut).collect()
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network { input_shape: self.input_shape, layers: self.layers.iter().map(Layer::cast).collect() }
    }

    pub fn forward(&self, input: &Tensor4<T>, mode: Mode) -> Result<Trace<T>> {
        let [_, h, w, c] = input.shape;
        if [h, w, c] != self.input_shape {
            return invalid(format!("input {:?} does not match network input {:?}", [h, w, c], self.input_shape));
        }
        let train = matches!(mode, Mode::Train { .. });
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut bn = Vec::with_capacity(self.layers.len());
        let mut masks = Vec::with_capacity(self.layers.len());
        let mut x = input.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut cache = None;
            let mut mask = None;
            let y = match layer {
                Layer::Conv { kernel, padding, weight, bias, .. } => {
                    ops::conv2d_forward(&x, weight, bias, *kernel, *padding)?
                }
                Layer::BatchNorm { gamma, beta, running_mean, running_var } => {
                    let (y, c) = ops::batchnorm_forward(&x, gamma, beta, running_mean, running_var, train)?;
                    cache = c;
                    y
                }
                Layer::Relu => ops::relu(&x),
                Layer::FullyConnected { weight, bias, .. } => ops::fc_forward(&x, weight, bias)?,
                Layer::Dropout { p } => {
                    let (y, m) = ops::dropout(&x, *p, mode, i as u64);
                    mask = m;
                    y
                }
                Layer::Softmax => ops::softmax_forward(&x),
            };
            inputs.push(std::mem::replace(&mut x, y));
            bn.push(cache);
            masks.push(mask);
        }
        Ok(Trace { inputs, output: x, bn, masks })
    }

    /// Inference-mode output.
    pub fn predict(&self, input: &Tensor4<T>) -> Result<Tensor4<T>> {
        Ok(self.forward(input, Mode::Infer)?.output)
    }

    /// Reverse pass from the gradient of the loss with respect to the output.
    pub fn backward(&self, trace: &Trace<T>, grad_output: &Tensor4<T>) -> Result<Gradients> {
        if grad_output.shape != trace.output.shape || trace.inputs.len() != self.layers.len() {
            return invalid("output gradient does not match the forward trace");
        }
        let mut per_layer: Vec<Vec<Vec<f64>>> = vec![Vec::new(); self.layers.len()];
        let mut g = grad_output.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let x = &trace.inputs[i];
            g = match layer {
                Layer::Conv { kernel, padding, weight, .. } => {
                    let (dx, dw, db) = ops::conv2d_backward(x, weight, &g, *kernel, *padding)?;
                    per_layer[i] = vec![dw, db];
                    dx
                }
                Layer::BatchNorm { gamma, .. } => {
                    let Some(cache) = &trace.bn[i] else {
                        return invalid("backward through normalization needs a training-mode trace");
                    };
                    let (dx, dg, db) = ops::batchnorm_backward(cache, gamma, &g)?;
                    per_layer[i] = vec![dg, db];
                    dx
                }
                Layer::Relu => ops::relu_backward(x, &g),
                Layer::FullyConnected { weight, .. } => {
                    let (dx, dw, db) = ops::fc_backward(x, weight, &g)?;
                    per_layer[i] = vec![dw, db];
                    dx
                }
                Layer::Dropout { .. } => ops::dropout_backward(trace.masks[i].as_deref(), &g),
                Layer::Softmax => {
                    let y = trace.inputs.get(i + 1).unwrap_or(&trace.output);
                    ops::softmax_backward(y, &g)
                }
            };
        }
        Ok(Gradients {
            params: per_layer.into_iter().flatten().collect(),
            input: g.data.iter().map(|v| v.widen()).collect(),
        })
    }

    /// Mean batch MSE against `targets` (one row per sample) and its gradients.
    pub fn loss_and_gradients(&self, input: &Tensor4<T>, targets: &[T], mode: Mode) -> Result<(f64, Gradients, Trace<T>)> {
        let trace = self.forward(input, mode)?;
        let (loss, grad) = ops::mse_batch(&trace.output, targets)?;
        let grads = self.backward(&trace, &grad)?;
        Ok((loss, grads, trace))
    }

    /// Mean batch MSE in the given mode.
    pub fn loss(&self, input: &Tensor4<T>, targets: &[T], mode: Mode) -> Result<f64> {
        let out = self.forward(input, mode)?.output;
        Ok(ops::mse_batch(&out, targets)?.0)
    }

    /// Folds the batch statistics of a training-mode trace into the running statistics.
    pub fn update_running_stats(&mut self, trace: &Trace<T>) {
        for (layer, cache) in self.layers.iter_mut().zip(&trace.bn) {
            if let (Layer::BatchNorm { running_mean, running_var, .. }, Some(c)) = (layer, cache) {
                ops::update_running(running_mean, &c.batch_mean);
                ops::update_running(running_var, &c.batch_var);
            }
        }
    }
}
