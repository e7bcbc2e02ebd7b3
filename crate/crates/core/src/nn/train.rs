use std::sync::Arc;

use rand::seq::SliceRandom;

use super::optim::{lr_at_epoch, sgd_momentum_step, EarlyStopping, StopDecision};
use super::{Mode, Network, Scalar, Tensor4};
use crate::error::{invalid, Error, Result};
use crate::rng;

/// Inputs (NHWC) with one target row per sample. Inputs are shared so the
/// region networks can train on one copy.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSet<T> {
    pub inputs: Arc<Tensor4<T>>,
    pub targets: Vec<T>,
}

impl<T: Scalar> TrainSet<T> {
    pub fn new(inputs: impl Into<Arc<Tensor4<T>>>, targets: Vec<T>) -> Result<Self> {
        let inputs = inputs.into();
        let n = inputs.batch();
        if n == 0 || targets.len() % n != 0 {
            return invalid(format!("{} targets cannot be split over {n} samples", targets.len()));
        }
        Ok(Self { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.inputs.batch()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn target_len(&self) -> usize {
        self.targets.len() / self.len()
    }

    /// Batch of the given sample indices, in that order.
    pub fn gather(&self, idx: &[usize]) -> (Tensor4<T>, Vec<T>) {
        let s = self.inputs.sample_len();
        let l = self.target_len();
        let mut x = Vec::with_capacity(idx.len() * s);
        let mut t = Vec::with_capacity(idx.len() * l);
        for &i in idx {
            x.extend_from_slice(self.inputs.sample(i));
            t.extend_from_slice(&self.targets[i * l..(i + 1) * l]);
        }
        let [_, h, w, c] = self.inputs.shape;
        (Tensor4 { shape: [idx.len(), h, w, c], data: x }, t)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub lr_drop_factor: f64,
    pub lr_drop_period: usize,
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            momentum: 0.9,
            batch_size: 128,
            lr_drop_factor: 0.5,
            lr_drop_period: 10,
            patience: 3,
            max_epochs: 100,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return invalid(format!("learning rate {} must be finite and non-negative", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return invalid(format!("momentum {} outside [0, 1)", self.momentum));
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.lr_drop_period == 0 || self.patience == 0 {
            return invalid("batch size, epochs, drop period and patience must be positive");
        }
        if !(self.lr_drop_factor > 0.0 && self.lr_drop_factor <= 1.0) {
            return invalid(format!("learning-rate drop factor {} outside (0, 1]", self.lr_drop_factor));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: u32,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
}

impl TrainLog {
    /// Epoch with the lowest validation loss (first on ties).
    pub fn best(&self) -> Option<&EpochRecord> {
        self.records.iter().fold(None, |best: Option<&EpochRecord>, r| match best {
            Some(b) if b.val_loss <= r.val_loss => Some(b),
            _ => Some(r),
        })
    }
}

/// Mini-batch index lists for one epoch. A trailing batch of one sample is
/// merged into the previous batch since batch statistics need two samples.
fn batches(order: &[usize], size: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = Vec::new();
    let mut start = 0;
    while start < order.len() {
        let mut end = (start + size).min(order.len());
        if order.len() - end == 1 {
            end = order.len();
        }
        out.push(&order[start..end]);
        start = end;
    }
    out
}

/// Mean inference-mode loss over a set, evaluated in chunks.
pub fn evaluate<T: Scalar>(net: &Network<T>, set: &TrainSet<T>, chunk: usize) -> Result<f64> {
    let order: Vec<usize> = (0..set.len()).collect();
    let mut total = 0.0;
    for idx in order.chunks(chunk.max(1)) {
        let (x, t) = set.gather(idx);
        total += net.loss(&x, &t, Mode::Infer)? * idx.len() as f64;
    }
    Ok(total / set.len() as f64)
}

/// Mini-batch momentum SGD with step decay and early stopping on
/// validation loss. Leaves `net` at its best-validation parameters.
pub fn train_network<T: Scalar>(
    net: &mut Network<T>,
    train: &TrainSet<T>,
    val: &TrainSet<T>,
    cfg: &TrainConfig,
) -> Result<TrainLog> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return invalid("training and validation sets must be nonempty");
    }
    let mut velocity: Vec<Vec<f64>> = net.params().iter().map(|p| vec![0.0; p.len()]).collect();
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best = net.clone();
    let mut log = TrainLog::default();
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=cfg.max_epochs {
        let lr = lr_at_epoch(cfg.learning_rate, cfg.lr_drop_factor, cfg.lr_drop_period, epoch);
        order.sort_unstable();
        order.shuffle(&mut rng::stream(cfg.seed, rng::stream_id(&[1, epoch as u64])));
        let mut train_total = 0.0;
        for (b, idx) in batches(&order, cfg.batch_size).into_iter().enumerate() {
            let (x, t) = train.gather(idx);
            let mode = Mode::Train { dropout_seed: rng::stream_id(&[cfg.seed, epoch as u64, b as u64]) };
            let (loss, grads, trace) = net.loss_and_gradients(&x, &t, mode)?;
            if !loss.is_finite() {
                return Err(Error::Numerical(format!("training loss diverged in epoch {epoch}")));
            }
            train_total += loss * idx.len() as f64;
            net.update_running_stats(&trace);
            for ((p, g), v) in net.params_mut().into_iter().zip(&grads.params).zip(&mut velocity) {
                sgd_momentum_step(p, g, v, lr, cfg.momentum);
            }
        }
        let val_loss = evaluate(net, val, cfg.batch_size)?;
        log.records.push(EpochRecord {
            epoch: epoch as u32,
            train_loss: train_total / train.len() as f64,
            val_loss,
            lr,
        });
        let decision = stopper.observe(epoch, val_loss);
        if stopper.is_best(epoch) {
            best = net.clone();
        }
        if decision == StopDecision::Stop {
            break;
        }
    }
    *net = best;
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{LayerSpec, Padding};

    #[test]
    fn batching_keeps_partial_and_merges_singletons() {
        let order: Vec<usize> = (0..10).collect();
        let sizes: Vec<usize> = batches(&order, 4).iter().map(|b| b.len()).collect();
        assert_eq!(sizes, vec![4, 4, 2]);
        let order: Vec<usize> = (0..9).collect();
        let sizes: Vec<usize> = batches(&order, 4).iter().map(|b| b.len()).collect();
        assert_eq!(sizes, vec![4, 5]);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { momentum: 1.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { batch_size: 0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { lr_drop_factor: 0.0, ..Default::default() }.validate().is_err());
    }

    fn tiny() -> (Network<f32>, TrainSet<f32>) {
        let specs = [
            LayerSpec::Conv { kernel: 3, filters: 2, padding: Padding::Same },
            LayerSpec::BatchNorm,
            LayerSpec::Relu,
            LayerSpec::FullyConnected { units: 3 },
            LayerSpec::Softmax,
        ];
        let net = Network::new([3, 3, 1], &specs, 5).unwrap();
        let x: Vec<f32> = (0..36).map(|i| ((i * 7) % 5) as f32 - 2.0).collect();
        let t: Vec<f32> = (0..4).flat_map(|i| {
            let mut r = vec![0.0; 3];
            r[i % 3] = 1.0;
            r
        }).collect();
        (net, TrainSet::new(Tensor4::new([4, 3, 3, 1], x).unwrap(), t).unwrap())
    }

    #[test]
    fn zero_learning_rate_keeps_params() {
        let (mut net, set) = tiny();
        let before: Vec<Vec<f32>> = net.params().iter().map(|p| p.to_vec()).collect();
        let cfg = TrainConfig { learning_rate: 0.0, batch_size: 2, max_epochs: 3, ..Default::default() };
        train_network(&mut net, &set, &set, &cfg).unwrap();
        let after: Vec<Vec<f32>> = net.params().iter().map(|p| p.to_vec()).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn training_is_deterministic() {
        let cfg = TrainConfig { learning_rate: 0.1, batch_size: 2, max_epochs: 5, seed: 3, ..Default::default() };
        let (mut a, set) = tiny();
        let (mut b, _) = tiny();
        let la = train_network(&mut a, &set, &set, &cfg).unwrap();
        let lb = train_network(&mut b, &set, &set, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(la, lb);
        assert_eq!(la.records[0].lr, 0.1);
    }

    #[test]
    fn empty_split_rejected() {
        let (mut net, set) = tiny();
        let empty = TrainSet { inputs: Arc::new(Tensor4::zeros([0, 3, 3, 1])), targets: Vec::new() };
        assert!(train_network(&mut net, &set, &empty, &TrainConfig::default()).is_err());
    }
}
