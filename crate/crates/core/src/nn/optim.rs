use super::Scalar;

/// Classical momentum: `v ← m·v − lr·g`, `p ← p + v`.
pub fn sgd_momentum_step<T: Scalar>(params: &mut [T], grads: &[f64], velocity: &mut [f64], lr: f64, momentum: f64) {
    for ((p, &g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        *v = momentum * *v - lr * g;
        *p = T::narrow(p.widen() + *v);
    }
}

/// Step schedule: `lr0 · factor^⌊(epoch − 1)/period⌋` for 1-based `epoch`.
pub fn lr_at_epoch(lr0: f64, factor: f64, period: usize, epoch: usize) -> f64 {
    let drops = epoch.saturating_sub(1) / period.max(1);
    lr0 * factor.powi(drops as i32)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Continue,
    Stop,
}

/// Stops once validation loss has failed to improve by `min_delta` for
/// `patience` consecutive epochs.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    pub patience: usize,
    pub min_delta: f64,
    best: f64,
    best_epoch: usize,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self { patience, min_delta: 1e-6, best: f64::INFINITY, best_epoch: 0, stale: 0 }
    }

    /// Records epoch `epoch` (1-based) and reports whether training should stop.
    pub fn observe(&mut self, epoch: usize, val_loss: f64) -> StopDecision {
        if val_loss < self.best - self.min_delta {
            self.best = val_loss;
            self.best_epoch = epoch;
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        if self.stale >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        }
    }

    pub fn is_best(&self, epoch: usize) -> bool {
        self.best_epoch == epoch
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_loss(&self) -> f64 {
        self.best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plain_gradient_step() {
        let mut p = [1.0f64, -2.0];
        let mut v = [0.0; 2];
        sgd_momentum_step(&mut p, &[0.5, -1.0], &mut v, 1.0, 0.0);
        assert_eq!(p, [0.5, -1.0]);
    }

    #[test]
    fn velocity_keeps_moving() {
        let mut p = [0.0f64];
        let mut v = [1.0];
        sgd_momentum_step(&mut p, &[0.0], &mut v, 0.1, 0.9);
        assert!((p[0] - 0.9).abs() < 1e-15);
        sgd_momentum_step(&mut p, &[0.0], &mut v, 0.1, 0.9);
        assert!((p[0] - 1.71).abs() < 1e-12);
    }

    #[test]
    fn two_constant_steps_closed_form() {
        let (lr, m, g) = (0.05, 0.9, 3.0);
        let mut p = [2.0f64];
        let mut v = [0.0];
        sgd_momentum_step(&mut p, &[g], &mut v, lr, m);
        sgd_momentum_step(&mut p, &[g], &mut v, lr, m);
        assert!((p[0] - (2.0 - lr * g * (2.0 + m))).abs() < 1e-12);
    }

    #[test]
    fn schedule_halves_every_ten() {
        for e in 1..=10 {
            assert_eq!(lr_at_epoch(0.01, 0.5, 10, e), 0.01);
        }
        for e in 11..=20 {
            assert_eq!(lr_at_epoch(0.01, 0.5, 10, e), 0.005);
        }
        assert_eq!(lr_at_epoch(0.01, 0.5, 10, 21), 0.0025);
    }

    #[test]
    fn early_stopping_rule() {
        let mut es = EarlyStopping::new(3);
        let losses = [5.0, 4.0, 4.5, 4.4, 4.3];
        let mut stopped = None;
        for (i, &l) in losses.iter().enumerate() {
            if es.observe(i + 1, l) == StopDecision::Stop {
                stopped = Some(i + 1);
                break;
            }
        }
        assert_eq!(stopped, Some(5));
        assert_eq!(es.best_epoch(), 2);
        assert_eq!(es.best_loss(), 4.0);
    }

    #[test]
    fn tiny_improvement_is_not_progress() {
        let mut es = EarlyStopping::new(1);
        es.observe(1, 1.0);
        assert_eq!(es.observe(2, 1.0 - 1e-7), StopDecision::Stop);
    }
}
