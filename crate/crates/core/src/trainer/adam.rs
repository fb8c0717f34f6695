use crate::error::{Error, Result};

/// Adam state with a step-decay schedule: the rate is multiplied by `decay` every
/// `decay_every` epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimState {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub base_lr: f64,
    pub lr: f64,
    pub decay: f64,
    pub decay_every: usize,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl OptimState {
    pub fn new(n_params: usize, base_lr: f64) -> Result<Self> {
        if !(base_lr > 0.0 && base_lr.is_finite()) {
            return Err(Error::invalid(format!(
                "learning rate must be positive, got {base_lr}"
            )));
        }
        Ok(OptimState {
            step: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            base_lr,
            lr: base_lr,
            decay: 0.8,
            decay_every: 3,
            batch_size: 32,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        })
    }

    pub fn lr_for_epoch(&self, epoch: usize) -> f64 {
        self.base_lr * self.decay.powi((epoch / self.decay_every.max(1)) as i32)
    }

    pub fn set_epoch(&mut self, epoch: usize) {
        self.lr = self.lr_for_epoch(epoch);
    }

    /// One bias-corrected Adam update of `params` in place.
    pub fn update(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(Error::invalid("parameter and moment shapes differ"));
        }
        self.step += 1;
        let c1 = 1.0 - self.beta1.powf(self.step as f64);
        let c2 = 1.0 - self.beta2.powf(self.step as f64);
        let step = self.lr / c1;
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            params[i] -= step * self.m[i] / ((self.v[i] / c2).sqrt() + self.eps);
        }
        Ok(())
    }
}
