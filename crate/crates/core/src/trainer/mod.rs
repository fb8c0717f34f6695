//! Field network training.
//!
//! The network regresses `t * F_t(x_t | x0)` on pairs drawn from the conditional
//! trajectory families; [`crate::field::LearnedField`] divides its output by `t`.

mod adam;
pub mod checkpoint;
mod net;

use rand::Rng;
use rand_distr::StandardNormal;

pub use adam::OptimState;
pub use checkpoint::Checkpoint;
pub use net::FieldNet;

use crate::error::{Error, Result};
use crate::rng::stream;
use crate::sampler::{sample_training_pair, PriorSpec, TrainingPair};
use crate::trajectory::TrajectorySpec;
use net::Workspace;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub hidden: Vec<usize>,
    pub seed: u64,
    /// Fraction of the dataset held out for checkpoint selection.
    pub validation_fraction: f64,
    pub eval_every: usize,
    /// Pairs drawn per validation point (fixed for the whole run).
    pub validation_draws: usize,
    /// Standard deviation of Gaussian noise added to each drawn data point.
    pub jitter: f64,
    /// Training pairs per epoch; `None` means the larger of the training split and
    /// [`MIN_EPOCH_PAIRS`].
    pub epoch_pairs: Option<usize>,
}

/// Smallest default epoch. Every step draws fresh pairs, so on tiny datasets an epoch
/// tied to the dataset size would decay the rate within a few steps.
pub const MIN_EPOCH_PAIRS: usize = 10_000;

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 2000,
            batch_size: 32,
            learning_rate: 1e-4,
            hidden: vec![128, 128, 128],
            seed: 0,
            validation_fraction: 0.1,
            eval_every: 1000,
            validation_draws: 4,
            jitter: 0.0,
            epoch_pairs: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.batch_size == 0 || self.eval_every == 0 {
            return Err(Error::invalid(
                "steps, batch_size and eval_every must be positive",
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::invalid("validation_fraction must lie in [0, 1)"));
        }
        if !(self.jitter >= 0.0 && self.jitter.is_finite()) {
            return Err(Error::invalid("jitter must be non-negative"));
        }
        if self.epoch_pairs == Some(0) {
            return Err(Error::invalid("epoch_pairs must be positive"));
        }
        if self.hidden.contains(&0) {
            return Err(Error::invalid("hidden widths must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    /// Mini-batch loss at every step.
    pub loss: Vec<f64>,
    /// Learning rate in effect at the start of each epoch.
    pub epoch_lr: Vec<f64>,
    /// `(step, validation loss)` at every evaluation.
    pub validation: Vec<(usize, f64)>,
    pub best_step: usize,
    pub steps_per_epoch: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub net: FieldNet,
    pub log: TrainLog,
    pub optimizer: OptimState,
}

impl TrainOutcome {
    pub fn checkpoint(&self, spec: &TrajectorySpec, prior: &PriorSpec) -> Checkpoint {
        Checkpoint {
            net: self.net.clone(),
            spec: spec.clone(),
            prior: *prior,
            optimizer: Some(self.optimizer.clone()),
        }
    }
}

/// Mean over the batch of `|net(x_t, t) - t * target|^2` and its exact gradient.
pub fn loss_and_grad(net: &FieldNet, batch: &[TrainingPair]) -> Result<(f64, Vec<f64>)> {
    let mut grad = vec![0.0; net.param_count()];
    let loss = loss_and_grad_into(net, batch, &mut grad, &mut Workspace::default())?;
    Ok((loss, grad))
}

fn loss_and_grad_into(
    net: &FieldNet,
    batch: &[TrainingPair],
    grad: &mut [f64],
    ws: &mut Workspace,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let d = net.output_dim();
    let scale = 1.0 / batch.len() as f64;
    grad.iter_mut().for_each(|g| *g = 0.0);
    let mut target = vec![0.0; d];
    let mut total = 0.0;
    for pair in batch {
        if pair.x_t.len() + 2 != net.input_dim() || pair.target.len() != d {
            return Err(Error::invalid(
                "training pair does not match the network shape",
            ));
        }
        if !(pair.t > 0.0) || pair.target.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(
                "training pair has a non-finite target or t <= 0",
            ));
        }
        for (o, v) in target.iter_mut().zip(&pair.target) {
            *o = pair.t * v;
        }
        total += net.accumulate_grad(&pair.x_t, pair.t, &target, scale, grad, ws);
    }
    Ok(total * scale)
}

/// Mean loss without gradients.
pub fn loss(net: &FieldNet, batch: &[TrainingPair]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let mut out = vec![0.0; net.output_dim()];
    let mut total = 0.0;
    for pair in batch {
        net.forward_into(&pair.x_t, pair.t, &mut out)?;
        total += out
            .iter()
            .zip(&pair.target)
            .map(|(o, v)| (o - pair.t * v).powi(2))
            .sum::<f64>();
    }
    Ok(total / batch.len() as f64)
}

fn draw_pair<R: Rng + ?Sized>(
    x0: &[f64],
    spec: &TrajectorySpec,
    prior: &PriorSpec,
    jitter: f64,
    rng: &mut R,
) -> Result<TrainingPair> {
    if jitter > 0.0 {
        let noisy: Vec<f64> = x0
            .iter()
            .map(|v| v + jitter * rng.sample::<f64, _>(StandardNormal))
            .collect();
        sample_training_pair(&noisy, prior, spec, rng)
    } else {
        sample_training_pair(x0, prior, spec, rng)
    }
}

/// Splits `n` indices into (train, validation) with a seeded shuffle.
fn split_indices(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = stream(seed, "split", 0);
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        idx.swap(i, j);
    }
    let n_val = ((n as f64) * fraction).floor() as usize;
    // a one-point dataset still needs something to train on
    let n_val = n_val.min(n - 1);
    let val = idx.split_off(n - n_val);
    (idx, val)
}

/// Trains a fresh network and returns the checkpoint with the lowest validation loss.
///
/// Without a validation split the final network is returned.
pub fn train(
    dataset: &[Vec<f64>],
    spec: &TrajectorySpec,
    prior: &PriorSpec,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    spec.validate()?;
    prior.validate()?;
    if dataset.is_empty() {
        return Err(Error::invalid("empty dataset"));
    }
    for p in dataset {
        crate::error::check_dim("data point", p.len(), spec.dim)?;
    }
    let widths = FieldNet::widths_for(spec.dim, &config.hidden);
    let mut net = FieldNet::init(&widths, &mut stream(config.seed, "init", 0))?;
    let mut opt = OptimState::new(net.param_count(), config.learning_rate)?;
    opt.batch_size = config.batch_size;

    let (train_idx, val_idx) =
        split_indices(dataset.len(), config.validation_fraction, config.seed);
    let mut val_rng = stream(config.seed, "validation", 0);
    let mut val_batch = Vec::with_capacity(val_idx.len() * config.validation_draws);
    for &i in &val_idx {
        for _ in 0..config.validation_draws {
            val_batch.push(sample_training_pair(
                &dataset[i],
                prior,
                spec,
                &mut val_rng,
            )?);
        }
    }

    let epoch_pairs = config
        .epoch_pairs
        .unwrap_or_else(|| train_idx.len().max(MIN_EPOCH_PAIRS));
    let steps_per_epoch = epoch_pairs.div_ceil(config.batch_size);
    let mut log = TrainLog {
        steps_per_epoch,
        ..TrainLog::default()
    };
    let mut rng = stream(config.seed, "train", 0);
    let mut grad = vec![0.0; net.param_count()];
    let mut ws = Workspace::default();
    let mut batch = Vec::with_capacity(config.batch_size);
    let mut best: Option<(f64, FieldNet, OptimState, usize)> = None;

    for step in 0..config.steps {
        if step % steps_per_epoch == 0 {
            opt.set_epoch(step / steps_per_epoch);
            log.epoch_lr.push(opt.lr);
        }
        batch.clear();
        for _ in 0..config.batch_size {
            let i = train_idx[rng.random_range(0..train_idx.len())];
            batch.push(draw_pair(
                &dataset[i],
                spec,
                prior,
                config.jitter,
                &mut rng,
            )?);
        }
        let l = loss_and_grad_into(&net, &batch, &mut grad, &mut ws)?;
        if !l.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Diverged {
                step,
                message: format!("loss became {l}"),
                checkpoint: Box::new(net),
            });
        }
        log.loss.push(l);
        opt.update(net.params_mut(), &grad)?;

        let done = step + 1;
        if !val_batch.is_empty() && (done % config.eval_every == 0 || done == config.steps) {
            let v = loss(&net, &val_batch)?;
            log.validation.push((done, v));
            if best.as_ref().is_none_or(|b| v < b.0) {
                best = Some((v, net.clone(), opt.clone(), done));
            }
        }
    }
    let (net, optimizer, best_step) = match best {
        Some((_, n, o, s)) => (n, o, s),
        None => (net, opt, config.steps),
    };
    log.best_step = best_step;
    Ok(TrainOutcome {
        net,
        log,
        optimizer,
    })
}
