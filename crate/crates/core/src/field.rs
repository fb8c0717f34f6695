//! Aggregate velocity fields.
//!
//! The exact field over a finite dataset is the posterior mean of the conditional
//! velocities, `F_t(x) = sum_i w_i F_t(x | x_i)` with `w_i ∝ d_t(x | x_i)`. It is the
//! ratio of the two components of the extended flux `(v1, v1 F)`, which is divergence
//! free in `(t, x)` space.

use crate::dist_sq;
use crate::error::{check_dim, Error, Result};
use crate::sampler::PriorSpec;
use crate::trainer::FieldNet;
use crate::trajectory::{conditional_velocity_unchecked, log_kernel_unchecked, TrajectorySpec};

/// Anything that can be integrated by [`crate::ode`].
pub trait VectorField: Send + Sync {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64], t: f64, out: &mut [f64]) -> Result<()>;

    /// Evaluates many states at a shared time. `xs` and `out` hold the states back to back.
    fn eval_batch(&self, xs: &[f64], t: f64, out: &mut [f64]) -> Result<()> {
        let d = self.dim();
        check_dim("batch output", out.len(), xs.len())?;
        if d == 0 || xs.len() % d != 0 {
            return Err(Error::invalid(format!(
                "batch of length {} is not a multiple of {d}",
                xs.len()
            )));
        }
        for (x, o) in xs.chunks_exact(d).zip(out.chunks_exact_mut(d)) {
            self.eval(x, t, o)?;
        }
        Ok(())
    }
}

/// Result of one oracle evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleEval {
    pub velocity: Vec<f64>,
    /// Every kernel underflowed and the weights fell back to uniform.
    pub fallback: bool,
}

#[derive(Debug, Clone)]
pub struct OracleField {
    spec: TrajectorySpec,
    prior: PriorSpec,
    points: Vec<f64>,
    n: usize,
}

// Relative slack on the time window; solvers land on the endpoints up to rounding.
const TIME_SLACK: f64 = 1e-12;

impl OracleField {
    pub fn new(dataset: &[Vec<f64>], spec: TrajectorySpec, prior: PriorSpec) -> Result<Self> {
        spec.validate()?;
        prior.validate()?;
        if dataset.is_empty() {
            return Err(Error::invalid("oracle field needs a non-empty dataset"));
        }
        let mut points = Vec::with_capacity(dataset.len() * spec.dim);
        for p in dataset {
            check_dim("dataset point", p.len(), spec.dim)?;
            points.extend_from_slice(p);
        }
        Ok(OracleField {
            n: dataset.len(),
            spec,
            prior,
            points,
        })
    }

    pub fn spec(&self) -> &TrajectorySpec {
        &self.spec
    }

    pub fn prior(&self) -> &PriorSpec {
        &self.prior
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn point(&self, i: usize) -> &[f64] {
        let d = self.spec.dim;
        &self.points[i * d..(i + 1) * d]
    }

    fn check_time(&self, t: f64) -> Result<()> {
        let lo = self.spec.t_min * (1.0 - TIME_SLACK);
        let hi = self.spec.horizon * (1.0 + TIME_SLACK);
        if t < lo && t >= 0.0 {
            return Err(Error::Singularity(format!(
                "oracle evaluated at t={t} below t_min={}",
                self.spec.t_min
            )));
        }
        if !(t >= lo && t <= hi) {
            return Err(Error::invalid(format!("t={t} outside [t_min, T]")));
        }
        Ok(())
    }

    fn log_weights(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        let d = self.spec.dim;
        let mut scratch = vec![0.0; d];
        (0..self.n)
            .map(|i| {
                log_kernel_unchecked(&self.spec, &self.prior, self.point(i), x, t, &mut scratch)
            })
            .collect()
    }

    /// Normalized posterior weights; the flag reports the uniform fallback.
    pub fn weights(&self, x: &[f64], t: f64) -> Result<(Vec<f64>, bool)> {
        check_dim("x_t", x.len(), self.spec.dim)?;
        self.check_time(t)?;
        let mut w = self.log_weights(x, t)?;
        let max = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            let u = 1.0 / self.n as f64;
            w.iter_mut().for_each(|v| *v = u);
            return Ok((w, true));
        }
        let mut total = 0.0;
        for v in w.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        w.iter_mut().for_each(|v| *v /= total);
        Ok((w, false))
    }

    /// Posterior-weighted conditional velocity at `(x, t)`.
    pub fn evaluate(&self, x: &[f64], t: f64) -> Result<OracleEval> {
        let (w, fallback) = self.weights(x, t)?;
        let d = self.spec.dim;
        let mut velocity = vec![0.0; d];
        let mut cond = vec![0.0; d];
        for (i, &wi) in w.iter().enumerate() {
            if wi == 0.0 {
                continue;
            }
            conditional_velocity_unchecked(&self.spec, self.point(i), x, t, &mut cond);
            for (v, c) in velocity.iter_mut().zip(&cond) {
                *v += wi * c;
            }
        }
        Ok(OracleEval { velocity, fallback })
    }

    /// Marginal density `v1(t, x) = mean_i d_t(x | x_i)`.
    pub fn density(&self, x: &[f64], t: f64) -> Result<f64> {
        check_dim("x_t", x.len(), self.spec.dim)?;
        self.check_time(t)?;
        let lw = self.log_weights(x, t)?;
        Ok(lw.iter().map(|l| l.exp()).sum::<f64>() / self.n as f64)
    }
}

impl VectorField for OracleField {
    fn dim(&self) -> usize {
        self.spec.dim
    }

    fn eval(&self, x: &[f64], t: f64, out: &mut [f64]) -> Result<()> {
        let e = self.evaluate(x, t)?;
        out.copy_from_slice(&e.velocity);
        Ok(())
    }

    #[cfg(feature = "parallel")]
    fn eval_batch(&self, xs: &[f64], t: f64, out: &mut [f64]) -> Result<()> {
        use rayon::prelude::*;
        let d = self.spec.dim;
        check_dim("batch output", out.len(), xs.len())?;
        if xs.len() % d != 0 {
            return Err(Error::invalid(format!(
                "batch of length {} is not a multiple of {d}",
                xs.len()
            )));
        }
        xs.par_chunks_exact(d)
            .zip(out.par_chunks_exact_mut(d))
            .try_for_each(|(x, o)| self.eval(x, t, o))
    }
}

/// Exact oracle field at a single point.
pub fn oracle_field(
    dataset: &[Vec<f64>],
    spec: &TrajectorySpec,
    prior: &PriorSpec,
    x_t: &[f64],
    t: f64,
) -> Result<OracleEval> {
    OracleField::new(dataset, spec.clone(), *prior)?.evaluate(x_t, t)
}

/// A trained network deployed as a field. The network predicts `t * F`, so the
/// field is its output divided by `t`.
#[derive(Debug, Clone)]
pub struct LearnedField {
    net: FieldNet,
    spec: TrajectorySpec,
}

impl LearnedField {
    pub fn new(net: FieldNet, spec: TrajectorySpec) -> Result<Self> {
        spec.validate()?;
        if net.input_dim() != spec.dim + 2 || net.output_dim() != spec.dim {
            return Err(Error::invalid(format!(
                "network widths {:?} do not fit dimension {}",
                net.widths(),
                spec.dim
            )));
        }
        Ok(LearnedField { net, spec })
    }

    pub fn net(&self) -> &FieldNet {
        &self.net
    }

    pub fn spec(&self) -> &TrajectorySpec {
        &self.spec
    }
}

impl VectorField for LearnedField {
    fn dim(&self) -> usize {
        self.spec.dim
    }

    fn eval(&self, x: &[f64], t: f64, out: &mut [f64]) -> Result<()> {
        learned_field_into(&self.net, &self.spec, x, t, out)
    }

    fn eval_batch(&self, xs: &[f64], t: f64, out: &mut [f64]) -> Result<()> {
        check_dim("batch output", out.len(), xs.len())?;
        check_time_window(&self.spec, t)?;
        self.net.forward_batch(xs, t, out)?;
        for o in out.iter_mut() {
            *o /= t;
            if !o.is_finite() {
                return Err(Error::NumericFault(
                    "network produced a non-finite field value".into(),
                ));
            }
        }
        Ok(())
    }
}

fn check_time_window(spec: &TrajectorySpec, t: f64) -> Result<()> {
    if !(t >= spec.t_min * (1.0 - TIME_SLACK) && t <= spec.horizon * (1.0 + TIME_SLACK)) {
        return Err(Error::invalid(format!("t={t} outside [t_min, T]")));
    }
    Ok(())
}

fn learned_field_into(
    net: &FieldNet,
    spec: &TrajectorySpec,
    x: &[f64],
    t: f64,
    out: &mut [f64],
) -> Result<()> {
    check_dim("x_t", x.len(), spec.dim)?;
    check_dim("output", out.len(), spec.dim)?;
    check_time_window(spec, t)?;
    net.forward_into(x, t, out)?;
    for o in out.iter_mut() {
        *o /= t;
        if !o.is_finite() {
            return Err(Error::NumericFault(
                "network produced a non-finite field value".into(),
            ));
        }
    }
    Ok(())
}

/// Learned field at a single point.
pub fn learned_field(
    net: &FieldNet,
    spec: &TrajectorySpec,
    x_t: &[f64],
    t: f64,
) -> Result<Vec<f64>> {
    let mut out = vec![0.0; spec.dim];
    learned_field_into(net, spec, x_t, t, &mut out)?;
    Ok(out)
}

#[derive(Debug, Clone)]
pub enum FieldSource {
    Oracle(OracleField),
    Learned(LearnedField),
}

impl FieldSource {
    pub fn spec(&self) -> &TrajectorySpec {
        match self {
            FieldSource::Oracle(o) => o.spec(),
            FieldSource::Learned(l) => l.spec(),
        }
    }
}

impl VectorField for FieldSource {
    fn dim(&self) -> usize {
        self.spec().dim
    }

    fn eval(&self, x: &[f64], t: f64, out: &mut [f64]) -> Result<()> {
        match self {
            FieldSource::Oracle(o) => o.eval(x, t, out),
            FieldSource::Learned(l) => l.eval(x, t, out),
        }
    }

    fn eval_batch(&self, xs: &[f64], t: f64, out: &mut [f64]) -> Result<()> {
        match self {
            FieldSource::Oracle(o) => o.eval_batch(xs, t, out),
            FieldSource::Learned(l) => l.eval_batch(xs, t, out),
        }
    }
}

/// Central-difference divergence of the extended flux `(v1, v1 F)` in `(t, x)` space.
pub fn extended_divergence<V, F>(density: V, field: F, t: f64, x: &[f64], h: f64) -> Result<f64>
where
    V: Fn(&[f64], f64) -> Result<f64>,
    F: Fn(&[f64], f64) -> Result<Vec<f64>>,
{
    if !(h > 0.0) {
        return Err(Error::invalid(format!("step h must be > 0, got {h}")));
    }
    let mut div = (density(x, t + h)? - density(x, t - h)?) / (2.0 * h);
    let mut xp = x.to_vec();
    for k in 0..x.len() {
        xp[k] = x[k] + h;
        let fp = density(&xp, t)? * field(&xp, t)?[k];
        xp[k] = x[k] - h;
        let fm = density(&xp, t)? * field(&xp, t)?[k];
        xp[k] = x[k];
        div += (fp - fm) / (2.0 * h);
    }
    Ok(div)
}

/// Magnitude of the extended-space divergence of the oracle flux at `(t, x)`.
///
/// The point must lie farther than `10 h` from every source `(0, x_i)`.
pub fn divergence_residual(field: &FieldSource, point: (f64, &[f64]), h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::invalid(format!("step h must be > 0, got {h}")));
    }
    let FieldSource::Oracle(oracle) = field else {
        return Err(Error::invalid(
            "divergence residual needs the oracle field (its density is not available for a network)",
        ));
    };
    let (t, x) = point;
    check_dim("point", x.len(), oracle.spec().dim)?;
    let guard = 10.0 * h;
    for i in 0..oracle.len() {
        let r = (t * t + dist_sq(x, oracle.point(i))).sqrt();
        if r <= guard {
            return Err(Error::Singularity(format!(
                "point is within {guard} of source {i}"
            )));
        }
    }
    let div = extended_divergence(
        |y, s| oracle.density(y, s),
        |y, s| oracle.evaluate(y, s).map(|e| e.velocity),
        t,
        x,
        h,
    )?;
    Ok(div.abs())
}
