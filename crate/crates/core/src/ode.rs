//! Integration of `dx/dt = F_t(x)` with exact evaluation counting.
//!
//! Generation integrates backward from the prior at `t = T` down to `t_min` and takes
//! the final state as the sample.

use crate::dist_sq;
use crate::error::{check_dim, Error, Result};
use crate::field::VectorField;
use crate::rng::stream;
use crate::sampler::PriorSpec;
use crate::trajectory::TrajectorySpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Euler,
    Rk4,
    /// Dormand-Prince 5(4) with first-same-as-last reuse.
    Rk45,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Euler => "euler",
            Method::Rk4 => "rk4",
            Method::Rk45 => "rk45",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "euler" => Ok(Method::Euler),
            "rk4" => Ok(Method::Rk4),
            "rk45" => Ok(Method::Rk45),
            other => Err(Error::invalid(format!(
                "unknown solver `{other}` (expected euler, rk4 or rk45)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub method: Method,
    /// Fixed step magnitude for Euler and RK4.
    pub step: f64,
    pub rtol: f64,
    pub atol: f64,
    pub t_start: f64,
    pub t_end: f64,
    /// Cap on steps (accepted plus rejected for RK45).
    pub max_steps: usize,
    /// Record every accepted state, not just the two ends.
    pub keep_path: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            method: Method::Rk45,
            step: 1e-2,
            rtol: 1e-5,
            atol: 1e-5,
            t_start: 1.0,
            t_end: 1e-3,
            max_steps: 100_000,
            keep_path: false,
        }
    }
}

impl SolverConfig {
    /// Default generation setup for `spec`: RK45 from `T` down to `t_min`.
    pub fn generation(spec: &TrajectorySpec) -> Self {
        SolverConfig {
            t_start: spec.horizon,
            t_end: spec.t_min,
            ..SolverConfig::default()
        }
    }

    pub fn fixed(method: Method, step: f64, t_start: f64, t_end: f64) -> Self {
        SolverConfig {
            method,
            step,
            t_start,
            t_end,
            ..SolverConfig::default()
        }
    }

    pub fn adaptive(rtol: f64, atol: f64, t_start: f64, t_end: f64) -> Self {
        SolverConfig {
            method: Method::Rk45,
            rtol,
            atol,
            t_start,
            t_end,
            ..SolverConfig::default()
        }
    }

    /// Same solver run in the opposite direction.
    pub fn reversed(&self) -> Self {
        SolverConfig {
            t_start: self.t_end,
            t_end: self.t_start,
            ..*self
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        match self.method {
            Method::Euler | Method::Rk4 => {
                if !(self.step > 0.0) {
                    problems.push(format!("step must be > 0, got {}", self.step));
                }
            }
            Method::Rk45 => {
                if !(self.rtol > 0.0 && self.atol > 0.0) {
                    problems.push(format!(
                        "rtol and atol must be > 0, got {} and {}",
                        self.rtol, self.atol
                    ));
                }
            }
        }
        if self.max_steps == 0 {
            problems.push("max_steps must be >= 1".into());
        }
        if !(self.t_start.is_finite() && self.t_end.is_finite()) || self.t_start == self.t_end {
            problems.push(format!(
                "t_start and t_end must be finite and distinct, got {} and {}",
                self.t_start, self.t_end
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidInput(problems.join("; ")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub nfe: usize,
    pub accepted: usize,
    pub rejected: usize,
}

impl TrajectoryRecord {
    pub fn final_state(&self) -> &[f64] {
        self.states.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn final_time(&self) -> f64 {
        self.times.last().copied().unwrap_or(f64::NAN)
    }
}

struct Counted<'a, F: VectorField + ?Sized> {
    field: &'a F,
    nfe: usize,
}

impl<F: VectorField + ?Sized> Counted<'_, F> {
    fn eval(&mut self, x: &[f64], t: f64, out: &mut [f64]) -> Result<()> {
        self.nfe += 1;
        self.field.eval(x, t, out)?;
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericFault(format!(
                "non-finite field value at t={t}"
            )));
        }
        Ok(())
    }
}

fn axpy_into(out: &mut [f64], y: &[f64], terms: &[(f64, &[f64])]) {
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = y[i];
        for (c, k) in terms {
            acc += c * k[i];
        }
        *o = acc;
    }
}

fn finite_or_fault(x: &[f64], t: f64) -> Result<()> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericFault(format!("non-finite state at t={t}")));
    }
    Ok(())
}

/// Integrate `field` from `cfg.t_start` to `cfg.t_end` starting at `x_start`.
pub fn integrate<F: VectorField + ?Sized>(
    field: &F,
    x_start: &[f64],
    cfg: &SolverConfig,
) -> Result<TrajectoryRecord> {
    cfg.validate()?;
    check_dim("start state", x_start.len(), field.dim())?;
    finite_or_fault(x_start, cfg.t_start)?;
    let mut counted = Counted { field, nfe: 0 };
    let mut rec = TrajectoryRecord {
        times: vec![cfg.t_start],
        states: vec![x_start.to_vec()],
        ..Default::default()
    };
    let result = match cfg.method {
        Method::Euler | Method::Rk4 => fixed_steps(&mut counted, cfg, &mut rec),
        Method::Rk45 => dopri(&mut counted, cfg, &mut rec),
    };
    rec.nfe = counted.nfe;
    match result {
        Ok(()) => Ok(rec),
        Err(Error::NonConvergence { message, .. }) => Err(Error::NonConvergence {
            message,
            partial: Some(Box::new(rec)),
        }),
        Err(e) => Err(e),
    }
}

// Without `keep`, the record holds the start state and the latest state only.
fn push_state(rec: &mut TrajectoryRecord, keep: bool, t: f64, y: &[f64]) {
    if !keep && rec.states.len() > 1 {
        let last = rec.states.len() - 1;
        rec.times[last] = t;
        rec.states[last].copy_from_slice(y);
        return;
    }
    rec.times.push(t);
    rec.states.push(y.to_vec());
}

fn fixed_steps<F: VectorField + ?Sized>(
    f: &mut Counted<'_, F>,
    cfg: &SolverConfig,
    rec: &mut TrajectoryRecord,
) -> Result<()> {
    let span = cfg.t_end - cfg.t_start;
    let n = ((span.abs() / cfg.step).round() as usize).max(1);
    let h = span / n as f64;
    let d = rec.states[0].len();
    let mut y = rec.states[0].clone();
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (
        vec![0.0; d],
        vec![0.0; d],
        vec![0.0; d],
        vec![0.0; d],
        vec![0.0; d],
    );
    for i in 0..n {
        if i >= cfg.max_steps {
            return Err(Error::NonConvergence {
                message: format!("{n} fixed steps exceed max_steps={}", cfg.max_steps),
                partial: None,
            });
        }
        let t = cfg.t_start + h * i as f64;
        match cfg.method {
            Method::Euler => {
                f.eval(&y, t, &mut k1)?;
                for (yi, ki) in y.iter_mut().zip(&k1) {
                    *yi += h * ki;
                }
            }
            _ => {
                f.eval(&y, t, &mut k1)?;
                axpy_into(&mut tmp, &y, &[(0.5 * h, &k1)]);
                f.eval(&tmp, t + 0.5 * h, &mut k2)?;
                axpy_into(&mut tmp, &y, &[(0.5 * h, &k2)]);
                f.eval(&tmp, t + 0.5 * h, &mut k3)?;
                axpy_into(&mut tmp, &y, &[(h, &k3)]);
                f.eval(&tmp, t + h, &mut k4)?;
                for i in 0..d {
                    y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
            }
        }
        let t_next = if i + 1 == n {
            cfg.t_end
        } else {
            cfg.t_start + h * (i + 1) as f64
        };
        finite_or_fault(&y, t_next)?;
        rec.accepted += 1;
        push_state(rec, cfg.keep_path, t_next, &y);
    }
    Ok(())
}

// Dormand-Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// b - b*, the embedded error weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;

fn error_norm(err: &[f64], y0: &[f64], y1: &[f64], cfg: &SolverConfig) -> f64 {
    let d = err.len() as f64;
    let s: f64 = err
        .iter()
        .zip(y0.iter().zip(y1))
        .map(|(e, (a, b))| {
            let sc = cfg.atol + cfg.rtol * a.abs().max(b.abs());
            (e / sc).powi(2)
        })
        .sum();
    (s / d).sqrt()
}

fn dopri<F: VectorField + ?Sized>(
    f: &mut Counted<'_, F>,
    cfg: &SolverConfig,
    rec: &mut TrajectoryRecord,
) -> Result<()> {
    let d = rec.states[0].len();
    let dir = (cfg.t_end - cfg.t_start).signum();
    let span = (cfg.t_end - cfg.t_start).abs();
    let mut t = cfg.t_start;
    let mut y = rec.states[0].clone();
    let mut k = vec![vec![0.0; d]; 7];
    let mut tmp = vec![0.0; d];
    let mut y_new = vec![0.0; d];
    let mut err = vec![0.0; d];

    f.eval(&y, t, &mut k[0])?;

    // Initial step from the usual two-evaluation heuristic.
    let scale: Vec<f64> = y.iter().map(|v| cfg.atol + cfg.rtol * v.abs()).collect();
    let rms = |v: &[f64]| {
        (v.iter()
            .zip(&scale)
            .map(|(a, s)| (a / s).powi(2))
            .sum::<f64>()
            / d as f64)
            .sqrt()
    };
    let d0 = rms(&y);
    let d1 = rms(&k[0]);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    }
    .min(span);
    axpy_into(&mut tmp, &y, &[(dir * h0, &k[0])]);
    f.eval(&tmp, t + dir * h0, &mut k[1])?;
    let diff: Vec<f64> = k[1].iter().zip(&k[0]).map(|(a, b)| a - b).collect();
    let d2 = rms(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    let mut h = (100.0 * h0).min(h1).min(span);

    let mut attempts = 0usize;
    loop {
        let remaining = (cfg.t_end - t).abs();
        if remaining <= 0.0 {
            break;
        }
        if attempts >= cfg.max_steps {
            return Err(Error::NonConvergence {
                message: format!(
                    "rk45 used {attempts} steps and stopped at t={t} before reaching {}",
                    cfg.t_end
                ),
                partial: None,
            });
        }
        attempts += 1;
        let last = h >= remaining;
        let hs = if last { cfg.t_end - t } else { dir * h };

        axpy_into(&mut tmp, &y, &[(hs * A21, &k[0])]);
        let (k0, rest) = k.split_at_mut(1);
        f.eval(&tmp, t + C2 * hs, &mut rest[0])?;
        axpy_into(&mut tmp, &y, &[(hs * A31, &k0[0]), (hs * A32, &rest[0])]);
        f.eval(&tmp, t + C3 * hs, &mut rest[1])?;
        axpy_into(
            &mut tmp,
            &y,
            &[
                (hs * A41, &k0[0]),
                (hs * A42, &rest[0]),
                (hs * A43, &rest[1]),
            ],
        );
        f.eval(&tmp, t + C4 * hs, &mut rest[2])?;
        axpy_into(
            &mut tmp,
            &y,
            &[
                (hs * A51, &k0[0]),
                (hs * A52, &rest[0]),
                (hs * A53, &rest[1]),
                (hs * A54, &rest[2]),
            ],
        );
        f.eval(&tmp, t + C5 * hs, &mut rest[3])?;
        axpy_into(
            &mut tmp,
            &y,
            &[
                (hs * A61, &k0[0]),
                (hs * A62, &rest[0]),
                (hs * A63, &rest[1]),
                (hs * A64, &rest[2]),
                (hs * A65, &rest[3]),
            ],
        );
        let t_new = if last { cfg.t_end } else { t + hs };
        f.eval(&tmp, t_new, &mut rest[4])?;
        axpy_into(
            &mut y_new,
            &y,
            &[
                (hs * B1, &k0[0]),
                (hs * B3, &rest[1]),
                (hs * B4, &rest[2]),
                (hs * B5, &rest[3]),
                (hs * B6, &rest[4]),
            ],
        );
        f.eval(&y_new, t_new, &mut rest[5])?;
        for i in 0..d {
            err[i] = hs
                * (E1 * k0[0][i]
                    + E3 * rest[1][i]
                    + E4 * rest[2][i]
                    + E5 * rest[3][i]
                    + E6 * rest[4][i]
                    + E7 * rest[5][i]);
        }
        let en = error_norm(&err, &y, &y_new, cfg);
        if !en.is_finite() {
            return Err(Error::NumericFault(format!(
                "non-finite error estimate at t={t}"
            )));
        }
        let factor = if en == 0.0 {
            MAX_FACTOR
        } else {
            (SAFETY * en.powf(-0.2)).clamp(MIN_FACTOR, MAX_FACTOR)
        };
        if en <= 1.0 {
            t = t_new;
            std::mem::swap(&mut y, &mut y_new);
            finite_or_fault(&y, t)?;
            let (first, rest) = k.split_at_mut(1);
            std::mem::swap(&mut first[0], &mut rest[5]);
            rec.accepted += 1;
            let done = t == cfg.t_end;
            push_state(rec, cfg.keep_path, t, &y);
            if done {
                break;
            }
            h = hs.abs() * factor;
        } else {
            rec.rejected += 1;
            h = hs.abs() * factor.min(1.0);
        }
    }
    Ok(())
}

/// Mean distance between each start point and its forward-then-backward image.
pub fn roundtrip_error<F: VectorField + ?Sized>(
    field: &F,
    x0_batch: &[Vec<f64>],
    cfg: &SolverConfig,
) -> Result<f64> {
    if x0_batch.is_empty() {
        return Ok(0.0);
    }
    let back = cfg.reversed();
    let mut total = 0.0;
    for x in x0_batch {
        let fwd = integrate(field, x, cfg)?;
        let bwd = integrate(field, fwd.final_state(), &back)?;
        total += dist_sq(x, bwd.final_state()).sqrt();
    }
    Ok(total / x0_batch.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Generation {
    pub samples: Vec<Vec<f64>>,
    /// Batched field evaluations; every sample is advanced by each one.
    pub nfe: usize,
}

/// Draw `n` prior states at `cfg.t_start` and integrate them jointly to `cfg.t_end`.
///
/// Sample `i` draws from its own random stream. The samples form one system with a
/// shared step size, so the error control applies to the whole batch.
pub fn generate<F: VectorField + ?Sized>(
    field: &F,
    spec: &TrajectorySpec,
    prior: &PriorSpec,
    n: usize,
    cfg: &SolverConfig,
    seed: u64,
) -> Result<Generation> {
    cfg.validate()?;
    check_dim("field", field.dim(), spec.dim)?;
    if n == 0 {
        return Ok(Generation {
            samples: Vec::new(),
            nfe: 0,
        });
    }
    let mut start = Vec::with_capacity(n * spec.dim);
    for i in 0..n {
        let mut rng = stream(seed, "generate", i as u64);
        start.extend(prior.sample_terminal(spec, &mut rng));
    }
    let batch = Batched {
        field,
        len: start.len(),
    };
    let mut run = *cfg;
    run.keep_path = false;
    let rec = integrate(&batch, &start, &run)?;
    Ok(Generation {
        samples: rec
            .final_state()
            .chunks_exact(spec.dim)
            .map(<[f64]>::to_vec)
            .collect(),
        nfe: rec.nfe,
    })
}

// All samples as one ODE system, so they share a step-size controller.
struct Batched<'a, F: VectorField + ?Sized> {
    field: &'a F,
    len: usize,
}

impl<F: VectorField + ?Sized> VectorField for Batched<'_, F> {
    fn dim(&self) -> usize {
        self.len
    }

    fn eval(&self, x: &[f64], t: f64, out: &mut [f64]) -> Result<()> {
        self.field.eval_batch(x, t, out)
    }
}

/// Largest distance between a state and the nearest point of `targets`.
pub fn max_distance_to_set(states: &[Vec<f64>], targets: &[Vec<f64>]) -> f64 {
    states
        .iter()
        .map(|s| {
            targets
                .iter()
                .map(|p| dist_sq(s, p))
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{FieldSource, LearnedField, OracleField};
    use crate::trainer::FieldNet;

    struct Zero(usize);
    impl VectorField for Zero {
        fn dim(&self) -> usize {
            self.0
        }
        fn eval(&self, _x: &[f64], _t: f64, out: &mut [f64]) -> Result<()> {
            out.fill(0.0);
            Ok(())
        }
    }

    fn single_linear(x0: f64) -> OracleField {
        OracleField::new(
            &[vec![x0]],
            TrajectorySpec::linear(1),
            PriorSpec::gaussian(1.0),
        )
        .unwrap()
    }

    #[test]
    fn zero_field_keeps_state() {
        let spec = TrajectorySpec::linear(2);
        let field =
            FieldSource::Learned(LearnedField::new(FieldNet::zeros(&[4, 16, 2]), spec).unwrap());
        for method in [Method::Euler, Method::Rk4, Method::Rk45] {
            let cfg = SolverConfig {
                method,
                ..SolverConfig::default()
            };
            let rec = integrate(&field, &[0.3, -1.2], &cfg).unwrap();
            assert_eq!(rec.final_state(), &[0.3, -1.2]);
        }
        let err = roundtrip_error(&Zero(2), &[vec![1.0, 2.0]], &SolverConfig::default()).unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn rk4_on_linear_benchmark() {
        let (x0, x1) = (0.25, 1.7);
        let field = single_linear(x0);
        let cfg = SolverConfig::fixed(Method::Rk4, 1e-2, 1.0, 0.01);
        let rec = integrate(&field, &[x1], &cfg).unwrap();
        let exact = x0 + (x1 - x0) * 0.01;
        assert!((rec.final_state()[0] - exact).abs() <= 1e-8);
        assert_eq!(rec.accepted, 99);
        assert_eq!(rec.nfe, 4 * 99);
    }

    #[test]
    fn rk4_is_fourth_order_on_curve_benchmark() {
        // single source, curve exponent 2: x(t) = x0 + (x1 - x0) t^2
        let (x0, x1) = (0.25, 1.7);
        let spec = TrajectorySpec::curve(1, 2.0);
        let field = OracleField::new(&[vec![x0]], spec, PriorSpec::gaussian(1.0)).unwrap();
        let exact = x0 + (x1 - x0) * 0.5f64.powi(2);
        let errs: Vec<f64> = [0.05, 0.025, 0.0125, 0.00625]
            .iter()
            .map(|&h| {
                let cfg = SolverConfig::fixed(Method::Rk4, h, 1.0, 0.5);
                (integrate(&field, &[x1], &cfg).unwrap().final_state()[0] - exact).abs()
            })
            .collect();
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!((ratio - 16.0).abs() < 2.0, "{errs:?}");
        }
    }

    #[test]
    fn nfe_counts_are_exact() {
        let field = single_linear(0.0);
        let cfg = SolverConfig::fixed(Method::Rk4, 0.5e-2, 1.0, 0.5);
        let rec = integrate(&field, &[1.0], &cfg).unwrap();
        assert_eq!(rec.accepted, 100);
        assert_eq!(rec.nfe, 400);
        let cfg = SolverConfig::fixed(Method::Euler, 0.5e-2, 1.0, 0.5);
        assert_eq!(integrate(&field, &[1.0], &cfg).unwrap().nfe, 100);
        let cfg = SolverConfig::adaptive(1e-6, 1e-6, 1.0, 0.01);
        let rec = integrate(&field, &[1.0], &cfg).unwrap();
        assert_eq!(rec.nfe, 2 + 6 * (rec.accepted + rec.rejected));
    }

    #[test]
    fn max_steps_returns_partial_record() {
        let field = single_linear(0.0);
        let cfg = SolverConfig {
            max_steps: 10,
            ..SolverConfig::fixed(Method::Rk4, 1e-3, 1.0, 0.01)
        };
        match integrate(&field, &[1.0], &cfg) {
            Err(Error::NonConvergence {
                partial: Some(p), ..
            }) => assert_eq!(p.accepted, 10),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn adaptive_is_deterministic_and_accurate() {
        let field = single_linear(0.5);
        let cfg = SolverConfig::adaptive(1e-8, 1e-8, 1.0, 0.01);
        let a = integrate(&field, &[2.0], &cfg).unwrap();
        let b = integrate(&field, &[2.0], &cfg).unwrap();
        assert_eq!(a, b);
        assert!((a.final_state()[0] - (0.5 + 1.5 * 0.01)).abs() < 1e-7);
    }

    #[test]
    fn roundtrip_on_single_source() {
        let field = single_linear(0.2);
        let cfg = SolverConfig::fixed(Method::Rk4, 1e-3, 0.05, 1.0);
        let err = roundtrip_error(&field, &[vec![0.7], vec![-1.0]], &cfg).unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn generation_contracts_to_single_point() {
        let spec = TrajectorySpec::linear(2);
        let field =
            OracleField::new(&[vec![0.4, -0.3]], spec.clone(), PriorSpec::gaussian(1.0)).unwrap();
        let cfg = SolverConfig::generation(&spec);
        let g = generate(&field, &spec, &PriorSpec::gaussian(1.0), 50, &cfg, 3).unwrap();
        assert_eq!(g.samples.len(), 50);
        assert!(max_distance_to_set(&g.samples, &[vec![0.4, -0.3]]) < 10.0 * spec.t_min);
        let empty = generate(&field, &spec, &PriorSpec::gaussian(1.0), 0, &cfg, 3).unwrap();
        assert!(empty.samples.is_empty());
        assert_eq!(empty.nfe, 0);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let field = single_linear(0.0);
        let mut cfg = SolverConfig::default();
        cfg.t_end = cfg.t_start;
        assert!(integrate(&field, &[0.0], &cfg).is_err());
        let cfg = SolverConfig::fixed(Method::Rk4, 0.0, 1.0, 0.5);
        assert!(integrate(&field, &[0.0], &cfg).is_err());
        assert!(integrate(&field, &[0.0, 1.0], &SolverConfig::default()).is_err());
    }
}
