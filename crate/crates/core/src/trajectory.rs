//! Conditional trajectory families.
//!
//! Each family describes a closed-form path from a data point `x0` at `t = 0` to a
//! prior endpoint at `t = T`. From the path we get the training target (its time
//! derivative), the conditional velocity expressed in terms of the current state, and
//! the conditional density `d_t(x_t | x0)` used as a posterior weight.
//!
//! Time enters every polynomial family through `s = t / T`, so `position(T)` is the
//! final endpoint for any horizon.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{check_dim, Error, Result};
use crate::sampler::{PriorKind, PriorSpec};
use crate::{dist_sq, norm_sq};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    PoissonIsotropic,
    Linear,
    GaussianBridge,
    Curve,
    SuperposedLinear,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::PoissonIsotropic,
        Family::Linear,
        Family::GaussianBridge,
        Family::Curve,
        Family::SuperposedLinear,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::PoissonIsotropic => "poisson",
            Family::Linear => "linear",
            Family::GaussianBridge => "gaussian",
            Family::Curve => "curve",
            Family::SuperposedLinear => "superposed",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == name)
            .ok_or_else(|| {
                Error::invalid(format!(
                    "unknown family `{name}` (expected one of poisson, linear, gaussian, curve, superposed)"
                ))
            })
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Mean and scale schedules of a Gaussian bridge, `x_t = mu(t, x0) + sigma(t) * e`.
///
/// `sigma` must be strictly increasing on `[t_min, T]`.
pub trait BridgeSchedule: Send + Sync + fmt::Debug {
    fn mean(&self, t: f64, x0: &[f64], out: &mut [f64]);
    fn mean_rate(&self, t: f64, x0: &[f64], out: &mut [f64]);
    fn sigma(&self, t: f64) -> f64;
    fn sigma_rate(&self, t: f64) -> f64;
}

#[derive(Debug, Clone)]
pub enum Bridge {
    /// `mu = (1 - t/T) x0`, `sigma = sigma_min + (sigma_max - sigma_min) t/T`.
    Linear {
        sigma_min: f64,
        sigma_max: f64,
    },
    Custom(Arc<dyn BridgeSchedule>),
}

impl Default for Bridge {
    fn default() -> Self {
        Bridge::Linear {
            sigma_min: 0.01,
            sigma_max: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrajectorySpec {
    pub family: Family,
    pub dim: usize,
    pub horizon: f64,
    pub t_min: f64,
    /// Curve exponent `m >= 1`.
    pub curve_exponent: f64,
    /// Overlap count `ON >= 1` of the superposed family.
    pub overlap: usize,
    pub bridge: Bridge,
    /// Constant `A` of the Poisson kernel. It cancels in posterior weights.
    pub poisson_constant: f64,
}

impl TrajectorySpec {
    pub fn new(family: Family, dim: usize) -> Self {
        TrajectorySpec {
            family,
            dim,
            horizon: 1.0,
            t_min: 1e-3,
            curve_exponent: 1.0,
            overlap: 1,
            bridge: Bridge::default(),
            poisson_constant: 1.0,
        }
    }

    pub fn linear(dim: usize) -> Self {
        Self::new(Family::Linear, dim)
    }

    pub fn curve(dim: usize, m: f64) -> Self {
        Self {
            curve_exponent: m,
            ..Self::new(Family::Curve, dim)
        }
    }

    pub fn superposed(dim: usize, overlap: usize) -> Self {
        Self {
            overlap,
            ..Self::new(Family::SuperposedLinear, dim)
        }
    }

    pub fn gaussian(dim: usize, bridge: Bridge) -> Self {
        Self {
            bridge,
            ..Self::new(Family::GaussianBridge, dim)
        }
    }

    pub fn poisson(dim: usize, constant: f64) -> Self {
        Self {
            poisson_constant: constant,
            ..Self::new(Family::PoissonIsotropic, dim)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.dim == 0 {
            problems.push("dim must be positive".to_string());
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            problems.push(format!("horizon must be positive, got {}", self.horizon));
        }
        if !(self.t_min > 0.0 && self.t_min < self.horizon) {
            problems.push(format!(
                "t_min must satisfy 0 < t_min < horizon, got t_min={} horizon={}",
                self.t_min, self.horizon
            ));
        }
        if !(self.curve_exponent >= 1.0) {
            problems.push(format!(
                "curve_exponent must be >= 1, got {}",
                self.curve_exponent
            ));
        }
        if self.overlap == 0 {
            problems.push("overlap must be >= 1".to_string());
        }
        if !(self.poisson_constant > 0.0) {
            problems.push("poisson_constant must be positive".to_string());
        }
        if self.family == Family::GaussianBridge && !self.sigma_increasing() {
            problems
                .push("bridge sigma must be positive and strictly increasing on [t_min, T]".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidInput(problems.join("; ")))
        }
    }

    fn sigma_increasing(&self) -> bool {
        const PROBES: usize = 64;
        let mut prev = f64::NEG_INFINITY;
        for k in 0..=PROBES {
            let t = self.t_min + (self.horizon - self.t_min) * k as f64 / PROBES as f64;
            let s = self.sigma(t);
            if !(s > 0.0) || s <= prev {
                return false;
            }
            prev = s;
        }
        true
    }

    /// Number of prior endpoints a trajectory of this family needs.
    pub fn endpoint_count(&self) -> usize {
        match self.family {
            Family::SuperposedLinear => self.overlap,
            _ => 1,
        }
    }

    fn frac(&self, t: f64) -> f64 {
        t / self.horizon
    }

    pub fn sigma(&self, t: f64) -> f64 {
        match &self.bridge {
            Bridge::Linear {
                sigma_min,
                sigma_max,
            } => sigma_min + (sigma_max - sigma_min) * self.frac(t),
            Bridge::Custom(s) => s.sigma(t),
        }
    }

    fn sigma_rate(&self, t: f64) -> f64 {
        match &self.bridge {
            Bridge::Linear {
                sigma_min,
                sigma_max,
            } => (sigma_max - sigma_min) / self.horizon,
            Bridge::Custom(s) => s.sigma_rate(t),
        }
    }

    fn bridge_mean(&self, t: f64, x0: &[f64], out: &mut [f64]) {
        match &self.bridge {
            Bridge::Linear { .. } => {
                let a = 1.0 - self.frac(t);
                for (o, x) in out.iter_mut().zip(x0) {
                    *o = a * x;
                }
            }
            Bridge::Custom(s) => s.mean(t, x0, out),
        }
    }

    fn bridge_mean_rate(&self, t: f64, x0: &[f64], out: &mut [f64]) {
        match &self.bridge {
            Bridge::Linear { .. } => {
                for (o, x) in out.iter_mut().zip(x0) {
                    *o = -x / self.horizon;
                }
            }
            Bridge::Custom(s) => s.mean_rate(t, x0, out),
        }
    }

    /// Variance multiplier `v(s) = sum_i a_i(s)^2` of the superposed family, where
    /// `x_t = (1 - s) x0 + sum_i a_i(s) e_i`, together with `v'(s)`.
    fn superposed_variance(&self, s: f64) -> (f64, f64) {
        let on = self.overlap;
        let mut v = 0.0;
        let mut dv = 0.0;
        for i in 1..=on {
            let (a, da) = if i < on {
                (
                    s.powi(i as i32) - s.powi(i as i32 + 1),
                    i as f64 * s.powi(i as i32 - 1) - (i + 1) as f64 * s.powi(i as i32),
                )
            } else {
                (s.powi(i as i32), i as f64 * s.powi(i as i32 - 1))
            };
            v += a * a;
            dv += 2.0 * a * da;
        }
        (v, dv)
    }

    fn check_time(&self, t: f64, lo: f64) -> Result<()> {
        if !(t >= lo && t <= self.horizon) {
            if t < self.t_min && t >= 0.0 && lo == self.t_min {
                return Err(Error::Singularity(format!(
                    "t={t} is below t_min={}",
                    self.t_min
                )));
            }
            return Err(Error::invalid(format!(
                "t={t} outside [{lo}, {}]",
                self.horizon
            )));
        }
        Ok(())
    }
}

/// Data point plus the prior endpoint(s) that pin one conditional trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSet {
    pub x0: Vec<f64>,
    pub endpoints: Vec<Vec<f64>>,
}

impl AnchorSet {
    pub fn new(x0: Vec<f64>, endpoints: Vec<Vec<f64>>) -> Self {
        AnchorSet { x0, endpoints }
    }

    pub fn single(x0: Vec<f64>, endpoint: Vec<f64>) -> Self {
        AnchorSet {
            x0,
            endpoints: vec![endpoint],
        }
    }

    fn check(&self, spec: &TrajectorySpec) -> Result<()> {
        check_dim("x0", self.x0.len(), spec.dim)?;
        if self.endpoints.len() != spec.endpoint_count() {
            return Err(Error::invalid(format!(
                "{} family needs {} endpoint(s), got {}",
                spec.family,
                spec.endpoint_count(),
                self.endpoints.len()
            )));
        }
        for e in &self.endpoints {
            check_dim("endpoint", e.len(), spec.dim)?;
        }
        Ok(())
    }
}

/// Point on the conditional trajectory at time `t in [0, T]`.
pub fn position(spec: &TrajectorySpec, anchors: &AnchorSet, t: f64) -> Result<Vec<f64>> {
    anchors.check(spec)?;
    spec.check_time(t, 0.0)?;
    let x0 = &anchors.x0;
    let s = spec.frac(t);
    let mut out = x0.clone();
    match spec.family {
        Family::Linear | Family::PoissonIsotropic => {
            for ((o, a), e) in out.iter_mut().zip(x0).zip(&anchors.endpoints[0]) {
                *o = a + s * (e - a);
            }
        }
        Family::Curve => {
            let w = s.powf(spec.curve_exponent);
            for ((o, a), e) in out.iter_mut().zip(x0).zip(&anchors.endpoints[0]) {
                *o = a + w * (e - a);
            }
        }
        Family::GaussianBridge => {
            spec.bridge_mean(t, x0, &mut out);
            let sigma = spec.sigma(t);
            for (o, e) in out.iter_mut().zip(&anchors.endpoints[0]) {
                *o += sigma * e;
            }
        }
        Family::SuperposedLinear => {
            // x_t = x0 + sum_i (e_i - e_{i-1}) s^i with e_0 = x0.
            let mut prev: &[f64] = x0;
            let mut p = 1.0;
            for e in &anchors.endpoints {
                p *= s;
                for ((o, a), b) in out.iter_mut().zip(e).zip(prev) {
                    *o += (a - b) * p;
                }
                prev = e;
            }
        }
    }
    Ok(out)
}

/// Time derivative of [`position`], defined for `t in [t_min, T]`.
pub fn velocity(spec: &TrajectorySpec, anchors: &AnchorSet, t: f64) -> Result<Vec<f64>> {
    anchors.check(spec)?;
    spec.check_time(t, spec.t_min)?;
    let x0 = &anchors.x0;
    let s = spec.frac(t);
    let inv_t = 1.0 / spec.horizon;
    let mut out = vec![0.0; spec.dim];
    match spec.family {
        Family::Linear | Family::PoissonIsotropic => {
            for ((o, a), e) in out.iter_mut().zip(x0).zip(&anchors.endpoints[0]) {
                *o = (e - a) * inv_t;
            }
        }
        Family::Curve => {
            let m = spec.curve_exponent;
            let w = m * s.powf(m - 1.0) * inv_t;
            for ((o, a), e) in out.iter_mut().zip(x0).zip(&anchors.endpoints[0]) {
                *o = w * (e - a);
            }
        }
        Family::GaussianBridge => {
            spec.bridge_mean_rate(t, x0, &mut out);
            let rate = spec.sigma_rate(t);
            for (o, e) in out.iter_mut().zip(&anchors.endpoints[0]) {
                *o += rate * e;
            }
        }
        Family::SuperposedLinear => {
            let mut prev: &[f64] = x0;
            let mut p = inv_t; // i s^{i-1} / T, starting at i = 1
            for (i, e) in anchors.endpoints.iter().enumerate() {
                let coeff = (i + 1) as f64 * p;
                for ((o, a), b) in out.iter_mut().zip(e).zip(prev) {
                    *o += (a - b) * coeff;
                }
                p *= s;
                prev = e;
            }
        }
    }
    Ok(out)
}

/// Expected conditional velocity at state `x_t` given only the data point `x0`.
///
/// For single-endpoint families the trajectory through `(t, x_t)` is unique, so this
/// is the exact velocity. For the superposed family several endpoints are free and
/// the result is the conditional mean under a centred isotropic Gaussian prior.
pub fn conditional_velocity(
    spec: &TrajectorySpec,
    x0: &[f64],
    x_t: &[f64],
    t: f64,
    out: &mut [f64],
) -> Result<()> {
    check_dim("x0", x0.len(), spec.dim)?;
    check_dim("x_t", x_t.len(), spec.dim)?;
    check_dim("output", out.len(), spec.dim)?;
    spec.check_time(t, spec.t_min)?;
    conditional_velocity_unchecked(spec, x0, x_t, t, out);
    Ok(())
}

pub(crate) fn conditional_velocity_unchecked(
    spec: &TrajectorySpec,
    x0: &[f64],
    x_t: &[f64],
    t: f64,
    out: &mut [f64],
) {
    match spec.family {
        Family::Linear | Family::PoissonIsotropic => {
            for ((o, a), x) in out.iter_mut().zip(x0).zip(x_t) {
                *o = (x - a) / t;
            }
        }
        Family::Curve => {
            let w = spec.curve_exponent / t;
            for ((o, a), x) in out.iter_mut().zip(x0).zip(x_t) {
                *o = w * (x - a);
            }
        }
        Family::GaussianBridge => {
            let mut mu = vec![0.0; spec.dim];
            spec.bridge_mean(t, x0, &mut mu);
            spec.bridge_mean_rate(t, x0, out);
            let k = spec.sigma_rate(t) / spec.sigma(t);
            for ((o, m), x) in out.iter_mut().zip(&mu).zip(x_t) {
                *o += k * (x - m);
            }
        }
        Family::SuperposedLinear => {
            let s = spec.frac(t);
            let (v, dv) = spec.superposed_variance(s);
            let k = dv / (2.0 * v * spec.horizon);
            for ((o, a), x) in out.iter_mut().zip(x0).zip(x_t) {
                *o = -a / spec.horizon + k * (x - (1.0 - s) * a);
            }
        }
    }
}

/// Log of the conditional density `d_t(x_t | x0)`; `-inf` outside the support.
pub fn log_conditional_kernel(
    spec: &TrajectorySpec,
    prior: &PriorSpec,
    x0: &[f64],
    x_t: &[f64],
    t: f64,
) -> Result<f64> {
    check_dim("x0", x0.len(), spec.dim)?;
    check_dim("x_t", x_t.len(), spec.dim)?;
    spec.check_time(t, spec.t_min)?;
    let mut scratch = vec![0.0; spec.dim];
    log_kernel_unchecked(spec, prior, x0, x_t, t, &mut scratch)
}

pub(crate) fn log_kernel_unchecked(
    spec: &TrajectorySpec,
    prior: &PriorSpec,
    x0: &[f64],
    x_t: &[f64],
    t: f64,
    scratch: &mut [f64],
) -> Result<f64> {
    let d = spec.dim as f64;
    let s = spec.frac(t);
    Ok(match spec.family {
        Family::Linear => {
            for ((y, a), x) in scratch.iter_mut().zip(x0).zip(x_t) {
                *y = a + (x - a) / s;
            }
            prior.log_terminal_density(spec, scratch) - d * s.ln()
        }
        Family::Curve => {
            let w = s.powf(spec.curve_exponent);
            for ((y, a), x) in scratch.iter_mut().zip(x0).zip(x_t) {
                *y = a + (x - a) / w;
            }
            prior.log_terminal_density(spec, scratch) - d * w.ln()
        }
        Family::GaussianBridge => {
            spec.bridge_mean(t, x0, scratch);
            let sigma = spec.sigma(t);
            for (y, x) in scratch.iter_mut().zip(x_t) {
                *y = (x - *y) / sigma;
            }
            prior.log_terminal_density(spec, scratch) - d * sigma.ln()
        }
        Family::PoissonIsotropic => {
            spec.poisson_constant.ln() + t.ln() - 0.5 * (d + 1.0) * (t * t + dist_sq(x_t, x0)).ln()
        }
        Family::SuperposedLinear => {
            if prior.kind != PriorKind::StandardGaussian {
                return Err(Error::invalid(
                    "the superposed family needs a Gaussian terminal prior",
                ));
            }
            let sd = prior.sigma;
            let (v, _) = spec.superposed_variance(s);
            let var = sd * sd * v;
            for ((y, a), x) in scratch.iter_mut().zip(x0).zip(x_t) {
                *y = x - (1.0 - s) * a;
            }
            -0.5 * norm_sq(scratch) / var - 0.5 * d * (2.0 * PI * var).ln()
        }
    })
}

/// Conditional density `d_t(x_t | x0)`.
pub fn conditional_kernel(
    spec: &TrajectorySpec,
    prior: &PriorSpec,
    x0: &[f64],
    x_t: &[f64],
    t: f64,
) -> Result<f64> {
    log_conditional_kernel(spec, prior, x0, x_t, t).map(f64::exp)
}

/// Full `(d+1)`-dimensional Poisson kernel
/// `A (t, x_t - x0) / (t^2 + |x_t - x0|^2)^((d+1)/2)`.
pub fn poisson_kernel_full(d: usize, a: f64, t: f64, x_t: &[f64], x0: &[f64]) -> Result<Vec<f64>> {
    poisson_kernel_with_exponent(d, a, t, x_t, x0, (d as f64 + 1.0) / 2.0)
}

/// Same shape as [`poisson_kernel_full`] with a free radial exponent; `(d+1)/2` is the
/// only value that makes the field divergence free.
pub fn poisson_kernel_with_exponent(
    d: usize,
    a: f64,
    t: f64,
    x_t: &[f64],
    x0: &[f64],
    half_exponent: f64,
) -> Result<Vec<f64>> {
    check_dim("x_t", x_t.len(), d)?;
    check_dim("x0", x0.len(), d)?;
    let r2 = t * t + dist_sq(x_t, x0);
    if r2 == 0.0 {
        return Err(Error::Singularity(
            "Poisson kernel evaluated at its source".into(),
        ));
    }
    let scale = a / r2.powf(half_exponent);
    let mut out = Vec::with_capacity(d + 1);
    out.push(scale * t);
    out.extend(x_t.iter().zip(x0).map(|(x, y)| scale * (x - y)));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;

    fn anchors1(x0: f64, e: f64) -> AnchorSet {
        AnchorSet::single(vec![x0], vec![e])
    }

    #[test]
    fn linear_midpoint() {
        let spec = TrajectorySpec::linear(2);
        let a = AnchorSet::single(vec![0.0, 0.0], vec![2.0, 2.0]);
        assert_eq!(position(&spec, &a, 0.5).unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn superposed_hand_value() {
        let spec = TrajectorySpec::superposed(1, 2);
        let a = AnchorSet::new(vec![0.0], vec![vec![1.0], vec![-1.0]]);
        // c1 = 1, c2 = -2: 0.5 - 2 * 0.25
        assert!(position(&spec, &a, 0.5).unwrap()[0].abs() < 1e-15);
        assert_eq!(position(&spec, &a, 1.0).unwrap(), vec![-1.0]);
    }

    #[test]
    fn velocities_match_examples() {
        // linear: (x_t - x0)/t at x_t = (1, 2), t = 0.5 -> endpoint (2, 4)
        let spec = TrajectorySpec::linear(2);
        let a = AnchorSet::single(vec![0.0, 0.0], vec![2.0, 4.0]);
        assert_eq!(position(&spec, &a, 0.5).unwrap(), vec![1.0, 2.0]);
        assert_eq!(velocity(&spec, &a, 0.5).unwrap(), vec![2.0, 4.0]);
        let mut out = [0.0; 2];
        conditional_velocity(&spec, &[0.0, 0.0], &[1.0, 2.0], 0.5, &mut out).unwrap();
        assert_eq!(out, [2.0, 4.0]);

        let curve = TrajectorySpec::curve(1, 2.0);
        assert_eq!(
            velocity(&curve, &anchors1(0.0, 1.0), 0.5).unwrap(),
            vec![1.0]
        );

        #[derive(Debug)]
        struct FixedMeanSigmaT;
        impl BridgeSchedule for FixedMeanSigmaT {
            fn mean(&self, _t: f64, x0: &[f64], out: &mut [f64]) {
                out.copy_from_slice(x0);
            }
            fn mean_rate(&self, _t: f64, _x0: &[f64], out: &mut [f64]) {
                out.fill(0.0);
            }
            fn sigma(&self, t: f64) -> f64 {
                t
            }
            fn sigma_rate(&self, _t: f64) -> f64 {
                1.0
            }
        }
        let g = TrajectorySpec::gaussian(1, Bridge::Custom(Arc::new(FixedMeanSigmaT)));
        g.validate().unwrap();
        let mut out = [0.0];
        conditional_velocity(&g, &[0.0], &[3.0], 0.5, &mut out).unwrap();
        assert!((out[0] - 6.0).abs() < 1e-15);
        // the path through x_t = 3 at t = 0.5 has endpoint 6
        assert_eq!(velocity(&g, &anchors1(0.0, 6.0), 0.5).unwrap(), vec![6.0]);
    }

    #[test]
    fn velocity_guard_below_t_min() {
        let spec = TrajectorySpec::linear(1);
        let err = velocity(&spec, &anchors1(0.0, 1.0), 1e-4).unwrap_err();
        assert!(matches!(err, Error::Singularity(_)), "{err}");
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let spec = TrajectorySpec::linear(2);
        let err = position(&spec, &anchors1(0.0, 1.0), 0.5).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
        let sup = TrajectorySpec::superposed(1, 3);
        assert!(position(&sup, &anchors1(0.0, 1.0), 0.5).is_err());
    }

    #[test]
    fn kernel_examples() {
        let prior = PriorSpec::gaussian(1.0);
        let p1 = TrajectorySpec::poisson(1, 1.0 / PI);
        let k = conditional_kernel(&p1, &prior, &[0.3], &[0.3], 1.0).unwrap();
        assert!((k - 1.0 / PI).abs() < 1e-15);

        let p2 = TrajectorySpec::poisson(2, 1.0);
        let k = conditional_kernel(&p2, &prior, &[0.0, 0.0], &[3.0, 4.0], 1.0).unwrap();
        assert!((k - 26f64.powf(-1.5)).abs() < 1e-15);
        assert!((k - 7.543e-3).abs() < 1e-6);

        // linear at t = T is the prior density at x_t, whatever x0 is
        let lin = TrajectorySpec::linear(2);
        let a = conditional_kernel(&lin, &prior, &[5.0, -1.0], &[0.2, 0.1], 1.0).unwrap();
        let b = conditional_kernel(&lin, &prior, &[-3.0, 2.0], &[0.2, 0.1], 1.0).unwrap();
        let want = (-(0.04 + 0.01) / 2.0f64).exp() / (2.0 * PI);
        assert!((a - want).abs() < 1e-15 && (b - want).abs() < 1e-15);
    }

    #[test]
    fn superposed_kernel_needs_gaussian_prior() {
        let spec = TrajectorySpec::superposed(1, 2);
        let prior = PriorSpec::uniform_ball(1.0);
        assert!(log_conditional_kernel(&spec, &prior, &[0.0], &[0.0], 0.5).is_err());
    }

    #[test]
    fn poisson_full_examples() {
        assert_eq!(
            poisson_kernel_full(2, 1.0, 1.0, &[0.5, 0.5], &[0.5, 0.5]).unwrap(),
            vec![1.0, 0.0, 0.0]
        );
        assert_eq!(
            poisson_kernel_full(1, 1.0, 1.0, &[1.0], &[0.0]).unwrap(),
            vec![0.5, 0.5]
        );
        let a = poisson_kernel_full(2, 1.0, 0.7, &[0.3, -0.2], &[0.0, 0.0]).unwrap();
        let b = poisson_kernel_full(2, 1.0, 0.7, &[-0.3, 0.2], &[0.0, 0.0]).unwrap();
        assert_eq!(a[0], b[0]);
        assert_eq!(a[1], -b[1]);
        assert_eq!(a[2], -b[2]);
        assert!(matches!(
            poisson_kernel_full(1, 1.0, 0.0, &[1.0], &[1.0]),
            Err(Error::Singularity(_))
        ));
    }

    #[test]
    fn validation_catches_bad_specs() {
        let mut s = TrajectorySpec::linear(2);
        s.t_min = 2.0;
        assert!(s.validate().is_err());
        let s = TrajectorySpec::curve(2, 0.5);
        assert!(s.validate().is_err());
        let s = TrajectorySpec::gaussian(
            2,
            Bridge::Linear {
                sigma_min: 1.0,
                sigma_max: 0.5,
            },
        );
        assert!(s.validate().is_err());
    }

    fn random_anchors(spec: &TrajectorySpec, rng: &mut impl Rng) -> AnchorSet {
        let mut v = || {
            (0..spec.dim)
                .map(|_| rng.random_range(-2.0..2.0))
                .collect::<Vec<f64>>()
        };
        let x0 = v();
        let endpoints = (0..spec.endpoint_count()).map(|_| v()).collect();
        AnchorSet::new(x0, endpoints)
    }

    fn all_specs(dim: usize) -> Vec<TrajectorySpec> {
        vec![
            TrajectorySpec::linear(dim),
            TrajectorySpec::poisson(dim, 1.0),
            TrajectorySpec::curve(dim, 2.5),
            TrajectorySpec::gaussian(dim, Bridge::default()),
            TrajectorySpec::superposed(dim, 4),
        ]
    }

    #[test]
    fn initial_and_final_conditions() {
        let mut rng = stream(1, "test", 0);
        for spec in all_specs(3) {
            for _ in 0..10 {
                let a = random_anchors(&spec, &mut rng);
                let p0 = position(&spec, &a, 0.0).unwrap();
                let pt = position(&spec, &a, spec.horizon).unwrap();
                if spec.family == Family::GaussianBridge {
                    // sigma(0) = sigma_min leaves a residual offset
                    for ((p, x), e) in p0.iter().zip(&a.x0).zip(&a.endpoints[0]) {
                        assert!((p - x - 0.01 * e).abs() < 1e-15);
                    }
                    for (p, e) in pt.iter().zip(&a.endpoints[0]) {
                        assert!((p - e).abs() < 1e-15);
                    }
                } else {
                    assert_eq!(p0, a.x0, "{}", spec.family);
                    let last = a.endpoints.last().unwrap();
                    for (p, e) in pt.iter().zip(last) {
                        assert!((p - e).abs() < 1e-14, "{}", spec.family);
                    }
                }
            }
        }
    }

    #[test]
    fn velocity_matches_central_differences() {
        let mut rng = stream(2, "test", 0);
        for spec in all_specs(2) {
            for _ in 0..100 {
                let a = random_anchors(&spec, &mut rng);
                let t = rng.random_range(0.05..0.95);
                let h = 1e-5;
                let v = velocity(&spec, &a, t).unwrap();
                let p = position(&spec, &a, t + h).unwrap();
                let m = position(&spec, &a, t - h).unwrap();
                for k in 0..spec.dim {
                    let fd = (p[k] - m[k]) / (2.0 * h);
                    let scale = v[k].abs().max(1.0);
                    assert!(
                        (fd - v[k]).abs() / scale < 1e-6,
                        "{}: fd {fd} vs {}",
                        spec.family,
                        v[k]
                    );
                }
            }
        }
    }

    #[test]
    fn conditional_velocity_agrees_with_path_velocity() {
        let mut rng = stream(3, "test", 0);
        for spec in all_specs(2) {
            if spec.family == Family::SuperposedLinear {
                continue;
            }
            for _ in 0..20 {
                let a = random_anchors(&spec, &mut rng);
                let t = rng.random_range(0.01..1.0);
                let x_t = position(&spec, &a, t).unwrap();
                let v = velocity(&spec, &a, t).unwrap();
                let mut c = vec![0.0; 2];
                conditional_velocity(&spec, &a.x0, &x_t, t, &mut c).unwrap();
                for k in 0..2 {
                    assert!((c[k] - v[k]).abs() < 1e-9 * v[k].abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn superposed_with_one_overlap_is_linear() {
        let lin = TrajectorySpec::linear(2);
        let sup = TrajectorySpec::superposed(2, 1);
        let (mut a, mut b) = ([0.0; 2], [0.0; 2]);
        conditional_velocity(&lin, &[0.5, -1.0], &[0.1, 0.3], 0.37, &mut a).unwrap();
        conditional_velocity(&sup, &[0.5, -1.0], &[0.1, 0.3], 0.37, &mut b).unwrap();
        for k in 0..2 {
            assert!((a[k] - b[k]).abs() < 1e-12);
        }
        let prior = PriorSpec::gaussian(1.0);
        let ka = log_conditional_kernel(&lin, &prior, &[0.5, -1.0], &[0.1, 0.3], 0.37).unwrap();
        let kb = log_conditional_kernel(&sup, &prior, &[0.5, -1.0], &[0.1, 0.3], 0.37).unwrap();
        assert!((ka - kb).abs() < 1e-12);
    }

    #[test]
    fn linear_divergence_is_dim_over_t() {
        let mut rng = stream(4, "test", 0);
        let d = 3;
        let spec = TrajectorySpec::linear(d);
        for _ in 0..20 {
            let x0: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let t = rng.random_range(0.05..1.0);
            let h = 1e-4;
            let mut div = 0.0;
            let (mut fp, mut fm) = (vec![0.0; d], vec![0.0; d]);
            for k in 0..d {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[k] += h;
                xm[k] -= h;
                conditional_velocity(&spec, &x0, &xp, t, &mut fp).unwrap();
                conditional_velocity(&spec, &x0, &xm, t, &mut fm).unwrap();
                div += (fp[k] - fm[k]) / (2.0 * h);
            }
            let want = d as f64 / t;
            assert!((div - want).abs() / want < 1e-5, "{div} vs {want}");
        }
    }

    #[test]
    fn poisson_kernel_is_divergence_free_away_from_source() {
        let mut rng = stream(5, "test", 0);
        let d = 2;
        let x0 = [0.2, -0.4];
        let h = 1e-4;
        for _ in 0..50 {
            let t = rng.random_range(0.1..2.0);
            let x: Vec<f64> = (0..d)
                .map(|k| x0[k] + rng.random_range(-2.0..2.0))
                .collect();
            let r = (t * t + dist_sq(&x, &x0)).sqrt();
            if r <= 0.1 {
                continue;
            }
            let mut div = 0.0;
            let kp = poisson_kernel_full(d, 1.0, t + h, &x, &x0).unwrap();
            let km = poisson_kernel_full(d, 1.0, t - h, &x, &x0).unwrap();
            div += (kp[0] - km[0]) / (2.0 * h);
            for k in 0..d {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[k] += h;
                xm[k] -= h;
                let kp = poisson_kernel_full(d, 1.0, t, &xp, &x0).unwrap();
                let km = poisson_kernel_full(d, 1.0, t, &xm, &x0).unwrap();
                div += (kp[k + 1] - km[k + 1]) / (2.0 * h);
            }
            let kn = crate::norm(&poisson_kernel_full(d, 1.0, t, &x, &x0).unwrap());
            assert!(div.abs() < 1e-4 * kn / r, "div {div} at R={r}");
        }
    }

    #[test]
    fn linear_paths_are_collinear() {
        let mut rng = stream(6, "test", 0);
        let spec = TrajectorySpec::linear(3);
        for _ in 0..20 {
            let a = random_anchors(&spec, &mut rng);
            let chord: Vec<f64> = a.endpoints[0]
                .iter()
                .zip(&a.x0)
                .map(|(e, x)| e - x)
                .collect();
            let len2 = norm_sq(&chord);
            for k in 1..20 {
                let p = position(&spec, &a, k as f64 / 20.0).unwrap();
                let rel: Vec<f64> = p.iter().zip(&a.x0).map(|(p, x)| p - x).collect();
                let proj = rel.iter().zip(&chord).map(|(r, c)| r * c).sum::<f64>() / len2;
                let off: f64 = rel
                    .iter()
                    .zip(&chord)
                    .map(|(r, c)| (r - proj * c).powi(2))
                    .sum::<f64>()
                    .sqrt();
                assert!(off < 1e-9);
            }
        }
    }
}
