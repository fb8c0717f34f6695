//! Terminal priors and training-pair generation.
//!
//! The Poisson family draws `(x_t, t)` through the Gaussian-ratio construction: with
//! `(e_x, e_t)` Gaussian in `d + 1` dimensions, `|e_x| / |e_t|` has radial law
//! `r^(d-1) / (1 + r^2)^((d+1)/2)` (see [`radial_density`]). The other families draw
//! `t` uniformly on `[t_min, T]` and endpoints from the terminal prior.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, Error, Result};
use crate::quadrature::{adaptive_simpson, gauss_legendre};
use crate::trajectory::{position, velocity, AnchorSet, Family, TrajectorySpec};
use crate::{norm, norm_sq};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriorKind {
    PfgmRadial,
    StandardGaussian,
    UniformBall,
}

impl PriorKind {
    pub fn name(self) -> &'static str {
        match self {
            PriorKind::PfgmRadial => "pfgm",
            PriorKind::StandardGaussian => "gaussian",
            PriorKind::UniformBall => "ball",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "pfgm" => Ok(PriorKind::PfgmRadial),
            "gaussian" => Ok(PriorKind::StandardGaussian),
            "ball" => Ok(PriorKind::UniformBall),
            other => Err(Error::invalid(format!(
                "unknown prior `{other}` (expected pfgm, gaussian or ball)"
            ))),
        }
    }
}

/// Terminal prior `d_T` and the perturbation parameters of the radial sampler.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorSpec {
    pub kind: PriorKind,
    /// Gaussian scale of `(e_x, e_t)`, or the standard deviation of the Gaussian prior.
    pub sigma: f64,
    /// Exponential growth rate.
    pub tau: f64,
    /// Upper bound of the growth exponent, `m ~ U[0, M]`.
    pub max_exponent: f64,
    pub radius: f64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec::gaussian(1.0)
    }
}

impl PriorSpec {
    pub fn gaussian(sigma: f64) -> Self {
        PriorSpec {
            kind: PriorKind::StandardGaussian,
            sigma,
            tau: 0.0,
            max_exponent: 0.0,
            radius: 1.0,
        }
    }

    pub fn uniform_ball(radius: f64) -> Self {
        PriorSpec {
            kind: PriorKind::UniformBall,
            radius,
            ..PriorSpec::gaussian(1.0)
        }
    }

    pub fn pfgm(sigma: f64, tau: f64, max_exponent: f64) -> Self {
        PriorSpec {
            kind: PriorKind::PfgmRadial,
            sigma,
            tau,
            max_exponent,
            radius: 1.0,
        }
    }

    /// Prior used when none is configured: radial for the Poisson family, Gaussian otherwise.
    pub fn default_for(family: Family) -> Self {
        match family {
            Family::PoissonIsotropic => PriorSpec::pfgm(1.0, 0.0, 0.0),
            _ => PriorSpec::gaussian(1.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.sigma > 0.0) {
            problems.push(format!("prior sigma must be > 0, got {}", self.sigma));
        }
        if !(self.tau >= 0.0) {
            problems.push(format!("prior tau must be >= 0, got {}", self.tau));
        }
        if !(self.max_exponent >= 0.0) {
            problems.push(format!(
                "prior max_exponent must be >= 0, got {}",
                self.max_exponent
            ));
        }
        if !(self.radius > 0.0) {
            problems.push(format!("prior radius must be > 0, got {}", self.radius));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidInput(problems.join("; ")))
        }
    }

    /// Extra endpoint scale `(1 + tau)^n` of the curve family, with `n` the curve exponent.
    pub fn endpoint_scale(&self, spec: &TrajectorySpec) -> f64 {
        match spec.family {
            Family::Curve => (1.0 + self.tau).powf(spec.curve_exponent),
            _ => 1.0,
        }
    }

    /// Draw one terminal state `x_T`.
    pub fn sample_terminal<R: Rng + ?Sized>(&self, spec: &TrajectorySpec, rng: &mut R) -> Vec<f64> {
        let d = spec.dim;
        let scale = self.endpoint_scale(spec);
        let mut x = match self.kind {
            PriorKind::StandardGaussian => gaussian_vec(d, self.sigma, rng),
            PriorKind::UniformBall => {
                let u = unit_sphere(d, rng);
                let r = self.radius * rng.random::<f64>().powf(1.0 / d as f64);
                u.into_iter().map(|c| c * r).collect()
            }
            PriorKind::PfgmRadial => {
                let ex = gaussian_vec(d, 1.0, rng);
                let et: f64 = rng.sample::<f64, _>(StandardNormal).abs();
                ex.into_iter().map(|c| spec.horizon * c / et).collect()
            }
        };
        if scale != 1.0 {
            x.iter_mut().for_each(|c| *c *= scale);
        }
        x
    }

    /// Log density of the terminal prior, matching [`PriorSpec::sample_terminal`].
    pub fn log_terminal_density(&self, spec: &TrajectorySpec, y: &[f64]) -> f64 {
        let d = y.len() as f64;
        let scale = self.endpoint_scale(spec);
        let r2 = norm_sq(y) / (scale * scale);
        let jac = d * scale.ln();
        let base = match self.kind {
            PriorKind::StandardGaussian => {
                let s2 = self.sigma * self.sigma;
                -0.5 * r2 / s2 - 0.5 * d * (2.0 * PI * s2).ln()
            }
            PriorKind::UniformBall => {
                if r2 > self.radius * self.radius {
                    f64::NEG_INFINITY
                } else {
                    let log_vol =
                        0.5 * d * PI.ln() + d * self.radius.ln() - libm::lgamma(0.5 * d + 1.0);
                    -log_vol
                }
            }
            PriorKind::PfgmRadial => {
                let t = spec.horizon;
                log_poisson_constant(y.len()) + t.ln() - 0.5 * (d + 1.0) * (t * t + r2).ln()
            }
        };
        base - jac
    }
}

/// `ln A_d` with `A_d = Gamma((d+1)/2) / pi^((d+1)/2)`, the constant that normalizes the
/// Poisson kernel over `x` at fixed `t`.
pub fn log_poisson_constant(d: usize) -> f64 {
    let h = 0.5 * (d as f64 + 1.0);
    libm::lgamma(h) - h * PI.ln()
}

fn gaussian_vec<R: Rng + ?Sized>(d: usize, sigma: f64, rng: &mut R) -> Vec<f64> {
    (0..d)
        .map(|_| sigma * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

fn unit_sphere<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let g = gaussian_vec(d, 1.0, rng);
        let n = norm(&g);
        if n > 1e-300 {
            return g.into_iter().map(|c| c / n).collect();
        }
    }
}

/// Uniform direction on the unit sphere in `R^d` (normalized Gaussian).
pub fn sample_unit_sphere<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Result<Vec<f64>> {
    if d == 0 {
        return Err(Error::invalid("sphere dimension must be >= 1"));
    }
    Ok(unit_sphere(d, rng))
}

/// Radial perturbation `x_t = x0 + |e_x| (1+tau)^m u`, `t = |e_t| (1+tau)^m`, with
/// `(e_x, e_t) ~ N(0, sigma^2 I_{d+1})` and `m ~ U[0, M]`.
pub fn sample_pfgm<R: Rng + ?Sized>(
    x0: &[f64],
    prior: &PriorSpec,
    rng: &mut R,
) -> Result<(Vec<f64>, f64)> {
    if prior.kind != PriorKind::PfgmRadial {
        return Err(Error::invalid("sample_pfgm needs a pfgm prior"));
    }
    let d = x0.len();
    let ex = gaussian_vec(d, prior.sigma, rng);
    let et = prior.sigma * rng.sample::<f64, _>(StandardNormal);
    let m = if prior.max_exponent > 0.0 {
        rng.random_range(0.0..=prior.max_exponent)
    } else {
        0.0
    };
    let growth = (1.0 + prior.tau).powf(m);
    let u = sample_unit_sphere(d, rng)?;
    let r = norm(&ex) * growth;
    let x_t = x0.iter().zip(&u).map(|(a, b)| a + r * b).collect();
    Ok((x_t, et.abs() * growth))
}

/// One regression sample for the field network.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub x0: Vec<f64>,
    pub anchors: AnchorSet,
    pub t: f64,
    pub x_t: Vec<f64>,
    /// Conditional velocity at `(x_t, t)`.
    pub target: Vec<f64>,
}

/// Training pair for the path families: `t ~ U[t_min, T]`, endpoints from `d_T`.
pub fn sample_linear_or_curve<R: Rng + ?Sized>(
    x0: &[f64],
    prior: &PriorSpec,
    spec: &TrajectorySpec,
    rng: &mut R,
) -> Result<TrainingPair> {
    let t = rng.random_range(spec.t_min..=spec.horizon);
    sample_pair_at(x0, prior, spec, t, rng)
}

/// As [`sample_linear_or_curve`] with `t` given.
pub fn sample_pair_at<R: Rng + ?Sized>(
    x0: &[f64],
    prior: &PriorSpec,
    spec: &TrajectorySpec,
    t: f64,
    rng: &mut R,
) -> Result<TrainingPair> {
    check_dim("x0", x0.len(), spec.dim)?;
    if spec.family == Family::PoissonIsotropic {
        return poisson_pair_at(x0, spec, t, rng);
    }
    let endpoints = (0..spec.endpoint_count())
        .map(|_| prior.sample_terminal(spec, rng))
        .collect();
    let anchors = AnchorSet::new(x0.to_vec(), endpoints);
    let x_t = position(spec, &anchors, t)?;
    let target = velocity(spec, &anchors, t)?;
    Ok(TrainingPair {
        x0: x0.to_vec(),
        anchors,
        t,
        x_t,
        target,
    })
}

// Given t, `x0 + t e_x / |e_t|` is distributed as the normalized Poisson kernel at t.
fn poisson_pair_at<R: Rng + ?Sized>(
    x0: &[f64],
    spec: &TrajectorySpec,
    t: f64,
    rng: &mut R,
) -> Result<TrainingPair> {
    let d = spec.dim;
    let ex = gaussian_vec(d, 1.0, rng);
    let et: f64 = rng.sample::<f64, _>(StandardNormal).abs();
    let u = sample_unit_sphere(d, rng)?;
    let r = norm(&ex) / et;
    let x_t: Vec<f64> = x0.iter().zip(&u).map(|(a, b)| a + t * r * b).collect();
    let endpoint: Vec<f64> = x0
        .iter()
        .zip(&u)
        .map(|(a, b)| a + spec.horizon * r * b)
        .collect();
    let anchors = AnchorSet::single(x0.to_vec(), endpoint);
    let target = velocity(spec, &anchors, t)?;
    Ok(TrainingPair {
        x0: x0.to_vec(),
        anchors,
        t,
        x_t,
        target,
    })
}

/// Training pair for any family.
pub fn sample_training_pair<R: Rng + ?Sized>(
    x0: &[f64],
    prior: &PriorSpec,
    spec: &TrajectorySpec,
    rng: &mut R,
) -> Result<TrainingPair> {
    sample_linear_or_curve(x0, prior, spec, rng)
}

/// Unnormalized density of `r = |e_x| / |e_t|`: `r^(d-1) / (1 + r^2)^((d+1)/2)`.
pub fn radial_density(r: f64, d: usize) -> f64 {
    if r < 0.0 || d == 0 {
        return 0.0;
    }
    let dd = d as f64;
    r.powi(d as i32 - 1) / (1.0 + r * r).powf(0.5 * (dd + 1.0))
}

/// CDF of the radial law obtained by numerical integration.
///
/// With `r = tan(theta)` the density becomes `sin(theta)^(d-1)` on `[0, pi/2)`, so the
/// CDF is a ratio of two smooth one-dimensional integrals.
#[derive(Debug, Clone, Copy)]
pub struct RadialLaw {
    dim: usize,
    total: f64,
}

impl RadialLaw {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("radial law needs d >= 1"));
        }
        let q = adaptive_simpson(
            |th: f64| th.sin().powi(dim as i32 - 1),
            0.0,
            0.5 * PI,
            1e-13,
            1 << 20,
        );
        Ok(RadialLaw {
            dim,
            total: q.value,
        })
    }

    pub fn cdf(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        let th = r.atan();
        let k = self.dim as i32 - 1;
        let panels = 1 + (th * 64.0) as usize;
        (gauss_legendre(|x: f64| x.sin().powi(k), 0.0, th, panels) / self.total).min(1.0)
    }

    /// CDF at every point of an ascending slice, integrating between neighbours.
    pub fn cdf_sorted(&self, sorted: &[f64]) -> Vec<f64> {
        let k = self.dim as i32 - 1;
        let mut acc = 0.0;
        let mut prev = 0.0;
        sorted
            .iter()
            .map(|&r| {
                let th = r.max(0.0).atan();
                if th > prev {
                    let panels = 1 + ((th - prev) * 64.0) as usize;
                    acc += gauss_legendre(|x: f64| x.sin().powi(k), prev, th, panels);
                    prev = th;
                }
                (acc / self.total).min(1.0)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::ks_statistic_sorted;
    use crate::rng::stream;

    #[test]
    fn sphere_draws_have_unit_norm() {
        let mut rng = stream(1, "sphere", 0);
        for d in 1..6 {
            for _ in 0..100 {
                let u = sample_unit_sphere(d, &mut rng).unwrap();
                assert!((norm(&u) - 1.0).abs() < 1e-12);
            }
        }
        assert!(sample_unit_sphere(0, &mut rng).is_err());
    }

    #[test]
    fn sphere_in_one_dimension_is_a_fair_sign() {
        let mut rng = stream(2, "sphere", 0);
        let n = 20_000;
        let plus = (0..n)
            .filter(|_| sample_unit_sphere(1, &mut rng).unwrap()[0] > 0.0)
            .count() as f64;
        let sd = (n as f64 * 0.25).sqrt();
        assert!((plus - n as f64 / 2.0).abs() < 4.0 * sd);
    }

    #[test]
    fn sphere_coordinates_are_centred() {
        let mut rng = stream(3, "sphere", 0);
        let n = 100_000;
        let mut mean = [0.0; 3];
        for _ in 0..n {
            let u = sample_unit_sphere(3, &mut rng).unwrap();
            for k in 0..3 {
                mean[k] += u[k] / n as f64;
            }
        }
        let bound = 3.0 / (3.0 * n as f64).sqrt();
        for m in mean {
            assert!(m.abs() < bound, "{m} vs {bound}");
        }
    }

    #[test]
    fn pfgm_without_growth() {
        let x0 = [0.5, -0.5];
        for prior in [
            PriorSpec::pfgm(1.0, 0.0, 100.0),
            PriorSpec::pfgm(1.0, 0.05, 0.0),
        ] {
            let mut a = stream(4, "pfgm", 0);
            let mut b = stream(4, "pfgm", 0);
            let (x, t) = sample_pfgm(&x0, &prior, &mut a).unwrap();
            // replay the same draws by hand
            let ex = gaussian_vec(2, 1.0, &mut b);
            let et: f64 = b.sample::<f64, _>(StandardNormal);
            if prior.max_exponent > 0.0 {
                let _: f64 = b.random_range(0.0..=prior.max_exponent);
            }
            let u = unit_sphere(2, &mut b);
            assert_eq!(t, et.abs());
            for k in 0..2 {
                assert!((x[k] - (x0[k] + norm(&ex) * u[k])).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn pfgm_is_deterministic_under_seed() {
        let prior = PriorSpec::pfgm(1.0, 0.05, 100.0);
        let a = sample_pfgm(&[0.0; 3], &prior, &mut stream(9, "pfgm", 1)).unwrap();
        let b = sample_pfgm(&[0.0; 3], &prior, &mut stream(9, "pfgm", 1)).unwrap();
        assert_eq!(a, b);
        assert!(sample_pfgm(
            &[0.0; 3],
            &PriorSpec::gaussian(1.0),
            &mut stream(9, "pfgm", 1)
        )
        .is_err());
    }

    #[test]
    fn stored_pairs_are_consistent() {
        let prior = PriorSpec::gaussian(1.0);
        let mut rng = stream(5, "pairs", 0);
        for spec in [
            TrajectorySpec::linear(2),
            TrajectorySpec::curve(2, 3.0),
            TrajectorySpec::superposed(2, 3),
            TrajectorySpec::poisson(2, 1.0),
        ] {
            for _ in 0..20 {
                let p = sample_training_pair(&[0.3, 0.1], &prior, &spec, &mut rng).unwrap();
                assert!(p.t >= spec.t_min && p.t <= spec.horizon);
                let x = position(&spec, &p.anchors, p.t).unwrap();
                if spec.family == Family::PoissonIsotropic {
                    for k in 0..2 {
                        assert!((x[k] - p.x_t[k]).abs() < 1e-12);
                    }
                } else {
                    assert_eq!(x, p.x_t);
                }
                assert_eq!(velocity(&spec, &p.anchors, p.t).unwrap(), p.target);
            }
        }
    }

    #[test]
    fn superposed_pair_at_horizon_is_last_endpoint() {
        let spec = TrajectorySpec::superposed(2, 2);
        let p = sample_pair_at(
            &[1.0, 2.0],
            &PriorSpec::gaussian(1.0),
            &spec,
            1.0,
            &mut stream(6, "p", 0),
        )
        .unwrap();
        assert_eq!(p.x_t, p.anchors.endpoints[1]);
    }

    fn gaussian_cdf(x: f64) -> f64 {
        0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
    }

    #[test]
    fn linear_pairs_at_horizon_follow_prior() {
        let spec = TrajectorySpec::linear(2);
        let prior = PriorSpec::gaussian(1.0);
        let n = 100_000;
        let mut cols = [Vec::with_capacity(n), Vec::with_capacity(n)];
        for i in 0..n {
            let mut rng = stream(7, "ks", i as u64);
            let p = sample_pair_at(&[3.0, -2.0], &prior, &spec, 1.0, &mut rng).unwrap();
            cols[0].push(p.x_t[0]);
            cols[1].push(p.x_t[1]);
        }
        let crit = 1.63 / (n as f64).sqrt();
        for mut c in cols {
            c.sort_by(f64::total_cmp);
            let cdf: Vec<f64> = c.iter().map(|&x| gaussian_cdf(x)).collect();
            let ks = ks_statistic_sorted(&cdf);
            assert!(ks < crit, "ks {ks} vs {crit}");
        }
    }

    #[test]
    fn radial_density_basics() {
        assert_eq!(radial_density(0.0, 2), 0.0);
        assert_eq!(radial_density(0.0, 3), 0.0);
        assert_eq!(radial_density(0.0, 1), 1.0);
        // numeric maximizer for d = 2 via golden-section search
        let f = |r: f64| -radial_density(r, 2);
        let (mut a, mut b) = (0.0, 5.0);
        let g = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let c = b - g * (b - a);
            let d = a + g * (b - a);
            if f(c) < f(d) {
                b = d;
            } else {
                a = c;
            }
        }
        assert!((0.5 * (a + b) - 0.5f64.sqrt()).abs() < 1e-6);
    }

    #[test]
    fn radial_cdf_matches_closed_forms() {
        // d = 1: (2/pi) atan(r); d = 2: 1 - 1/sqrt(1 + r^2)
        let l1 = RadialLaw::new(1).unwrap();
        let l2 = RadialLaw::new(2).unwrap();
        for r in [0.1, 0.5, 1.0, 3.0, 40.0] {
            assert!((l1.cdf(r) - 2.0 / PI * r.atan()).abs() < 1e-10);
            assert!((l2.cdf(r) - (1.0 - 1.0 / (1.0 + r * r).sqrt())).abs() < 1e-10);
        }
        let pts = [0.1, 0.5, 1.0, 3.0, 40.0];
        let sorted = l2.cdf_sorted(&pts);
        for (r, c) in pts.iter().zip(sorted) {
            assert!((c - l2.cdf(*r)).abs() < 1e-12);
        }
    }
}
