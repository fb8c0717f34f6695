//! Numerical checks of the identities the field construction rests on.
//!
//! Each check returns a [`CheckRecord`] with the estimate, the tolerance it was held to
//! and the seed that produced it. Every check has a negative control that feeds in a
//! deliberately wrong ingredient and must fail.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::metrics::ks_statistic_sorted;
use crate::quadrature::{adaptive_simpson, gauss_legendre};
use crate::rng::stream;
use crate::sampler::{log_poisson_constant, sample_unit_sphere, PriorSpec, RadialLaw};
use crate::trajectory::{
    conditional_kernel, conditional_velocity, poisson_kernel_with_exponent, TrajectorySpec,
};
use crate::{dist_sq, norm, norm_sq};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckRecord {
    pub name: String,
    pub estimate: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub seed: u64,
}

impl CheckRecord {
    pub const CSV_HEADER: &'static str = "name,estimate,tolerance,pass,seed";

    /// Record for an upper-bound check: passes when `estimate < tolerance`.
    pub fn below(name: impl Into<String>, estimate: f64, tolerance: f64, seed: u64) -> Self {
        CheckRecord {
            name: name.into(),
            estimate,
            tolerance,
            pass: estimate < tolerance,
            seed,
        }
    }

    /// Negative control: passes when `estimate > tolerance`.
    pub fn above(name: impl Into<String>, estimate: f64, tolerance: f64, seed: u64) -> Self {
        CheckRecord {
            name: name.into(),
            estimate,
            tolerance,
            pass: estimate > tolerance,
            seed,
        }
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.6e},{:.6e},{},{}",
            self.name, self.estimate, self.tolerance, self.pass, self.seed
        )
    }
}

pub fn records_to_csv(records: &[CheckRecord]) -> String {
    let mut s = String::from(CheckRecord::CSV_HEADER);
    s.push('\n');
    for r in records {
        writeln!(s, "{}", r.csv_row()).unwrap();
    }
    s
}

/// Thresholds of the verification suite. The shipped defaults live in `configs/verify.cfg`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tolerances {
    pub normalization_rel: f64,
    pub divergence: f64,
    pub divergence_control: f64,
    pub continuity: f64,
    pub continuity_control: f64,
    pub radial_ks: f64,
    pub radial_control: f64,
    pub divergence_points: usize,
    pub divergence_step: f64,
    pub continuity_step: f64,
    pub radial_samples: usize,
    pub normalization_evals: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            normalization_rel: 5e-3,
            divergence: 1e-3,
            divergence_control: 0.1,
            continuity: 1e-4,
            continuity_control: 0.01,
            radial_ks: 0.01,
            radial_control: 0.05,
            divergence_points: 1000,
            divergence_step: 1e-5,
            continuity_step: 1e-4,
            radial_samples: 100_000,
            normalization_evals: 8_000_000,
        }
    }
}

impl Tolerances {
    pub const KEYS: [&'static str; 12] = [
        "normalization_rel",
        "divergence",
        "divergence_control",
        "continuity",
        "continuity_control",
        "radial_ks",
        "radial_control",
        "divergence_points",
        "divergence_step",
        "continuity_step",
        "radial_samples",
        "normalization_evals",
    ];

    /// Sets one threshold by name from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let real = || -> Result<f64> {
            let v: f64 = value
                .parse()
                .map_err(|_| Error::invalid(format!("{key}: `{value}` is not a number")))?;
            if v > 0.0 && v.is_finite() {
                Ok(v)
            } else {
                Err(Error::invalid(format!("{key} must be positive")))
            }
        };
        let count = || -> Result<usize> {
            match value.parse::<usize>() {
                Ok(v) if v > 0 => Ok(v),
                _ => Err(Error::invalid(format!(
                    "{key}: `{value}` is not a positive integer"
                ))),
            }
        };
        match key {
            "normalization_rel" => self.normalization_rel = real()?,
            "divergence" => self.divergence = real()?,
            "divergence_control" => self.divergence_control = real()?,
            "continuity" => self.continuity = real()?,
            "continuity_control" => self.continuity_control = real()?,
            "radial_ks" => self.radial_ks = real()?,
            "radial_control" => self.radial_control = real()?,
            "divergence_points" => self.divergence_points = count()?,
            "divergence_step" => self.divergence_step = real()?,
            "continuity_step" => self.continuity_step = real()?,
            "radial_samples" => self.radial_samples = count()?,
            "normalization_evals" => self.normalization_evals = count()?,
            _ => return Err(Error::invalid(format!("unknown tolerance `{key}`"))),
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormalizationMethod {
    Quadrature,
    ImportanceSampling,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationEstimate {
    /// Estimated constant `A = 1 / integral`.
    pub a: f64,
    pub std_error: f64,
    pub integral: f64,
    pub evals: usize,
    pub method: NormalizationMethod,
}

/// Closed form `Gamma((d+1)/2) / pi^((d+1)/2)`.
pub fn poisson_constant_exact(d: usize) -> f64 {
    log_poisson_constant(d).exp()
}

/// Estimates `A` such that `A ∫ t / (t² + |y - x0|²)^((d+1)/2) dy = 1` at the given
/// evaluation point. The integral is independent of `(t, x0)`; evaluating it at
/// different points is a consistency check.
///
/// `d <= 2` uses quadrature in `tan`-mapped coordinates, larger `d` uses importance
/// sampling from a heavy-tailed multivariate Student-t proposal.
pub fn normalization_constant(
    d: usize,
    t: f64,
    x0: &[f64],
    rel_tol: f64,
    max_evals: usize,
    seed: u64,
) -> Result<NormalizationEstimate> {
    if !(1..=16).contains(&d) {
        return Err(Error::invalid(format!("d must lie in [1, 16], got {d}")));
    }
    if !(t > 0.0) || x0.len() != d {
        return Err(Error::invalid(
            "need t > 0 and a d-dimensional source point",
        ));
    }
    if !(rel_tol > 0.0) {
        return Err(Error::invalid("rel_tol must be positive"));
    }
    let hp = 0.5 * (d as f64 + 1.0);
    let f = |y: &[f64]| t / (t * t + dist_sq(y, x0)).powf(hp);
    let (integral, err, evals, method) = match d {
        1 => {
            let q = adaptive_simpson(
                |th: f64| {
                    let c = th.cos();
                    if c <= 0.0 {
                        return t; // limit of the mapped integrand at ±pi/2
                    }
                    f(&[th.tan()]) / (c * c)
                },
                -0.5 * PI,
                0.5 * PI,
                rel_tol * 1e-3,
                max_evals,
            );
            if !q.converged {
                return Err(Error::NonConvergence {
                    message: "quadrature budget exhausted".into(),
                    partial: None,
                });
            }
            (q.value, q.error, q.evals, NormalizationMethod::Quadrature)
        }
        2 => {
            // polar coordinates around the origin, r = tan(theta)
            let integrate = |panels: usize| {
                gauss_legendre(
                    |phi: f64| {
                        let (s, c) = phi.sin_cos();
                        gauss_legendre(
                            |th: f64| {
                                let cth = th.cos();
                                if cth <= 0.0 {
                                    return t;
                                }
                                let r = th.tan();
                                f(&[r * c, r * s]) * r / (cth * cth)
                            },
                            0.0,
                            0.5 * PI,
                            panels,
                        )
                    },
                    0.0,
                    2.0 * PI,
                    panels,
                )
            };
            let mut panels = 4;
            let mut prev = integrate(panels);
            let mut evals = 64 * panels * panels;
            loop {
                panels *= 2;
                let cur = integrate(panels);
                evals += 64 * panels * panels;
                let err = (cur - prev).abs();
                if err < rel_tol * 1e-2 * cur.abs() {
                    break (cur, err, evals, NormalizationMethod::Quadrature);
                }
                if evals > max_evals {
                    return Err(Error::NonConvergence {
                        message: format!("quadrature budget exhausted at {panels} panels"),
                        partial: None,
                    });
                }
                prev = cur;
            }
        }
        _ => importance_sample(d, &f, rel_tol, max_evals, seed)?,
    };
    let a = 1.0 / integral;
    Ok(NormalizationEstimate {
        a,
        std_error: a * err / integral,
        integral,
        evals,
        method,
    })
}

fn importance_sample(
    d: usize,
    f: &dyn Fn(&[f64]) -> f64,
    rel_tol: f64,
    max_evals: usize,
    seed: u64,
) -> Result<(f64, f64, usize, NormalizationMethod)> {
    // Student-t with nu < 2 has heavier tails than the integrand, so the weights have
    // finite variance.
    let nu = 0.5;
    let dd = d as f64;
    let log_norm =
        libm::lgamma(0.5 * (nu + dd)) - libm::lgamma(0.5 * nu) - 0.5 * dd * (nu * PI).ln();
    let chi = ChiSquared::new(nu).map_err(|e| Error::invalid(e.to_string()))?;
    let batch = 100_000;
    let (mut sum, mut sum_sq, mut n) = (0.0, 0.0, 0usize);
    let mut y = vec![0.0; d];
    let mut index = 0;
    loop {
        let mut rng = stream(seed, "normalization", index);
        index += 1;
        for _ in 0..batch {
            let w: f64 = chi.sample(&mut rng);
            let scale = (nu / w).sqrt();
            for v in y.iter_mut() {
                *v = scale * rng.sample::<f64, _>(StandardNormal);
            }
            let log_q = log_norm - 0.5 * (nu + dd) * (1.0 + norm_sq(&y) / nu).ln();
            let wgt = f(&y) * (-log_q).exp();
            sum += wgt;
            sum_sq += wgt * wgt;
        }
        n += batch;
        let mean = sum / n as f64;
        let var = (sum_sq / n as f64 - mean * mean).max(0.0);
        let se = (var / n as f64).sqrt();
        if se < 0.25 * rel_tol * mean {
            return Ok((mean, se, n, NormalizationMethod::ImportanceSampling));
        }
        if n >= max_evals {
            return Err(Error::NonConvergence {
                message: format!(
                    "importance sampling reached {n} draws with relative error {:.2e}",
                    se / mean
                ),
                partial: None,
            });
        }
    }
}

/// Finite-difference divergence in `(t, x)` of `A (t, x) / R^(2 half_exponent)` at
/// `n_points` random points with `R` log-uniform in `[0.1, 10]`. Returns the largest
/// `|div| R / |H|`.
pub fn check_divergence_free(
    d: usize,
    a: f64,
    n_points: usize,
    h: f64,
    half_exponent: f64,
    seed: u64,
) -> Result<f64> {
    if d == 0 || n_points == 0 || !(h > 0.0) {
        return Err(Error::invalid("need d >= 1, n_points >= 1 and h > 0"));
    }
    let origin = vec![0.0; d];
    let mut worst: f64 = 0.0;
    for i in 0..n_points {
        let mut rng = stream(seed, "divergence-free", i as u64);
        let r = 10f64.powf(rng.random_range(-1.0..=1.0));
        let mut u = sample_unit_sphere(d + 1, &mut rng)?;
        u[0] = u[0].abs();
        let z: Vec<f64> = u.iter().map(|c| r * c).collect();
        let worst_here = divergence_at(d, a, &z, h, half_exponent, &origin)?;
        worst = worst.max(worst_here);
    }
    Ok(worst)
}

/// Normalized extended-space divergence `|div H| R / |H|` at `z = (t, x)`.
pub fn divergence_at(
    d: usize,
    a: f64,
    z: &[f64],
    h: f64,
    half_exponent: f64,
    x0: &[f64],
) -> Result<f64> {
    let eval = |z: &[f64]| poisson_kernel_with_exponent(d, a, z[0], &z[1..], x0, half_exponent);
    let mut div = 0.0;
    let mut zp = z.to_vec();
    for k in 0..=d {
        zp[k] = z[k] + h;
        let up = eval(&zp)?[k];
        zp[k] = z[k] - h;
        let down = eval(&zp)?[k];
        zp[k] = z[k];
        div += (up - down) / (2.0 * h);
    }
    let hz = eval(z)?;
    let r = (z[0] * z[0] + dist_sq(&z[1..], x0)).sqrt();
    Ok(div.abs() * r / norm(&hz))
}

/// Largest `|dp/dt + div(p F)|` over a grid, for arbitrary density and velocity.
pub fn continuity_residual_with<P, V>(
    density: P,
    velocity: V,
    t_grid: &[f64],
    x_grid: &[Vec<f64>],
    h: f64,
) -> Result<(f64, f64)>
where
    P: Fn(&[f64], f64) -> Result<f64>,
    V: Fn(&[f64], f64) -> Result<Vec<f64>>,
{
    if !(h > 0.0) {
        return Err(Error::invalid("step h must be positive"));
    }
    let (mut worst, mut peak): (f64, f64) = (0.0, 0.0);
    for &t in t_grid {
        for x in x_grid {
            let res = crate::field::extended_divergence(&density, &velocity, t, x, h)?;
            worst = worst.max(res.abs());
            peak = peak.max(density(x, t)?);
        }
    }
    Ok((worst, peak))
}

/// Normalized continuity residual `max |dp/dt + div(p F)| / max p` of a single-source
/// family with its closed-form density and velocity. `velocity_scale` multiplies the
/// velocity (1 for the real check, other values for controls).
pub fn continuity_residual(
    spec: &TrajectorySpec,
    prior: &PriorSpec,
    x0: &[f64],
    t_grid: &[f64],
    x_grid: &[Vec<f64>],
    h: f64,
    velocity_scale: f64,
) -> Result<f64> {
    spec.validate()?;
    if let Some(&t) = t_grid
        .iter()
        .find(|&&t| t - h < spec.t_min || t + h > spec.horizon * (1.0 + 1e-12))
    {
        return Err(Error::invalid(format!(
            "grid time {t} is too close to t_min = {} for step {h}",
            spec.t_min
        )));
    }
    let (worst, peak) = continuity_residual_with(
        |x, t| conditional_kernel(spec, prior, x0, x, t),
        |x, t| {
            let mut v = vec![0.0; spec.dim];
            conditional_velocity(spec, x0, x, t, &mut v)?;
            v.iter_mut().for_each(|c| *c *= velocity_scale);
            Ok(v)
        },
        t_grid,
        x_grid,
        h,
    )?;
    Ok(worst / peak)
}

/// KS distance between `n` draws of `|e_x| / |e_t|` with `(e_x, e_t) ~ N(0, sigma² I_{d+1})`
/// and the radial law of dimension `law_dim`.
pub fn check_radial_law(d: usize, law_dim: usize, n: usize, sigma: f64, seed: u64) -> Result<f64> {
    if n < 10_000 {
        return Err(Error::invalid("radial law check needs n >= 10^4"));
    }
    if d == 0 || !(sigma > 0.0) {
        return Err(Error::invalid("need d >= 1 and sigma > 0"));
    }
    let law = RadialLaw::new(law_dim)?;
    let mut rng = stream(seed, "radial", 0);
    let mut r: Vec<f64> = (0..n)
        .map(|_| {
            let ex: f64 = (0..d)
                .map(|_| (sigma * rng.sample::<f64, _>(StandardNormal)).powi(2))
                .sum::<f64>()
                .sqrt();
            let et = sigma * rng.sample::<f64, _>(StandardNormal);
            ex / et.abs()
        })
        .collect();
    r.sort_by(f64::total_cmp);
    Ok(ks_statistic_sorted(&law.cdf_sorted(&r)))
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
        .collect()
}

/// The complete suite with its negative controls.
pub fn run_suite(tol: &Tolerances, seed: u64) -> Result<Vec<CheckRecord>> {
    let mut out = Vec::new();
    for d in [1usize, 2, 3, 8] {
        let exact = poisson_constant_exact(d);
        let est = normalization_constant(
            d,
            1.0,
            &vec![0.0; d],
            tol.normalization_rel,
            tol.normalization_evals,
            seed,
        )?;
        let rel = (est.a - exact).abs() / exact;
        out.push(CheckRecord::below(
            format!("normalization_d{d}"),
            rel,
            tol.normalization_rel,
            seed,
        ));
        let shifted: Vec<f64> = (0..d).map(|k| 0.7 - 0.3 * k as f64).collect();
        let other = normalization_constant(
            d,
            2.5,
            &shifted,
            tol.normalization_rel,
            tol.normalization_evals,
            seed + 1,
        )?;
        let bars = (est.std_error.powi(2) + other.std_error.powi(2)).sqrt();
        // agreement measured in combined standard errors
        let z = (est.a - other.a).abs() / bars.max(1e-12 * exact);
        out.push(CheckRecord::below(
            format!("normalization_invariance_d{d}"),
            z,
            3.0,
            seed,
        ));
    }

    let a2 = poisson_constant_exact(2);
    let res = check_divergence_free(2, a2, tol.divergence_points, tol.divergence_step, 1.5, seed)?;
    out.push(CheckRecord::below(
        "divergence_free_d2",
        res,
        tol.divergence,
        seed,
    ));
    let res = check_divergence_free(2, a2, tol.divergence_points, tol.divergence_step, 1.0, seed)?;
    out.push(CheckRecord::above(
        "divergence_free_control",
        res,
        tol.divergence_control,
        seed,
    ));

    let spec = TrajectorySpec::linear(1);
    let prior = PriorSpec::gaussian(1.0);
    let t_grid = linspace(0.2, 1.0 - tol.continuity_step, 17);
    let x_grid: Vec<Vec<f64>> = linspace(-3.0, 3.0, 61)
        .into_iter()
        .map(|x| vec![x])
        .collect();
    let x0 = [0.4];
    let res = continuity_residual(
        &spec,
        &prior,
        &x0,
        &t_grid,
        &x_grid,
        tol.continuity_step,
        1.0,
    )?;
    out.push(CheckRecord::below(
        "continuity_linear_d1",
        res,
        tol.continuity,
        seed,
    ));
    let res = continuity_residual(
        &spec,
        &prior,
        &x0,
        &t_grid,
        &x_grid,
        tol.continuity_step,
        2.0,
    )?;
    out.push(CheckRecord::above(
        "continuity_control",
        res,
        tol.continuity_control,
        seed,
    ));

    for d in [1usize, 2, 3, 8] {
        let ks = check_radial_law(d, d, tol.radial_samples, 1.0, seed)?;
        out.push(CheckRecord::below(
            format!("radial_law_d{d}"),
            ks,
            tol.radial_ks,
            seed,
        ));
    }
    let ks = check_radial_law(2, 3, tol.radial_samples, 1.0, seed)?;
    out.push(CheckRecord::above(
        "radial_law_control",
        ks,
        tol.radial_control,
        seed,
    ));
    Ok(out)
}
