//! Sample-quality metrics, the composite overlap index and score-based trajectory
//! comparison.

use std::fmt::Write as _;

use rand::Rng;

use crate::error::{Error, Result};
use crate::field::OracleField;
use crate::ode::{integrate, SolverConfig};
use crate::rng::stream;
use crate::sampler::PriorSpec;
use crate::trajectory::TrajectorySpec;
use crate::{dist_sq, norm};

fn check_sets(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<usize> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("sample sets must be non-empty"));
    }
    let d = a[0].len();
    if a.iter().chain(b).any(|p| p.len() != d) {
        return Err(Error::invalid("sample sets have mismatched dimensions"));
    }
    Ok(d)
}

/// Wasserstein-1 distance between two 1-D empirical distributions given sorted values.
pub fn wasserstein_1d_sorted(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    if a.len() == b.len() {
        return a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / na;
    }
    // walk the merged quantile breakpoints
    let (mut i, mut j) = (0, 0);
    let (mut u, mut total) = (0.0, 0.0);
    while i < a.len() && j < b.len() {
        let ua = (i + 1) as f64 / na;
        let ub = (j + 1) as f64 / nb;
        let next = ua.min(ub);
        total += (next - u) * (a[i] - b[j]).abs();
        u = next;
        if ua <= next {
            i += 1;
        }
        if ub <= next {
            j += 1;
        }
    }
    total
}

/// Mean over `n_projections` random unit directions of the 1-D Wasserstein-1 distance
/// between the projected sets.
pub fn sliced_wasserstein<R: Rng + ?Sized>(
    a: &[Vec<f64>],
    b: &[Vec<f64>],
    n_projections: usize,
    rng: &mut R,
) -> Result<f64> {
    let d = check_sets(a, b)?;
    if n_projections == 0 {
        return Err(Error::invalid("n_projections must be positive"));
    }
    let mut pa = vec![0.0; a.len()];
    let mut pb = vec![0.0; b.len()];
    let mut total = 0.0;
    for _ in 0..n_projections {
        let dir = crate::sampler::sample_unit_sphere(d, rng)?;
        let proj = |p: &Vec<f64>| p.iter().zip(&dir).map(|(x, u)| x * u).sum::<f64>();
        pa.iter_mut().zip(a).for_each(|(o, p)| *o = proj(p));
        pb.iter_mut().zip(b).for_each(|(o, p)| *o = proj(p));
        pa.sort_unstable_by(f64::total_cmp);
        pb.sort_unstable_by(f64::total_cmp);
        total += wasserstein_1d_sorted(&pa, &pb);
    }
    Ok(total / n_projections as f64)
}

/// Largest number of points per set used by [`energy_distance`].
pub const ENERGY_MAX_POINTS: usize = 2000;

fn strided(a: &[Vec<f64>]) -> Vec<&Vec<f64>> {
    if a.len() <= ENERGY_MAX_POINTS {
        return a.iter().collect();
    }
    (0..ENERGY_MAX_POINTS)
        .map(|k| &a[k * a.len() / ENERGY_MAX_POINTS])
        .collect()
}

/// Energy distance `2E|X-Y| - E|X-X'| - E|Y-Y'|` (V-statistic). Sets larger than
/// [`ENERGY_MAX_POINTS`] are thinned by an even stride.
pub fn energy_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    check_sets(a, b)?;
    let (a, b) = (strided(a), strided(b));
    let mean_dist = |x: &[&Vec<f64>], y: &[&Vec<f64>]| {
        let mut s = 0.0;
        for p in x {
            for q in y {
                s += dist_sq(p, q).sqrt();
            }
        }
        s / (x.len() * y.len()) as f64
    };
    let e = 2.0 * mean_dist(&a, &b) - mean_dist(&a, &a) - mean_dist(&b, &b);
    Ok(e.max(0.0))
}

/// Kolmogorov-Smirnov statistic from model CDF values at sorted sample points.
pub fn ks_statistic_sorted(cdf_values: &[f64]) -> f64 {
    let n = cdf_values.len() as f64;
    cdf_values
        .iter()
        .enumerate()
        .map(|(i, &f)| (f - i as f64 / n).max((i + 1) as f64 / n - f))
        .fold(0.0, f64::max)
}

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("samples must be non-empty"));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut best) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        best = best.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub sliced_wasserstein: f64,
    pub energy_distance: f64,
    pub nfe: usize,
    pub wall_time: f64,
}

impl MetricReport {
    pub const CSV_HEADER: &'static str = "sliced_wasserstein,energy_distance,nfe,wall_time";

    pub fn csv_row(&self) -> String {
        format!(
            "{:.16e},{:.16e},{},{:.6}",
            self.sliced_wasserstein, self.energy_distance, self.nfe, self.wall_time
        )
    }

    pub fn to_csv(&self) -> String {
        format!("{}\n{}\n", Self::CSV_HEADER, self.csv_row())
    }
}

/// Sliced Wasserstein (128 projections) and energy distance between `samples` and `reference`.
pub fn evaluate(
    samples: &[Vec<f64>],
    reference: &[Vec<f64>],
    nfe: usize,
    seed: u64,
) -> Result<MetricReport> {
    let sw = sliced_wasserstein(samples, reference, 128, &mut stream(seed, "projections", 0))?;
    Ok(MetricReport {
        sliced_wasserstein: sw,
        energy_distance: energy_distance(samples, reference)?,
        nfe,
        wall_time: 0.0,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexColumn {
    pub name: String,
    pub higher_is_better: bool,
    pub values: Vec<f64>,
}

/// Rows keyed by overlap count, raw metric columns and an optional derived index.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexTable {
    pub keys: Vec<usize>,
    pub columns: Vec<IndexColumn>,
    pub index: Option<Vec<f64>>,
    pub weights: Option<Vec<f64>>,
}

impl IndexTable {
    pub fn new(keys: Vec<usize>) -> Self {
        IndexTable {
            keys,
            columns: Vec::new(),
            index: None,
            weights: None,
        }
    }

    pub fn with_column(mut self, name: &str, higher_is_better: bool, values: Vec<f64>) -> Self {
        self.columns.push(IndexColumn {
            name: name.to_string(),
            higher_is_better,
            values,
        });
        self
    }

    /// Key of the row with the largest index.
    pub fn argmax(&self) -> Option<usize> {
        let index = self.index.as_ref()?;
        let best = (0..index.len()).max_by(|&i, &j| index[i].total_cmp(&index[j]))?;
        Some(self.keys[best])
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("on");
        for c in &self.columns {
            s.push(',');
            s.push_str(&c.name);
        }
        if self.index.is_some() {
            s.push_str(",index");
        }
        s.push('\n');
        for (r, k) in self.keys.iter().enumerate() {
            write!(s, "{k}").unwrap();
            for c in &self.columns {
                write!(s, ",{:.16e}", c.values[r]).unwrap();
            }
            if let Some(ix) = &self.index {
                write!(s, ",{:.16e}", ix[r]).unwrap();
            }
            s.push('\n');
        }
        s
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Composite index: per-column z-scores (negated for lower-is-better columns) combined
/// with weights proportional to each column's coefficient of variation, then mapped
/// through the logistic function.
pub fn composite_index(table: &IndexTable) -> Result<IndexTable> {
    let rows = table.keys.len();
    if rows < 2 {
        return Err(Error::Degenerate(
            "composite index needs at least two rows".into(),
        ));
    }
    if table.columns.is_empty() {
        return Err(Error::invalid("composite index needs at least one column"));
    }
    let mut z = Vec::with_capacity(table.columns.len());
    let mut w = Vec::with_capacity(table.columns.len());
    for c in &table.columns {
        if c.values.len() != rows {
            return Err(Error::invalid(format!(
                "column `{}` has {} rows, expected {rows}",
                c.name,
                c.values.len()
            )));
        }
        if c.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "column `{}` has non-finite values",
                c.name
            )));
        }
        let (mean, std) = mean_std(&c.values);
        if !(std > 1e-12 * mean.abs().max(f64::MIN_POSITIVE)) || mean == 0.0 {
            return Err(Error::Degenerate(format!(
                "column `{}` has zero variance or zero mean",
                c.name
            )));
        }
        let sign = if c.higher_is_better { 1.0 } else { -1.0 };
        z.push(
            c.values
                .iter()
                .map(|v| sign * (v - mean) / std)
                .collect::<Vec<_>>(),
        );
        w.push(std / mean.abs());
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    let index = (0..rows)
        .map(|r| {
            let s: f64 = z.iter().zip(&w).map(|(col, wk)| wk * col[r]).sum();
            1.0 / (1.0 + (-s).exp())
        })
        .collect();
    let mut out = table.clone();
    out.index = Some(index);
    out.weights = Some(w);
    Ok(out)
}

/// Overlap-count table as published for the image benchmark: Inception (higher is
/// better), FID and NFE (lower is better) for ON = 1..10.
pub fn published_overlap_table() -> IndexTable {
    IndexTable::new((1..=10).collect())
        .with_column(
            "inception",
            true,
            vec![
                10.27, 10.76, 11.12, 11.25, 11.54, 12.01, 11.79, 12.07, 12.11, 12.11,
            ],
        )
        .with_column(
            "fid",
            false,
            vec![10.22, 9.51, 7.27, 6.14, 5.12, 4.44, 3.75, 3.42, 2.91, 2.33],
        )
        .with_column(
            "nfe",
            false,
            vec![
                46.0, 89.0, 124.0, 189.0, 322.0, 632.0, 689.0, 744.0, 782.0, 800.0,
            ],
        )
}

/// Silverman's rule of thumb, one bandwidth per dimension.
pub fn silverman_bandwidths(samples: &[Vec<f64>]) -> Result<Vec<f64>> {
    if samples.len() < 2 {
        return Err(Error::invalid("bandwidth needs at least two samples"));
    }
    let d = samples[0].len();
    let n = samples.len() as f64;
    let factor = (4.0 / ((d as f64 + 2.0) * n)).powf(1.0 / (d as f64 + 4.0));
    Ok((0..d)
        .map(|k| {
            let col: Vec<f64> = samples.iter().map(|p| p[k]).collect();
            mean_std(&col).1 * factor
        })
        .collect())
}

pub const MIN_SCORE_SAMPLES: usize = 100;

/// Gradient of the log of a Gaussian kernel density estimate, isotropic bandwidth.
pub fn estimate_score(samples: &[Vec<f64>], x: &[f64], bandwidth: f64) -> Result<Vec<f64>> {
    estimate_score_diag(samples, x, &vec![bandwidth; x.len()])
}

/// As [`estimate_score`] with one bandwidth per dimension.
pub fn estimate_score_diag(
    samples: &[Vec<f64>],
    x: &[f64],
    bandwidths: &[f64],
) -> Result<Vec<f64>> {
    if samples.len() < MIN_SCORE_SAMPLES {
        return Err(Error::invalid(format!(
            "score estimation needs at least {MIN_SCORE_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    let d = x.len();
    if bandwidths.len() != d || samples.iter().any(|p| p.len() != d) {
        return Err(Error::invalid("dimension mismatch in score estimation"));
    }
    if bandwidths.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
        return Err(Error::invalid("bandwidth must be positive"));
    }
    let inv: Vec<f64> = bandwidths.iter().map(|h| 1.0 / (h * h)).collect();
    let log_w: Vec<f64> = samples
        .iter()
        .map(|p| {
            -0.5 * p
                .iter()
                .zip(x)
                .zip(&inv)
                .map(|((a, b), i)| (a - b) * (a - b) * i)
                .sum::<f64>()
        })
        .collect();
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    let mut score = vec![0.0; d];
    for (p, lw) in samples.iter().zip(&log_w) {
        let w = (lw - max).exp();
        total += w;
        for k in 0..d {
            score[k] += w * (p[k] - x[k]) * inv[k];
        }
    }
    score.iter_mut().for_each(|s| *s /= total);
    Ok(score)
}

fn oracle_ensemble_at_times(
    field: &OracleField,
    starts: &[Vec<f64>],
    times: &[f64],
    horizon: f64,
) -> Result<Vec<Vec<Vec<f64>>>> {
    // times sorted in decreasing order; each particle is carried from one grid time to the next
    let mut out = vec![Vec::with_capacity(starts.len()); times.len()];
    for z in starts {
        let mut x = z.clone();
        let mut t = horizon;
        for (k, &tk) in times.iter().enumerate() {
            if tk < t {
                let cfg = SolverConfig::adaptive(1e-7, 1e-7, t, tk);
                x = integrate(field, &x, &cfg)?.final_state().to_vec();
                t = tk;
            }
            out[k].push(x.clone());
        }
    }
    Ok(out)
}

/// Score-difference indicator between two trajectory families evolving the same data.
///
/// `n` shared terminal draws are carried by each family's oracle field down to every
/// grid time. At time `t` the result is `-g^2/2 * |mean_i (s_p(x_i) - s_q(y_i))|`, where
/// `x_i`, `y_i` are the two images of draw `i` and the scores are kernel estimates with
/// Silverman bandwidths on each ensemble.
pub fn trajectory_divergence(
    family_p: &TrajectorySpec,
    family_q: &TrajectorySpec,
    prior: &PriorSpec,
    dataset: &[Vec<f64>],
    g: f64,
    t_grid: &[f64],
    n: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if n < 1000 {
        return Err(Error::invalid("trajectory_divergence needs n >= 1000"));
    }
    if family_p.dim != family_q.dim || family_p.horizon != family_q.horizon {
        return Err(Error::invalid("families must share dimension and horizon"));
    }
    let lo = family_p.t_min.max(family_q.t_min);
    if t_grid.iter().any(|&t| !(t >= lo && t <= family_p.horizon)) {
        return Err(Error::invalid("grid times must lie in [t_min, T]"));
    }
    let fp = OracleField::new(dataset, family_p.clone(), *prior)?;
    let fq = OracleField::new(dataset, family_q.clone(), *prior)?;
    let starts: Vec<Vec<f64>> = (0..n)
        .map(|i| prior.sample_terminal(family_p, &mut stream(seed, "divergence", i as u64)))
        .collect();

    let mut order: Vec<usize> = (0..t_grid.len()).collect();
    order.sort_by(|&a, &b| t_grid[b].total_cmp(&t_grid[a]));
    let sorted: Vec<f64> = order.iter().map(|&i| t_grid[i]).collect();
    let ens_p = oracle_ensemble_at_times(&fp, &starts, &sorted, family_p.horizon)?;
    let ens_q = oracle_ensemble_at_times(&fq, &starts, &sorted, family_p.horizon)?;

    let mut result = vec![0.0; t_grid.len()];
    for (k, &slot) in order.iter().enumerate() {
        let (xs, ys) = (&ens_p[k], &ens_q[k]);
        let hp = silverman_bandwidths(xs)?;
        let hq = silverman_bandwidths(ys)?;
        let mut mean = vec![0.0; family_p.dim];
        for (x, y) in xs.iter().zip(ys) {
            let sp = estimate_score_diag(xs, x, &hp)?;
            let sq = estimate_score_diag(ys, y, &hq)?;
            for j in 0..mean.len() {
                mean[j] += (sp[j] - sq[j]) / n as f64;
            }
        }
        result[slot] = -0.5 * g * g * norm(&mean);
    }
    Ok(result)
}
