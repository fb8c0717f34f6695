//! Overlap-count sweeps and side-by-side family comparisons.
//!
//! A sweep trains one superposed-linear model per overlap count, generates from it,
//! scores the samples against held-out data and combines the scores into a composite
//! index. Every artifact is written under one output directory:
//!
//! ```text
//! <outdir>/on=<k>/checkpoint
//! <outdir>/on=<k>/samples.csv
//! <outdir>/on=<k>/report.csv
//! <outdir>/index.csv
//! <outdir>/trend.svg
//! ```
//!
//! With several seeds each seed gets its own `seed=<s>/` subtree and `index.csv` holds
//! the metrics averaged over seeds.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use sha2::{Digest, Sha256};

use crate::data_io::{format_points, render_svg, SvgStyle};
use crate::error::{Error, Result};
use crate::field::LearnedField;
use crate::metrics::{composite_index, evaluate, trajectory_divergence, IndexTable, MetricReport};
use crate::ode::{generate, SolverConfig};
use crate::sampler::PriorSpec;
use crate::trainer::{train, TrainConfig};
use crate::trajectory::{Family, TrajectorySpec};

#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub on_values: Vec<usize>,
    pub train: TrainConfig,
    /// Solver used for generation; its time span is taken from each model's spec.
    pub solver: SolverConfig,
    pub n_generate: usize,
    pub seeds: Vec<u64>,
    pub outdir: PathBuf,
    /// Record wall-clock time in reports. Off by default so outputs are byte-stable.
    pub timing: bool,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            on_values: (1..=12).collect(),
            train: TrainConfig::default(),
            solver: SolverConfig::default(),
            n_generate: 1000,
            seeds: vec![0],
            outdir: PathBuf::from("study"),
            timing: false,
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.on_values.is_empty() || self.on_values.contains(&0) {
            return Err(Error::invalid(
                "overlap counts must be a non-empty list of positive integers",
            ));
        }
        if self.seeds.is_empty() {
            return Err(Error::invalid("at least one seed is required"));
        }
        if self.n_generate == 0 {
            return Err(Error::invalid("n_generate must be positive"));
        }
        self.train.validate()
    }
}

/// One trained-and-scored model.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub on: usize,
    pub seed: u64,
    pub report: Option<MetricReport>,
    pub failure: Option<String>,
    pub samples_sha256: Option<String>,
}

#[derive(Debug, Clone)]
pub struct StudyResult {
    pub cells: Vec<Cell>,
    /// Seed-averaged metrics of the overlap counts that trained successfully.
    pub table: IndexTable,
    /// Why the composite index is absent, when it is.
    pub index_error: Option<String>,
}

impl StudyResult {
    /// Cells of one seed in overlap order.
    pub fn cells_for_seed(&self, seed: u64) -> Vec<&Cell> {
        self.cells.iter().filter(|c| c.seed == seed).collect()
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Sample file contents plus metrics for one trained model.
struct Produced {
    report: MetricReport,
    samples_csv: String,
    checkpoint: String,
}

fn train_and_score(
    data: &[Vec<f64>],
    reference: &[Vec<f64>],
    spec: &TrajectorySpec,
    prior: &PriorSpec,
    train_cfg: &TrainConfig,
    solver: &SolverConfig,
    n_generate: usize,
    seed: u64,
    timing: bool,
) -> Result<Produced> {
    let start = Instant::now();
    let cfg = TrainConfig {
        seed,
        ..train_cfg.clone()
    };
    let outcome = train(data, spec, prior, &cfg)?;
    let field = LearnedField::new(outcome.net.clone(), spec.clone())?;
    let solver = SolverConfig {
        t_start: spec.horizon,
        t_end: spec.t_min,
        ..*solver
    };
    let gen = generate(&field, spec, prior, n_generate, &solver, seed)?;
    let mut report = evaluate(&gen.samples, reference, gen.nfe, seed)?;
    if timing {
        report.wall_time = start.elapsed().as_secs_f64();
    }
    Ok(Produced {
        report,
        samples_csv: format_points(&gen.samples, spec.dim)?,
        checkpoint: outcome.checkpoint(spec, prior).to_text()?,
    })
}

fn write_cell(dir: &Path, p: &Produced) -> Result<String> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("checkpoint"), &p.checkpoint)?;
    std::fs::write(dir.join("samples.csv"), &p.samples_csv)?;
    std::fs::write(dir.join("report.csv"), p.report.to_csv())?;
    Ok(sha256_hex(p.samples_csv.as_bytes()))
}

/// Runs the overlap sweep on `data`, scoring generated samples against `reference`.
///
/// A model whose training diverges is recorded as failed and the sweep continues.
pub fn run_superposition_study(
    cfg: &StudyConfig,
    data: &[Vec<f64>],
    reference: &[Vec<f64>],
) -> Result<StudyResult> {
    cfg.validate()?;
    if data.is_empty() || reference.is_empty() {
        return Err(Error::invalid(
            "study needs non-empty training and reference data",
        ));
    }
    let d = data[0].len();
    std::fs::create_dir_all(&cfg.outdir)?;
    let multi = cfg.seeds.len() > 1;
    let mut cells = Vec::new();
    for &seed in &cfg.seeds {
        let root = if multi {
            cfg.outdir.join(format!("seed={seed}"))
        } else {
            cfg.outdir.clone()
        };
        for &on in &cfg.on_values {
            let spec = TrajectorySpec::superposed(d, on);
            let prior = PriorSpec::default_for(Family::SuperposedLinear);
            let res = train_and_score(
                data,
                reference,
                &spec,
                &prior,
                &cfg.train,
                &cfg.solver,
                cfg.n_generate,
                seed,
                cfg.timing,
            );
            let cell = match res {
                Ok(p) => {
                    let hash = write_cell(&root.join(format!("on={on}")), &p)?;
                    Cell {
                        on,
                        seed,
                        report: Some(p.report),
                        failure: None,
                        samples_sha256: Some(hash),
                    }
                }
                Err(
                    e @ (Error::Diverged { .. }
                    | Error::NonConvergence { .. }
                    | Error::NumericFault(_)),
                ) => Cell {
                    on,
                    seed,
                    report: None,
                    failure: Some(e.to_string()),
                    samples_sha256: None,
                },
                Err(e) => return Err(e),
            };
            cells.push(cell);
        }
    }

    // average over seeds, only for overlap counts that succeeded for every seed
    let mut keys = Vec::new();
    let (mut sw, mut ed, mut nfe) = (Vec::new(), Vec::new(), Vec::new());
    for &on in &cfg.on_values {
        let reports: Vec<&MetricReport> = cells
            .iter()
            .filter(|c| c.on == on)
            .filter_map(|c| c.report.as_ref())
            .collect();
        if reports.len() != cfg.seeds.len() {
            continue;
        }
        let k = reports.len() as f64;
        keys.push(on);
        sw.push(reports.iter().map(|r| r.sliced_wasserstein).sum::<f64>() / k);
        ed.push(reports.iter().map(|r| r.energy_distance).sum::<f64>() / k);
        nfe.push(reports.iter().map(|r| r.nfe as f64).sum::<f64>() / k);
    }
    let raw = IndexTable::new(keys)
        .with_column("sliced_wasserstein", false, sw)
        .with_column("energy_distance", false, ed)
        .with_column("nfe", false, nfe);
    let (table, index_error) = match composite_index(&raw) {
        Ok(t) => (t, None),
        Err(e) => (raw, Some(e.to_string())),
    };
    let result = StudyResult {
        cells,
        table,
        index_error,
    };
    std::fs::write(
        cfg.outdir.join("index.csv"),
        index_csv(&result, &cfg.on_values),
    )?;
    std::fs::write(cfg.outdir.join("trend.svg"), trend_svg(&result.table))?;
    Ok(result)
}

/// Whether the quality metric at a row exceeds 1.5 times its minimum over the sweep.
pub fn collapsed(table: &IndexTable) -> Vec<bool> {
    let Some(sw) = table
        .columns
        .iter()
        .find(|c| c.name == "sliced_wasserstein")
    else {
        return Vec::new();
    };
    let best = sw.values.iter().copied().fold(f64::INFINITY, f64::min);
    sw.values.iter().map(|v| *v > 1.5 * best).collect()
}

fn index_csv(result: &StudyResult, on_values: &[usize]) -> String {
    let t = &result.table;
    let flags = collapsed(t);
    let mut s = String::from(
        "on,status,sliced_wasserstein,energy_distance,nfe,index,collapsed,samples_sha256\n",
    );
    for &on in on_values {
        let hashes: Vec<&str> = result
            .cells
            .iter()
            .filter(|c| c.on == on)
            .filter_map(|c| c.samples_sha256.as_deref())
            .collect();
        match t.keys.iter().position(|&k| k == on) {
            Some(r) => {
                let index = t
                    .index
                    .as_ref()
                    .map(|ix| format!("{:.16e}", ix[r]))
                    .unwrap_or_default();
                writeln!(
                    s,
                    "{on},ok,{:.16e},{:.16e},{:.16e},{index},{},{}",
                    t.columns[0].values[r],
                    t.columns[1].values[r],
                    t.columns[2].values[r],
                    flags[r],
                    hashes.join(";")
                )
                .unwrap();
            }
            None => writeln!(s, "{on},failed,,,,,,{}", hashes.join(";")).unwrap(),
        }
    }
    s
}

fn trend_svg(table: &IndexTable) -> String {
    let sw = &table.columns[0].values;
    let pts: Vec<Vec<f64>> = table
        .keys
        .iter()
        .zip(sw)
        .map(|(&k, &v)| vec![k as f64, v])
        .collect();
    let path = if pts.len() > 1 {
        vec![pts.clone()]
    } else {
        Vec::new()
    };
    render_svg(
        &pts,
        &path,
        &SvgStyle {
            marker_radius: 3.0,
            ..SvgStyle::default()
        },
    )
}

#[derive(Debug, Clone)]
pub struct CompareConfig {
    pub train: TrainConfig,
    pub solver: SolverConfig,
    pub n_generate: usize,
    pub seed: u64,
    pub outdir: PathBuf,
    pub timing: bool,
    /// Scale `g` of the score-difference indicator; `None` skips the curves.
    pub divergence_g: Option<f64>,
    pub divergence_times: Vec<f64>,
    pub divergence_ensemble: usize,
    /// Data points used by the oracle fields of the indicator (an even-stride subset).
    pub divergence_points: usize,
}

impl Default for CompareConfig {
    fn default() -> Self {
        CompareConfig {
            train: TrainConfig::default(),
            solver: SolverConfig::default(),
            n_generate: 1000,
            seed: 0,
            outdir: PathBuf::from("compare"),
            timing: false,
            divergence_g: Some(1.0),
            divergence_times: vec![0.25, 0.5, 0.75, 1.0],
            divergence_ensemble: 1000,
            divergence_points: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FamilyRun {
    pub name: String,
    pub report: Option<MetricReport>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub runs: Vec<FamilyRun>,
    /// `(label, indicator over the configured times)` for the first family against each other.
    pub divergence: Vec<(String, Vec<f64>)>,
}

/// Trains each family with the same budget and seed, and writes `compare.csv` plus
/// `divergence.csv`.
pub fn compare_families(
    data: &[Vec<f64>],
    reference: &[Vec<f64>],
    families: &[(String, TrajectorySpec, PriorSpec)],
    cfg: &CompareConfig,
) -> Result<Comparison> {
    if families.len() < 2 {
        return Err(Error::invalid("compare needs at least two families"));
    }
    if data.is_empty() || reference.is_empty() {
        return Err(Error::invalid(
            "compare needs non-empty training and reference data",
        ));
    }
    cfg.train.validate()?;
    std::fs::create_dir_all(&cfg.outdir)?;
    let mut runs = Vec::new();
    for (i, (name, spec, prior)) in families.iter().enumerate() {
        let res = train_and_score(
            data,
            reference,
            spec,
            prior,
            &cfg.train,
            &cfg.solver,
            cfg.n_generate,
            cfg.seed,
            cfg.timing,
        );
        runs.push(match res {
            Ok(p) => {
                write_cell(&cfg.outdir.join(format!("{i}-{name}")), &p)?;
                FamilyRun {
                    name: name.clone(),
                    report: Some(p.report),
                    failure: None,
                }
            }
            Err(
                e
                @ (Error::Diverged { .. } | Error::NonConvergence { .. } | Error::NumericFault(_)),
            ) => FamilyRun {
                name: name.clone(),
                report: None,
                failure: Some(e.to_string()),
            },
            Err(e) => return Err(e),
        });
    }

    let mut divergence = Vec::new();
    if let Some(g) = cfg.divergence_g {
        let k = cfg.divergence_points.clamp(1, data.len());
        let subset: Vec<Vec<f64>> = (0..k).map(|j| data[j * data.len() / k].clone()).collect();
        let (pname, pspec, pprior) = &families[0];
        for (qname, qspec, _) in &families[1..] {
            let curve = trajectory_divergence(
                pspec,
                qspec,
                pprior,
                &subset,
                g,
                &cfg.divergence_times,
                cfg.divergence_ensemble,
                cfg.seed,
            )?;
            divergence.push((format!("{pname}|{qname}"), curve));
        }
    }

    let mut csv = format!("family,{},status\n", MetricReport::CSV_HEADER);
    for r in &runs {
        match &r.report {
            Some(m) => writeln!(csv, "{},{},ok", r.name, m.csv_row()).unwrap(),
            None => writeln!(csv, "{},,,,,failed", r.name).unwrap(),
        }
    }
    std::fs::write(cfg.outdir.join("compare.csv"), csv)?;
    let mut dcsv = String::from("pair,t,indicator\n");
    for (label, curve) in &divergence {
        for (t, v) in cfg.divergence_times.iter().zip(curve) {
            writeln!(dcsv, "{label},{t:.16e},{v:.16e}").unwrap();
        }
    }
    std::fs::write(cfg.outdir.join("divergence.csv"), dcsv)?;
    Ok(Comparison { runs, divergence })
}
