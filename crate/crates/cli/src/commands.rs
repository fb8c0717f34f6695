use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use forcefield::data_io::{builtin, emit_svg_scatter, format_points, read_csv, SvgStyle};
use forcefield::field::LearnedField;
use forcefield::metrics::evaluate;
use forcefield::ode::generate;
use forcefield::rng::stream;
use forcefield::study::{compare_families, run_superposition_study, CompareConfig, StudyConfig};
use forcefield::trainer::{train, Checkpoint};
use forcefield::verify::{records_to_csv, run_suite};
use forcefield::Error;

use crate::config::{DataSource, RunConfig};

/// Failure of a subcommand, tagged with the module that raised it.
#[derive(Debug)]
pub enum CommandError {
    /// Bad input: exit code 1.
    Validation(String),
    /// Anything that went wrong while running: exit code 2.
    Runtime(String),
}

impl CommandError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CommandError::Validation(_) => 1,
            CommandError::Runtime(_) => 2,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CommandError::Validation(m) | CommandError::Runtime(m) => m,
        }
    }
}

fn tagged(module: &'static str) -> impl Fn(Error) -> CommandError {
    move |e| {
        let msg = format!("{module}: {e}");
        match e {
            Error::InvalidInput(_) | Error::Parse { .. } => CommandError::Validation(msg),
            _ => CommandError::Runtime(msg),
        }
    }
}

fn io(e: std::io::Error) -> CommandError {
    CommandError::Runtime(format!("data_io: {e}"))
}

pub(crate) fn required_seed(cfg: &RunConfig) -> Result<u64, CommandError> {
    cfg.seed
        .ok_or_else(|| CommandError::Validation("config: `seed` is required".into()))
}

pub(crate) fn required_outdir(cfg: &RunConfig) -> Result<PathBuf, CommandError> {
    cfg.outdir
        .clone()
        .ok_or_else(|| CommandError::Validation("config: `outdir` is required".into()))
}

/// Training points and the held-out reference for scoring.
fn load_data(cfg: &RunConfig, seed: u64) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>), CommandError> {
    let data = match &cfg.dataset {
        DataSource::Builtin(name) => builtin(name, cfg.dataset_n, &mut stream(seed, "dataset", 0))
            .map_err(tagged("data_io"))?,
        DataSource::Csv(path) => read_csv(path).map_err(tagged("data_io"))?,
    };
    let reference = match (&cfg.reference, &cfg.dataset) {
        (Some(DataSource::Csv(path)), _) => read_csv(path).map_err(tagged("data_io"))?.points,
        (Some(DataSource::Builtin(name)), _) | (None, DataSource::Builtin(name)) => {
            builtin(name, cfg.reference_n, &mut stream(seed, "dataset", 1))
                .map_err(tagged("data_io"))?
                .points
        }
        (None, DataSource::Csv(_)) => data.points.clone(),
    };
    if reference.first().map(Vec::len) != Some(data.dim) {
        return Err(CommandError::Validation(
            "data_io: reference and dataset dimensions differ".into(),
        ));
    }
    Ok((data.points, reference))
}

fn write(path: &Path, text: &str) -> Result<(), CommandError> {
    std::fs::write(path, text).map_err(io)
}

fn prepare_outdir(cfg: &RunConfig) -> Result<PathBuf, CommandError> {
    let dir = required_outdir(cfg)?;
    std::fs::create_dir_all(&dir).map_err(io)?;
    write(&dir.join("resolved.cfg"), &cfg.resolved_text())?;
    Ok(dir)
}

pub fn train_cmd(cfg: &RunConfig) -> Result<String, CommandError> {
    let seed = required_seed(cfg)?;
    required_outdir(cfg)?;
    let (data, _) = load_data(cfg, seed)?;
    let dim = data[0].len();
    let spec = cfg.spec(dim);
    let prior = cfg.prior_for(cfg.family);
    spec.validate().map_err(tagged("trajectory"))?;
    let train_cfg = forcefield::trainer::TrainConfig {
        seed,
        ..cfg.train.clone()
    };
    let outcome = train(&data, &spec, &prior, &train_cfg).map_err(tagged("trainer"))?;
    let dir = prepare_outdir(cfg)?;
    outcome
        .checkpoint(&spec, &prior)
        .save(&dir.join("checkpoint"))
        .map_err(tagged("trainer"))?;
    let mut log = String::from("step,loss\n");
    for (i, l) in outcome.log.loss.iter().enumerate() {
        writeln!(log, "{},{l:.16e}", i + 1).unwrap();
    }
    write(&dir.join("train_log.csv"), &log)?;
    let mut val = String::from("step,validation_loss\n");
    for (s, l) in &outcome.log.validation {
        writeln!(val, "{s},{l:.16e}").unwrap();
    }
    write(&dir.join("validation.csv"), &val)?;
    Ok(format!(
        "trained {} steps on {} points; best validation at step {}",
        outcome.log.loss.len(),
        data.len(),
        outcome.log.best_step
    ))
}

pub fn sample_cmd(cfg: &RunConfig) -> Result<String, CommandError> {
    let seed = required_seed(cfg)?;
    required_outdir(cfg)?;
    let path = cfg.checkpoint.as_ref().ok_or_else(|| {
        CommandError::Validation("config: `checkpoint` is required for sample".into())
    })?;
    let ckpt = Checkpoint::load(path).map_err(tagged("trainer"))?;
    let dim = ckpt.spec.dim;
    let reference = match &cfg.reference {
        None => None,
        Some(DataSource::Csv(p)) => Some(read_csv(p).map_err(tagged("data_io"))?.points),
        Some(DataSource::Builtin(name)) => Some(
            builtin(name, cfg.reference_n, &mut stream(seed, "dataset", 1))
                .map_err(tagged("data_io"))?
                .points,
        ),
    };
    if reference.as_ref().is_some_and(|r| r[0].len() != dim) {
        return Err(CommandError::Validation(
            "data_io: reference dimension differs from the checkpoint".into(),
        ));
    }
    let solver = forcefield::ode::SolverConfig {
        t_start: ckpt.spec.horizon,
        t_end: ckpt.spec.t_min,
        ..cfg.solver
    };
    let field = LearnedField::new(ckpt.net, ckpt.spec.clone()).map_err(tagged("field"))?;
    let gen =
        generate(&field, &ckpt.spec, &ckpt.prior, cfg.n, &solver, seed).map_err(tagged("ode"))?;
    let nfe = gen.nfe;
    let dir = prepare_outdir(cfg)?;
    write(
        &dir.join("samples.csv"),
        &format_points(&gen.samples, dim).map_err(tagged("data_io"))?,
    )?;
    emit_svg_scatter(
        &dir.join("samples.svg"),
        &gen.samples,
        &[],
        &SvgStyle::default(),
    )
    .map_err(tagged("data_io"))?;
    let mut report = String::from("n,nfe,sliced_wasserstein,energy_distance\n");
    match &reference {
        Some(r) => {
            let m = evaluate(&gen.samples, r, nfe, seed).map_err(tagged("metrics"))?;
            writeln!(
                report,
                "{},{},{:.16e},{:.16e}",
                cfg.n, nfe, m.sliced_wasserstein, m.energy_distance
            )
            .unwrap();
        }
        None => writeln!(report, "{},{nfe},,", cfg.n).unwrap(),
    }
    write(&dir.join("report.csv"), &report)?;
    Ok(format!(
        "generated {} samples with {} field evaluations",
        cfg.n, nfe
    ))
}

/// Runs the verification suite. Failing checks are reported as a runtime failure
/// after the CSV has been written.
pub fn verify_cmd(cfg: &RunConfig) -> Result<String, CommandError> {
    let seed = required_seed(cfg)?;
    let dir = prepare_outdir(cfg)?;
    let records = run_suite(&cfg.tolerances, seed).map_err(tagged("verify"))?;
    write(&dir.join("verify.csv"), &records_to_csv(&records))?;
    let failed: Vec<&str> = records
        .iter()
        .filter(|r| !r.pass)
        .map(|r| r.name.as_str())
        .collect();
    if failed.is_empty() {
        Ok(format!("all {} checks passed", records.len()))
    } else {
        Err(CommandError::Runtime(format!(
            "verify: {} of {} checks failed: {}",
            failed.len(),
            records.len(),
            failed.join(", ")
        )))
    }
}

pub fn study_cmd(cfg: &RunConfig) -> Result<String, CommandError> {
    let seed = required_seed(cfg)?;
    let outdir = required_outdir(cfg)?;
    let (data, reference) = load_data(cfg, seed)?;
    let study = StudyConfig {
        on_values: cfg.on_values.clone(),
        train: cfg.train.clone(),
        solver: cfg.solver,
        n_generate: cfg.n,
        seeds: if cfg.seeds.is_empty() {
            vec![seed]
        } else {
            cfg.seeds.clone()
        },
        outdir,
        timing: cfg.timing,
    };
    study.validate().map_err(tagged("study"))?;
    prepare_outdir(cfg)?;
    let result = run_superposition_study(&study, &data, &reference).map_err(tagged("study"))?;
    let failed = result.cells.iter().filter(|c| c.failure.is_some()).count();
    let mut msg = format!("{} cells, {failed} failed", result.cells.len());
    if let Some(best) = result.table.argmax() {
        write!(msg, "; composite index peaks at ON={best}").unwrap();
    }
    if let Some(e) = &result.index_error {
        write!(msg, "; no composite index ({e})").unwrap();
    }
    Ok(msg)
}

pub fn compare_cmd(cfg: &RunConfig) -> Result<String, CommandError> {
    let seed = required_seed(cfg)?;
    let outdir = required_outdir(cfg)?;
    let (data, reference) = load_data(cfg, seed)?;
    let dim = data[0].len();
    let families: Vec<_> = cfg
        .families
        .iter()
        .map(|&f| (f.name().to_string(), cfg.spec_for(f, dim), cfg.prior_for(f)))
        .collect();
    for (_, spec, prior) in &families {
        spec.validate().map_err(tagged("trajectory"))?;
        prior.validate().map_err(tagged("sampler"))?;
    }
    let compare = CompareConfig {
        train: cfg.train.clone(),
        solver: cfg.solver,
        n_generate: cfg.n,
        seed,
        outdir,
        timing: cfg.timing,
        divergence_g: cfg.divergence_g,
        divergence_times: cfg.divergence_times.clone(),
        divergence_ensemble: cfg.divergence_ensemble,
        divergence_points: cfg.divergence_points,
    };
    prepare_outdir(cfg)?;
    let result =
        compare_families(&data, &reference, &families, &compare).map_err(tagged("study"))?;
    let failed = result.runs.iter().filter(|r| r.failure.is_some()).count();
    Ok(format!(
        "compared {} families, {failed} failed",
        result.runs.len()
    ))
}
