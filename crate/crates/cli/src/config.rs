//! Flat `key = value` run configuration.
//!
//! Every key has a default except `seed` and `outdir`. Values come from the config
//! file first, then from `--key value` overrides. Parsing collects every problem
//! before failing.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use forcefield::data_io::BUILTIN_NAMES;
use forcefield::ode::{Method, SolverConfig};
use forcefield::trainer::TrainConfig;
use forcefield::trajectory::Bridge;
use forcefield::verify::Tolerances;
use forcefield::{Family, PriorKind, PriorSpec, TrajectorySpec};

/// A configuration that failed to parse or validate; one entry per problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub Vec<String>);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config: {} problem(s)", self.0.len())?;
        for p in &self.0 {
            write!(f, "\n  - {p}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

/// `(key, default)`. An empty default means "unset".
const KEYS: &[(&str, &str)] = &[
    ("seed", ""),
    ("outdir", ""),
    ("threads", "0"),
    ("family", "linear"),
    ("horizon", "1"),
    ("t_min", "0.001"),
    ("curve_exponent", "2"),
    ("overlap", "1"),
    ("bridge_sigma_min", "0.01"),
    ("bridge_sigma_max", "1"),
    ("poisson_constant", "1"),
    ("prior", "auto"),
    ("prior_sigma", "1"),
    ("prior_tau", "0"),
    ("prior_max_exponent", "0"),
    ("prior_radius", "1"),
    ("solver", "rk45"),
    ("step", "0.01"),
    ("rtol", "1e-5"),
    ("atol", "1e-5"),
    ("max_steps", "100000"),
    ("steps", "2000"),
    ("batch_size", "32"),
    ("learning_rate", "1e-4"),
    ("hidden", "128,128,128"),
    ("validation_fraction", "0.1"),
    ("eval_every", "1000"),
    ("epoch_pairs", "0"),
    ("dataset", "ring8"),
    ("dataset_n", "10000"),
    ("reference", ""),
    ("reference_n", "10000"),
    ("checkpoint", ""),
    ("n", "1000"),
    ("on_values", "1,2,3,4,5,6,7,8,9,10,11,12"),
    ("seeds", ""),
    ("families", "linear,curve,gaussian,poisson"),
    ("divergence_g", "1"),
    ("divergence_times", "0.25,0.5,0.75,1"),
    ("divergence_ensemble", "1000"),
    ("divergence_points", "64"),
    ("timing", "false"),
];

const TOL_PREFIX: &str = "tol.";

/// Where the data comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Builtin(String),
    Csv(PathBuf),
}

/// Fully typed run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub outdir: Option<PathBuf>,
    pub threads: usize,
    pub family: Family,
    pub horizon: f64,
    pub t_min: f64,
    pub curve_exponent: f64,
    pub overlap: usize,
    pub bridge_sigma_min: f64,
    pub bridge_sigma_max: f64,
    pub poisson_constant: f64,
    /// `None` picks the family's default prior.
    pub prior: Option<PriorKind>,
    pub prior_sigma: f64,
    pub prior_tau: f64,
    pub prior_max_exponent: f64,
    pub prior_radius: f64,
    pub solver: SolverConfig,
    pub train: TrainConfig,
    pub dataset: DataSource,
    pub dataset_n: usize,
    pub reference: Option<DataSource>,
    pub reference_n: usize,
    pub checkpoint: Option<PathBuf>,
    pub n: usize,
    pub on_values: Vec<usize>,
    pub seeds: Vec<u64>,
    pub families: Vec<Family>,
    pub divergence_g: Option<f64>,
    pub divergence_times: Vec<f64>,
    pub divergence_ensemble: usize,
    pub divergence_points: usize,
    pub timing: bool,
    pub tolerances: Tolerances,
    resolved: Vec<(String, String)>,
}

impl RunConfig {
    pub fn spec(&self, dim: usize) -> TrajectorySpec {
        self.spec_for(self.family, dim)
    }

    pub fn spec_for(&self, family: Family, dim: usize) -> TrajectorySpec {
        TrajectorySpec {
            family,
            dim,
            horizon: self.horizon,
            t_min: self.t_min,
            curve_exponent: self.curve_exponent,
            overlap: self.overlap,
            bridge: Bridge::Linear {
                sigma_min: self.bridge_sigma_min,
                sigma_max: self.bridge_sigma_max,
            },
            poisson_constant: self.poisson_constant,
        }
    }

    pub fn prior_for(&self, family: Family) -> PriorSpec {
        let kind = self
            .prior
            .unwrap_or_else(|| PriorSpec::default_for(family).kind);
        PriorSpec {
            kind,
            sigma: self.prior_sigma,
            tau: self.prior_tau,
            max_exponent: self.prior_max_exponent,
            radius: self.prior_radius,
        }
    }

    /// Solver running from `T` down to `t_min`.
    pub fn generation_solver(&self) -> SolverConfig {
        SolverConfig {
            t_start: self.horizon,
            t_end: self.t_min,
            ..self.solver
        }
    }

    /// The resolved configuration as `key = value` lines, in a fixed order.
    pub fn resolved_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.resolved {
            writeln!(s, "{k} = {v}").unwrap();
        }
        s
    }
}

/// Splits `--key value` and `--key=value` arguments into pairs.
pub fn parse_overrides(args: &[String]) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    let mut problems = Vec::new();
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let Some(body) = a.strip_prefix("--") else {
            problems.push(format!(
                "unexpected argument `{a}` (expected `--key value`)"
            ));
            continue;
        };
        let (k, v) = match body.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => match it.next() {
                Some(v) => (body.to_string(), v.clone()),
                None => {
                    problems.push(format!("`--{body}` needs a value"));
                    continue;
                }
            },
        };
        out.push((k.replace('-', "_"), v));
    }
    if problems.is_empty() {
        Ok(out)
    } else {
        Err(ConfigError(problems))
    }
}

/// Parses config file text (may be empty) and applies `overrides` on top.
pub fn parse_config(text: &str, overrides: &[(String, String)]) -> Result<RunConfig, ConfigError> {
    let mut problems = Vec::new();
    let mut values: BTreeMap<String, String> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        match line.split_once('=') {
            Some((k, v)) => {
                let k = k.trim().to_string();
                if values.insert(k.clone(), v.trim().to_string()).is_some() {
                    problems.push(format!("line {}: duplicate key `{k}`", i + 1));
                }
            }
            None => problems.push(format!("line {}: expected `key = value`", i + 1)),
        }
    }
    for (k, v) in overrides {
        values.insert(k.clone(), v.clone());
    }
    for k in values.keys() {
        let known = KEYS.iter().any(|(name, _)| name == k)
            || k.strip_prefix(TOL_PREFIX)
                .is_some_and(|t| Tolerances::KEYS.contains(&t));
        if !known {
            problems.push(format!("unknown key `{k}`"));
        }
    }
    let mut p = Parser {
        values,
        problems,
        resolved: Vec::new(),
    };
    let cfg = p.build();
    if p.problems.is_empty() {
        Ok(RunConfig {
            resolved: p.resolved,
            ..cfg
        })
    } else {
        Err(ConfigError(p.problems))
    }
}

/// Reads the config file at `path` (if any) and applies `overrides`.
pub fn load_config(
    path: Option<&Path>,
    overrides: &[(String, String)],
) -> Result<RunConfig, ConfigError> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p)
            .map_err(|e| ConfigError(vec![format!("cannot read config `{}`: {e}", p.display())]))?,
        None => String::new(),
    };
    parse_config(&text, overrides)
}

struct Parser {
    values: BTreeMap<String, String>,
    problems: Vec<String>,
    resolved: Vec<(String, String)>,
}

impl Parser {
    fn raw(&mut self, key: &str) -> String {
        let default = KEYS
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, d)| *d)
            .unwrap_or("");
        let v = self
            .values
            .get(key)
            .cloned()
            .unwrap_or_else(|| default.to_string());
        self.resolved.push((key.to_string(), v.clone()));
        v
    }

    fn typed<T: std::str::FromStr>(&mut self, key: &str, what: &str, fallback: T) -> T {
        let v = self.raw(key);
        match v.parse() {
            Ok(x) => x,
            Err(_) => {
                self.problems
                    .push(format!("`{key}`: expected {what}, got `{v}`"));
                fallback
            }
        }
    }

    fn real(&mut self, key: &str, ok: fn(f64) -> bool, rule: &str) -> f64 {
        let v = self.typed(key, "a number", f64::NAN);
        if !v.is_nan() && !(v.is_finite() && ok(v)) {
            self.problems
                .push(format!("`{key}` must be {rule}, got {v}"));
        }
        v
    }

    fn count(&mut self, key: &str, min: usize) -> usize {
        let v = self.typed(key, "a non-negative integer", min);
        if v < min {
            self.problems
                .push(format!("`{key}` must be at least {min}, got {v}"));
        }
        v
    }

    fn list<T: std::str::FromStr>(&mut self, key: &str, what: &str) -> Vec<T> {
        let v = self.raw(key);
        let mut out = Vec::new();
        for item in v.split([',', ' ']).filter(|s| !s.is_empty()) {
            match item.parse() {
                Ok(x) => out.push(x),
                Err(_) => self
                    .problems
                    .push(format!("`{key}`: `{item}` is not {what}")),
            }
        }
        out
    }

    fn optional_u64(&mut self, key: &str) -> Option<u64> {
        let v = self.raw(key);
        if v.is_empty() {
            return None;
        }
        match v.parse() {
            Ok(x) => Some(x),
            Err(_) => {
                self.problems.push(format!(
                    "`{key}`: expected a non-negative integer, got `{v}`"
                ));
                None
            }
        }
    }

    fn existing_path(&mut self, key: &str, v: &str) -> PathBuf {
        let p = PathBuf::from(v);
        if !p.is_file() {
            self.problems
                .push(format!("`{key}`: file `{v}` does not exist"));
        }
        p
    }

    fn source(&mut self, key: &str) -> Option<DataSource> {
        let v = self.raw(key);
        if v.is_empty() {
            None
        } else if BUILTIN_NAMES.contains(&v.as_str()) {
            Some(DataSource::Builtin(v))
        } else {
            Some(DataSource::Csv(self.existing_path(key, &v)))
        }
    }

    fn family(&mut self, key: &str, name: &str) -> Family {
        Family::from_name(name).unwrap_or_else(|e| {
            self.problems.push(format!("`{key}`: {e}"));
            Family::Linear
        })
    }

    fn build(&mut self) -> RunConfig {
        let seed = self.optional_u64("seed");
        let outdir = Some(self.raw("outdir"))
            .filter(|s| !s.is_empty())
            .map(PathBuf::from);
        let threads = self.count("threads", 0);
        let family_name = self.raw("family");
        let family = self.family("family", &family_name);
        let horizon = self.real("horizon", |v| v > 0.0, "positive");
        let t_min = self.real("t_min", |v| v > 0.0, "positive");
        if t_min >= horizon {
            self.problems.push(format!(
                "`t_min` must be below `horizon`, got {t_min} >= {horizon}"
            ));
        }
        let curve_exponent = self.real("curve_exponent", |v| v >= 1.0, "at least 1");
        let overlap = self.count("overlap", 1);
        let bridge_sigma_min = self.real("bridge_sigma_min", |v| v > 0.0, "positive");
        let bridge_sigma_max = self.real("bridge_sigma_max", |v| v > 0.0, "positive");
        if bridge_sigma_max <= bridge_sigma_min {
            self.problems
                .push("`bridge_sigma_max` must exceed `bridge_sigma_min`".to_string());
        }
        let poisson_constant = self.real("poisson_constant", |v| v > 0.0, "positive");
        let prior_name = self.raw("prior");
        let prior = if prior_name == "auto" {
            None
        } else {
            match PriorKind::from_name(&prior_name) {
                Ok(k) => Some(k),
                Err(e) => {
                    self.problems.push(format!("`prior`: {e}"));
                    None
                }
            }
        };
        let prior_sigma = self.real("prior_sigma", |v| v > 0.0, "positive");
        let prior_tau = self.real("prior_tau", |v| v >= 0.0, "non-negative");
        let prior_max_exponent = self.real("prior_max_exponent", |v| v >= 0.0, "non-negative");
        let prior_radius = self.real("prior_radius", |v| v > 0.0, "positive");

        let method_name = self.raw("solver");
        let method = Method::from_name(&method_name).unwrap_or_else(|e| {
            self.problems.push(format!("`solver`: {e}"));
            Method::Rk45
        });
        let solver = SolverConfig {
            method,
            step: self.real("step", |v| v > 0.0, "positive"),
            rtol: self.real("rtol", |v| v > 0.0, "positive"),
            atol: self.real("atol", |v| v > 0.0, "positive"),
            max_steps: self.count("max_steps", 1),
            ..SolverConfig::default()
        };

        let steps = self.count("steps", 1);
        let batch_size = self.count("batch_size", 1);
        let learning_rate = self.real("learning_rate", |v| v > 0.0, "positive");
        let hidden: Vec<usize> = self.list("hidden", "a layer width");
        if hidden.is_empty() || hidden.contains(&0) {
            self.problems
                .push("`hidden` must list positive layer widths".to_string());
        }
        let validation_fraction = self.real(
            "validation_fraction",
            |v| (0.0..1.0).contains(&v),
            "in [0, 1)",
        );
        let eval_every = self.count("eval_every", 1);
        let epoch_pairs = self.count("epoch_pairs", 0);
        let train = TrainConfig {
            steps,
            batch_size,
            learning_rate,
            hidden,
            seed: seed.unwrap_or(0),
            validation_fraction,
            eval_every,
            epoch_pairs: (epoch_pairs > 0).then_some(epoch_pairs),
            ..TrainConfig::default()
        };

        let dataset = self.source("dataset").unwrap_or_else(|| {
            self.problems
                .push("`dataset` must name a builtin dataset or a CSV file".to_string());
            DataSource::Builtin(String::new())
        });
        let dataset_n = self.count("dataset_n", 1);
        let reference = self.source("reference");
        let reference_n = self.count("reference_n", 1);
        let checkpoint_raw = self.raw("checkpoint");
        let checkpoint =
            (!checkpoint_raw.is_empty()).then(|| self.existing_path("checkpoint", &checkpoint_raw));
        let n = self.count("n", 1);
        let on_values: Vec<usize> = self.list("on_values", "a positive integer");
        if on_values.is_empty() || on_values.contains(&0) {
            self.problems
                .push("`on_values` must list positive integers".to_string());
        }
        let seeds: Vec<u64> = self.list("seeds", "a seed");
        let family_names: Vec<String> = self.list("families", "a family");
        let families = family_names
            .iter()
            .map(|f| self.family("families", f))
            .collect();
        let g_raw = self.raw("divergence_g");
        let divergence_g = match g_raw.as_str() {
            "none" | "off" => None,
            v => match v.parse::<f64>() {
                Ok(g) if g > 0.0 && g.is_finite() => Some(g),
                _ => {
                    self.problems.push(format!(
                        "`divergence_g` must be positive or `none`, got `{v}`"
                    ));
                    None
                }
            },
        };
        let divergence_times: Vec<f64> = self.list("divergence_times", "a number");
        let divergence_ensemble = self.count("divergence_ensemble", 1000);
        let divergence_points = self.count("divergence_points", 1);
        let timing = self.typed("timing", "true or false", false);

        let mut tolerances = Tolerances::default();
        for key in Tolerances::KEYS {
            let full = format!("{TOL_PREFIX}{key}");
            if let Some(v) = self.values.get(&full).cloned() {
                if let Err(e) = tolerances.set(key, &v) {
                    self.problems.push(format!("`{full}`: {e}"));
                }
                self.resolved.push((full, v));
            }
        }

        RunConfig {
            seed,
            outdir,
            threads,
            family,
            horizon,
            t_min,
            curve_exponent,
            overlap,
            bridge_sigma_min,
            bridge_sigma_max,
            poisson_constant,
            prior,
            prior_sigma,
            prior_tau,
            prior_max_exponent,
            prior_radius,
            solver,
            train,
            dataset,
            dataset_n,
            reference,
            reference_n,
            checkpoint,
            n,
            on_values,
            seeds,
            families,
            divergence_g,
            divergence_times,
            divergence_ensemble,
            divergence_points,
            timing,
            tolerances,
            resolved: Vec::new(),
        }
    }
}
