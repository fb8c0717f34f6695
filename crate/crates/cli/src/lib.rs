//! Command-line front end for the `forcefield` library.
//!
//! `forcefield <train|sample|verify|study|compare> [--config FILE] [--key value]...`
//!
//! Exit codes: 0 on success, 1 on invalid input or configuration, 2 on a runtime
//! failure (including failed verification checks).

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::CommandError;
pub use config::{load_config, parse_config, parse_overrides, ConfigError, DataSource, RunConfig};

/// Code version and checkpoint-format version.
pub fn version_string() -> String {
    format!(
        "{} (checkpoint format {})",
        env!("CARGO_PKG_VERSION"),
        forcefield::CHECKPOINT_FORMAT_VERSION
    )
}

#[derive(Debug, Parser)]
#[command(
    name = "forcefield",
    about = "Train, sample and verify force-field generative models"
)]
struct Cli {
    /// Print code and checkpoint-format versions.
    #[arg(long, short = 'V')]
    version: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a field network and write a checkpoint.
    Train(Overrides),
    /// Generate samples from a checkpoint.
    Sample(Overrides),
    /// Run the numerical verification suite.
    Verify(Overrides),
    /// Sweep the overlap count of the superposed family.
    Study(Overrides),
    /// Train several families on the same data and compare them.
    Compare(Overrides),
}

#[derive(Debug, clap::Args)]
struct Overrides {
    /// `--config FILE` and any number of `--key value` pairs.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, num_args = 0..)]
    args: Vec<String>,
}

/// Runs the CLI with `argv` (program name first). Returns the exit code and writes
/// messages to stdout/stderr.
pub fn run<I, T>(argv: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if cli.version {
        println!("forcefield {}", version_string());
        return 0;
    }
    let Some(command) = cli.command else {
        eprintln!("a subcommand is required; see --help");
        return 1;
    };
    let (name, args) = match &command {
        Command::Train(o) => ("train", &o.args),
        Command::Sample(o) => ("sample", &o.args),
        Command::Verify(o) => ("verify", &o.args),
        Command::Study(o) => ("study", &o.args),
        Command::Compare(o) => ("compare", &o.args),
    };
    let cfg = match resolve(args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return 1;
        }
    };
    if cfg.threads > 0 {
        // Only fails when a pool already exists, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build_global();
    }
    let result = match name {
        "train" => commands::train_cmd(&cfg),
        "sample" => commands::sample_cmd(&cfg),
        "verify" => commands::verify_cmd(&cfg),
        "study" => commands::study_cmd(&cfg),
        _ => commands::compare_cmd(&cfg),
    };
    match result {
        Ok(msg) => {
            println!("{name}: {msg}");
            0
        }
        Err(e) => {
            eprintln!("{}", e.message());
            e.exit_code()
        }
    }
}

fn resolve(args: &[String]) -> Result<RunConfig, ConfigError> {
    let pairs = parse_overrides(args)?;
    let mut config_path: Option<PathBuf> = None;
    let mut rest = Vec::new();
    for (k, v) in pairs {
        if k == "config" {
            config_path = Some(PathBuf::from(v));
        } else {
            rest.push((k, v));
        }
    }
    load_config(config_path.as_deref(), &rest)
}
