use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_forcefield"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("forcefield-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn version_lists_code_and_checkpoint_versions() {
    let o = run(&["--version"]);
    assert_eq!(code(&o), 0);
    let s = String::from_utf8(o.stdout).unwrap();
    assert!(s.contains(env!("CARGO_PKG_VERSION")), "{s}");
    assert!(
        s.contains(&format!(
            "checkpoint format {}",
            forcefield::CHECKPOINT_FORMAT_VERSION
        )),
        "{s}"
    );
}

#[test]
fn missing_dataset_exits_1_without_outputs() {
    let out = scratch("missing");
    let o = run(&[
        "train",
        "--seed",
        "1",
        "--outdir",
        out.to_str().unwrap(),
        "--dataset",
        "/nonexistent/points.csv",
    ]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("dataset"));
    assert!(!out.exists());
}

#[test]
fn seed_is_mandatory() {
    let out = scratch("noseed");
    let o = run(&["train", "--outdir", out.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("seed"));
    assert!(!out.exists());
}

#[test]
fn config_problems_are_listed_together() {
    let dir = scratch("badcfg");
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("bad.cfg");
    std::fs::write(&cfg, "t_min = -1\nbogus = 3\n").unwrap();
    let o = run(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "1",
        "--outdir",
        "x",
    ]);
    assert_eq!(code(&o), 1);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("t_min") && err.contains("bogus"), "{err}");
}

fn lines(path: &Path) -> usize {
    std::fs::read_to_string(path).unwrap().lines().count()
}

#[test]
fn train_then_sample() {
    let root = scratch("pipeline");
    let tdir = root.join("train");
    let o = run(&[
        "train",
        "--seed",
        "3",
        "--outdir",
        tdir.to_str().unwrap(),
        "--dataset_n",
        "200",
        "--steps",
        "50",
        "--eval_every",
        "25",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let ckpt = tdir.join("checkpoint");
    assert!(ckpt.is_file());
    assert_eq!(lines(&tdir.join("train_log.csv")), 51);
    let resolved = std::fs::read_to_string(tdir.join("resolved.cfg")).unwrap();
    assert!(resolved.contains("steps = 50\n") && resolved.contains("seed = 3\n"));

    let sdir = root.join("sample");
    let o = run(&[
        "sample",
        "--seed",
        "4",
        "--outdir",
        sdir.to_str().unwrap(),
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--n",
        "100",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(lines(&sdir.join("samples.csv")), 101);
    let report = std::fs::read_to_string(sdir.join("report.csv")).unwrap();
    let row: Vec<&str> = report.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "100");
    assert!(row[1].parse::<usize>().unwrap() > 0);
    assert!(sdir.join("samples.svg").is_file());
}

#[test]
fn sample_requires_a_checkpoint() {
    let out = scratch("nockpt");
    let o = run(&["sample", "--seed", "1", "--outdir", out.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("checkpoint"));
}

#[test]
fn corrupt_checkpoint_is_a_validation_error() {
    let dir = scratch("corrupt");
    std::fs::create_dir_all(&dir).unwrap();
    let ckpt = dir.join("ckpt");
    std::fs::write(&ckpt, "format_version = 2.0\n").unwrap();
    let o = run(&[
        "sample",
        "--seed",
        "1",
        "--outdir",
        dir.join("out").to_str().unwrap(),
        "--checkpoint",
        ckpt.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("trainer:"));
}
