//! Browser bindings: oracle field grids, generation paths and the radial sampling law.
//!
//! Each export returns a JSON string. The plain Rust functions behind them are public
//! so they can be tested natively.

use forcefield::data_io::builtin;
use forcefield::ode::{integrate, SolverConfig};
use forcefield::rng::stream;
use forcefield::sampler::{sample_pfgm, RadialLaw};
use forcefield::{Family, OracleField, PriorSpec, Result, TrajectorySpec, VectorField};
use serde_json::json;
use wasm_bindgen::prelude::*;

/// Points drawn from the toy dataset for the oracle; keeps each evaluation cheap.
pub const DATA_POINTS: usize = 256;

fn oracle(
    dataset: &str,
    family: &str,
    seed: u64,
) -> Result<(OracleField, TrajectorySpec, PriorSpec, Vec<Vec<f64>>)> {
    let family = Family::from_name(family)?;
    let data = builtin(dataset, DATA_POINTS, &mut stream(seed, "dataset", 0))?.points;
    let spec = match family {
        Family::Curve => TrajectorySpec::curve(2, 2.0),
        Family::SuperposedLinear => TrajectorySpec::superposed(2, 3),
        _ => TrajectorySpec::new(family, 2),
    };
    let prior = PriorSpec::default_for(family);
    let field = OracleField::new(&data, spec.clone(), prior)?;
    Ok((field, spec, prior, data))
}

/// Field arrows on a `grid x grid` lattice over `[-2, 2]^2` at time `t`.
pub fn field_grid_json(
    dataset: &str,
    family: &str,
    t: f64,
    grid: usize,
    seed: u64,
) -> Result<String> {
    let (field, spec, _, data) = oracle(dataset, family, seed)?;
    let t = t.clamp(spec.t_min, spec.horizon);
    let grid = grid.clamp(2, 64);
    let mut arrows = Vec::with_capacity(grid * grid);
    let mut v = [0.0; 2];
    for i in 0..grid {
        for j in 0..grid {
            let x = [
                -2.0 + 4.0 * i as f64 / (grid - 1) as f64,
                -2.0 + 4.0 * j as f64 / (grid - 1) as f64,
            ];
            field.eval(&x, t, &mut v)?;
            arrows.push([x[0], x[1], v[0], v[1]]);
        }
    }
    Ok(json!({ "t": t, "arrows": arrows, "data": data }).to_string())
}

/// `n` generation paths from the prior at `T` down to `t_min`.
pub fn trajectories_json(dataset: &str, family: &str, n: usize, seed: u64) -> Result<String> {
    let (field, spec, prior, data) = oracle(dataset, family, seed)?;
    let cfg = SolverConfig {
        keep_path: true,
        rtol: 1e-4,
        atol: 1e-4,
        ..SolverConfig::generation(&spec)
    };
    let mut paths = Vec::new();
    let mut nfe = 0;
    for i in 0..n.min(200) {
        let start = prior.sample_terminal(&spec, &mut stream(seed, "generate", i as u64));
        let rec = integrate(&field, &start, &cfg)?;
        nfe += rec.nfe;
        paths.push(rec.states);
    }
    Ok(json!({ "paths": paths, "nfe": nfe, "data": data }).to_string())
}

/// Histogram of `|e_x| / |e_t|` against the analytic law, on `bins` bins over `[0, r_max]`.
pub fn radial_histogram_json(
    d: usize,
    n: usize,
    bins: usize,
    r_max: f64,
    seed: u64,
) -> Result<String> {
    let law = RadialLaw::new(d)?;
    let bins = bins.clamp(1, 400);
    let width = r_max / bins as f64;
    let prior = PriorSpec::pfgm(1.0, 0.0, 0.0);
    let origin = vec![0.0; d];
    let mut rng = stream(seed, "radial", 0);
    let mut counts = vec![0usize; bins];
    for _ in 0..n {
        let (x, t) = sample_pfgm(&origin, &prior, &mut rng)?;
        let r = x.iter().map(|c| c * c).sum::<f64>().sqrt() / t;
        let k = (r / width) as usize;
        if k < bins {
            counts[k] += 1;
        }
    }
    let empirical: Vec<f64> = counts
        .iter()
        .map(|&c| c as f64 / (n as f64 * width))
        .collect();
    let analytic: Vec<f64> = (0..bins)
        .map(|k| (law.cdf((k + 1) as f64 * width) - law.cdf(k as f64 * width)) / width)
        .collect();
    Ok(json!({ "width": width, "empirical": empirical, "analytic": analytic }).to_string())
}

fn js(e: forcefield::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub fn field_grid(
    dataset: &str,
    family: &str,
    t: f64,
    grid: usize,
    seed: u32,
) -> Result<String, JsError> {
    field_grid_json(dataset, family, t, grid, seed.into()).map_err(js)
}

#[wasm_bindgen]
pub fn trajectories(dataset: &str, family: &str, n: usize, seed: u32) -> Result<String, JsError> {
    trajectories_json(dataset, family, n, seed.into()).map_err(js)
}

#[wasm_bindgen]
pub fn radial_histogram(
    d: usize,
    n: usize,
    bins: usize,
    r_max: f64,
    seed: u32,
) -> Result<String, JsError> {
    radial_histogram_json(d, n, bins, r_max, seed.into()).map_err(js)
}
