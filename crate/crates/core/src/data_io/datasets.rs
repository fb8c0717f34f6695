use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub const BUILTIN_NAMES: [&str; 6] = [
    "ring8",
    "two_moons",
    "checkerboard",
    "spiral",
    "single_point",
    "two_points",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub dim: usize,
    pub points: Vec<Vec<f64>>,
    /// Component or class index per point, empty when the generator has none.
    pub labels: Vec<usize>,
    pub held_out: Option<Vec<Vec<f64>>>,
}

impl Dataset {
    pub fn new(name: &str, points: Vec<Vec<f64>>) -> Result<Self> {
        let dim = points.first().map(|p| p.len()).unwrap_or(0);
        if points.is_empty() || dim == 0 {
            return Err(Error::invalid(format!("dataset `{name}` is empty")));
        }
        if let Some(i) = points.iter().position(|p| p.len() != dim) {
            return Err(Error::invalid(format!(
                "dataset `{name}`: point {i} has dimension {}, expected {dim}",
                points[i].len()
            )));
        }
        Ok(Dataset {
            name: name.to_string(),
            dim,
            points,
            labels: Vec::new(),
            held_out: None,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Default location of the `single_point` dataset.
pub const SINGLE_POINT: [f64; 2] = [0.5, -0.25];

/// `n` copies of `coord`.
pub fn single_point(coord: &[f64], n: usize) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    Dataset::new("single_point", vec![coord.to_vec(); n])
}

/// Two-dimensional toy datasets.
///
/// * `ring8`: mode `k` uniform in `0..8`, centre `(cos 2πk/8, sin 2πk/8)`, noise `N(0, 0.1²)`
/// * `two_moons`: class `c` fair coin, `θ ~ U[0, π]`; class 0 at `(cos θ, sin θ)`, class 1
///   at `(1 - cos θ, 0.5 - sin θ)`; noise `N(0, 0.05²)`
/// * `checkerboard`: uniform on the 8 dark cells of a 4×4 board over `[-2, 2]²`
/// * `spiral`: `θ = 3π √u`, point `(θ / 3π)(cos θ, sin θ)`, noise `N(0, 0.02²)`
/// * `single_point`: every point at `(0.5, -0.25)`
/// * `two_points`: `(-1, 0)` or `(1, 0)` with equal probability
pub fn builtin<R: Rng + ?Sized>(name: &str, n: usize, rng: &mut R) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    let mut labels = Vec::with_capacity(n);
    let mut points = Vec::with_capacity(n);
    match name {
        "ring8" => {
            for _ in 0..n {
                let k = rng.random_range(0..8usize);
                let a = 2.0 * PI * k as f64 / 8.0;
                points.push(vec![
                    a.cos() + 0.1 * normal(rng),
                    a.sin() + 0.1 * normal(rng),
                ]);
                labels.push(k);
            }
        }
        "two_moons" => {
            for _ in 0..n {
                let c = rng.random_range(0..2usize);
                let th = rng.random_range(0.0..PI);
                let (x, y) = if c == 0 {
                    (th.cos(), th.sin())
                } else {
                    (1.0 - th.cos(), 0.5 - th.sin())
                };
                points.push(vec![x + 0.05 * normal(rng), y + 0.05 * normal(rng)]);
                labels.push(c);
            }
        }
        "checkerboard" => {
            for _ in 0..n {
                let col = rng.random_range(0..4usize);
                let row = 2 * rng.random_range(0..2usize) + (col % 2);
                let x = -2.0 + col as f64 + rng.random_range(0.0..1.0);
                let y = -2.0 + row as f64 + rng.random_range(0.0..1.0);
                points.push(vec![x, y]);
                labels.push(4 * row + col);
            }
        }
        "spiral" => {
            for _ in 0..n {
                let u: f64 = rng.random_range(0.0..1.0);
                let th = 3.0 * PI * u.sqrt();
                let r = th / (3.0 * PI);
                points.push(vec![
                    r * th.cos() + 0.02 * normal(rng),
                    r * th.sin() + 0.02 * normal(rng),
                ]);
            }
        }
        "single_point" => return single_point(&SINGLE_POINT, n),
        "two_points" => {
            for _ in 0..n {
                let c = rng.random_range(0..2usize);
                points.push(vec![if c == 0 { -1.0 } else { 1.0 }, 0.0]);
                labels.push(c);
            }
        }
        _ => {
            return Err(Error::invalid(format!(
                "unknown dataset `{name}` (valid: {})",
                BUILTIN_NAMES.join(", ")
            )))
        }
    }
    let mut ds = Dataset::new(name, points)?;
    ds.labels = labels;
    Ok(ds)
}
