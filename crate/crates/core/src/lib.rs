//! Force-field construction for ODE-style generative models.
//!
//! A generative model here is a velocity field `F_t(x)` whose flow `dx/dt = F_t(x)`
//! carries a simple terminal prior at `t = T` onto a data distribution at `t = 0`.
//! The field is assembled from closed-form conditional trajectories (one per data
//! point) and their posterior weights, either exactly over a finite dataset
//! ([`field::OracleField`]) or approximately by a small network trained with a
//! regression objective ([`trainer`]).
//!
//! Module map:
//!
//! * [`trajectory`]: conditional path families, velocities and kernels
//! * [`sampler`]: terminal priors and training-pair generation
//! * [`field`]: oracle and learned aggregate fields
//! * [`ode`]: fixed-step and adaptive integrators with exact NFE accounting
//! * [`trainer`]: feed-forward field network, Adam, checkpoints
//! * [`metrics`]: sliced Wasserstein, energy distance, composite index, score estimates
//! * [`study`]: overlap-count sweeps and family comparisons
//! * [`data_io`]: toy datasets, CSV and SVG
//! * [`verify`]: numerical checks of the underlying identities

pub mod data_io;
pub mod error;
pub mod field;
pub mod metrics;
pub mod ode;
pub mod quadrature;
pub mod rng;
pub mod sampler;
pub mod study;
pub mod trainer;
pub mod trajectory;
pub mod verify;

pub use error::{Error, Result};
pub use field::{FieldSource, LearnedField, OracleField, VectorField};
pub use sampler::{PriorKind, PriorSpec, TrainingPair};
pub use trajectory::{AnchorSet, Family, TrajectorySpec};

/// Version string of the checkpoint container written by [`trainer::checkpoint`].
pub const CHECKPOINT_FORMAT_VERSION: &str = "1.0";

pub(crate) fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    norm_sq(v).sqrt()
}

pub(crate) fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
