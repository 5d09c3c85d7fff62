//! Particle-based variational inference with accelerated position updates and
//! Fisher-Rao weight adjustment.
//!
//! A weighted particle system `{(x^i, v^i, w^i)}` is evolved towards a target `pi` by
//! discretized semi-Hamiltonian flows. Positions follow damped Hamiltonian dynamics under
//! a Wasserstein, Kalman-Wasserstein or Stein metric; weights follow the Fisher-Rao
//! reaction either continuously (CA) or by duplicate/kill resampling (DK). The first
//! variation of the objective is smoothed with BLOB, GFSD or KSDD.
//!
//! Modules:
//! - [`state`], [`kernel`]: particle systems, RBF kernel, bandwidth and moments
//! - [`targets`]: Gaussian, Gaussian-mixture and GP-hyperparameter posteriors
//! - [`smoothing`]: first-variation approximations and the Stein kernel
//! - [`dynamics`]: one-iteration steppers for every method and baseline
//! - [`metrics`]: exact and entropic 2-Wasserstein distances, moment diagnostics
//! - [`harness`]: experiment configuration, runs, CSV/SVG output

pub mod dynamics;
pub mod error;
pub mod harness;
pub mod kernel;
pub mod metrics;
pub mod smoothing;
pub mod state;
pub mod targets;

pub use dynamics::{make_stepper, DynamicsConfig, Method, Metric, Stepper, Task, WeightMode};
pub use error::{Error, Result};
pub use smoothing::{FirstVariation, Smoothing};
pub use state::{empirical_moments, EmpiricalMoments, KernelConfig, ParticleState};
pub use targets::Target;
