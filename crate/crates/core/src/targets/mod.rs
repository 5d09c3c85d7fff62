//! Target densities `pi` exposing log-density, score and (optionally) the Hessian of `log pi`.

mod gaussian;
mod gp;
mod mixture;

pub use gaussian::{sg_target, Gaussian, SG_CORRELATION};
pub use gp::{gp_target, load_two_column_csv, synthetic_lidar, GpData, GpPosterior, GpPrior, GP_JITTER};
pub use mixture::{gmm_target, IsotropicMixture, GMM_OFFSET};

use nalgebra::{DMatrix, DVector};
use rand::RngCore;

use crate::error::Result;

/// An unnormalized target density over `R^d`.
pub trait Target: Send + Sync {
    fn dim(&self) -> usize;

    /// `log pi(x)` up to an additive constant.
    fn log_density(&self, x: &[f64]) -> Result<f64>;

    /// `grad log pi(x)`.
    fn score(&self, x: &[f64]) -> Result<Vec<f64>>;

    /// Both of the above; targets that share work between them override this.
    fn log_density_and_score(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        Ok((self.log_density(x)?, self.score(x)?))
    }

    /// Hessian of `log pi`, when available.
    fn hessian_log_density(&self, _x: &[f64]) -> Option<DMatrix<f64>> {
        None
    }

    fn has_hessian(&self) -> bool {
        false
    }

    /// Closed-form mean and covariance, when known.
    fn moments(&self) -> Option<(DVector<f64>, DMatrix<f64>)> {
        None
    }

    /// Draws `n` exact samples (row-major), when the target supports it.
    fn sample(&self, _n: usize, _rng: &mut dyn RngCore) -> Option<Vec<f64>> {
        None
    }
}
