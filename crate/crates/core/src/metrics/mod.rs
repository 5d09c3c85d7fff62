//! Approximation-quality metrics: 2-Wasserstein distances between weighted clouds,
//! moment errors and mode-mass fractions.

mod ot;

pub use ot::{
    exact_transport, wasserstein2_exact, wasserstein2_sinkhorn, SinkhornOptions, SinkhornResult,
    TransportPlan, WeightedCloud, EXACT_SIZE_LIMIT,
};

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Result};
use crate::kernel::sq_dist;
use crate::state::{empirical_moments, ParticleState};

/// `(|mean - target_mean|_2, |cov - target_cov|_F)` for the weighted particle measure.
pub fn moment_errors(
    state: &ParticleState,
    target_mean: &DVector<f64>,
    target_cov: &DMatrix<f64>,
) -> Result<(f64, f64)> {
    let d = state.dim();
    if target_mean.len() != d || target_cov.nrows() != d || target_cov.ncols() != d {
        return Err(invalid(format!(
            "target moments have shape {} / {}x{}, particles have dimension {d}",
            target_mean.len(),
            target_cov.nrows(),
            target_cov.ncols()
        )));
    }
    let m = empirical_moments(state, 0.0);
    Ok(((m.mean - target_mean).norm(), (m.covariance - target_cov).norm()))
}

/// Total weight of particles strictly closer to `center_a` than to `center_b`; ties count half.
pub fn mode_mass(state: &ParticleState, center_a: &[f64], center_b: &[f64]) -> f64 {
    state
        .weights()
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            let x = state.position(i);
            let (da, db) = (sq_dist(x, center_a), sq_dist(x, center_b));
            if da < db {
                w
            } else if da == db {
                0.5 * w
            } else {
                0.0
            }
        })
        .sum()
}
