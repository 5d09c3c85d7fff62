//! Weighted particle systems and their empirical moments.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Result};

/// Tolerance on `|sum(w) - 1|` accepted by [`ParticleState::validate`].
pub const MASS_TOLERANCE: f64 = 1e-12;

/// Neumaier-compensated sum, so that mass checks do not degrade with the particle count.
pub(crate) fn compensated_sum(values: &[f64]) -> f64 {
    let (mut sum, mut carry) = (0.0f64, 0.0f64);
    for &v in values {
        let t = sum + v;
        carry += if sum.abs() >= v.abs() {
            (sum - t) + v
        } else {
            (v - t) + sum
        };
        sum = t;
    }
    sum + carry
}

/// The augmented particle system `{(x^i, v^i, w^i)}` evolved by every method.
///
/// Positions and velocities are stored row-major as `M x d` matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleState {
    dim: usize,
    positions: Vec<f64>,
    velocities: Vec<f64>,
    weights: Vec<f64>,
    iteration: u64,
}

impl ParticleState {
    /// Builds a state with zero velocities and uniform weights.
    pub fn uniform(positions: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 || positions.is_empty() || !positions.len().is_multiple_of(dim) {
            return Err(invalid(format!(
                "positions of length {} do not form rows of dimension {dim}",
                positions.len()
            )));
        }
        let m = positions.len() / dim;
        let velocities = vec![0.0; positions.len()];
        Self::new(positions, velocities, vec![1.0 / m as f64; m], dim)
    }

    pub fn new(
        positions: Vec<f64>,
        velocities: Vec<f64>,
        weights: Vec<f64>,
        dim: usize,
    ) -> Result<Self> {
        let state = Self {
            dim,
            positions,
            velocities,
            weights,
            iteration: 0,
        };
        state.validate()?;
        Ok(state)
    }

    pub(crate) fn from_parts(
        dim: usize,
        positions: Vec<f64>,
        velocities: Vec<f64>,
        weights: Vec<f64>,
        iteration: u64,
    ) -> Self {
        debug_assert_eq!(positions.len(), velocities.len());
        debug_assert_eq!(positions.len(), weights.len() * dim);
        Self {
            dim,
            positions,
            velocities,
            weights,
            iteration,
        }
    }

    /// Checks shape, finiteness and simplex invariants.
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(invalid("dimension must be positive"));
        }
        let m = self.weights.len();
        if m == 0 {
            return Err(invalid("particle system is empty"));
        }
        if self.positions.len() != m * self.dim || self.velocities.len() != m * self.dim {
            return Err(invalid(format!(
                "expected {m}x{} positions and velocities, got {} and {} entries",
                self.dim,
                self.positions.len(),
                self.velocities.len()
            )));
        }
        if self
            .positions
            .iter()
            .chain(&self.velocities)
            .any(|v| !v.is_finite())
        {
            return Err(invalid("non-finite position or velocity"));
        }
        if self.weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(invalid("weights must be finite and nonnegative"));
        }
        let total = compensated_sum(&self.weights);
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(invalid(format!("weights sum to {total}, not 1")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn set_iteration(&mut self, iteration: u64) {
        self.iteration = iteration;
    }

    pub fn position(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn velocity(&self, i: usize) -> &[f64] {
        &self.velocities[i * self.dim..(i + 1) * self.dim]
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn velocities(&self) -> &[f64] {
        &self.velocities
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Replaces the positions, keeping weights and velocities.
    pub fn with_positions(&self, positions: Vec<f64>) -> Self {
        assert_eq!(positions.len(), self.positions.len());
        Self {
            positions,
            ..self.clone()
        }
    }

    pub fn with_velocities(&self, velocities: Vec<f64>) -> Self {
        assert_eq!(velocities.len(), self.velocities.len());
        Self {
            velocities,
            ..self.clone()
        }
    }

    /// Replaces the weights. The caller is responsible for keeping them on the simplex.
    pub fn with_weights(&self, weights: Vec<f64>) -> Self {
        assert_eq!(weights.len(), self.weights.len());
        Self {
            weights,
            ..self.clone()
        }
    }

    /// Reorders particles so that new particle `k` is old particle `order[k]`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        assert_eq!(order.len(), self.len());
        let d = self.dim;
        let mut positions = Vec::with_capacity(self.positions.len());
        let mut velocities = Vec::with_capacity(self.velocities.len());
        let mut weights = Vec::with_capacity(self.len());
        for &i in order {
            positions.extend_from_slice(self.position(i));
            velocities.extend_from_slice(self.velocity(i));
            weights.push(self.weights[i]);
        }
        Self::from_parts(d, positions, velocities, weights, self.iteration)
    }

    pub(crate) fn into_parts(self) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        (self.positions, self.velocities, self.weights)
    }
}

/// Bandwidth selection rule for the RBF kernel.
#[derive(Clone, Copy, Debug, PartialEq)]
#[derive(Default)]
pub enum KernelConfig {
    /// Mean squared distance to the nearest other particle, recomputed every iteration.
    #[default]
    NearestNeighbor,
    Fixed(f64),
}


impl KernelConfig {
    pub fn fixed(h: f64) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(invalid(format!("fixed bandwidth must be positive, got {h}")));
        }
        Ok(KernelConfig::Fixed(h))
    }

    /// Resolves the bandwidth for the given particle positions.
    pub fn bandwidth(&self, positions: &[f64], dim: usize) -> Result<f64> {
        match *self {
            KernelConfig::Fixed(h) => Ok(h),
            KernelConfig::NearestNeighbor => crate::kernel::bandwidth_nn(positions, dim),
        }
    }
}

/// Weighted mean, covariance and the regularized covariance `C + lambda I`.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalMoments {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub regularized_covariance: DMatrix<f64>,
}

/// Population moments of the weighted empirical measure.
pub fn empirical_moments(state: &ParticleState, lambda: f64) -> EmpiricalMoments {
    let d = state.dim();
    let mut mean = DVector::zeros(d);
    for (i, &w) in state.weights().iter().enumerate() {
        for (k, x) in state.position(i).iter().enumerate() {
            mean[k] += w * x;
        }
    }
    let mut covariance = DMatrix::zeros(d, d);
    let mut centered = vec![0.0; d];
    for (i, &w) in state.weights().iter().enumerate() {
        for (k, x) in state.position(i).iter().enumerate() {
            centered[k] = x - mean[k];
        }
        for a in 0..d {
            for b in a..d {
                covariance[(a, b)] += w * centered[a] * centered[b];
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            covariance[(a, b)] = covariance[(b, a)];
        }
    }
    let regularized_covariance = &covariance + DMatrix::identity(d, d) * lambda;
    EmpiricalMoments {
        mean,
        covariance,
        regularized_covariance,
    }
}
