//! RBF kernel `K(x, y) = exp(-|x - y|^2 / h)` and bandwidth selection.

use crate::error::{invalid, Error, Result};

/// Smallest bandwidth returned by [`bandwidth_nn`] when particles coincide.
pub const BANDWIDTH_FLOOR: f64 = 1e-8;

fn check_args(x: &[f64], y: &[f64], h: f64) -> Result<()> {
    if x.len() != y.len() {
        return Err(invalid(format!(
            "kernel arguments differ in dimension ({} vs {})",
            x.len(),
            y.len()
        )));
    }
    if !(h > 0.0) || !h.is_finite() {
        return Err(invalid(format!("bandwidth must be positive, got {h}")));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(invalid("non-finite kernel argument"));
    }
    Ok(())
}

#[inline]
pub(crate) fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

#[inline]
pub(crate) fn rbf(x: &[f64], y: &[f64], h: f64) -> f64 {
    (-sq_dist(x, y) / h).exp()
}

pub fn rbf_kernel(x: &[f64], y: &[f64], h: f64) -> Result<f64> {
    check_args(x, y, h)?;
    Ok(rbf(x, y, h))
}

/// Gradient of the kernel in its first argument: `-(2/h)(x - y) K(x, y)`.
pub fn rbf_kernel_grad(x: &[f64], y: &[f64], h: f64) -> Result<Vec<f64>> {
    check_args(x, y, h)?;
    let k = rbf(x, y, h);
    Ok(x.iter().zip(y).map(|(a, b)| -2.0 / h * (a - b) * k).collect())
}

/// Mean over particles of the squared distance to the nearest other particle.
///
/// `positions` is row-major with rows of length `dim`.
pub fn bandwidth_nn(positions: &[f64], dim: usize) -> Result<f64> {
    if dim == 0 || !positions.len().is_multiple_of(dim) {
        return Err(invalid("positions do not form rows of the given dimension"));
    }
    let m = positions.len() / dim;
    if m < 2 {
        return Err(Error::DegenerateInput(format!(
            "nearest-neighbor bandwidth needs at least 2 particles, got {m}; supply a fixed bandwidth"
        )));
    }
    let row = |i: usize| &positions[i * dim..(i + 1) * dim];
    let mut nearest = vec![f64::INFINITY; m];
    for i in 0..m {
        for j in (i + 1)..m {
            let d2 = sq_dist(row(i), row(j));
            nearest[i] = nearest[i].min(d2);
            nearest[j] = nearest[j].min(d2);
        }
    }
    let h = nearest.iter().sum::<f64>() / m as f64;
    Ok(if h > 0.0 { h } else { BANDWIDTH_FLOOR })
}

/// Dense symmetric matrix of kernel values between all particle pairs.
#[derive(Clone, Debug)]
pub(crate) struct KernelMatrix {
    pub m: usize,
    pub values: Vec<f64>,
}

impl KernelMatrix {
    pub fn new(positions: &[f64], dim: usize, h: f64) -> Self {
        let m = positions.len() / dim;
        let row = |i: usize| &positions[i * dim..(i + 1) * dim];
        let mut values = vec![0.0; m * m];
        for i in 0..m {
            values[i * m + i] = 1.0;
            for j in (i + 1)..m {
                let k = rbf(row(i), row(j), h);
                values[i * m + j] = k;
                values[j * m + i] = k;
            }
        }
        Self { m, values }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.m + j]
    }
}
