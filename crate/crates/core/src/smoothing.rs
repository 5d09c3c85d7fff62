//! Smoothed first variations `U ~ dF/dmu` of the KL divergence (BLOB, GFSD) and the
//! kernel Stein discrepancy (KSDD), evaluated at the particle locations.
//!
//! Gradients are taken in the evaluation point with the empirical measure held fixed,
//! i.e. `grad_u[i] = grad U_mu(x)` at `x = x^i`.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::kernel::{sq_dist, KernelMatrix};
use crate::state::ParticleState;
use crate::targets::Target;

/// Floor applied to kernel mixture sums before taking logarithms or dividing.
pub const MIXTURE_FLOOR: f64 = 1e-300;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Smoothing {
    Blob,
    Gfsd,
    Ksdd,
}

impl Smoothing {
    pub const ALL: [Smoothing; 3] = [Smoothing::Blob, Smoothing::Gfsd, Smoothing::Ksdd];

    pub fn name(self) -> &'static str {
        match self {
            Smoothing::Blob => "BLOB",
            Smoothing::Gfsd => "GFSD",
            Smoothing::Ksdd => "KSDD",
        }
    }

    /// Whether the approximation needs the Hessian of `log pi`.
    pub fn needs_hessian(self) -> bool {
        self == Smoothing::Ksdd
    }
}

impl fmt::Display for Smoothing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Smoothing {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "BLOB" => Ok(Smoothing::Blob),
            "GFSD" => Ok(Smoothing::Gfsd),
            "KSDD" => Ok(Smoothing::Ksdd),
            _ => Err(invalid(format!("unknown smoothing '{s}'"))),
        }
    }
}

/// `U` and `grad U` at each particle.
#[derive(Clone, Debug, PartialEq)]
pub struct FirstVariation {
    pub u: Vec<f64>,
    /// Row-major `M x d`.
    pub grad_u: Vec<f64>,
    /// Number of kernel sums that hit [`MIXTURE_FLOOR`].
    pub floored: usize,
}

impl FirstVariation {
    pub fn grad(&self, i: usize, dim: usize) -> &[f64] {
        &self.grad_u[i * dim..(i + 1) * dim]
    }

    /// Weighted mean `sum_j w^j u[j]`.
    pub fn weighted_mean(&self, weights: &[f64]) -> f64 {
        weights.iter().zip(&self.u).map(|(w, u)| w * u).sum()
    }
}

pub fn first_variation(
    smoothing: Smoothing,
    state: &ParticleState,
    target: &dyn Target,
    h: f64,
) -> Result<FirstVariation> {
    match smoothing {
        Smoothing::Blob => blob_first_variation(state, target, h),
        Smoothing::Gfsd => gfsd_first_variation(state, target, h),
        Smoothing::Ksdd => ksdd_first_variation(state, target, h),
    }
}

fn check(state: &ParticleState, target: &dyn Target, h: f64) -> Result<()> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(invalid(format!("bandwidth must be positive, got {h}")));
    }
    if target.dim() != state.dim() {
        return Err(invalid(format!(
            "target dimension {} does not match particles ({})",
            target.dim(),
            state.dim()
        )));
    }
    Ok(())
}

/// `log pi` and `grad log pi` at every particle, evaluated in parallel.
pub(crate) fn target_terms(state: &ParticleState, target: &dyn Target) -> Result<(Vec<f64>, Vec<f64>)> {
    let evals: Vec<(f64, Vec<f64>)> = (0..state.len())
        .into_par_iter()
        .map(|i| target.log_density_and_score(state.position(i)))
        .collect::<Result<_>>()?;
    let mut logp = Vec::with_capacity(evals.len());
    let mut scores = Vec::with_capacity(evals.len() * state.dim());
    for (lp, s) in evals {
        logp.push(lp);
        scores.extend(s);
    }
    Ok((logp, scores))
}

struct KernelSums {
    kernel: KernelMatrix,
    /// `S_i = sum_j w^j K(x^i, x^j)`, floored.
    sums: Vec<f64>,
    /// `sum_j w^j grad_1 K(x^i, x^j)`, row-major.
    grad_sums: Vec<f64>,
    floored: usize,
}

fn kernel_sums(state: &ParticleState, h: f64) -> KernelSums {
    let (m, d) = (state.len(), state.dim());
    let kernel = KernelMatrix::new(state.positions(), d, h);
    let w = state.weights();
    let mut sums = vec![0.0; m];
    let mut grad_sums = vec![0.0; m * d];
    let mut floored = 0;
    for i in 0..m {
        let xi = state.position(i);
        let mut s = 0.0;
        for j in 0..m {
            let kij = kernel.get(i, j);
            s += w[j] * kij;
            let coeff = -2.0 / h * w[j] * kij;
            for (g, (a, b)) in grad_sums[i * d..(i + 1) * d]
                .iter_mut()
                .zip(xi.iter().zip(state.position(j)))
            {
                *g += coeff * (a - b);
            }
        }
        if !(s >= MIXTURE_FLOOR) {
            s = MIXTURE_FLOOR;
            floored += 1;
        }
        sums[i] = s;
    }
    KernelSums {
        kernel,
        sums,
        grad_sums,
        floored,
    }
}

/// KL first variation with the kernel-smoothed density `mu * K`.
pub fn gfsd_first_variation(
    state: &ParticleState,
    target: &dyn Target,
    h: f64,
) -> Result<FirstVariation> {
    check(state, target, h)?;
    let (logp, scores) = target_terms(state, target)?;
    let ks = kernel_sums(state, h);
    Ok(gfsd_from_parts(state, &logp, &scores, &ks))
}

fn gfsd_from_parts(
    state: &ParticleState,
    logp: &[f64],
    scores: &[f64],
    ks: &KernelSums,
) -> FirstVariation {
    let d = state.dim();
    let u = (0..state.len()).map(|i| -logp[i] + ks.sums[i].ln()).collect();
    let grad_u = (0..state.len() * d)
        .map(|k| -scores[k] + ks.grad_sums[k] / ks.sums[k / d])
        .collect();
    FirstVariation {
        u,
        grad_u,
        floored: ks.floored,
    }
}

/// Extra repulsive part of the BLOB approximation:
/// `sum_j w^j K(x, x^j) / sum_l w^l K(x^j, x^l)` at each particle.
pub fn blob_repulsive_term(state: &ParticleState, h: f64) -> Vec<f64> {
    let ks = kernel_sums(state, h);
    repulsive_values(state, &ks)
}

fn repulsive_values(state: &ParticleState, ks: &KernelSums) -> Vec<f64> {
    let w = state.weights();
    (0..state.len())
        .map(|i| {
            (0..state.len())
                .map(|j| w[j] * ks.kernel.get(i, j) / ks.sums[j])
                .sum()
        })
        .collect()
}

/// KL first variation with the BLOB smoothing of the entropy term.
pub fn blob_first_variation(
    state: &ParticleState,
    target: &dyn Target,
    h: f64,
) -> Result<FirstVariation> {
    check(state, target, h)?;
    let (logp, scores) = target_terms(state, target)?;
    let ks = kernel_sums(state, h);
    let mut fv = gfsd_from_parts(state, &logp, &scores, &ks);
    let rep = repulsive_values(state, &ks);
    for (u, r) in fv.u.iter_mut().zip(&rep) {
        *u += r;
    }
    let (m, d, w) = (state.len(), state.dim(), state.weights());
    for i in 0..m {
        let xi = state.position(i);
        let g = &mut fv.grad_u[i * d..(i + 1) * d];
        for j in 0..m {
            let coeff = -2.0 / h * w[j] * ks.kernel.get(i, j) / ks.sums[j];
            for (gk, (a, b)) in g.iter_mut().zip(xi.iter().zip(state.position(j))) {
                *gk += coeff * (a - b);
            }
        }
    }
    Ok(fv)
}

/// Stein-kernel value from precomputed scores.
fn stein_value(x: &[f64], y: &[f64], sx: &[f64], sy: &[f64], h: f64) -> f64 {
    let d = x.len() as f64;
    let r2 = sq_dist(x, y);
    let k = (-r2 / h).exp();
    let mut ss = 0.0;
    let mut cross = 0.0;
    for c in 0..x.len() {
        let delta = x[c] - y[c];
        ss += sx[c] * sy[c];
        cross += (sx[c] - sy[c]) * delta;
    }
    k * (ss + 2.0 / h * cross + 2.0 * d / h - 4.0 * r2 / (h * h))
}

/// Gradient of the Stein kernel in its second argument, given `H = hess log pi(y)`.
fn stein_grad_y(
    x: &[f64],
    y: &[f64],
    sx: &[f64],
    sy: &[f64],
    hess_y: &DMatrix<f64>,
    h: f64,
    out: &mut [f64],
) {
    let n = x.len();
    let r2 = sq_dist(x, y);
    let k = (-r2 / h).exp();
    let mut ss = 0.0;
    let mut cross = 0.0;
    for c in 0..n {
        ss += sx[c] * sy[c];
        cross += (sx[c] - sy[c]) * (x[c] - y[c]);
    }
    let base = ss + 2.0 / h * cross + 2.0 * n as f64 / h - 4.0 * r2 / (h * h);
    for a in 0..n {
        let delta_a = x[a] - y[a];
        let mut h_sx = 0.0;
        let mut h_delta = 0.0;
        for b in 0..n {
            h_sx += hess_y[(a, b)] * sx[b];
            h_delta += hess_y[(a, b)] * (x[b] - y[b]);
        }
        let d_base = h_sx - 2.0 / h * (h_delta + sx[a] - sy[a]) + 8.0 / (h * h) * delta_a;
        out[a] += k * (2.0 / h * delta_a * base + d_base);
    }
}

/// Stein kernel `k_pi(x, y)` built on the RBF kernel with bandwidth `h`.
pub fn stein_kernel(x: &[f64], y: &[f64], target: &dyn Target, h: f64) -> Result<f64> {
    crate::kernel::rbf_kernel(x, y, h)?;
    let sx = target.score(x)?;
    let sy = target.score(y)?;
    Ok(stein_value(x, y, &sx, &sy, h))
}

/// `grad_y k_pi(x, y)`; requires the target's Hessian.
pub fn stein_kernel_grad_y(x: &[f64], y: &[f64], target: &dyn Target, h: f64) -> Result<Vec<f64>> {
    crate::kernel::rbf_kernel(x, y, h)?;
    let hess = target.hessian_log_density(y).ok_or_else(|| {
        Error::Unsupported("Stein-kernel gradient needs the Hessian of log pi".into())
    })?;
    let sx = target.score(x)?;
    let sy = target.score(y)?;
    let mut out = vec![0.0; x.len()];
    stein_grad_y(x, y, &sx, &sy, &hess, h, &mut out);
    Ok(out)
}

/// KSD first variation `U(x) = sum_j w^j k_pi(x^j, x)`.
pub fn ksdd_first_variation(
    state: &ParticleState,
    target: &dyn Target,
    h: f64,
) -> Result<FirstVariation> {
    check(state, target, h)?;
    if !target.has_hessian() {
        return Err(Error::Unsupported(
            "KSDD smoothing requires a target with an analytic Hessian".into(),
        ));
    }
    let (m, d, w) = (state.len(), state.dim(), state.weights());
    let (_, scores) = target_terms(state, target)?;
    let hessians: Vec<DMatrix<f64>> = (0..m)
        .into_par_iter()
        .map(|i| {
            target
                .hessian_log_density(state.position(i))
                .ok_or_else(|| Error::Unsupported("Hessian unavailable".into()))
        })
        .collect::<Result<_>>()?;
    let score = |i: usize| &scores[i * d..(i + 1) * d];
    let rows: Vec<(f64, Vec<f64>)> = (0..m)
        .into_par_iter()
        .map(|i| {
            let xi = state.position(i);
            let mut u = 0.0;
            let mut g = vec![0.0; d];
            let mut gj = vec![0.0; d];
            for j in 0..m {
                let xj = state.position(j);
                u += w[j] * stein_value(xj, xi, score(j), score(i), h);
                gj.iter_mut().for_each(|v| *v = 0.0);
                stein_grad_y(xj, xi, score(j), score(i), &hessians[i], h, &mut gj);
                for (a, b) in g.iter_mut().zip(&gj) {
                    *a += w[j] * b;
                }
            }
            (u, g)
        })
        .collect();
    let mut u = Vec::with_capacity(m);
    let mut grad_u = Vec::with_capacity(m * d);
    for (ui, gi) in rows {
        u.push(ui);
        grad_u.extend(gi);
    }
    Ok(FirstVariation {
        u,
        grad_u,
        floored: 0,
    })
}
