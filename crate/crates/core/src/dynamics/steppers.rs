use nalgebra::{DMatrix, DVector};

use super::weights::{ca_weight_update, dk_resample};
use super::{DynamicsConfig, KwCoupling, StepRng, WeightMode};
use crate::error::{invalid, Error, Result};
use crate::kernel::KernelMatrix;
use crate::smoothing::{target_terms, FirstVariation};
use crate::state::{empirical_moments, ParticleState};
use crate::targets::Target;

/// Diagnostics gathered during one step.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepReport {
    pub clamped: usize,
    pub dk_events: usize,
    pub dk_skipped: usize,
    pub floored: usize,
    pub bandwidth: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub state: ParticleState,
    pub report: StepReport,
}

fn ensure_finite(values: &[f64], iteration: u64, particle: usize, stage: &'static str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Divergence {
            iteration,
            particle,
            stage,
        })
    }
}

fn check_shapes(state: &ParticleState, fv: &FirstVariation) -> Result<()> {
    if fv.u.len() != state.len() || fv.grad_u.len() != state.len() * state.dim() {
        return Err(invalid("first variation does not match the particle system"));
    }
    Ok(())
}

pub(crate) fn default_order(m: usize) -> Vec<usize> {
    (0..m).collect()
}

/// Applies the configured weight scheme to the moved particles using the iteration-k
/// weights and first variation, then advances the iteration counter.
fn adjust_weights(
    moved: ParticleState,
    pre: &ParticleState,
    fv: &FirstVariation,
    cfg: &DynamicsConfig,
    rng: &StepRng,
    report: &mut StepReport,
) -> Result<ParticleState> {
    let it = pre.iteration();
    let eta = cfg.effective_eta_wei(it);
    let mut next = match cfg.weight_mode {
        // a zero step would only renormalize, which is not exact in floating point
        WeightMode::Fixed => moved,
        WeightMode::CA if eta == 0.0 => moved,
        WeightMode::CA => {
            let upd = ca_weight_update(pre.weights(), &fv.u, eta, cfg.ca_variant).map_err(|_| {
                Error::Divergence {
                    iteration: it,
                    particle: 0,
                    stage: "weight",
                }
            })?;
            report.clamped += upd.clamped;
            moved.with_weights(upd.weights)
        }
        WeightMode::DK => {
            let (next, dk) = dk_resample(&moved, pre.weights(), &fv.u, eta, rng)?;
            report.dk_events += dk.events.len();
            report.dk_skipped += dk.skipped;
            next
        }
    };
    next.set_iteration(it + 1);
    Ok(next)
}

/// Shared Euler update `x += eta_pos * drift_i`, `v = (1 - gamma eta_vel) v - eta_vel (coupling_i + grad_u_i)`.
///
/// Every per-particle update reads only the iteration-k state, so `order` cannot change the result.
#[allow(clippy::too_many_arguments)]
fn hamiltonian_update(
    state: &ParticleState,
    fv: &FirstVariation,
    cfg: &DynamicsConfig,
    rng: &StepRng,
    order: &[usize],
    bandwidth: f64,
    drift: impl Fn(usize, &mut [f64]),
    coupling: impl Fn(usize, &mut [f64]),
) -> Result<StepOutcome> {
    check_shapes(state, fv)?;
    let (m, d, it) = (state.len(), state.dim(), state.iteration());
    let damping = 1.0 - cfg.gamma * cfg.eta_vel;
    let mut pos = vec![0.0; m * d];
    let mut vel = vec![0.0; m * d];
    let mut buf = vec![0.0; d];
    for &i in order {
        let (x, v, g) = (state.position(i), state.velocity(i), fv.grad(i, d));
        buf.iter_mut().for_each(|b| *b = 0.0);
        drift(i, &mut buf);
        let xi = &mut pos[i * d..(i + 1) * d];
        for k in 0..d {
            xi[k] = x[k] + cfg.eta_pos * buf[k];
        }
        ensure_finite(xi, it, i, "position")?;
        buf.iter_mut().for_each(|b| *b = 0.0);
        coupling(i, &mut buf);
        let vi = &mut vel[i * d..(i + 1) * d];
        for k in 0..d {
            vi[k] = damping * v[k] - cfg.eta_vel * (buf[k] + g[k]);
        }
        ensure_finite(vi, it, i, "velocity")?;
    }
    let moved = ParticleState::from_parts(d, pos, vel, state.weights().to_vec(), it);
    let mut report = StepReport {
        floored: fv.floored,
        bandwidth,
        ..Default::default()
    };
    let state = adjust_weights(moved, state, fv, cfg, rng, &mut report)?;
    Ok(StepOutcome { state, report })
}

/// Wasserstein accelerated step: `x += eta_pos v`, damped velocity driven by `-grad U`.
pub fn wgad_step(
    state: &ParticleState,
    fv: &FirstVariation,
    cfg: &DynamicsConfig,
    rng: &StepRng,
) -> Result<StepOutcome> {
    wgad_in_order(state, fv, cfg, rng, &default_order(state.len()), f64::NAN)
}

pub(crate) fn wgad_in_order(
    state: &ParticleState,
    fv: &FirstVariation,
    cfg: &DynamicsConfig,
    rng: &StepRng,
    order: &[usize],
    bandwidth: f64,
) -> Result<StepOutcome> {
    hamiltonian_update(
        state,
        fv,
        cfg,
        rng,
        order,
        bandwidth,
        |i, out| out.copy_from_slice(state.velocity(i)),
        |_, _| {},
    )
}

/// Kalman-Wasserstein accelerated step, preconditioned by `C + lambda I`.
pub fn kwgad_step(
    state: &ParticleState,
    fv: &FirstVariation,
    cfg: &DynamicsConfig,
    rng: &StepRng,
) -> Result<StepOutcome> {
    kwgad_in_order(state, fv, cfg, rng, &default_order(state.len()), f64::NAN)
}

pub(crate) fn kwgad_in_order(
    state: &ParticleState,
    fv: &FirstVariation,
    cfg: &DynamicsConfig,
    rng: &StepRng,
    order: &[usize],
    bandwidth: f64,
) -> Result<StepOutcome> {
    let d = state.dim();
    let moments = empirical_moments(state, cfg.lambda_kw);
    let mut outer = DMatrix::zeros(d, d);
    for (j, &w) in state.weights().iter().enumerate() {
        let v = DVector::from_column_slice(state.velocity(j));
        outer += (&v * v.transpose()) * w;
    }
    if cfg.kw_coupling == KwCoupling::PerParticle {
        outer /= state.len() as f64;
    }
    let precond = &moments.regularized_covariance;
    let mean = &moments.mean;
    hamiltonian_update(
        state,
        fv,
        cfg,
        rng,
        order,
        bandwidth,
        |i, out| {
            let v = state.velocity(i);
            for a in 0..d {
                out[a] = (0..d).map(|b| precond[(a, b)] * v[b]).sum();
            }
        },
        |i, out| {
            let x = state.position(i);
            for a in 0..d {
                out[a] = (0..d).map(|b| outer[(a, b)] * (x[b] - mean[b])).sum();
            }
        },
    )
}

/// Stein-metric accelerated step with kernel-averaged velocities.
pub fn sgad_step(
    state: &ParticleState,
    fv: &FirstVariation,
    cfg: &DynamicsConfig,
    h: f64,
    rng: &StepRng,
) -> Result<StepOutcome> {
    sgad_in_order(state, fv, cfg, h, rng, &default_order(state.len()))
}

pub(crate) fn sgad_in_order(
    state: &ParticleState,
    fv: &FirstVariation,
    cfg: &DynamicsConfig,
    h: f64,
    rng: &StepRng,
    order: &[usize],
) -> Result<StepOutcome> {
    if !(h > 0.0) {
        return Err(invalid(format!("bandwidth must be positive, got {h}")));
    }
    let (m, d, w) = (state.len(), state.dim(), state.weights());
    let kernel = KernelMatrix::new(state.positions(), d, h);
    hamiltonian_update(
        state,
        fv,
        cfg,
        rng,
        order,
        h,
        |i, out| {
            for j in 0..m {
                let c = w[j] * kernel.get(i, j);
                for (o, v) in out.iter_mut().zip(state.velocity(j)) {
                    *o += c * v;
                }
            }
        },
        |i, out| {
            let (xi, vi) = (state.position(i), state.velocity(i));
            for j in 0..m {
                let vv: f64 = vi.iter().zip(state.velocity(j)).map(|(a, b)| a * b).sum();
                let c = w[j] * vv * (-2.0 / h) * kernel.get(i, j);
                for (o, (a, b)) in out.iter_mut().zip(xi.iter().zip(state.position(j))) {
                    *o += c * (a - b);
                }
            }
        },
    )
}

/// First-order descent `x -= eta_pos grad U`, with the configured weight scheme (DPVI when dynamic).
pub fn first_order_step(
    state: &ParticleState,
    fv: &FirstVariation,
    cfg: &DynamicsConfig,
    rng: &StepRng,
) -> Result<StepOutcome> {
    first_order_in_order(state, fv, cfg, rng, &default_order(state.len()), f64::NAN)
}

pub(crate) fn first_order_in_order(
    state: &ParticleState,
    fv: &FirstVariation,
    cfg: &DynamicsConfig,
    rng: &StepRng,
    order: &[usize],
    bandwidth: f64,
) -> Result<StepOutcome> {
    check_shapes(state, fv)?;
    let (m, d, it) = (state.len(), state.dim(), state.iteration());
    let mut pos = vec![0.0; m * d];
    for &i in order {
        let (x, g) = (state.position(i), fv.grad(i, d));
        let xi = &mut pos[i * d..(i + 1) * d];
        for k in 0..d {
            xi[k] = x[k] - cfg.eta_pos * g[k];
        }
        ensure_finite(xi, it, i, "position")?;
    }
    let moved = ParticleState::from_parts(d, pos, state.velocities().to_vec(), state.weights().to_vec(), it);
    let mut report = StepReport {
        floored: fv.floored,
        bandwidth,
        ..Default::default()
    };
    let state = adjust_weights(moved, state, fv, cfg, rng, &mut report)?;
    Ok(StepOutcome { state, report })
}

/// SVGD update `x^i += eta (1/M) sum_j [K(x^j, x^i) grad log pi(x^j) + grad_{x^j} K(x^j, x^i)]`.
pub fn svgd_step(state: &ParticleState, target: &dyn Target, h: f64, eta_pos: f64) -> Result<ParticleState> {
    svgd_in_order(state, target, h, eta_pos, &default_order(state.len()))
}

pub(crate) fn svgd_in_order(
    state: &ParticleState,
    target: &dyn Target,
    h: f64,
    eta_pos: f64,
    order: &[usize],
) -> Result<ParticleState> {
    if !(h > 0.0) {
        return Err(invalid(format!("bandwidth must be positive, got {h}")));
    }
    let (m, d, it) = (state.len(), state.dim(), state.iteration());
    let (_, scores) = target_terms(state, target)?;
    let kernel = KernelMatrix::new(state.positions(), d, h);
    let mut pos = vec![0.0; m * d];
    let mut phi = vec![0.0; d];
    for &i in order {
        let xi = state.position(i);
        phi.iter_mut().for_each(|p| *p = 0.0);
        for j in 0..m {
            let (xj, sj) = (state.position(j), &scores[j * d..(j + 1) * d]);
            let k = kernel.get(j, i);
            for c in 0..d {
                phi[c] += k * sj[c] - 2.0 / h * (xj[c] - xi[c]) * k;
            }
        }
        let out = &mut pos[i * d..(i + 1) * d];
        for c in 0..d {
            out[c] = xi[c] + eta_pos * phi[c] / m as f64;
        }
        ensure_finite(out, it, i, "position")?;
    }
    let mut next = ParticleState::from_parts(d, pos, state.velocities().to_vec(), state.weights().to_vec(), it);
    next.set_iteration(it + 1);
    Ok(next)
}

fn nesterov_coefficient(k: u64) -> Result<f64> {
    if k == 0 {
        return Err(invalid("Nesterov step index must be at least 1"));
    }
    Ok((k as f64 - 1.0) / (k as f64 + 2.0))
}

/// Lookahead `y = x + (k-1)/(k+2) (x - x_prev)`.
pub fn wnes_lookahead(state: &ParticleState, prev_positions: &[f64], k: u64) -> Result<Vec<f64>> {
    if prev_positions.len() != state.positions().len() {
        return Err(invalid("previous positions do not match the particle system"));
    }
    let c = nesterov_coefficient(k)?;
    Ok(state
        .positions()
        .iter()
        .zip(prev_positions)
        .map(|(x, p)| x + c * (x - p))
        .collect())
}

/// Nesterov step `x = y - eta_pos grad U(y)`; `fv_at_lookahead` must be evaluated at
/// [`wnes_lookahead`]. The returned velocities hold the displacement `x_{k+1} - x_k`.
pub fn wnes_step(
    state: &ParticleState,
    prev_positions: &[f64],
    fv_at_lookahead: &FirstVariation,
    eta_pos: f64,
    k: u64,
) -> Result<ParticleState> {
    wnes_in_order(state, prev_positions, fv_at_lookahead, eta_pos, k, &default_order(state.len()))
}

pub(crate) fn wnes_in_order(
    state: &ParticleState,
    prev_positions: &[f64],
    fv_at_lookahead: &FirstVariation,
    eta_pos: f64,
    k: u64,
    order: &[usize],
) -> Result<ParticleState> {
    check_shapes(state, fv_at_lookahead)?;
    let y = wnes_lookahead(state, prev_positions, k)?;
    let (m, d, it) = (state.len(), state.dim(), state.iteration());
    let mut pos = vec![0.0; m * d];
    let mut vel = vec![0.0; m * d];
    for &i in order {
        let g = fv_at_lookahead.grad(i, d);
        for c in 0..d {
            let idx = i * d + c;
            pos[idx] = y[idx] - eta_pos * g[c];
            vel[idx] = pos[idx] - state.positions()[idx];
        }
        ensure_finite(&pos[i * d..(i + 1) * d], it, i, "position")?;
    }
    let mut next = ParticleState::from_parts(d, pos, vel, state.weights().to_vec(), it);
    next.set_iteration(it + 1);
    Ok(next)
}
