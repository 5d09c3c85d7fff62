//! Fisher-Rao weight adjustment: continuous adjusting (CA) and duplicate/kill (DK).

use rand::seq::SliceRandom;
use rand::Rng;

use super::{CaVariant, StepRng, GLOBAL_INDEX};
use crate::error::{invalid, Error, Result};
use crate::state::ParticleState;

/// Output of a CA update.
#[derive(Clone, Debug, PartialEq)]
pub struct CaUpdate {
    pub weights: Vec<f64>,
    /// Number of weights that went negative and were clamped to zero.
    pub clamped: usize,
}

/// `w^i - eta (u[i] - ubar) w^i` (multiplicative) or `w^i - eta (u[i] - ubar)` (as printed),
/// before clamping and renormalization.
pub fn ca_raw_update(weights: &[f64], u: &[f64], eta: f64, variant: CaVariant) -> Vec<f64> {
    let ubar: f64 = weights.iter().zip(u).map(|(w, v)| w * v).sum();
    weights
        .iter()
        .zip(u)
        .map(|(&w, &ui)| match variant {
            CaVariant::Multiplicative => w - eta * (ui - ubar) * w,
            CaVariant::AsPrinted => w - eta * (ui - ubar),
        })
        .collect()
}

pub fn ca_weight_update(weights: &[f64], u: &[f64], eta: f64, variant: CaVariant) -> Result<CaUpdate> {
    if weights.len() != u.len() {
        return Err(invalid("weights and first variation differ in length"));
    }
    let mut raw = ca_raw_update(weights, u, eta, variant);
    let mut clamped = 0;
    for w in raw.iter_mut() {
        if *w < 0.0 {
            *w = 0.0;
            clamped += 1;
        }
    }
    let total: f64 = raw.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "weight update collapsed the system (total mass {total}); reduce eta_wei"
        )));
    }
    raw.iter_mut().for_each(|w| *w /= total);
    Ok(CaUpdate {
        weights: raw,
        clamped,
    })
}

/// `tanh(2 (t/T)^5)`, the warmup factor applied to the weight step size.
pub fn warmup_factor(t: u64, total: u64) -> f64 {
    let s = t as f64 / total.max(1) as f64;
    (2.0 * s.powi(5)).tanh()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DkEventKind {
    Duplicate,
    Kill,
}

/// One fired clock: `particle` was duplicated (or killed) and `partner` was
/// overwritten by (or copied into) it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DkEvent {
    pub particle: usize,
    pub partner: usize,
    pub kind: DkEventKind,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DkReport {
    pub events: Vec<DkEvent>,
    /// Events that could not fire because the system has a single particle.
    pub skipped: usize,
}

/// `R^i = -eta (u[i] - sum_j w^j u[j])`.
pub fn dk_rates(weights: &[f64], u: &[f64], eta: f64) -> Vec<f64> {
    let ubar: f64 = weights.iter().zip(u).map(|(w, v)| w * v).sum();
    u.iter().map(|ui| -eta * (ui - ubar)).collect()
}

/// Duplicate/kill resampling with exponential-clock probabilities.
///
/// Rates come from `pre_weights` and `u` (the iteration-k quantities); events act on
/// `state`, the already-moved particles. Particles are visited in a seeded random
/// permutation and every event copies a whole particle (position and velocity).
pub fn dk_resample(
    state: &ParticleState,
    pre_weights: &[f64],
    u: &[f64],
    eta: f64,
    rng: &StepRng,
) -> Result<(ParticleState, DkReport)> {
    let m = state.len();
    if u.len() != m || pre_weights.len() != m {
        return Err(invalid("first variation does not match the particle count"));
    }
    let d = state.dim();
    let it = state.iteration();
    let rates = dk_rates(pre_weights, u, eta);
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut rng.stream(it, GLOBAL_INDEX));

    let (mut pos, mut vel, _) = state.clone().into_parts();
    let mut report = DkReport::default();
    let copy = |from: usize, to: usize, buf: &mut Vec<f64>| {
        buf.copy_within(from * d..(from + 1) * d, to * d);
    };
    for &i in &order {
        let r = rates[i];
        if r == 0.0 {
            continue;
        }
        let mut draw = rng.stream(it, i as u64);
        let p: f64 = draw.random();
        let fires = if r > 0.0 {
            p < -(-r).exp_m1()
        } else {
            p < -r.exp_m1()
        };
        if !fires {
            continue;
        }
        if m == 1 {
            report.skipped += 1;
            continue;
        }
        let mut partner = draw.random_range(0..m - 1);
        if partner >= i {
            partner += 1;
        }
        let kind = if r > 0.0 {
            copy(i, partner, &mut pos);
            copy(i, partner, &mut vel);
            DkEventKind::Duplicate
        } else {
            copy(partner, i, &mut pos);
            copy(partner, i, &mut vel);
            DkEventKind::Kill
        };
        report.events.push(DkEvent {
            particle: i,
            partner,
            kind,
        });
    }
    let weights = vec![1.0 / m as f64; m];
    Ok((ParticleState::from_parts(d, pos, vel, weights, it), report))
}
