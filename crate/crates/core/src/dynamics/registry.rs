//! Method identifiers, their tuned default step sizes, and dispatch to steppers.

use std::fmt;
use std::str::FromStr;

use super::steppers::{
    default_order, first_order_in_order, kwgad_in_order, sgad_in_order, svgd_in_order,
    wgad_in_order, wnes_in_order, StepOutcome, StepReport,
};
use super::{DynamicsConfig, Metric, PositionScheme, StepRng, WeightMode};
use crate::error::{invalid, Error, Result};
use crate::smoothing::{first_variation, Smoothing};
use crate::state::ParticleState;
use crate::targets::Target;

/// Canonical method ids: the 18 accelerated dynamic-weight instances followed by 8 baselines.
pub const REGISTERED_METHODS: [&str; 26] = [
    "WGAD-CA-BLOB",
    "WGAD-CA-GFSD",
    "WGAD-CA-KSDD",
    "WGAD-DK-BLOB",
    "WGAD-DK-GFSD",
    "WGAD-DK-KSDD",
    "KWGAD-CA-BLOB",
    "KWGAD-CA-GFSD",
    "KWGAD-CA-KSDD",
    "KWGAD-DK-BLOB",
    "KWGAD-DK-GFSD",
    "KWGAD-DK-KSDD",
    "SGAD-CA-BLOB",
    "SGAD-CA-GFSD",
    "SGAD-CA-KSDD",
    "SGAD-DK-BLOB",
    "SGAD-DK-GFSD",
    "SGAD-DK-KSDD",
    "SVGD",
    "BLOB",
    "GFSD",
    "WNES-BLOB",
    "WAIG-BLOB",
    "WAIG-GFSD",
    "DPVI-CA-BLOB",
    "DPVI-DK-BLOB",
];

/// Experiment family, used to select tuned step sizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Task {
    SingleGaussian,
    Mixture,
    GaussianProcess,
}

/// A named method. Parsing accepts any well-formed combination, not only the registered ids
/// (e.g. `KWAIG-BLOB`, `WNES-GFSD`, `DPVI-CA-KSDD`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    /// Accelerated positions with dynamic weights.
    Gad {
        metric: Metric,
        weights: WeightMode,
        smoothing: Smoothing,
    },
    /// Accelerated positions with fixed weights.
    Aig { metric: Metric, smoothing: Smoothing },
    /// First-order positions with dynamic weights.
    Dpvi { weights: WeightMode, smoothing: Smoothing },
    /// First-order positions, fixed weights.
    ParVi { smoothing: Smoothing },
    Wnes { smoothing: Smoothing },
    Svgd,
}

impl Method {
    pub fn registered() -> Vec<Method> {
        REGISTERED_METHODS
            .iter()
            .map(|s| s.parse().expect("registered ids parse"))
            .collect()
    }

    pub fn smoothing(&self) -> Smoothing {
        match *self {
            Method::Gad { smoothing, .. }
            | Method::Aig { smoothing, .. }
            | Method::Dpvi { smoothing, .. }
            | Method::ParVi { smoothing }
            | Method::Wnes { smoothing } => smoothing,
            Method::Svgd => Smoothing::Blob,
        }
    }

    /// Dynamics configuration with the tuned step sizes for `task`.
    pub fn default_config(&self, task: Task) -> DynamicsConfig {
        let base = DynamicsConfig::default();
        let smoothing = self.smoothing();
        let gfsd = smoothing == Smoothing::Gfsd;
        let gp = task == Task::GaussianProcess;
        // (eta_pos, eta_wei / eta_pos, eta_vel, gamma); KSDD reuses the BLOB rows.
        let (eta_pos, ratio, eta_vel, gamma) = match (*self, task) {
            (Method::Svgd | Method::ParVi { .. }, _) => (1e-2, 0.0, 1.0, 0.0),
            (Method::Wnes { .. }, Task::GaussianProcess) => (1e-2, 0.0, 1.0, 0.4),
            (Method::Wnes { .. }, _) => (1e-2, 0.0, 1.0, 0.2),
            (Method::Dpvi { weights, .. }, _) => {
                let ratio = match (weights, task) {
                    (WeightMode::DK, Task::GaussianProcess) => 0.01,
                    (WeightMode::DK, _) => 1.0,
                    (_, Task::GaussianProcess) if gfsd => 0.3,
                    (_, Task::GaussianProcess) => 0.1,
                    (_, Task::Mixture) if gfsd => 0.8,
                    _ => 1.0,
                };
                (1e-2, ratio, 1.0, 0.0)
            }
            (Method::Aig { metric, .. } | Method::Gad { metric, .. }, _) => {
                let weights = match *self {
                    Method::Gad { weights, .. } => weights,
                    _ => WeightMode::Fixed,
                };
                let (eta_pos, gamma) = match (metric, gp) {
                    (Metric::W, false) => (1e-2, 0.3),
                    (Metric::W, true) => (1e-2, if gfsd { 0.3 } else { 0.4 }),
                    (Metric::KW, false) => (1e-2, 0.9),
                    (Metric::KW, true) => {
                        if gfsd {
                            (1e-3, 0.7)
                        } else {
                            (5e-3, 0.8)
                        }
                    }
                    (Metric::S, false) => (if task == Task::Mixture { 2.5e-2 } else { 5e-2 }, 0.9),
                    (Metric::S, true) => {
                        if gfsd {
                            (1e-2, 0.6)
                        } else {
                            (2e-2, 0.7)
                        }
                    }
                };
                let ratio = match (weights, metric, task) {
                    (WeightMode::Fixed, ..) => 0.0,
                    (WeightMode::DK, _, Task::GaussianProcess) => 0.01,
                    (WeightMode::DK, Metric::W, _) | (WeightMode::DK, ..) => 5e-2,
                    (WeightMode::CA, _, Task::GaussianProcess) => {
                        if gfsd {
                            0.3
                        } else {
                            0.1
                        }
                    }
                    (WeightMode::CA, Metric::W, Task::Mixture) if gfsd => 0.8,
                    (WeightMode::CA, Metric::W, _) => 1.0,
                    (WeightMode::CA, ..) => 5e-3,
                };
                (eta_pos, ratio, 1.0, gamma)
            }
        };
        let (scheme, metric, weight_mode) = match *self {
            Method::Gad { metric, weights, .. } => (PositionScheme::Hamiltonian, metric, weights),
            Method::Aig { metric, .. } => (PositionScheme::Hamiltonian, metric, WeightMode::Fixed),
            Method::Dpvi { weights, .. } => (PositionScheme::FirstOrder, Metric::W, weights),
            Method::ParVi { .. } => (PositionScheme::FirstOrder, Metric::W, WeightMode::Fixed),
            Method::Wnes { .. } => (PositionScheme::Nesterov, Metric::W, WeightMode::Fixed),
            Method::Svgd => (PositionScheme::Svgd, Metric::W, WeightMode::Fixed),
        };
        DynamicsConfig {
            scheme,
            metric,
            smoothing,
            weight_mode,
            eta_pos,
            eta_vel,
            eta_wei: ratio * eta_pos,
            gamma,
            ..base
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Gad {
                metric,
                weights,
                smoothing,
            } => write!(f, "{}GAD-{weights}-{smoothing}", metric.prefix()),
            Method::Aig { metric, smoothing } => write!(f, "{}AIG-{smoothing}", metric.prefix()),
            Method::Dpvi { weights, smoothing } => write!(f, "DPVI-{weights}-{smoothing}"),
            Method::ParVi { smoothing } => write!(f, "{smoothing}"),
            Method::Wnes { smoothing } => write!(f, "WNES-{smoothing}"),
            Method::Svgd => f.write_str("SVGD"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let upper = s.trim().to_ascii_uppercase();
        let parts: Vec<&str> = upper.split('-').collect();
        let unknown = || {
            Error::Config(format!(
                "unknown method '{s}'; registered methods: {}",
                REGISTERED_METHODS.join(", ")
            ))
        };
        let dynamic = |w: &str| -> Result<WeightMode> {
            match w {
                "CA" => Ok(WeightMode::CA),
                "DK" => Ok(WeightMode::DK),
                _ => Err(unknown()),
            }
        };
        let smooth = |p: &str| p.parse::<Smoothing>().map_err(|_| unknown());
        let method = match parts.as_slice() {
            ["SVGD"] => Method::Svgd,
            [sm] => Method::ParVi { smoothing: smooth(sm)? },
            ["PARVI", sm] => Method::ParVi { smoothing: smooth(sm)? },
            ["WNES", sm] => Method::Wnes { smoothing: smooth(sm)? },
            ["DPVI", w, sm] => Method::Dpvi {
                weights: dynamic(w)?,
                smoothing: smooth(sm)?,
            },
            [head, w, sm] if head.ends_with("GAD") => Method::Gad {
                metric: head.trim_end_matches("GAD").parse().map_err(|_| unknown())?,
                weights: dynamic(w)?,
                smoothing: smooth(sm)?,
            },
            [head, sm] if head.ends_with("AIG") => Method::Aig {
                metric: head.trim_end_matches("AIG").parse().map_err(|_| unknown())?,
                smoothing: smooth(sm)?,
            },
            _ => return Err(unknown()),
        };
        Ok(method)
    }
}

/// A deterministic (given its seed) one-iteration map for a configured method.
#[derive(Clone, Debug)]
pub struct Stepper {
    cfg: DynamicsConfig,
    rng: StepRng,
    warnings: Vec<String>,
}

/// Validates `cfg` against `target` and builds its stepper.
pub fn make_stepper(cfg: &DynamicsConfig, seed: u64, target: &dyn Target) -> Result<Stepper> {
    let warnings = cfg.validate()?;
    let uses_smoothing = cfg.scheme != PositionScheme::Svgd;
    if uses_smoothing && cfg.smoothing.needs_hessian() && !target.has_hessian() {
        return Err(Error::Config(
            "KSDD smoothing needs the Hessian of log pi, which this target does not provide".into(),
        ));
    }
    let fixed_only = matches!(cfg.scheme, PositionScheme::Nesterov | PositionScheme::Svgd);
    if fixed_only && cfg.weight_mode != WeightMode::Fixed {
        return Err(Error::Config(
            "Nesterov and SVGD position updates only support fixed weights".into(),
        ));
    }
    Ok(Stepper {
        cfg: cfg.clone(),
        rng: StepRng::new(seed),
        warnings,
    })
}

impl Stepper {
    pub fn config(&self) -> &DynamicsConfig {
        &self.cfg
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn step(&self, state: &ParticleState, target: &dyn Target) -> Result<StepOutcome> {
        self.step_in_order(state, target, &default_order(state.len()))
    }

    /// Same as [`Stepper::step`], with per-particle sub-updates executed in `order`.
    pub fn step_in_order(
        &self,
        state: &ParticleState,
        target: &dyn Target,
        order: &[usize],
    ) -> Result<StepOutcome> {
        let mut sorted = order.to_vec();
        sorted.sort_unstable();
        if sorted != default_order(state.len()) {
            return Err(invalid("execution order must be a permutation of the particles"));
        }
        let cfg = &self.cfg;
        match cfg.scheme {
            PositionScheme::Hamiltonian => {
                let h = cfg.kernel.bandwidth(state.positions(), state.dim())?;
                let fv = first_variation(cfg.smoothing, state, target, h)?;
                match cfg.metric {
                    Metric::W => wgad_in_order(state, &fv, cfg, &self.rng, order, h),
                    Metric::KW => kwgad_in_order(state, &fv, cfg, &self.rng, order, h),
                    Metric::S => sgad_in_order(state, &fv, cfg, h, &self.rng, order),
                }
            }
            PositionScheme::FirstOrder => {
                let h = cfg.kernel.bandwidth(state.positions(), state.dim())?;
                let fv = first_variation(cfg.smoothing, state, target, h)?;
                first_order_in_order(state, &fv, cfg, &self.rng, order, h)
            }
            PositionScheme::Nesterov => {
                // velocities carry the previous displacement x_k - x_{k-1}
                let prev: Vec<f64> = state
                    .positions()
                    .iter()
                    .zip(state.velocities())
                    .map(|(x, v)| x - v)
                    .collect();
                let k = state.iteration().max(1);
                let look = state.with_positions(super::wnes_lookahead(state, &prev, k)?);
                let h = cfg.kernel.bandwidth(look.positions(), look.dim())?;
                let fv = first_variation(cfg.smoothing, &look, target, h)?;
                let next = wnes_in_order(state, &prev, &fv, cfg.eta_pos, k, order)?;
                Ok(StepOutcome {
                    state: next,
                    report: StepReport {
                        floored: fv.floored,
                        bandwidth: h,
                        ..Default::default()
                    },
                })
            }
            PositionScheme::Svgd => {
                let h = cfg.kernel.bandwidth(state.positions(), state.dim())?;
                let next = svgd_in_order(state, target, h, cfg.eta_pos, order)?;
                Ok(StepOutcome {
                    state: next,
                    report: StepReport {
                        bandwidth: h,
                        ..Default::default()
                    },
                })
            }
        }
    }
}
