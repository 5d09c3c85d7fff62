//! One-iteration steppers for the accelerated dynamic-weight methods and their baselines.

mod registry;
mod rng;
mod steppers;
mod weights;

pub use registry::{make_stepper, Method, Stepper, Task, REGISTERED_METHODS};
pub use rng::{StepRng, GLOBAL_INDEX};
pub use steppers::{
    first_order_step, kwgad_step, sgad_step, svgd_step, wgad_step, wnes_lookahead, wnes_step,
    StepOutcome, StepReport,
};
pub use weights::{
    ca_raw_update, ca_weight_update, dk_rates, dk_resample, warmup_factor, CaUpdate, DkEvent,
    DkEventKind, DkReport,
};

use std::fmt;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};
use crate::smoothing::Smoothing;
use crate::state::KernelConfig;

/// Information metric driving the position/velocity dynamics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Metric {
    /// Wasserstein.
    W,
    /// Kalman-Wasserstein.
    KW,
    /// Stein.
    S,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::W, Metric::KW, Metric::S];

    pub fn prefix(self) -> &'static str {
        match self {
            Metric::W => "W",
            Metric::KW => "KW",
            Metric::S => "S",
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "W" => Ok(Metric::W),
            "KW" => Ok(Metric::KW),
            "S" => Ok(Metric::S),
            _ => Err(invalid(format!("unknown metric '{s}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum WeightMode {
    Fixed,
    /// Continuous adjusting.
    CA,
    /// Duplicate/kill.
    DK,
}

impl fmt::Display for WeightMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WeightMode::Fixed => "fixed",
            WeightMode::CA => "CA",
            WeightMode::DK => "DK",
        })
    }
}

impl FromStr for WeightMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "FIXED" => Ok(WeightMode::Fixed),
            "CA" => Ok(WeightMode::CA),
            "DK" => Ok(WeightMode::DK),
            _ => Err(invalid(format!("unknown weight mode '{s}'"))),
        }
    }
}

/// Discretization of the Fisher-Rao weight ODE used by CA.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum CaVariant {
    /// `w - eta (u - ubar) w`; conserves mass exactly.
    #[default]
    Multiplicative,
    /// `w - eta (u - ubar)`.
    AsPrinted,
}

impl FromStr for CaVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "multiplicative" => Ok(CaVariant::Multiplicative),
            "as_printed" | "as-printed" => Ok(CaVariant::AsPrinted),
            _ => Err(invalid(format!("unknown CA variant '{s}'"))),
        }
    }
}

/// Scaling of the `[sum_j w^j v^j v^j^T](x - m)` coupling in the Kalman-Wasserstein velocity update.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum KwCoupling {
    /// Divided by `M`. Stable under the tuned step sizes.
    #[default]
    PerParticle,
    /// Unscaled; diverges for `eta_vel = 1` once `|v| |x - m|` exceeds about 1.
    Weighted,
}

impl FromStr for KwCoupling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "per_particle" | "per-particle" => Ok(KwCoupling::PerParticle),
            "weighted" => Ok(KwCoupling::Weighted),
            _ => Err(invalid(format!("unknown KW coupling '{s}'"))),
        }
    }
}

/// How positions are advanced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PositionScheme {
    /// Damped Hamiltonian position/velocity updates (GAD and AIG methods).
    Hamiltonian,
    /// Plain descent on the first variation (ParVI and DPVI).
    FirstOrder,
    /// Nesterov lookahead (WNES).
    Nesterov,
    Svgd,
}

/// Full method selection plus step sizes.
#[derive(Clone, Debug, PartialEq)]
pub struct DynamicsConfig {
    pub scheme: PositionScheme,
    pub metric: Metric,
    pub smoothing: Smoothing,
    pub weight_mode: WeightMode,
    pub eta_pos: f64,
    pub eta_vel: f64,
    pub eta_wei: f64,
    /// Velocity damping.
    pub gamma: f64,
    /// Regularizer of the Kalman-Wasserstein preconditioner `C + lambda I`.
    pub lambda_kw: f64,
    /// Scale the weight step by `tanh(2 (t/T)^5)`.
    pub warmup: bool,
    pub total_steps: u64,
    pub ca_variant: CaVariant,
    pub kw_coupling: KwCoupling,
    pub kernel: KernelConfig,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        Self {
            scheme: PositionScheme::Hamiltonian,
            metric: Metric::W,
            smoothing: Smoothing::Blob,
            weight_mode: WeightMode::CA,
            eta_pos: 1e-2,
            eta_vel: 1.0,
            eta_wei: 1e-2,
            gamma: 0.3,
            lambda_kw: 0.1,
            warmup: true,
            total_steps: 2000,
            ca_variant: CaVariant::Multiplicative,
            kw_coupling: KwCoupling::PerParticle,
            kernel: KernelConfig::NearestNeighbor,
        }
    }
}

impl DynamicsConfig {
    /// Checks ranges; returns non-fatal warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        let named = [
            ("eta_pos", self.eta_pos),
            ("eta_vel", self.eta_vel),
            ("eta_wei", self.eta_wei),
            ("gamma", self.gamma),
            ("lambda_kw", self.lambda_kw),
        ];
        for (name, v) in named {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be finite and nonnegative, got {v}")));
            }
        }
        if self.total_steps == 0 {
            return Err(Error::Config("total_steps must be positive".into()));
        }
        if let KernelConfig::Fixed(h) = self.kernel {
            if !(h > 0.0) {
                return Err(Error::Config(format!("fixed bandwidth must be positive, got {h}")));
            }
        }
        let mut warnings = Vec::new();
        if self.scheme == PositionScheme::Hamiltonian {
            let damping = 1.0 - self.gamma * self.eta_vel;
            if !(-1.0..=1.0).contains(&damping) {
                return Err(Error::Config(format!(
                    "velocity damping factor 1 - gamma*eta_vel = {damping} lies outside [-1, 1]"
                )));
            }
            if damping < 0.0 {
                warnings.push(format!(
                    "velocity damping factor 1 - gamma*eta_vel = {damping} is negative; velocities will oscillate in sign"
                ));
            }
        }
        Ok(warnings)
    }

    /// Weight step size at iteration `t`, after the optional warmup.
    pub fn effective_eta_wei(&self, t: u64) -> f64 {
        if self.warmup {
            self.eta_wei * warmup_factor(t, self.total_steps)
        } else {
            self.eta_wei
        }
    }
}
