use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use super::config::{ExperimentConfig, GpSource, TargetSpec};
use crate::dynamics::{make_stepper, StepRng};
use crate::error::{Error, Result};
use crate::metrics::{mode_mass, moment_errors, wasserstein2_exact, WeightedCloud};
use crate::state::{empirical_moments, ParticleState};
use crate::targets::{gmm_target, gp_target, load_two_column_csv, sg_target, synthetic_lidar, Target};

/// RNG domain for initial positions.
pub const INIT_DOMAIN: u64 = 1;
/// RNG domain for reference samples.
pub const REFERENCE_DOMAIN: u64 = 2;
const SYNTHETIC_DATA_DOMAIN: u64 = 3;

/// Diagnostics at one checkpoint. Counts are cumulative since iteration 0.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentRecord {
    pub iteration: u64,
    pub wall_seconds: Option<f64>,
    pub w2: Option<f64>,
    pub mean_err: Option<f64>,
    pub cov_err: Option<f64>,
    pub mode_mass: Option<f64>,
    pub min_weight: f64,
    pub max_weight: f64,
    pub clamp_count: u64,
    pub dk_event_count: u64,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub records: Vec<ExperimentRecord>,
    pub final_state: ParticleState,
    pub warnings: Vec<String>,
}

pub fn build_target(cfg: &ExperimentConfig) -> Result<Box<dyn Target>> {
    Ok(match cfg.target {
        TargetSpec::Sg(d) => Box::new(sg_target(d)?),
        TargetSpec::Gmm(d) => Box::new(gmm_target(d)?),
        TargetSpec::Gp => {
            let data = match &cfg.gp_source {
                Some(GpSource::File(path)) => load_two_column_csv(path)?,
                Some(GpSource::Synthetic(n)) => {
                    let seed = StepRng::new(cfg.seed).domain(SYNTHETIC_DATA_DOMAIN).next_u64();
                    synthetic_lidar(*n, seed)
                }
                None => {
                    return Err(Error::Config(
                        "the gp target needs data_path or synthetic_points".into(),
                    ))
                }
            };
            Box::new(gp_target(data, cfg.gp_prior)?)
        }
    })
}

/// Positions `~ N(init_mean, init_var I)`, zero velocities, uniform weights.
pub fn init_particles(cfg: &ExperimentConfig, rng: &mut dyn RngCore) -> Result<ParticleState> {
    let d = cfg.target.dim();
    if cfg.init_mean.len() != d || cfg.particles == 0 {
        return Err(Error::Config("initialization does not match the target".into()));
    }
    let sd = cfg.init_var.sqrt();
    let mut positions = Vec::with_capacity(cfg.particles * d);
    for _ in 0..cfg.particles {
        for mu in &cfg.init_mean {
            let z: f64 = StandardNormal.sample(rng);
            positions.push(mu + sd * z);
        }
    }
    ParticleState::uniform(positions, d)
}

/// Uniform cloud of exact target samples, or `None` when the target cannot be sampled.
pub fn reference_cloud(cfg: &ExperimentConfig, target: &dyn Target) -> Result<Option<WeightedCloud>> {
    if !cfg.w2 || cfg.reference_samples == 0 {
        return Ok(None);
    }
    let mut rng = StepRng::new(cfg.seed).domain(REFERENCE_DOMAIN);
    match target.sample(cfg.reference_samples, &mut rng) {
        Some(points) => Ok(Some(WeightedCloud::uniform(points, target.dim())?)),
        None => Ok(None),
    }
}

struct Diagnostics {
    reference: Option<WeightedCloud>,
    moments: Option<(DVector<f64>, DMatrix<f64>)>,
    modes: Option<(Vec<f64>, Vec<f64>)>,
    previous: Option<(DVector<f64>, DMatrix<f64>)>,
}

impl Diagnostics {
    fn record(
        &mut self,
        state: &ParticleState,
        clamp_count: u64,
        dk_event_count: u64,
        wall_seconds: Option<f64>,
    ) -> Result<ExperimentRecord> {
        let w2 = match &self.reference {
            Some(r) => Some(wasserstein2_exact(&WeightedCloud::from_state(state), r)?),
            None => None,
        };
        let (mean_err, cov_err) = match &self.moments {
            Some((mean, cov)) => {
                let (a, b) = moment_errors(state, mean, cov)?;
                (Some(a), Some(b))
            }
            None => {
                // drift since the previous record
                let m = empirical_moments(state, 0.0);
                let drift = self
                    .previous
                    .as_ref()
                    .map(|(pm, pc)| ((&m.mean - pm).norm(), (&m.covariance - pc).norm()));
                self.previous = Some((m.mean, m.covariance));
                (drift.map(|d| d.0), drift.map(|d| d.1))
            }
        };
        let mode_mass = self.modes.as_ref().map(|(a, b)| mode_mass(state, a, b));
        let w = state.weights();
        Ok(ExperimentRecord {
            iteration: state.iteration(),
            wall_seconds,
            w2,
            mean_err,
            cov_err,
            mode_mass,
            min_weight: w.iter().cloned().fold(f64::INFINITY, f64::min),
            max_weight: w.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            clamp_count,
            dk_event_count,
        })
    }
}

/// Runs `cfg.iterations` steps, recording at iteration 0, every `record_every`, and the end.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let mut warnings = cfg.validate()?;
    let target = build_target(cfg)?;
    let stepper = make_stepper(&cfg.dynamics, cfg.seed, target.as_ref())?;
    warnings.extend(stepper.warnings().iter().cloned());
    let mut state = init_particles(cfg, &mut StepRng::new(cfg.seed).domain(INIT_DOMAIN))?;
    let modes = match cfg.target {
        TargetSpec::Gmm(d) => {
            let a = crate::targets::GMM_OFFSET;
            Some((vec![a; d], vec![-a; d]))
        }
        _ => None,
    };
    let mut diag = Diagnostics {
        reference: reference_cloud(cfg, target.as_ref())?,
        moments: target.moments(),
        modes,
        previous: None,
    };
    let start = Instant::now();
    let clock = |timing: bool| timing.then(|| start.elapsed().as_secs_f64());
    let points = cfg.record_points();
    let mut next_point = 1;
    let (mut clamps, mut events) = (0u64, 0u64);
    let mut records = vec![diag.record(&state, 0, 0, clock(cfg.timing))?];
    for k in 0..cfg.iterations {
        let outcome = stepper.step(&state, target.as_ref())?;
        clamps += outcome.report.clamped as u64;
        events += outcome.report.dk_events as u64;
        state = outcome.state;
        if next_point < points.len() && points[next_point] == k + 1 {
            next_point += 1;
            records.push(diag.record(&state, clamps, events, clock(cfg.timing))?);
        }
    }
    Ok(RunOutput {
        records,
        final_state: state,
        warnings,
    })
}
