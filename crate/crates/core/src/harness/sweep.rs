use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::run::{run_experiment, ExperimentRecord};
use crate::error::Result;

pub const SUMMARY_HEADER: &str =
    "particles,runs,w2_mean,w2_std,mean_err_mean,mean_err_std,cov_err_mean,cov_err_std,mode_mass_mean,mode_mass_std";

/// One finished run of a sweep.
#[derive(Clone, Debug)]
pub struct SweepRun {
    pub particles: usize,
    pub seed: u64,
    pub records: Vec<ExperimentRecord>,
}

/// Runs `base` over the grid `particles x seeds` in parallel. Output order follows the grid.
pub fn run_sweep(base: &ExperimentConfig, particles: &[usize], seeds: &[u64]) -> Result<Vec<SweepRun>> {
    let grid: Vec<(usize, u64)> = particles
        .iter()
        .flat_map(|&m| seeds.iter().map(move |&s| (m, s)))
        .collect();
    grid.par_iter()
        .map(|&(m, seed)| {
            let cfg = ExperimentConfig {
                particles: m,
                seed,
                ..base.clone()
            };
            Ok(SweepRun {
                particles: m,
                seed,
                records: run_experiment(&cfg)?.records,
            })
        })
        .collect()
}

/// Final-record statistics per particle count (population std over seeds).
#[derive(Clone, Debug, PartialEq)]
pub struct SweepSummary {
    pub particles: usize,
    pub runs: usize,
    pub w2: Option<(f64, f64)>,
    pub mean_err: Option<(f64, f64)>,
    pub cov_err: Option<(f64, f64)>,
    pub mode_mass: Option<(f64, f64)>,
}

fn mean_std(values: &[Option<f64>]) -> Option<(f64, f64)> {
    let v: Vec<f64> = values.iter().copied().collect::<Option<Vec<_>>>()?;
    if v.is_empty() {
        return None;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

pub fn summarize(runs: &[SweepRun]) -> Vec<SweepSummary> {
    let mut sizes: Vec<usize> = runs.iter().map(|r| r.particles).collect();
    sizes.dedup();
    sizes.sort_unstable();
    sizes.dedup();
    sizes
        .into_iter()
        .map(|m| {
            let finals: Vec<&ExperimentRecord> = runs
                .iter()
                .filter(|r| r.particles == m)
                .filter_map(|r| r.records.last())
                .collect();
            let col = |f: fn(&ExperimentRecord) -> Option<f64>| {
                mean_std(&finals.iter().map(|r| f(r)).collect::<Vec<_>>())
            };
            SweepSummary {
                particles: m,
                runs: finals.len(),
                w2: col(|r| r.w2),
                mean_err: col(|r| r.mean_err),
                cov_err: col(|r| r.cov_err),
                mode_mass: col(|r| r.mode_mass),
            }
        })
        .collect()
}

pub fn write_summary_csv(summary: &[SweepSummary], path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    let pair = |p: Option<(f64, f64)>| match p {
        Some((m, s)) => format!("{m},{s}"),
        None => ",".into(),
    };
    for s in summary {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            s.particles,
            s.runs,
            pair(s.w2),
            pair(s.mean_err),
            pair(s.cov_err),
            pair(s.mode_mass)
        );
    }
    std::fs::write(path, out)?;
    Ok(())
}
