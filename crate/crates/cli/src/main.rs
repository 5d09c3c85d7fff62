use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Parser, Subcommand};

use gadpvi::harness::{
    load_cloud_csv, run_experiment, run_sweep, summarize, write_csv, write_summary_csv, write_svg_lineplot,
    ExperimentConfig, ExperimentRecord,
};
use gadpvi::dynamics::REGISTERED_METHODS;
use gadpvi::metrics::{wasserstein2_exact, wasserstein2_sinkhorn, SinkhornOptions};
use gadpvi::Error;

#[derive(Parser)]
#[command(name = "gadpvi", version, about = "Accelerated dynamic-weight particle inference experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the registered method ids, one per line.
    ListMethods,
    /// Run one experiment and write its records as CSV and SVG.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Overrides the seed in the config file.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a particle-count by seed grid and aggregate final records.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "32,64,128,256,512")]
        particles: Vec<usize>,
        /// Comma list (`1,2,3`) or half-open range (`0..10`). Defaults to the config seed.
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// 2-Wasserstein distance between two point clouds stored as CSV.
    EvalW2 {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// Use entropic Sinkhorn with this regularization instead of the exact solver.
        #[arg(long)]
        epsilon: Option<f64>,
    },
}

enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

type Outcome = std::result::Result<(), Failure>;

fn usage<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Usage(e.into())
}

fn runtime<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Runtime(e.into())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::ListMethods => {
            for id in REGISTERED_METHODS {
                println!("{id}");
            }
            Ok(())
        }
        Command::Run { config, out, seed } => run(&config, &out, seed),
        Command::Sweep {
            config,
            particles,
            seeds,
            out,
        } => sweep(&config, &particles, seeds.as_deref(), &out),
        Command::EvalW2 { a, b, epsilon } => eval_w2(&a, &b, epsilon),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn load_config(path: &Path) -> std::result::Result<ExperimentConfig, Failure> {
    let cfg = ExperimentConfig::load(path)
        .with_context(|| format!("cannot load config {}", path.display()))
        .map_err(usage)?;
    Ok(cfg)
}

fn preflight(cfg: &ExperimentConfig) -> Outcome {
    for w in cfg.validate().map_err(usage)? {
        eprintln!("warning: {w}");
    }
    Ok(())
}

fn stem(cfg: &ExperimentConfig) -> String {
    format!("{}_{}", cfg.method, cfg.target).replace(':', "")
}

fn plot_field(records: &[ExperimentRecord]) -> &'static str {
    if records.iter().any(|r| r.w2.is_some()) {
        "w2"
    } else {
        "mean_err"
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "-".into())
}

fn run(config: &Path, out: &Path, seed: Option<u64>) -> Outcome {
    let mut cfg = load_config(config)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    cfg.validate().map_err(usage)?;
    let output = run_experiment(&cfg).map_err(classify)?;
    for w in &output.warnings {
        eprintln!("warning: {w}");
    }
    fs::create_dir_all(out)
        .with_context(|| format!("cannot create {}", out.display()))
        .map_err(runtime)?;
    let base = format!("{}_s{}", stem(&cfg), cfg.seed);
    let csv = out.join(format!("{base}.csv"));
    let svg = out.join(format!("{base}.svg"));
    write_csv(&output.records, &csv).map_err(runtime)?;
    write_svg_lineplot(&output.records, plot_field(&output.records), &svg).map_err(runtime)?;
    let last = output.records.last().ok_or_else(|| runtime(anyhow!("no records")))?;
    println!(
        "{} on {} (M={}, T={}, seed={}): w2={} mean_err={} cov_err={} mode_mass={}",
        cfg.method,
        cfg.target,
        cfg.particles,
        cfg.iterations,
        cfg.seed,
        fmt_opt(last.w2),
        fmt_opt(last.mean_err),
        fmt_opt(last.cov_err),
        fmt_opt(last.mode_mass)
    );
    println!("wrote {} and {}", csv.display(), svg.display());
    Ok(())
}

fn parse_seeds(spec: &str) -> anyhow::Result<Vec<u64>> {
    if let Some((lo, hi)) = spec.split_once("..") {
        let lo: u64 = lo.trim().parse().with_context(|| format!("bad seed range '{spec}'"))?;
        let hi: u64 = hi.trim().parse().with_context(|| format!("bad seed range '{spec}'"))?;
        if lo >= hi {
            bail!("empty seed range '{spec}'");
        }
        return Ok((lo..hi).collect());
    }
    spec.split(',')
        .map(|s| s.trim().parse::<u64>().with_context(|| format!("bad seed '{s}'")))
        .collect()
}

fn sweep(config: &Path, particles: &[usize], seeds: Option<&str>, out: &Path) -> Outcome {
    let cfg = load_config(config)?;
    if particles.is_empty() || particles.contains(&0) {
        return Err(usage(anyhow!("particle counts must be positive")));
    }
    let seeds = match seeds {
        Some(s) => parse_seeds(s).map_err(usage)?,
        None => vec![cfg.seed],
    };
    preflight(&cfg)?;
    let runs = run_sweep(&cfg, particles, &seeds).map_err(classify)?;
    fs::create_dir_all(out)
        .with_context(|| format!("cannot create {}", out.display()))
        .map_err(runtime)?;
    let stem = stem(&cfg);
    for r in &runs {
        let path = out.join(format!("{stem}_m{}_s{}.csv", r.particles, r.seed));
        write_csv(&r.records, &path).map_err(runtime)?;
    }
    let summary = summarize(&runs);
    let path = out.join("summary.csv");
    write_summary_csv(&summary, &path).map_err(runtime)?;
    for s in &summary {
        let pair = |v: Option<(f64, f64)>| match v {
            Some((m, sd)) => format!("{m:.6} +- {sd:.6}"),
            None => "-".into(),
        };
        println!(
            "M={:<4} runs={} w2={} mean_err={} mode_mass={}",
            s.particles,
            s.runs,
            pair(s.w2),
            pair(s.mean_err),
            pair(s.mode_mass)
        );
    }
    println!("wrote {} runs and {}", runs.len(), path.display());
    Ok(())
}

fn eval_w2(a: &Path, b: &Path, epsilon: Option<f64>) -> Outcome {
    let load = |p: &Path| load_cloud_csv(p).with_context(|| format!("cannot load {}", p.display())).map_err(usage);
    let (a, b) = (load(a)?, load(b)?);
    if a.dim() != b.dim() {
        return Err(usage(anyhow!("dimension mismatch: {} vs {}", a.dim(), b.dim())));
    }
    match epsilon {
        Some(epsilon) => {
            let opts = SinkhornOptions {
                epsilon,
                ..SinkhornOptions::default()
            };
            let r = wasserstein2_sinkhorn(&a, &b, opts).map_err(classify)?;
            println!("{}", r.value);
            eprintln!("sinkhorn: {} iterations, marginal violation {:e}", r.iterations, r.violation);
        }
        None => {
            let w = wasserstein2_exact(&a, &b).map_err(|e| match e {
                Error::TooLarge { .. } => runtime(anyhow!("{e}; pass --epsilon to use it")),
                e => classify(e),
            })?;
            println!("{w}");
        }
    }
    Ok(())
}

fn classify(e: Error) -> Failure {
    match e {
        Error::Config(_) | Error::Parse { .. } | Error::InvalidArgument(_) => usage(e),
        e => runtime(e),
    }
}
