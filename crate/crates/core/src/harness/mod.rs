//! Experiment configuration, orchestration and output.

mod config;
mod output;
mod run;
mod sweep;

pub use config::{ExperimentConfig, GpSource, TargetSpec, CONFIG_KEYS};
pub use output::{
    load_cloud_csv, read_records_csv, records_to_csv, write_csv, write_svg_lineplot, CSV_HEADER,
    RECORD_FIELDS,
};
pub use run::{
    build_target, init_particles, reference_cloud, run_experiment, ExperimentRecord, RunOutput,
    INIT_DOMAIN, REFERENCE_DOMAIN,
};
pub use sweep::{run_sweep, summarize, write_summary_csv, SweepRun, SweepSummary, SUMMARY_HEADER};
