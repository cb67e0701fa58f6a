//! Experiment plumbing: specs, dataset generation, seeded runs, summaries,
//! transition-offset sweeps and merged reports.

mod report;
mod run;
mod spec;

pub use report::{collect, write_report, Report, RunEntry};
pub use run::{
    aggregate, build_datasets, generate, offset_dir_name, run_experiment, run_on, run_once, run_seed,
    seed_dir, summarize_dir, summarize_rows, sweep_table, sweep_transition, ExperimentSummary, Manifest,
    SeedData, SeedSummary, Stat, SweepPoint, DEFAULT_OFFSETS, MANIFEST_FILE, METRICS_FILE, SAFE_SET_FILE,
    SPEC_FILE, SUMMARY_FILE,
};
pub use spec::{ExperimentSpec, Method, NoiseKind, KEYS};
