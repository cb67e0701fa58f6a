//! `morph`: generate blob datasets, train with the two-phase robust trainer or
//! a baseline, sweep the transition offset and merge results into reports.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use morph_core::experiment::{self, ExperimentSpec, DEFAULT_OFFSETS};
use morph_core::Error;

/// Environment variable naming the default output directory.
const OUT_ROOT_ENV: &str = "MORPH_OUT_ROOT";

mod exit {
    pub const CONFIG: u8 = 2;
    pub const IO: u8 = 3;
    pub const NUMERICAL: u8 = 4;
    pub const PARTIAL: u8 = 5;
    pub const OTHER: u8 = 1;
}

#[derive(Parser)]
#[command(
    name = "morph",
    version,
    about = "Self-transitional training under label noise"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write train/test CSV files and a manifest per seed.
    Generate(SpecArgs),
    /// Train every seed and write metrics, safe sets and summaries.
    Train(SpecArgs),
    /// Repeat `train` for several transition offsets.
    SweepTransition {
        #[command(flatten)]
        spec: SpecArgs,
        /// Offsets in percentage points.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        offsets: Option<Vec<f64>>,
    },
    /// Merge finished runs into long-format and comparison CSV files.
    Report {
        /// Run directories (a directory holding metrics.csv, or any parent of such directories).
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        /// Where to write merged.csv and comparison.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Every flag is optional; values override the config file, which overrides
/// the built-in defaults.
#[derive(Args, Default)]
struct SpecArgs {
    /// key = value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    noise_type: Option<String>,
    #[arg(long)]
    tau: Option<String>,
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    n_train: Option<String>,
    #[arg(long)]
    n_test: Option<String>,
    #[arg(long)]
    dim: Option<String>,
    #[arg(long)]
    center_spread: Option<String>,
    #[arg(long)]
    cluster_std: Option<String>,
    /// Comma-separated hidden widths.
    #[arg(long)]
    hidden: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    batch_size: Option<String>,
    #[arg(long)]
    lr0: Option<String>,
    #[arg(long)]
    q: Option<String>,
    #[arg(long)]
    w_max: Option<String>,
    /// Transition offset in percentage points.
    #[arg(long, allow_hyphen_values = true)]
    alpha_offset: Option<String>,
    #[arg(long)]
    jitter_std: Option<String>,
    #[arg(long)]
    keep_fraction: Option<String>,
    #[arg(long)]
    train_data: Option<String>,
    #[arg(long)]
    test_data: Option<String>,
    #[arg(long)]
    repeat: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Output directory (default: $MORPH_OUT_ROOT, else ./runs).
    #[arg(long)]
    out: Option<String>,
    /// Any other spec field, as key=value. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl SpecArgs {
    fn resolve(&self) -> Result<ExperimentSpec, Error> {
        let mut spec = ExperimentSpec::default();
        if let Ok(root) = std::env::var(OUT_ROOT_ENV) {
            if !root.is_empty() {
                spec.out = PathBuf::from(root);
            }
        }
        if let Some(path) = &self.config {
            spec.apply_config_text(&std::fs::read_to_string(path)?)?;
        }
        let flags = [
            ("method", &self.method),
            ("noise_type", &self.noise_type),
            ("tau", &self.tau),
            ("k", &self.k),
            ("n_train", &self.n_train),
            ("n_test", &self.n_test),
            ("dim", &self.dim),
            ("center_spread", &self.center_spread),
            ("cluster_std", &self.cluster_std),
            ("hidden", &self.hidden),
            ("epochs", &self.epochs),
            ("batch_size", &self.batch_size),
            ("lr0", &self.lr0),
            ("q", &self.q),
            ("w_max", &self.w_max),
            ("alpha_offset", &self.alpha_offset),
            ("jitter_std", &self.jitter_std),
            ("keep_fraction", &self.keep_fraction),
            ("train_data", &self.train_data),
            ("test_data", &self.test_data),
            ("repeat", &self.repeat),
            ("seed", &self.seed),
            ("out", &self.out),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                spec.set(key, v)?;
            }
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
            spec.set(k, v)?;
        }
        for field in spec.ignored_fields() {
            warn!(
                "field `{field}` does not apply to method={} noise_type={}; ignored",
                spec.method, spec.noise
            );
        }
        spec.validate()?;
        Ok(spec)
    }
}

fn code_for(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Parse { .. } => exit::CONFIG,
        Error::Io(_) => exit::IO,
        e if e.is_numerical() => exit::NUMERICAL,
        _ => exit::OTHER,
    }
}

fn print_json(v: serde_json::Result<serde_json::Value>) {
    match v.and_then(|v| serde_json::to_string_pretty(&v)) {
        Ok(s) => println!("{s}"),
        Err(e) => warn!("could not render summary: {e}"),
    }
}

fn run(cli: Cli) -> Result<u8, Error> {
    match cli.command {
        Command::Generate(args) => {
            let spec = args.resolve()?;
            let manifests = experiment::generate(&spec)?;
            for m in &manifests {
                info!(
                    "seed {}: {} of {} labels flipped",
                    m.seed, m.flip_count, m.n_train
                );
            }
            print_json(serde_json::to_value(&manifests));
        }
        Command::Train(args) => {
            let spec = args.resolve()?;
            info!("training {} seed(s) into {}", spec.repeat, spec.out.display());
            let summary = experiment::run_experiment(&spec)?;
            if summary.no_transition > 0 {
                warn!("{} run(s) never transitioned", summary.no_transition);
            }
            print_json(serde_json::to_value(&summary));
        }
        Command::SweepTransition { spec, offsets } => {
            let spec = spec.resolve()?;
            let offsets = offsets.unwrap_or_else(|| DEFAULT_OFFSETS.to_vec());
            let points = experiment::sweep_transition(&spec, &offsets)?;
            print!("{}", experiment::sweep_table(&points));
        }
        Command::Report { dirs, out } => {
            let out = out.unwrap_or_else(|| {
                std::env::var(OUT_ROOT_ENV)
                    .map(PathBuf::from)
                    .unwrap_or_else(|_| PathBuf::from("runs"))
                    .join("report")
            });
            let report = experiment::collect(&dirs);
            experiment::write_report(&report, &out)?;
            print!("{}", report.comparison_csv());
            for (path, why) in &report.skipped {
                warn!("skipped {}: {why}", path.display());
            }
            if report.is_partial() || report.runs.is_empty() {
                return Ok(exit::PARTIAL);
            }
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(code_for(&e))
        }
    }
}
