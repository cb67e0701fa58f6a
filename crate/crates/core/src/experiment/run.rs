use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::spec::{ExperimentSpec, Method};
use crate::data::{
    inject_noise, load_csv, make_blobs_split, save_csv, NoisyDataset, Split, TransitionMatrix,
};
use crate::error::{Error, Result};
use crate::rng;
use crate::trainer::{parse_metrics_csv, run_default, run_morph, run_small_loss, EpochMetrics, RunResult};

/// Train and test splits for one seed plus how they were made.
#[derive(Debug, Clone)]
pub struct SeedData {
    pub train: NoisyDataset,
    pub test: NoisyDataset,
    pub transition: Option<TransitionMatrix>,
    pub data_seed: u64,
    pub noise_seed: u64,
}

/// Builds (or loads) the datasets for `seed`. Blobs come from the `data`
/// sub-stream, label flips from the `noise` sub-stream.
pub fn build_datasets(spec: &ExperimentSpec, seed: u64) -> Result<SeedData> {
    let data_seed = rng::derive_seed(seed, rng::DATA);
    let noise_seed = rng::derive_seed(seed, rng::NOISE);
    let transition = spec.transition_matrix()?;
    let (train, test) = match (&spec.train_data, &spec.test_data) {
        (Some(tr), Some(te)) => (
            load_csv(tr, spec.k, Split::Train)?,
            load_csv(te, spec.k, Split::Test)?,
        ),
        _ => {
            let (clean, test) =
                make_blobs_split(spec.blob_spec(), spec.n_train / spec.k, spec.n_test, data_seed)?;
            let train = match &transition {
                Some(t) => inject_noise(&clean, t, noise_seed)?,
                None => clean,
            };
            (train, test)
        }
    };
    Ok(SeedData {
        train,
        test,
        transition,
        data_seed,
        noise_seed,
    })
}

/// Runs the spec's method once for `seed`, without writing anything.
pub fn run_once(spec: &ExperimentSpec, seed: u64) -> Result<RunResult> {
    let data = build_datasets(spec, seed)?;
    run_on(spec, seed, &data)
}

pub fn run_on(spec: &ExperimentSpec, seed: u64, data: &SeedData) -> Result<RunResult> {
    let cfg = spec.train_config(seed);
    match spec.method {
        Method::Morph => run_morph(&data.train, &data.test, &cfg),
        Method::Default => run_default(&data.train, &data.test, &cfg),
        Method::SmallLoss => run_small_loss(&data.train, &data.test, &cfg, spec.keep_fraction),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub method: String,
    pub epochs: usize,
    pub best_test_error: f64,
    pub final_test_error: f64,
    pub final_f1: Option<f64>,
    pub transition_epoch: Option<usize>,
}

/// Summary of one run computed from its logged rows. The transition epoch is
/// the first row carrying safe-set metrics in the seeding phase.
pub fn summarize_rows(seed: u64, method: Method, rows: &[EpochMetrics]) -> Result<SeedSummary> {
    let last = rows.last().ok_or_else(|| Error::Parse {
        line: 2,
        msg: "metrics file has no rows".into(),
    })?;
    let transition_epoch = match method {
        Method::Morph => rows.iter().find(|r| r.lr.is_some()).map(|r| r.epoch),
        _ => None,
    };
    Ok(SeedSummary {
        seed,
        method: method.to_string(),
        epochs: rows.len(),
        best_test_error: crate::trainer::best_test_error(rows),
        final_test_error: last.test_error,
        final_f1: last.f1,
        transition_epoch,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub std: f64,
    pub count: usize,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(Stat {
            mean,
            std,
            count: values.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSummary {
    pub method: String,
    pub noise_type: String,
    pub tau: f64,
    pub alpha_offset: f64,
    pub seeds: Vec<u64>,
    pub best_test_error: Stat,
    pub final_f1: Option<Stat>,
    pub transition_epoch: Option<Stat>,
    /// Morph runs that never left the seeding phase.
    pub no_transition: usize,
    pub runs: Vec<SeedSummary>,
}

pub fn aggregate(spec: &ExperimentSpec, runs: Vec<SeedSummary>) -> Result<ExperimentSummary> {
    let best: Vec<f64> = runs.iter().map(|r| r.best_test_error).collect();
    let f1: Vec<f64> = runs.iter().filter_map(|r| r.final_f1).collect();
    let ttr: Vec<f64> = runs
        .iter()
        .filter_map(|r| r.transition_epoch.map(|e| e as f64))
        .collect();
    let no_transition = if spec.method == Method::Morph {
        runs.len() - ttr.len()
    } else {
        0
    };
    Ok(ExperimentSummary {
        method: spec.method.to_string(),
        noise_type: spec.noise.to_string(),
        tau: spec.tau,
        alpha_offset: spec.train.alpha_offset,
        seeds: runs.iter().map(|r| r.seed).collect(),
        best_test_error: Stat::of(&best).ok_or_else(|| Error::config("no runs to summarize"))?,
        final_f1: Stat::of(&f1),
        transition_epoch: Stat::of(&ttr),
        no_transition,
        runs,
    })
}

pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const SAFE_SET_FILE: &str = "safe_set.txt";
pub const SPEC_FILE: &str = "spec.txt";
pub const MANIFEST_FILE: &str = "manifest.json";

pub fn seed_dir(root: &Path, seed: u64) -> PathBuf {
    root.join(format!("seed_{seed}"))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.into()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

/// Runs one seed and writes its metrics, safe set and summary into `dir`.
/// The summary is computed from the re-parsed metrics file.
pub fn run_seed(spec: &ExperimentSpec, seed: u64, dir: &Path) -> Result<(RunResult, SeedSummary)> {
    let result = run_once(spec, seed)?;
    fs::create_dir_all(dir)?;
    let csv = result.metrics_csv();
    fs::write(dir.join(METRICS_FILE), &csv)?;
    if let Some(s) = &result.safe_set {
        fs::write(dir.join(SAFE_SET_FILE), s.to_index_list())?;
    }
    let summary = summarize_rows(seed, spec.method, &parse_metrics_csv(&csv)?)?;
    write_json(&dir.join(SUMMARY_FILE), &summary)?;
    Ok((result, summary))
}

/// Runs `f` for every seed on scoped threads, at most `available_parallelism`
/// at a time, and returns results in seed order.
fn par_seeds<T: Send>(seeds: &[u64], f: impl Fn(u64) -> Result<T> + Sync) -> Result<Vec<T>> {
    let width = std::thread::available_parallelism().map_or(1, |n| n.get());
    let mut out = Vec::with_capacity(seeds.len());
    for chunk in seeds.chunks(width.max(1)) {
        let results: Vec<Result<T>> = std::thread::scope(|s| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|&seed| {
                    let f = &f;
                    s.spawn(move || f(seed))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|p| std::panic::resume_unwind(p)))
                .collect()
        });
        for r in results {
            out.push(r?);
        }
    }
    Ok(out)
}

/// Validates, then runs every seed into `spec.out` and writes the aggregate
/// summary and the resolved spec next to the per-seed directories.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentSummary> {
    spec.validate()?;
    fs::create_dir_all(&spec.out)?;
    fs::write(spec.out.join(SPEC_FILE), spec.to_config_string())?;
    let seeds: Vec<u64> = spec.seeds().collect();
    let runs = par_seeds(&seeds, |seed| {
        run_seed(spec, seed, &seed_dir(&spec.out, seed)).map(|(_, s)| s)
    })?;
    let summary = aggregate(spec, runs)?;
    write_json(&spec.out.join(SUMMARY_FILE), &summary)?;
    Ok(summary)
}

/// Recomputes the aggregate summary of a finished experiment from its
/// metrics files alone.
pub fn summarize_dir(spec: &ExperimentSpec) -> Result<ExperimentSummary> {
    let runs = spec
        .seeds()
        .map(|seed| {
            let text = fs::read_to_string(seed_dir(&spec.out, seed).join(METRICS_FILE))?;
            summarize_rows(seed, spec.method, &parse_metrics_csv(&text)?)
        })
        .collect::<Result<Vec<_>>>()?;
    aggregate(spec, runs)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub seed: u64,
    pub data_seed: u64,
    pub noise_seed: u64,
    pub k: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub dim: usize,
    pub center_spread: f64,
    pub cluster_std: f64,
    pub noise_type: String,
    pub tau: f64,
    /// Row-stochastic matrix, `T[i][j] = P(noisy = j | true = i)`; `None` when clean.
    pub transition_matrix: Option<Vec<Vec<f64>>>,
    pub flip_count: usize,
    pub flip_fraction: f64,
    pub train_file: String,
    pub test_file: String,
}

/// Writes train/test CSV files and a manifest for every seed.
pub fn generate(spec: &ExperimentSpec) -> Result<Vec<Manifest>> {
    spec.validate()?;
    spec.seeds()
        .map(|seed| {
            let data = build_datasets(spec, seed)?;
            let dir = seed_dir(&spec.out, seed);
            fs::create_dir_all(&dir)?;
            save_csv(&data.train, dir.join("train.csv"))?;
            save_csv(&data.test, dir.join("test.csv"))?;
            let flips = data.train.flipped_count();
            let m = Manifest {
                seed,
                data_seed: data.data_seed,
                noise_seed: data.noise_seed,
                k: spec.k,
                n_train: data.train.len(),
                n_test: data.test.len(),
                dim: data.train.dim(),
                center_spread: spec.center_spread,
                cluster_std: spec.cluster_std,
                noise_type: spec.noise.to_string(),
                tau: spec.tau,
                transition_matrix: data.transition.as_ref().map(|t| t.rows().to_vec()),
                flip_count: flips,
                flip_fraction: flips as f64 / data.train.len() as f64,
                train_file: "train.csv".into(),
                test_file: "test.csv".into(),
            };
            write_json(&dir.join(MANIFEST_FILE), &m)?;
            Ok(m)
        })
        .collect()
}

pub const DEFAULT_OFFSETS: [f64; 5] = [10.0, 5.0, 0.0, -5.0, -10.0];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub alpha_offset: f64,
    pub dir: PathBuf,
    pub summary: ExperimentSummary,
}

pub fn offset_dir_name(alpha: f64) -> String {
    format!("alpha_{alpha:+}")
}

/// One full experiment per offset under `spec.out/alpha_<offset>/`, plus a
/// `sweep.csv` table of mean best test error by offset.
pub fn sweep_transition(spec: &ExperimentSpec, offsets: &[f64]) -> Result<Vec<SweepPoint>> {
    if spec.method != Method::Morph {
        return Err(Error::Config(
            "field `method`: the transition sweep needs method = morph".into(),
        ));
    }
    if offsets.is_empty() {
        return Err(Error::Config(
            "field `offsets`: at least one offset is required".into(),
        ));
    }
    spec.validate()?;
    let mut points = Vec::with_capacity(offsets.len());
    for &alpha in offsets {
        let mut s = spec.clone();
        s.train.alpha_offset = alpha;
        s.out = spec.out.join(offset_dir_name(alpha));
        let summary = run_experiment(&s)?;
        points.push(SweepPoint {
            alpha_offset: alpha,
            dir: s.out,
            summary,
        });
    }
    fs::write(spec.out.join("sweep.csv"), sweep_table(&points))?;
    Ok(points)
}

pub fn sweep_table(points: &[SweepPoint]) -> String {
    let mut s = String::from(
        "alpha_offset,mean_best_test_error,std_best_test_error,mean_transition_epoch,no_transition\n",
    );
    for p in points {
        let b = &p.summary.best_test_error;
        s.push_str(&format!(
            "{},{:.6},{:.6},{},{}\n",
            p.alpha_offset,
            b.mean,
            b.std,
            p.summary
                .transition_epoch
                .map_or("NA".to_string(), |t| format!("{:.6}", t.mean)),
            p.summary.no_transition
        ));
    }
    s
}
