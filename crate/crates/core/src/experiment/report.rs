use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::run::{summarize_rows, METRICS_FILE};
use super::spec::Method;
use crate::error::Result;
use crate::trainer::{metrics_to_csv, parse_metrics_csv, EpochMetrics, Phase, METRICS_HEADER};

/// A metrics file found under one of the report inputs.
#[derive(Debug, Clone)]
pub struct RunEntry {
    pub label: String,
    pub rows: Vec<EpochMetrics>,
}

#[derive(Debug, Clone, Default)]
pub struct Report {
    pub runs: Vec<RunEntry>,
    /// Inputs that could not be read, with the reason.
    pub skipped: Vec<(PathBuf, String)>,
}

impl Report {
    pub fn is_partial(&self) -> bool {
        !self.skipped.is_empty()
    }

    /// Long format: the metrics columns prefixed by a `run` column.
    pub fn merged_csv(&self) -> String {
        let mut s = format!("run,{METRICS_HEADER}\n");
        for run in &self.runs {
            let body = metrics_to_csv(&run.rows);
            for line in body.lines().skip(1) {
                let _ = writeln!(s, "{},{line}", run.label);
            }
        }
        s
    }

    /// One line per run with its headline numbers.
    pub fn comparison_csv(&self) -> String {
        let mut s = String::from("run,epochs,best_test_error,final_test_error,final_f1,transition_epoch\n");
        for run in &self.runs {
            let evolves = run.rows.iter().any(|r| r.phase == Phase::Evolution);
            let method = if evolves { Method::Morph } else { Method::Default };
            let Ok(sum) = summarize_rows(0, method, &run.rows) else {
                continue;
            };
            let _ = writeln!(
                s,
                "{},{},{:.6},{:.6},{},{}",
                run.label,
                sum.epochs,
                sum.best_test_error,
                sum.final_test_error,
                sum.final_f1.map_or("NA".into(), |f| format!("{f:.6}")),
                sum.transition_epoch.map_or("NA".into(), |e| e.to_string())
            );
        }
        s
    }
}

/// Every metrics file under `dir`: the directory itself if it holds one,
/// otherwise its subdirectories, searched recursively in name order.
fn find_metrics(dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    let direct = dir.join(METRICS_FILE);
    if direct.is_file() {
        out.push(direct);
        return Ok(());
    }
    let mut subs: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    subs.sort();
    for sub in subs {
        find_metrics(&sub, out)?;
    }
    Ok(())
}

/// Collects runs from the given directories. Unreadable or corrupt runs are
/// recorded in `skipped` instead of failing the whole report.
pub fn collect(dirs: &[PathBuf]) -> Report {
    let mut report = Report::default();
    for dir in dirs {
        let mut files = Vec::new();
        if let Err(e) = find_metrics(dir, &mut files) {
            report.skipped.push((dir.clone(), e.to_string()));
            continue;
        }
        if files.is_empty() {
            report
                .skipped
                .push((dir.clone(), format!("no {METRICS_FILE} found")));
            continue;
        }
        for file in files {
            let parsed = fs::read_to_string(&file)
                .map_err(crate::Error::from)
                .and_then(|t| parse_metrics_csv(&t));
            let run_dir = file.parent().unwrap_or(dir);
            match parsed {
                Ok(rows) if !rows.is_empty() => report.runs.push(RunEntry {
                    label: run_dir.display().to_string().replace(',', "_"),
                    rows,
                }),
                Ok(_) => report.skipped.push((file, "metrics file has no rows".into())),
                Err(e) => report.skipped.push((file, e.to_string())),
            }
        }
    }
    report
}

/// Writes `merged.csv` and `comparison.csv` into `out`.
pub fn write_report(report: &Report, out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    fs::write(out.join("merged.csv"), report.merged_csv())?;
    fs::write(out.join("comparison.csv"), report.comparison_csv())?;
    Ok(())
}
