use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::nn::Mlp;
use crate::safe_set::MaximalSafeSet;

/// Exact header of the per-epoch metrics CSV.
pub const METRICS_HEADER: &str =
    "epoch,phase,train_loss,test_error,mr,mp,lr,lp,f1,tau_hat,mem_size,safe_size,learn_rate,ramp_w";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Seeding,
    Evolution,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Seeding => "seeding",
            Phase::Evolution => "evolution",
        })
    }
}

impl FromStr for Phase {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "seeding" => Ok(Phase::Seeding),
            "evolution" => Ok(Phase::Evolution),
            other => Err(format!("unknown phase {other:?}")),
        }
    }
}

/// One row of the per-epoch log. `None` is written as `NA`.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub phase: Phase,
    pub train_loss: f64,
    pub test_error: f64,
    pub mr: Option<f64>,
    pub mp: Option<f64>,
    pub lr: Option<f64>,
    pub lp: Option<f64>,
    pub f1: Option<f64>,
    pub tau_hat: Option<f64>,
    pub mem_size: usize,
    pub safe_size: usize,
    pub learn_rate: f64,
    pub ramp_w: f64,
}

/// One evaluation of the transition condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionCheck {
    pub epoch: usize,
    pub mem_size: usize,
    pub tau_hat: f64,
    /// `(1 − (τ̂ + α)) · N`
    pub threshold: f64,
    pub fired: bool,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub model: Mlp,
    pub safe_set: Option<MaximalSafeSet>,
    pub metrics: Vec<EpochMetrics>,
    /// Epoch at which the transition fired; `None` for baselines or when it never did.
    pub transition_epoch: Option<usize>,
    pub transition_checks: Vec<TransitionCheck>,
    pub best_test_error: f64,
}

impl RunResult {
    pub(crate) fn finish(
        model: Mlp,
        safe_set: Option<MaximalSafeSet>,
        metrics: Vec<EpochMetrics>,
        transition_epoch: Option<usize>,
        transition_checks: Vec<TransitionCheck>,
    ) -> Self {
        let best_test_error = best_test_error(&metrics);
        RunResult {
            model,
            safe_set,
            metrics,
            transition_epoch,
            transition_checks,
            best_test_error,
        }
    }

    /// True when a transition-capable run finished without ever transitioning.
    pub fn no_transition(&self) -> bool {
        self.transition_epoch.is_none() && !self.transition_checks.is_empty()
    }

    pub fn metrics_csv(&self) -> String {
        metrics_to_csv(&self.metrics)
    }
}

pub fn best_test_error(metrics: &[EpochMetrics]) -> f64 {
    metrics.iter().map(|m| m.test_error).fold(f64::INFINITY, f64::min)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"))
}

pub fn metrics_to_csv(rows: &[EpochMetrics]) -> String {
    let mut s = String::with_capacity(96 * (rows.len() + 1));
    s.push_str(METRICS_HEADER);
    s.push('\n');
    for m in rows {
        let _ = writeln!(
            s,
            "{},{},{:.6},{:.6},{},{},{},{},{},{},{},{},{:.6},{:.6}",
            m.epoch,
            m.phase,
            m.train_loss,
            m.test_error,
            opt(m.mr),
            opt(m.mp),
            opt(m.lr),
            opt(m.lp),
            opt(m.f1),
            opt(m.tau_hat),
            m.mem_size,
            m.safe_size,
            m.learn_rate,
            m.ramp_w
        );
    }
    s
}

pub fn parse_metrics_csv(text: &str) -> Result<Vec<EpochMetrics>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == METRICS_HEADER => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                msg: "metrics header mismatch".into(),
            })
        }
    }
    let mut out = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 14 {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected 14 columns, found {}", f.len()),
            });
        }
        let err = |what: &str, v: &str| Error::Parse {
            line: line_no,
            msg: format!("bad {what} {v:?}"),
        };
        let real = |i: usize, what: &str| -> Result<f64> { f[i].parse::<f64>().map_err(|_| err(what, f[i])) };
        let maybe = |i: usize, what: &str| -> Result<Option<f64>> {
            if f[i] == "NA" {
                Ok(None)
            } else {
                real(i, what).map(Some)
            }
        };
        let int =
            |i: usize, what: &str| -> Result<usize> { f[i].parse::<usize>().map_err(|_| err(what, f[i])) };
        out.push(EpochMetrics {
            epoch: int(0, "epoch")?,
            phase: f[1].parse().map_err(|_| err("phase", f[1]))?,
            train_loss: real(2, "train_loss")?,
            test_error: real(3, "test_error")?,
            mr: maybe(4, "mr")?,
            mp: maybe(5, "mp")?,
            lr: maybe(6, "lr")?,
            lp: maybe(7, "lp")?,
            f1: maybe(8, "f1")?,
            tau_hat: maybe(9, "tau_hat")?,
            mem_size: int(10, "mem_size")?,
            safe_size: int(11, "safe_size")?,
            learn_rate: real(12, "learn_rate")?,
            ramp_w: real(13, "ramp_w")?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(epoch: usize) -> EpochMetrics {
        EpochMetrics {
            epoch,
            phase: Phase::Seeding,
            train_loss: 0.5,
            test_error: 0.25,
            mr: Some(0.9),
            mp: None,
            lr: None,
            lp: None,
            f1: None,
            tau_hat: Some(0.4),
            mem_size: 10,
            safe_size: 0,
            learn_rate: 0.1,
            ramp_w: 0.0,
        }
    }

    #[test]
    fn header_is_exact_and_na_is_written() {
        let csv = metrics_to_csv(&[row(0)]);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), METRICS_HEADER);
        assert_eq!(
            lines.next().unwrap(),
            "0,seeding,0.500000,0.250000,0.900000,NA,NA,NA,NA,0.400000,10,0,0.100000,0.000000"
        );
    }

    #[test]
    fn rejects_corrupt_rows() {
        let csv = format!("{METRICS_HEADER}\n0,seeding,1\n");
        assert!(matches!(
            parse_metrics_csv(&csv),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(parse_metrics_csv("epoch\n").is_err());
    }

    proptest! {
        #[test]
        fn written_csv_reparses_to_the_same_text(
            loss in 0.0f64..10.0, err in 0.0f64..1.0, mr in proptest::option::of(0.0f64..1.0),
            tau in proptest::option::of(0.0f64..0.9), mem in 0usize..5000, evo in any::<bool>(),
        ) {
            let mut m = row(3);
            m.train_loss = loss;
            m.test_error = err;
            m.mr = mr;
            m.tau_hat = tau;
            m.mem_size = mem;
            m.phase = if evo { Phase::Evolution } else { Phase::Seeding };
            let csv = metrics_to_csv(&[m.clone(), row(4)]);
            let back = parse_metrics_csv(&csv).unwrap();
            prop_assert_eq!(metrics_to_csv(&back), csv);
            prop_assert_eq!(back[0].phase, m.phase);
            prop_assert_eq!(back[0].mr.is_some(), mr.is_some());
        }
    }
}
