use std::collections::BTreeSet;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::{BlobSpec, TransitionMatrix};
use crate::error::{Error, Result};
use crate::trainer::{LossSignal, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Morph,
    Default,
    SmallLoss,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Morph => "morph",
            Method::Default => "default",
            Method::SmallLoss => "small_loss",
        })
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "morph" => Ok(Method::Morph),
            "default" => Ok(Method::Default),
            "small_loss" | "small-loss" => Ok(Method::SmallLoss),
            other => Err(format!(
                "unknown method {other:?} (expected morph, default or small_loss)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    None,
    Symmetric,
    Asymmetric,
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NoiseKind::None => "none",
            NoiseKind::Symmetric => "symmetric",
            NoiseKind::Asymmetric => "asymmetric",
        })
    }
}

impl FromStr for NoiseKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "none" => Ok(NoiseKind::None),
            "symmetric" | "sym" => Ok(NoiseKind::Symmetric),
            "asymmetric" | "asym" => Ok(NoiseKind::Asymmetric),
            other => Err(format!(
                "unknown noise type {other:?} (expected none, symmetric or asymmetric)"
            )),
        }
    }
}

/// Everything needed to reproduce a batch of runs: data geometry, label
/// noise, trainer settings, seeds and where to write results.
///
/// Seeds `seed..seed + repeat` are run; for each one the data, the noise and
/// the trainer draw from sub-streams of that seed, so runs with the same seed
/// but different methods see identical data.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub method: Method,
    pub k: usize,
    /// Total training samples; must be a multiple of `k`.
    pub n_train: usize,
    pub n_test: usize,
    pub dim: usize,
    pub center_spread: f64,
    pub cluster_std: f64,
    pub noise: NoiseKind,
    pub tau: f64,
    /// `train.seed` is the first seed; `train.jitter_std` is replaced by
    /// [`ExperimentSpec::jitter_std`] when a run config is built.
    pub train: TrainConfig,
    /// `None` means `0.1 * cluster_std`.
    pub jitter_std: Option<f64>,
    pub repeat: usize,
    /// Small-loss selection fraction; `None` uses `1 - τ̂`.
    pub keep_fraction: Option<f64>,
    /// Load these datasets instead of generating blobs.
    pub train_data: Option<PathBuf>,
    pub test_data: Option<PathBuf>,
    pub out: PathBuf,
    explicit: BTreeSet<String>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            method: Method::Morph,
            k: 3,
            n_train: 3000,
            n_test: 1000,
            dim: 2,
            center_spread: 4.0,
            cluster_std: 1.0,
            noise: NoiseKind::None,
            tau: 0.0,
            train: TrainConfig::default(),
            jitter_std: None,
            repeat: 1,
            keep_fraction: None,
            train_data: None,
            test_data: None,
            out: PathBuf::from("runs"),
            explicit: BTreeSet::new(),
        }
    }
}

/// Recognized keys, in the order [`ExperimentSpec::to_config_string`] writes them.
pub const KEYS: &[&str] = &[
    "method",
    "k",
    "n_train",
    "n_test",
    "dim",
    "center_spread",
    "cluster_std",
    "noise_type",
    "tau",
    "hidden",
    "epochs",
    "batch_size",
    "lr0",
    "momentum",
    "q",
    "w_max",
    "ramp_epochs",
    "warmup_epochs_min",
    "alpha_offset",
    "jitter_std",
    "regularization",
    "tau_max",
    "loss_signal",
    "em_tol",
    "em_max_iter",
    "seed",
    "repeat",
    "keep_fraction",
    "train_data",
    "test_data",
    "out",
];

fn field_err(key: &str, msg: impl fmt::Display) -> Error {
    Error::Config(format!("field `{key}`: {msg}"))
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse::<T>()
        .map_err(|_| field_err(key, format!("cannot parse {v:?}")))
}

fn parse_real(key: &str, v: &str) -> Result<f64> {
    let x: f64 = parse_num(key, v)?;
    if !x.is_finite() {
        return Err(field_err(key, "must be finite"));
    }
    Ok(x)
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(field_err(key, format!("expected a boolean, got {v:?}"))),
    }
}

fn auto_or<T>(v: &str, f: impl FnOnce(&str) -> Result<T>) -> Result<Option<T>> {
    if v == "auto" {
        Ok(None)
    } else {
        f(v).map(Some)
    }
}

impl ExperimentSpec {
    /// Sets one field from its textual form. Keys may use `-` or `_`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('-', "_");
        let v = value.trim();
        let k = key.as_str();
        let t = &mut self.train;
        match k {
            "method" => self.method = v.parse().map_err(|m: String| field_err(k, m))?,
            "k" => self.k = parse_num(k, v)?,
            "n_train" => self.n_train = parse_num(k, v)?,
            "n_test" => self.n_test = parse_num(k, v)?,
            "dim" => self.dim = parse_num(k, v)?,
            "center_spread" => self.center_spread = parse_real(k, v)?,
            "cluster_std" => self.cluster_std = parse_real(k, v)?,
            "noise_type" | "noise" => self.noise = v.parse().map_err(|m: String| field_err(k, m))?,
            "tau" => self.tau = parse_real(k, v)?,
            "hidden" => {
                t.hidden = if v.is_empty() || v == "none" {
                    Vec::new()
                } else {
                    v.split(',')
                        .map(|w| parse_num::<usize>(k, w.trim()))
                        .collect::<Result<_>>()?
                }
            }
            "epochs" => t.epochs = parse_num(k, v)?,
            "batch_size" => t.batch_size = parse_num(k, v)?,
            "lr0" => t.lr0 = parse_real(k, v)?,
            "momentum" => t.momentum = parse_real(k, v)?,
            "q" => t.q = parse_num(k, v)?,
            "w_max" => t.w_max = parse_real(k, v)?,
            "ramp_epochs" => t.ramp_epochs = parse_num(k, v)?,
            "warmup_epochs_min" => t.warmup_epochs_min = parse_num(k, v)?,
            "alpha_offset" => t.alpha_offset = parse_real(k, v)?,
            "jitter_std" => self.jitter_std = auto_or(v, |v| parse_real(k, v))?,
            "regularization" => t.regularization = parse_bool(k, v)?,
            "tau_max" => t.tau_max = parse_real(k, v)?,
            "loss_signal" => {
                t.loss_signal = match v {
                    "accumulated" => LossSignal::Accumulated,
                    "instantaneous" => LossSignal::Instantaneous,
                    _ => {
                        return Err(field_err(
                            k,
                            format!("expected accumulated or instantaneous, got {v:?}"),
                        ))
                    }
                }
            }
            "em_tol" => t.em.tol = parse_real(k, v)?,
            "em_max_iter" => t.em.max_iter = parse_num(k, v)?,
            "seed" => t.seed = parse_num(k, v)?,
            "repeat" => self.repeat = parse_num(k, v)?,
            "keep_fraction" => self.keep_fraction = auto_or(v, |v| parse_real(k, v))?,
            "train_data" => self.train_data = Some(PathBuf::from(v)),
            "test_data" => self.test_data = Some(PathBuf::from(v)),
            "out" => self.out = PathBuf::from(v),
            _ => return Err(Error::Config(format!("unknown field `{k}`"))),
        }
        self.explicit
            .insert(if k == "noise" { "noise_type".into() } else { key });
        Ok(())
    }

    /// Applies `key = value` lines. Blank lines and `#` comments are skipped.
    pub fn apply_config_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                msg: format!("expected key = value, got {line:?}"),
            })?;
            self.set(key, value).map_err(|e| match e {
                Error::Config(m) => Error::Parse { line: i + 1, msg: m },
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn from_config_file(path: impl AsRef<Path>) -> Result<Self> {
        let mut spec = ExperimentSpec::default();
        spec.apply_config_text(&std::fs::read_to_string(path)?)?;
        Ok(spec)
    }

    /// Keys that were set explicitly (by config text or [`ExperimentSpec::set`]).
    pub fn explicit_keys(&self) -> impl Iterator<Item = &str> {
        self.explicit.iter().map(String::as_str)
    }

    /// Explicitly set keys that the chosen method or noise type never reads.
    pub fn ignored_fields(&self) -> Vec<&'static str> {
        let morph_only = [
            "w_max",
            "ramp_epochs",
            "alpha_offset",
            "jitter_std",
            "regularization",
        ];
        let mut out = Vec::new();
        if self.method != Method::Morph {
            out.extend(morph_only.iter().filter(|k| self.explicit.contains(**k)));
        }
        if self.method != Method::SmallLoss && self.explicit.contains("keep_fraction") {
            out.push("keep_fraction");
        }
        if self.noise == NoiseKind::None && self.explicit.contains("tau") {
            out.push("tau");
        }
        out
    }

    pub fn seeds(&self) -> std::ops::Range<u64> {
        let s = self.train.seed;
        s..s + self.repeat as u64
    }

    pub fn blob_spec(&self) -> BlobSpec {
        BlobSpec {
            num_classes: self.k,
            dim: self.dim,
            center_spread: self.center_spread,
            cluster_std: self.cluster_std,
        }
    }

    pub fn transition_matrix(&self) -> Result<Option<TransitionMatrix>> {
        let t = match self.noise {
            NoiseKind::None => return Ok(None),
            NoiseKind::Symmetric => TransitionMatrix::symmetric(self.k, self.tau),
            NoiseKind::Asymmetric => {
                TransitionMatrix::asymmetric(self.k, self.tau, &TransitionMatrix::cyclic_map(self.k))
            }
        };
        t.map(Some).map_err(|e| match e {
            Error::Config(m) => field_err("tau", m),
            other => other,
        })
    }

    /// Trainer config for one seed, with the jitter default resolved.
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            seed,
            jitter_std: self.jitter_std.unwrap_or(0.1 * self.cluster_std),
            ..self.train.clone()
        }
    }

    /// Checks every field; the first problem is reported with its key.
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(field_err("k", "must be at least 2"));
        }
        if self.dim == 0 {
            return Err(field_err("dim", "must be at least 1"));
        }
        if self.train_data.is_none() {
            if self.n_train == 0 || !self.n_train.is_multiple_of(self.k) {
                return Err(field_err(
                    "n_train",
                    format!(
                        "must be a positive multiple of k = {}, got {}",
                        self.k, self.n_train
                    ),
                ));
            }
            if self.n_test == 0 {
                return Err(field_err("n_test", "must be at least 1"));
            }
        }
        if self.train_data.is_some() != self.test_data.is_some() {
            return Err(field_err(
                "train_data",
                "train_data and test_data must be given together",
            ));
        }
        if !(self.center_spread >= 0.0) {
            return Err(field_err("center_spread", "must be >= 0"));
        }
        if !(self.cluster_std > 0.0) {
            return Err(field_err("cluster_std", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.tau) {
            return Err(field_err("tau", format!("must lie in [0, 1), got {}", self.tau)));
        }
        self.transition_matrix()?;
        if self.repeat == 0 {
            return Err(field_err("repeat", "must be at least 1"));
        }
        if self.train.seed.checked_add(self.repeat as u64).is_none() {
            return Err(field_err("seed", "seed + repeat overflows"));
        }
        if let Some(j) = self.jitter_std {
            if !(j >= 0.0) {
                return Err(field_err("jitter_std", "must be >= 0"));
            }
        }
        if let Some(f) = self.keep_fraction {
            if !(f > 0.0 && f <= 1.0) {
                return Err(field_err("keep_fraction", format!("must lie in (0, 1], got {f}")));
            }
        }
        if !(self.train.em.tol > 0.0) {
            return Err(field_err("em_tol", "must be positive"));
        }
        if self.train.em.max_iter == 0 {
            return Err(field_err("em_max_iter", "must be at least 1"));
        }
        self.train_config(self.train.seed)
            .validate()
            .map_err(|e| match e {
                Error::Config(m) => {
                    let key = m.split_whitespace().next().unwrap_or("train");
                    field_err(key, m.clone())
                }
                other => other,
            })
    }

    /// Canonical `key = value` form; parsing it back yields an equal spec
    /// (up to which keys count as explicit).
    pub fn to_config_string(&self) -> String {
        let t = &self.train;
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("method", self.method.to_string());
        put("k", self.k.to_string());
        put("n_train", self.n_train.to_string());
        put("n_test", self.n_test.to_string());
        put("dim", self.dim.to_string());
        put("center_spread", self.center_spread.to_string());
        put("cluster_std", self.cluster_std.to_string());
        put("noise_type", self.noise.to_string());
        put("tau", self.tau.to_string());
        let hidden: Vec<String> = t.hidden.iter().map(|h| h.to_string()).collect();
        put(
            "hidden",
            if hidden.is_empty() {
                "none".into()
            } else {
                hidden.join(",")
            },
        );
        put("epochs", t.epochs.to_string());
        put("batch_size", t.batch_size.to_string());
        put("lr0", t.lr0.to_string());
        put("momentum", t.momentum.to_string());
        put("q", t.q.to_string());
        put("w_max", t.w_max.to_string());
        put("ramp_epochs", t.ramp_epochs.to_string());
        put("warmup_epochs_min", t.warmup_epochs_min.to_string());
        put("alpha_offset", t.alpha_offset.to_string());
        put(
            "jitter_std",
            self.jitter_std.map_or("auto".into(), |j| j.to_string()),
        );
        put("regularization", t.regularization.to_string());
        put("tau_max", t.tau_max.to_string());
        put(
            "loss_signal",
            match t.loss_signal {
                LossSignal::Accumulated => "accumulated",
                LossSignal::Instantaneous => "instantaneous",
            }
            .into(),
        );
        put("em_tol", t.em.tol.to_string());
        put("em_max_iter", t.em.max_iter.to_string());
        put("seed", t.seed.to_string());
        put("repeat", self.repeat.to_string());
        put(
            "keep_fraction",
            self.keep_fraction.map_or("auto".into(), |f| f.to_string()),
        );
        if let Some(p) = &self.train_data {
            put("train_data", p.display().to_string());
        }
        if let Some(p) = &self.test_data {
            put("test_data", p.display().to_string());
        }
        put("out", self.out.display().to_string());
        s
    }
}
