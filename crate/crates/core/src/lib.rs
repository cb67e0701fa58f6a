//! Robust training under label noise by self-transitional learning.
//!
//! Training starts in a *seeding* phase that updates on every sample while
//! tracking which samples the network has memorized. Once the memorized set
//! is as large as the estimated number of correctly labeled samples, the
//! run switches to an *evolution* phase that updates only on a safe set of
//! presumed-clean samples and keeps refining that set after every batch.
//!
//! Modules:
//! - [`nn`]: dense network, momentum SGD, cosine schedule, gradient checks
//! - [`data`]: blobs, transition-matrix noise, jitter augmentation, CSV
//! - [`memorization`]: prediction histories and memorization metrics
//! - [`noise`]: accumulated loss and the two-component mixture estimate
//! - [`safe_set`]: the safe set and its evolution rule
//! - [`trainer`]: the two-phase trainer and baselines
//! - [`experiment`]: experiment specs, runs, summaries and reports

pub mod data;
pub mod error;
pub mod experiment;
pub mod memorization;
pub mod nn;
pub mod noise;
pub mod rng;
pub mod safe_set;
pub mod trainer;

pub use data::{NoisyDataset, TrainView, TransitionMatrix};
pub use error::{Error, Result};
pub use experiment::{ExperimentSpec, Method, NoiseKind};
pub use memorization::{PredictionHistory, SelectionReport};
pub use nn::{Mlp, Sgd};
pub use noise::{AulAccumulator, GmmFit};
pub use safe_set::MaximalSafeSet;
pub use trainer::{EpochMetrics, RunResult, TrainConfig};
