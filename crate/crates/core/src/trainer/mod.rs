//! Training loops: the two-phase robust trainer and the baselines it is
//! compared against.

mod baselines;
mod config;
mod engine;
mod metrics;
mod morph;

pub use baselines::{run_default, run_small_loss, select_small_loss};
pub use config::{LossSignal, TrainConfig};
pub use engine::Evaluator;
pub use metrics::{
    best_test_error, metrics_to_csv, parse_metrics_csv, EpochMetrics, Phase, RunResult, TransitionCheck,
    METRICS_HEADER,
};
pub use morph::{
    phase2_gradient, phase2_step, ramp_weight, run_morph, run_morph_observed, NoopObserver, Observer,
    Phase2Outcome, Phase2State,
};
