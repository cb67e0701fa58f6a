use crate::error::{Error, Result};
use crate::noise::{EmOptions, DEFAULT_TAU_MAX};

/// Which per-sample signal the noise-rate mixture is fitted to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossSignal {
    /// Accumulated loss over all seeding epochs so far.
    #[default]
    Accumulated,
    /// The current epoch's loss only.
    Instantaneous,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Hidden layer widths; input and output widths come from the data.
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    pub momentum: f64,
    /// Prediction history length.
    pub q: usize,
    /// Ceiling of the consistency weight.
    pub w_max: f64,
    /// Epochs after the transition over which the consistency weight ramps up.
    pub ramp_epochs: usize,
    /// The transition condition is not checked before this many epochs.
    pub warmup_epochs_min: usize,
    /// Added to the estimated noise rate in the transition threshold, in
    /// percentage points. Positive values make the transition fire earlier.
    pub alpha_offset: f64,
    /// Std of the Gaussian input jitter used for the consistency term.
    pub jitter_std: f64,
    pub seed: u64,
    pub regularization: bool,
    /// Upper clamp on the noise-rate estimate.
    pub tau_max: f64,
    pub loss_signal: LossSignal,
    pub em: EmOptions,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden: vec![64, 64],
            epochs: 100,
            batch_size: 128,
            lr0: 0.1,
            momentum: 0.9,
            q: 10,
            w_max: 5.0,
            ramp_epochs: 10,
            warmup_epochs_min: 5,
            alpha_offset: 0.0,
            jitter_std: 0.1,
            seed: 0,
            regularization: true,
            tau_max: DEFAULT_TAU_MAX,
            loss_signal: LossSignal::Accumulated,
            em: EmOptions::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.warmup_epochs_min < 1 {
            return fail("warmup_epochs_min must be at least 1".into());
        }
        if self.epochs <= self.warmup_epochs_min {
            return fail(format!(
                "epochs ({}) must exceed warmup_epochs_min ({})",
                self.epochs, self.warmup_epochs_min
            ));
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1".into());
        }
        if self.q == 0 {
            return fail("q must be at least 1".into());
        }
        if !(self.w_max >= 0.0 && self.w_max.is_finite()) {
            return fail(format!("w_max must be finite and >= 0, got {}", self.w_max));
        }
        if self.ramp_epochs == 0 {
            return fail("ramp_epochs must be at least 1".into());
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return fail(format!("lr0 must be positive, got {}", self.lr0));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return fail(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        if !(self.jitter_std >= 0.0 && self.jitter_std.is_finite()) {
            return fail(format!("jitter_std must be >= 0, got {}", self.jitter_std));
        }
        if !self.alpha_offset.is_finite() {
            return fail("alpha_offset must be finite".into());
        }
        if !(0.0..=1.0).contains(&self.tau_max) {
            return fail(format!("tau_max must lie in [0, 1], got {}", self.tau_max));
        }
        if self.hidden.contains(&0) {
            return fail("hidden widths must be positive".into());
        }
        Ok(())
    }
}
