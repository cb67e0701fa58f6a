//! Two-phase training: seeding on all samples until the memorized set
//! reaches the estimated clean size, then evolution on the safe set only.

use ndarray::{ArrayView2, Axis};

use super::config::TrainConfig;
use super::engine::{fill_selection, mean, Engine};
use super::metrics::{Phase, RunResult, TransitionCheck};
use crate::data::{augment_batch, NoisyDataset, TrainView};
use crate::error::{Error, Result};
use crate::memorization::{memorized_set, PredictionHistory};
use crate::nn::{Gradients, Mlp, Sgd};
use crate::rng::Rng;
use crate::safe_set::{Evolution, MaximalSafeSet};

/// Hooks for inspecting a run from the outside (tests, audits).
pub trait Observer {
    fn on_transition_check(&mut self, _check: &TransitionCheck) {}

    /// Called before each evolution-phase update with the batch and the
    /// samples that feed the supervised term.
    fn on_supervised_batch(&mut self, _batch: &[usize], _supervised: &[usize], _safe: &MaximalSafeSet) {}

    fn on_evolve(
        &mut self,
        _before: &MaximalSafeSet,
        _batch: &[usize],
        _evolution: &Evolution,
        _after: &MaximalSafeSet,
    ) {
    }
}

pub struct NoopObserver;

impl Observer for NoopObserver {}

/// Gaussian ramp `w_max · exp(−5 (1 − min(e, R)/R)²)` where `e` counts
/// epochs since the transition and `R = ramp_epochs`.
pub fn ramp_weight(epochs_since_transition: usize, cfg: &TrainConfig) -> f64 {
    let r = cfg.ramp_epochs.max(1) as f64;
    let x = 1.0 - (epochs_since_transition as f64).min(r) / r;
    cfg.w_max * (-5.0 * x * x).exp()
}

/// Objective of one evolution step and its gradient: the cross-entropy mean
/// over the batch members in the safe set, plus `w` times the consistency
/// penalty over the whole batch when `x_aug` is given.
///
/// Returns `(supervised loss or None, consistency value or None, gradient or None)`.
/// The gradient is `None` when neither term is active.
pub fn phase2_gradient(
    model: &Mlp,
    x: ArrayView2<f64>,
    labels: &[usize],
    in_safe: &[bool],
    w: f64,
    x_aug: Option<ArrayView2<f64>>,
) -> Result<(Option<f64>, Option<f64>, Option<Gradients>)> {
    let n = labels.len();
    if in_safe.len() != n || x.nrows() != n {
        return Err(Error::dim("batch, labels and membership flags differ in length"));
    }
    let inside = in_safe.iter().filter(|&&s| s).count();
    let mut grads: Option<Gradients> = None;
    let mut supervised = None;
    if inside > 0 {
        let scale = n as f64 / inside as f64;
        let weights: Vec<f64> = in_safe.iter().map(|&s| if s { scale } else { 0.0 }).collect();
        let (loss, g) = model.loss_gradients(x, labels, Some(&weights))?;
        supervised = Some(loss);
        grads = Some(g);
    }
    let mut consistency = None;
    if let Some(xa) = x_aug {
        let (j, mut gj) = model.consistency_gradients(x, xa)?;
        gj.scale(w);
        consistency = Some(j);
        match grads.as_mut() {
            Some(g) => g.add_assign(&gj),
            None => grads = Some(gj),
        }
    }
    Ok((supervised, consistency, grads))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Phase2Outcome {
    /// Batch members that fed the supervised term (the batch ∩ safe set).
    pub supervised: Vec<usize>,
    pub supervised_loss: Option<f64>,
    pub consistency: Option<f64>,
    pub evolution: Evolution,
    pub updated: bool,
}

/// Mutable state touched by one evolution step.
pub struct Phase2State<'s> {
    pub model: &'s mut Mlp,
    pub opt: &'s mut Sgd,
    pub safe: &'s mut MaximalSafeSet,
    pub hist: &'s mut PredictionHistory,
    pub jitter_rng: &'s mut Rng,
}

/// One evolution-phase mini-batch: robust update, post-update predictions
/// written into the newest history slot, then safe-set evolution.
///
/// With an empty batch ∩ safe set only the consistency term is applied; if
/// that is inactive too (no regularization, zero weight or zero jitter) the
/// parameters are left alone.
pub fn phase2_step(
    state: Phase2State<'_>,
    train: TrainView<'_>,
    batch: &[usize],
    cfg: &TrainConfig,
    w: f64,
    observer: &mut dyn Observer,
) -> Result<Phase2Outcome> {
    let Phase2State {
        model,
        opt,
        safe,
        hist,
        jitter_rng,
    } = state;
    let x = train.features.select(Axis(0), batch);
    let labels: Vec<usize> = batch.iter().map(|&i| train.noisy_labels[i]).collect();
    let in_safe: Vec<bool> = batch.iter().map(|&i| safe.contains(i)).collect();
    let supervised: Vec<usize> = batch
        .iter()
        .zip(&in_safe)
        .filter(|(_, &s)| s)
        .map(|(&i, _)| i)
        .collect();
    observer.on_supervised_batch(batch, &supervised, safe);

    // Zero jitter makes the consistency term vanish identically.
    let consistency_active = cfg.regularization && w > 0.0 && cfg.jitter_std > 0.0;
    let x_aug = consistency_active.then(|| augment_batch(x.view(), cfg.jitter_std, jitter_rng));
    let (supervised_loss, consistency, grads) = phase2_gradient(
        model,
        x.view(),
        &labels,
        &in_safe,
        w,
        x_aug.as_ref().map(|a| a.view()),
    )?;
    let updated = match grads {
        Some(g) => {
            opt.apply(model, &g)?;
            true
        }
        None => false,
    };

    let post = model.forward(x.view(), None)?;
    for (&i, &p) in batch.iter().zip(&post.predicted_labels) {
        hist.overwrite_latest(i, p)?;
    }
    let before = safe.clone();
    let evolution = safe.evolve(batch, hist, train.noisy_labels)?;
    observer.on_evolve(&before, batch, &evolution, safe);
    Ok(Phase2Outcome {
        supervised,
        supervised_loss,
        consistency,
        evolution,
        updated,
    })
}

pub fn run_morph(train: &NoisyDataset, test: &NoisyDataset, cfg: &TrainConfig) -> Result<RunResult> {
    run_morph_observed(train, test, cfg, &mut NoopObserver)
}

pub fn run_morph_observed(
    train: &NoisyDataset,
    test: &NoisyDataset,
    cfg: &TrainConfig,
    observer: &mut dyn Observer,
) -> Result<RunResult> {
    let mut eng = Engine::new(train, test, cfg)?;
    let n = eng.n();
    let mut metrics = Vec::with_capacity(cfg.epochs);
    let mut checks = Vec::new();
    let mut safe: Option<MaximalSafeSet> = None;
    let mut transition: Option<usize> = None;

    for epoch in 0..cfg.epochs {
        let (lr, batches) = eng.begin_epoch(epoch)?;
        match (safe.as_mut(), transition) {
            (Some(s), Some(t_tr)) => {
                let w = if cfg.regularization {
                    ramp_weight(epoch - t_tr - 1, cfg)
                } else {
                    0.0
                };
                let mut losses = Vec::with_capacity(batches.len());
                for batch in &batches {
                    let out = phase2_step(
                        Phase2State {
                            model: &mut eng.model,
                            opt: &mut eng.opt,
                            safe: s,
                            hist: &mut eng.hist,
                            jitter_rng: &mut eng.jitter_rng,
                        },
                        eng.train,
                        batch,
                        cfg,
                        w,
                        observer,
                    )?;
                    losses.extend(out.supervised_loss);
                }
                let (pred, _) = eng.inference()?;
                eng.hist.record_epoch(&pred)?;
                let mem = memorized_set(&eng.hist, eng.train.noisy_labels)?;
                let mut row = eng.row(epoch, Phase::Evolution, mean(&losses), &mem, lr)?;
                fill_selection(&mut row, &eng.eval.selection(&s.indices())?);
                row.ramp_w = w;
                metrics.push(row);
            }
            _ => {
                let mut losses = Vec::with_capacity(batches.len());
                for batch in &batches {
                    losses.push(eng.standard_step(batch)?);
                }
                let (pred, sample_losses) = eng.inference()?;
                eng.hist.record_epoch(&pred)?;
                let tau = eng.estimate_noise_rate(&sample_losses)?;
                let mem = memorized_set(&eng.hist, eng.train.noisy_labels)?;
                let mut row = eng.row(epoch, Phase::Seeding, mean(&losses), &mem, lr)?;
                row.tau_hat = Some(tau);
                if epoch + 1 >= cfg.warmup_epochs_min {
                    let threshold = (1.0 - (tau + cfg.alpha_offset / 100.0)) * n as f64;
                    let fired = mem.len() as f64 >= threshold;
                    let check = TransitionCheck {
                        epoch,
                        mem_size: mem.len(),
                        tau_hat: tau,
                        threshold,
                        fired,
                    };
                    observer.on_transition_check(&check);
                    checks.push(check);
                    if fired {
                        let s = MaximalSafeSet::init(n, &mem, epoch)?;
                        fill_selection(&mut row, &eng.eval.selection(&s.indices())?);
                        safe = Some(s);
                        transition = Some(epoch);
                    }
                }
                metrics.push(row);
            }
        }
    }
    Ok(RunResult::finish(eng.model, safe, metrics, transition, checks))
}
