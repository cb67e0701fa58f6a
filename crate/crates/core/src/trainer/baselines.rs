use super::config::TrainConfig;
use super::engine::{fill_selection, mean, Engine};
use super::metrics::{Phase, RunResult};
use crate::data::NoisyDataset;
use crate::error::{Error, Result};
use crate::memorization::memorized_set;

/// Standard training on every sample for the whole budget, with the same
/// per-epoch logging (memorization metrics and noise-rate estimate) as the
/// seeding phase.
pub fn run_default(train: &NoisyDataset, test: &NoisyDataset, cfg: &TrainConfig) -> Result<RunResult> {
    let mut eng = Engine::new(train, test, cfg)?;
    let mut metrics = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let (lr, batches) = eng.begin_epoch(epoch)?;
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
        metrics.push(row);
    }
    Ok(RunResult::finish(eng.model, None, metrics, None, Vec::new()))
}

/// The `keep` smallest losses, ties broken by index; returns a membership mask.
pub fn select_small_loss(losses: &[f64], keep: usize) -> Vec<bool> {
    let mut order: Vec<usize> = (0..losses.len()).collect();
    order.sort_by(|&a, &b| losses[a].total_cmp(&losses[b]).then(a.cmp(&b)));
    let mut mask = vec![false; losses.len()];
    for &i in order.iter().take(keep) {
        mask[i] = true;
    }
    mask
}

/// Small-loss selection: standard training for the warm-up epochs, then each
/// epoch trains only on the `keep_fraction` of samples with the smallest loss
/// at the end of the previous epoch. Without an explicit fraction, `1 − τ̂`
/// from the last warm-up epoch is used.
pub fn run_small_loss(
    train: &NoisyDataset,
    test: &NoisyDataset,
    cfg: &TrainConfig,
    keep_fraction: Option<f64>,
) -> Result<RunResult> {
    if let Some(f) = keep_fraction {
        if !(f > 0.0 && f <= 1.0) {
            return Err(Error::Config(format!(
                "keep_fraction must lie in (0, 1], got {f}"
            )));
        }
    }
    let mut eng = Engine::new(train, test, cfg)?;
    let n = eng.n();
    let mut metrics = Vec::with_capacity(cfg.epochs);
    let mut keep = keep_fraction;
    let mut selected: Option<Vec<bool>> = None;
    for epoch in 0..cfg.epochs {
        let (lr, batches) = eng.begin_epoch(epoch)?;
        let mut losses = Vec::with_capacity(batches.len());
        for batch in &batches {
            match &selected {
                None => losses.push(eng.standard_step(batch)?),
                Some(mask) => losses.extend(eng.restricted_step(batch, |i| mask[i])?),
            }
        }
        let (pred, sample_losses) = eng.inference()?;
        eng.hist.record_epoch(&pred)?;
        let warm = epoch + 1 < cfg.warmup_epochs_min;
        let tau = if selected.is_none() {
            Some(eng.estimate_noise_rate(&sample_losses)?)
        } else {
            None
        };
        let mem = memorized_set(&eng.hist, eng.train.noisy_labels)?;
        let mut row = eng.row(epoch, Phase::Seeding, mean(&losses), &mem, lr)?;
        row.tau_hat = tau;
        if let Some(mask) = &selected {
            let idx: Vec<usize> = (0..n).filter(|&i| mask[i]).collect();
            fill_selection(&mut row, &eng.eval.selection(&idx)?);
        }
        if !warm {
            let fraction = *keep.get_or_insert_with(|| 1.0 - tau.unwrap_or(0.0));
            let count = ((fraction * n as f64).round() as usize).clamp(1, n);
            selected = Some(select_small_loss(&sample_losses, count));
        }
        metrics.push(row);
    }
    Ok(RunResult::finish(eng.model, None, metrics, None, Vec::new()))
}
