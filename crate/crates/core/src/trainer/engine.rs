//! Machinery shared by every training loop: the per-epoch schedule and
//! shuffle, standard updates, the full inference pass and the noise-rate
//! estimate.

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;

use super::config::{LossSignal, TrainConfig};
use super::metrics::{EpochMetrics, Phase};
use crate::data::{NoisyDataset, TrainView};
use crate::error::{Error, Result};
use crate::memorization::{label_metrics, mr_mp, PredictionHistory, SelectionReport};
use crate::nn::{cosine_lr, Mlp, Sgd};
use crate::noise::{estimate_noise_rate, AulAccumulator};
use crate::rng::{self, Rng};

/// Reads ground truth to produce log columns. Nothing it computes feeds back
/// into training decisions.
pub struct Evaluator<'a> {
    noisy: &'a [usize],
    truth: &'a [usize],
    test: &'a NoisyDataset,
}

impl<'a> Evaluator<'a> {
    pub fn new(train: &'a NoisyDataset, test: &'a NoisyDataset) -> Self {
        Evaluator {
            noisy: train.noisy_labels(),
            truth: train.true_labels(),
            test,
        }
    }

    pub fn test_error(&self, model: &Mlp) -> Result<f64> {
        let r = model.forward(self.test.features(), None)?;
        let wrong = r
            .predicted_labels
            .iter()
            .zip(self.test.true_labels())
            .filter(|(p, t)| p != t)
            .count();
        Ok(wrong as f64 / self.test.len() as f64)
    }

    pub fn selection(&self, selected: &[usize]) -> Result<SelectionReport> {
        label_metrics(selected, self.noisy, self.truth)
    }

    fn row(
        &self,
        model: &Mlp,
        epoch: usize,
        phase: Phase,
        train_loss: f64,
        memorized: &[usize],
        learn_rate: f64,
    ) -> Result<EpochMetrics> {
        let m = mr_mp(memorized, self.noisy, self.truth)?;
        Ok(EpochMetrics {
            epoch,
            phase,
            train_loss,
            test_error: self.test_error(model)?,
            mr: m.recall,
            mp: m.precision,
            lr: None,
            lp: None,
            f1: None,
            tau_hat: None,
            mem_size: memorized.len(),
            safe_size: 0,
            learn_rate,
            ramp_w: 0.0,
        })
    }
}

pub(crate) fn check_datasets(train: &NoisyDataset, test: &NoisyDataset) -> Result<()> {
    if train.dim() != test.dim() || train.num_classes() != test.num_classes() {
        return Err(Error::config(format!(
            "train (d={}, k={}) and test (d={}, k={}) disagree",
            train.dim(),
            train.num_classes(),
            test.dim(),
            test.num_classes()
        )));
    }
    if train.is_empty() || test.is_empty() {
        return Err(Error::config("train and test sets must be nonempty"));
    }
    Ok(())
}

pub(crate) struct Engine<'a> {
    pub cfg: &'a TrainConfig,
    pub train: TrainView<'a>,
    pub eval: Evaluator<'a>,
    pub model: Mlp,
    pub opt: Sgd,
    pub hist: PredictionHistory,
    pub aul: AulAccumulator,
    pub jitter_rng: Rng,
    shuffle_rng: Rng,
    order: Vec<usize>,
}

impl<'a> Engine<'a> {
    pub fn new(train: &'a NoisyDataset, test: &'a NoisyDataset, cfg: &'a TrainConfig) -> Result<Self> {
        cfg.validate()?;
        check_datasets(train, test)?;
        let mut dims = vec![train.dim()];
        dims.extend(&cfg.hidden);
        dims.push(train.num_classes());
        let model = Mlp::init(&dims, rng::derive_seed(cfg.seed, rng::INIT))?;
        let opt = Sgd::new(&model, cfg.lr0, cfg.momentum)?;
        let n = train.len();
        Ok(Engine {
            cfg,
            train: train.view(),
            eval: Evaluator::new(train, test),
            model,
            opt,
            hist: PredictionHistory::new(n, cfg.q, train.num_classes())?,
            aul: AulAccumulator::new(n),
            jitter_rng: rng::stream(cfg.seed, rng::JITTER),
            shuffle_rng: rng::stream(cfg.seed, rng::SHUFFLE),
            order: (0..n).collect(),
        })
    }

    pub fn n(&self) -> usize {
        self.train.len()
    }

    /// Sets this epoch's learning rate, reshuffles, and returns the mini-batches.
    pub fn begin_epoch(&mut self, epoch: usize) -> Result<(f64, Vec<Vec<usize>>)> {
        let lr = cosine_lr(epoch, self.cfg.epochs, self.cfg.lr0)?;
        self.opt.learning_rate = lr;
        self.order.shuffle(&mut self.shuffle_rng);
        let batches = self
            .order
            .chunks(self.cfg.batch_size)
            .map(<[usize]>::to_vec)
            .collect();
        Ok((lr, batches))
    }

    pub fn gather(&self, batch: &[usize]) -> (Array2<f64>, Vec<usize>) {
        let x = self.train.features.select(Axis(0), batch);
        let y = batch.iter().map(|&i| self.train.noisy_labels[i]).collect();
        (x, y)
    }

    /// Plain mini-batch update on every sample of the batch.
    pub fn standard_step(&mut self, batch: &[usize]) -> Result<f64> {
        let (x, y) = self.gather(batch);
        self.opt
            .backward_and_step(&mut self.model, x.view(), &y, None, None)
    }

    /// Update restricted to the batch members for which `keep` holds,
    /// averaged over those members. Returns `None` if none qualify.
    pub fn restricted_step(&mut self, batch: &[usize], keep: impl Fn(usize) -> bool) -> Result<Option<f64>> {
        let inside = batch.iter().filter(|&&i| keep(i)).count();
        if inside == 0 {
            return Ok(None);
        }
        if inside == batch.len() {
            return self.standard_step(batch).map(Some);
        }
        let scale = batch.len() as f64 / inside as f64;
        let w: Vec<f64> = batch.iter().map(|&i| if keep(i) { scale } else { 0.0 }).collect();
        let (x, y) = self.gather(batch);
        self.opt
            .backward_and_step(&mut self.model, x.view(), &y, Some(&w), None)
            .map(Some)
    }

    /// Predictions and per-sample losses on the whole training set.
    pub fn inference(&self) -> Result<(Vec<usize>, Vec<f64>)> {
        let r = self
            .model
            .forward(self.train.features, Some(self.train.noisy_labels))?;
        let losses = r.per_sample_loss.expect("labels supplied").to_vec();
        Ok((r.predicted_labels, losses))
    }

    /// Accumulates this epoch's losses and returns the noise-rate estimate.
    /// A degenerate or unseparated mixture fit yields 0.
    pub fn estimate_noise_rate(&mut self, losses: &[f64]) -> Result<f64> {
        self.aul.accumulate(losses)?;
        let values = match self.cfg.loss_signal {
            LossSignal::Accumulated => self.aul.values(),
            LossSignal::Instantaneous => losses,
        };
        estimate_noise_rate(values, self.cfg.em, self.cfg.tau_max)
    }

    pub fn row(
        &self,
        epoch: usize,
        phase: Phase,
        train_loss: f64,
        memorized: &[usize],
        learn_rate: f64,
    ) -> Result<EpochMetrics> {
        self.eval
            .row(&self.model, epoch, phase, train_loss, memorized, learn_rate)
    }
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

pub(crate) fn fill_selection(row: &mut EpochMetrics, r: &SelectionReport) {
    row.lr = r.label_recall;
    row.lp = r.label_precision;
    row.f1 = Some(r.f1);
    row.safe_size = r.set_size;
}
