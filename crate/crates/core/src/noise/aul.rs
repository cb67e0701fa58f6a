use crate::error::{Error, Result};

/// Per-sample area under the training-loss curve: the running sum of each
/// sample's loss over the epochs seen so far.
#[derive(Debug, Clone, PartialEq)]
pub struct AulAccumulator {
    totals: Vec<f64>,
    epochs: usize,
}

impl AulAccumulator {
    pub fn new(n: usize) -> Self {
        AulAccumulator {
            totals: vec![0.0; n],
            epochs: 0,
        }
    }

    pub fn accumulate(&mut self, losses: &[f64]) -> Result<()> {
        if losses.len() != self.totals.len() {
            return Err(Error::dim(format!(
                "{} losses for {} samples",
                losses.len(),
                self.totals.len()
            )));
        }
        if let Some((i, l)) = losses.iter().enumerate().find(|(_, l)| !(**l >= 0.0)) {
            return Err(Error::NegativeLoss(format!("sample {i} has loss {l}")));
        }
        for (t, l) in self.totals.iter_mut().zip(losses) {
            *t += l;
        }
        self.epochs += 1;
        Ok(())
    }

    pub fn values(&self) -> &[f64] {
        &self.totals
    }

    pub fn epochs(&self) -> usize {
        self.epochs
    }
}
