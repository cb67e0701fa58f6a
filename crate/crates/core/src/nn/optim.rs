use ndarray::ArrayView2;

use super::mlp::{Gradients, Mlp};
use crate::error::{Error, Result};

/// SGD with heavy-ball momentum: `v ← μ·v + g`, `θ ← θ − η·v`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sgd {
    pub learning_rate: f64,
    pub momentum: f64,
    velocity: Gradients,
    step_count: u64,
}

impl Sgd {
    pub fn new(model: &Mlp, learning_rate: f64, momentum: f64) -> Result<Self> {
        if !(learning_rate.is_finite() && learning_rate >= 0.0) {
            return Err(Error::config(format!(
                "learning rate must be finite and nonnegative, got {learning_rate}"
            )));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::config(format!(
                "momentum must lie in [0, 1), got {momentum}"
            )));
        }
        Ok(Sgd {
            learning_rate,
            momentum,
            velocity: Gradients::zeros_like(model),
            step_count: 0,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn velocity(&self) -> &Gradients {
        &self.velocity
    }

    /// Applies one update with an already computed gradient.
    ///
    /// Nothing is modified when the gradient holds a NaN or infinity.
    pub fn apply(&mut self, model: &mut Mlp, grads: &Gradients) -> Result<()> {
        if !grads.same_shape(model) {
            return Err(Error::dim("gradient shape does not match the model"));
        }
        if let Some(layer) = grads.first_nonfinite_layer() {
            return Err(Error::Numerical {
                layer,
                msg: "non-finite gradient".into(),
            });
        }
        let lr = self.learning_rate;
        let mu = self.momentum;
        let params = model.layers_mut();
        for ((p, v), g) in params
            .iter_mut()
            .zip(self.velocity.layers.iter_mut())
            .zip(&grads.layers)
        {
            v.weights.zip_mut_with(&g.weights, |v, &g| *v = mu * *v + g);
            v.bias.zip_mut_with(&g.bias, |v, &g| *v = mu * *v + g);
            p.weights.scaled_add(-lr, &v.weights);
            p.bias.scaled_add(-lr, &v.bias);
        }
        self.step_count += 1;
        if let Some(layer) = model
            .layers()
            .iter()
            .position(|l| l.weights.iter().chain(l.bias.iter()).any(|v| !v.is_finite()))
        {
            return Err(Error::Numerical {
                layer,
                msg: "parameters became non-finite after the update".into(),
            });
        }
        Ok(())
    }

    /// Momentum step on the weighted mean cross-entropy plus an optional
    /// parameter-shaped addend. Returns the weighted mean loss.
    pub fn backward_and_step(
        &mut self,
        model: &mut Mlp,
        x: ArrayView2<f64>,
        labels: &[usize],
        sample_weights: Option<&[f64]>,
        extra_grad: Option<&Gradients>,
    ) -> Result<f64> {
        let (loss, mut grads) = model.loss_gradients(x, labels, sample_weights)?;
        if let Some(extra) = extra_grad {
            if !extra.same_shape(model) {
                return Err(Error::dim("extra gradient shape does not match the model"));
            }
            grads.add_assign(extra);
        }
        self.apply(model, &grads)?;
        Ok(loss)
    }
}
