use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng;

/// Probabilities below this are clamped before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

/// Fully connected layer computing `x · weights + bias`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// Shape `(fan_in, fan_out)`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn fan_in(&self) -> usize {
        self.weights.nrows()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.ncols()
    }
}

/// Multilayer perceptron with rectifier hidden units and a softmax head.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
}

/// Parameter-shaped buffer: one `(weights, bias)` pair per layer.
///
/// Used for gradients, momentum buffers, and extra gradient addends.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

#[derive(Debug, Clone)]
pub struct ForwardResult {
    /// Row-stochastic, `batch × k`.
    pub probabilities: Array2<f64>,
    /// `-ln p(label)` per row, present only when labels were supplied.
    pub per_sample_loss: Option<Array1<f64>>,
    pub predicted_labels: Vec<usize>,
}

/// Intermediate activations kept for backpropagation.
pub(crate) struct Trace {
    /// `activations[0]` is the input; `activations[i]` is the rectified output of hidden layer `i`.
    activations: Vec<Array2<f64>>,
    pub(crate) probabilities: Array2<f64>,
}

impl Mlp {
    /// Builds a network with Glorot-uniform weights and zero biases.
    pub fn init(layer_dims: &[usize], seed: u64) -> Result<Self> {
        if layer_dims.len() < 2 {
            return Err(Error::config(format!(
                "an mlp needs at least 2 layer dims (input and output), got {}",
                layer_dims.len()
            )));
        }
        if let Some(pos) = layer_dims.iter().position(|&d| d == 0) {
            return Err(Error::config(format!("layer dim {pos} must be positive")));
        }
        let mut rng = rng::from_seed(seed);
        let layers = layer_dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let weights = Array2::from_shape_fn((fan_in, fan_out), |_| rng.random_range(-limit..limit));
                Dense {
                    weights,
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        Ok(Mlp { layers })
    }

    /// Builds a network from explicit layers, checking shape compatibility.
    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::config("an mlp needs at least one layer"));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.fan_out() {
                return Err(Error::dim(format!(
                    "layer {i}: bias length {} != fan_out {}",
                    l.bias.len(),
                    l.fan_out()
                )));
            }
        }
        for (i, w) in layers.windows(2).enumerate() {
            if w[0].fan_out() != w[1].fan_in() {
                return Err(Error::dim(format!(
                    "layer {i} outputs {} but layer {} expects {}",
                    w[0].fan_out(),
                    i + 1,
                    w[1].fan_in()
                )));
            }
        }
        Ok(Mlp { layers })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim()];
        dims.extend(self.layers.iter().map(Dense::fan_out));
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn num_classes(&self) -> usize {
        self.layers[self.layers.len() - 1].fan_out()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Flat parameter access in layer order, weights (row-major) before bias.
    pub fn param(&self, index: usize) -> f64 {
        let (l, w, i) = locate(&self.layers, index);
        if w {
            self.layers[l].weights.as_slice().unwrap()[i]
        } else {
            self.layers[l].bias[i]
        }
    }

    pub fn set_param(&mut self, index: usize, value: f64) {
        let (l, w, i) = locate(&self.layers, index);
        if w {
            self.layers[l].weights.as_slice_mut().unwrap()[i] = value;
        } else {
            self.layers[l].bias[i] = value;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::dim(format!(
                "input has {} columns, model expects {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    fn check_labels(&self, rows: usize, labels: &[usize]) -> Result<()> {
        if labels.len() != rows {
            return Err(Error::dim(format!("{} labels for {} rows", labels.len(), rows)));
        }
        let k = self.num_classes();
        if let Some(&bad) = labels.iter().find(|&&y| y >= k) {
            return Err(Error::dim(format!("label {bad} out of range for {k} classes")));
        }
        Ok(())
    }

    pub(crate) fn trace(&self, x: ArrayView2<f64>) -> Trace {
        let mut activations = Vec::with_capacity(self.layers.len());
        activations.push(x.to_owned());
        let last = self.layers.len() - 1;
        let mut logits = None;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = activations[i].dot(&layer.weights);
            z += &layer.bias;
            if i < last {
                z.mapv_inplace(|v| v.max(0.0));
                activations.push(z);
            } else {
                logits = Some(z);
            }
        }
        let probabilities = softmax_rows(logits.unwrap());
        Trace {
            activations,
            probabilities,
        }
    }

    /// Logits of the final layer.
    pub fn logits(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        let mut a = x.to_owned();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = a.dot(&layer.weights);
            z += &layer.bias;
            if i < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            a = z;
        }
        Ok(a)
    }

    pub fn forward(&self, x: ArrayView2<f64>, labels: Option<&[usize]>) -> Result<ForwardResult> {
        self.check_input(&x)?;
        if let Some(y) = labels {
            self.check_labels(x.nrows(), y)?;
        }
        let probabilities = softmax_rows(self.logits(x)?);
        let predicted_labels = argmax_rows(&probabilities);
        let per_sample_loss = labels.map(|y| {
            Array1::from_iter(
                y.iter()
                    .enumerate()
                    .map(|(i, &c)| -probabilities[[i, c]].max(PROB_FLOOR).ln()),
            )
        });
        Ok(ForwardResult {
            probabilities,
            per_sample_loss,
            predicted_labels,
        })
    }

    /// Weighted cross-entropy objective `(1/n) Σ wᵢ ℓᵢ` and its gradient.
    ///
    /// Without weights every sample counts 1, so this is the plain batch mean.
    pub fn loss_gradients(
        &self,
        x: ArrayView2<f64>,
        labels: &[usize],
        sample_weights: Option<&[f64]>,
    ) -> Result<(f64, Gradients)> {
        self.check_input(&x)?;
        self.check_labels(x.nrows(), labels)?;
        let n = x.nrows();
        if n == 0 {
            return Err(Error::dim("empty batch"));
        }
        if let Some(w) = sample_weights {
            if w.len() != n {
                return Err(Error::dim(format!("{} weights for {} rows", w.len(), n)));
            }
            if w.iter().any(|v| !(*v >= 0.0)) {
                return Err(Error::config("sample weights must be nonnegative"));
            }
        }
        let trace = self.trace(x);
        let mut dlogits = trace.probabilities.clone();
        let mut loss = 0.0;
        let scale = 1.0 / n as f64;
        for (i, mut row) in dlogits.axis_iter_mut(Axis(0)).enumerate() {
            let w = sample_weights.map_or(1.0, |w| w[i]);
            let p = trace.probabilities[[i, labels[i]]];
            if w == 0.0 || p < PROB_FLOOR {
                // The clamped loss is flat here.
                loss += w * -p.max(PROB_FLOOR).ln() * scale;
                row.fill(0.0);
                continue;
            }
            loss += w * -p.ln() * scale;
            row[labels[i]] -= 1.0;
            row *= w * scale;
        }
        Ok((loss, self.backprop(&trace, dlogits)))
    }

    /// Consistency penalty `(1/n) Σ ‖softmax(x) − softmax(x̂)‖²` and its gradient
    /// through both branches.
    pub fn consistency_gradients(
        &self,
        x: ArrayView2<f64>,
        x_aug: ArrayView2<f64>,
    ) -> Result<(f64, Gradients)> {
        self.check_input(&x)?;
        self.check_input(&x_aug)?;
        if x.dim() != x_aug.dim() {
            return Err(Error::dim("original and augmented batches differ in shape"));
        }
        let n = x.nrows();
        if n == 0 {
            return Err(Error::dim("empty batch"));
        }
        let ta = self.trace(x);
        let tb = self.trace(x_aug);
        let diff = &ta.probabilities - &tb.probabilities;
        let value = diff.iter().map(|d| d * d).sum::<f64>() / n as f64;
        let g = diff * (2.0 / n as f64);
        let da = softmax_backward(&ta.probabilities, &g);
        let db = softmax_backward(&tb.probabilities, &(-&g));
        let mut grads = self.backprop(&ta, da);
        grads.add_assign(&self.backprop(&tb, db));
        Ok((value, grads))
    }

    fn backprop(&self, trace: &Trace, dlogits: Array2<f64>) -> Gradients {
        let mut out: Vec<Dense> = Vec::with_capacity(self.layers.len());
        let mut delta = dlogits;
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let a = &trace.activations[i];
            let gw = a.t().dot(&delta);
            let gb = delta.sum_axis(Axis(0));
            if i > 0 {
                let mut next = delta.dot(&layer.weights.t());
                Zip::from(&mut next).and(a).for_each(|d, &act| {
                    if act <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = next;
            }
            out.push(Dense {
                weights: gw,
                bias: gb,
            });
        }
        out.reverse();
        Gradients { layers: out }
    }
}

impl Gradients {
    pub fn zeros_like(model: &Mlp) -> Self {
        Gradients {
            layers: model
                .layers
                .iter()
                .map(|l| Dense {
                    weights: Array2::zeros(l.weights.raw_dim()),
                    bias: Array1::zeros(l.bias.len()),
                })
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights += &b.weights;
            a.bias += &b.bias;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weights *= factor;
            l.bias *= factor;
        }
    }

    pub fn param(&self, index: usize) -> f64 {
        let (l, w, i) = locate(&self.layers, index);
        if w {
            self.layers[l].weights.as_slice().unwrap()[i]
        } else {
            self.layers[l].bias[i]
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn same_shape(&self, model: &Mlp) -> bool {
        self.layers.len() == model.layers.len()
            && self
                .layers
                .iter()
                .zip(&model.layers)
                .all(|(g, l)| g.weights.dim() == l.weights.dim() && g.bias.len() == l.bias.len())
    }

    /// Index of the first layer holding a NaN or infinity.
    pub fn first_nonfinite_layer(&self) -> Option<usize> {
        self.layers
            .iter()
            .position(|l| l.weights.iter().chain(l.bias.iter()).any(|v| !v.is_finite()))
    }

    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()))
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn locate(layers: &[Dense], mut index: usize) -> (usize, bool, usize) {
    for (l, layer) in layers.iter().enumerate() {
        let nw = layer.weights.len();
        if index < nw {
            return (l, true, index);
        }
        index -= nw;
        if index < layer.bias.len() {
            return (l, false, index);
        }
        index -= layer.bias.len();
    }
    panic!("parameter index out of range");
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(mut logits: Array2<f64>) -> Array2<f64> {
    for mut row in logits.axis_iter_mut(Axis(0)) {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    logits
}

/// Argmax per row; ties go to the lowest index.
pub fn argmax_rows(m: &Array2<f64>) -> Vec<usize> {
    m.axis_iter(Axis(0))
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Pulls an upstream gradient on softmax outputs back to the logits.
fn softmax_backward(probs: &Array2<f64>, upstream: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(probs.raw_dim());
    Zip::from(out.rows_mut())
        .and(probs.rows())
        .and(upstream.rows())
        .for_each(|mut o, p, g| {
            let dot = p.dot(&g);
            Zip::from(&mut o)
                .and(&p)
                .and(&g)
                .for_each(|o, &p, &g| *o = p * (g - dot));
        });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn zero_model(dims: &[usize]) -> Mlp {
        let mut m = Mlp::init(dims, 0).unwrap();
        for l in &mut m.layers {
            l.weights.fill(0.0);
        }
        m
    }

    #[test]
    fn init_shapes_and_determinism() {
        let m = Mlp::init(&[2, 16, 3], 7).unwrap();
        assert_eq!(m.layers()[0].weights.dim(), (2, 16));
        assert_eq!(m.layers()[1].weights.dim(), (16, 3));
        assert!(m.layers().iter().all(|l| l.bias.iter().all(|&b| b == 0.0)));
        assert_eq!(m, Mlp::init(&[2, 16, 3], 7).unwrap());
        assert_ne!(m, Mlp::init(&[2, 16, 3], 8).unwrap());
        let limit = (6.0f64 / 18.0).sqrt();
        assert!(m.layers()[0].weights.iter().all(|w| w.abs() <= limit));
    }

    #[test]
    fn init_rejects_bad_dims() {
        assert!(matches!(Mlp::init(&[2], 1), Err(Error::Config(_))));
        assert!(matches!(Mlp::init(&[2, 0, 3], 1), Err(Error::Config(_))));
    }

    #[test]
    fn zero_weights_give_uniform_probabilities() {
        let m = zero_model(&[2, 4, 3]);
        let x = array![[1.0, -2.0], [30.0, 4.0]];
        let r = m.forward(x.view(), Some(&[0, 2])).unwrap();
        for p in r.probabilities.iter() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
        for l in r.per_sample_loss.unwrap().iter() {
            assert!((l - 3f64.ln()).abs() < 1e-12);
        }
        // all tied -> lowest index
        assert_eq!(r.predicted_labels, vec![0, 0]);
    }

    #[test]
    fn forward_rejects_shape_mismatch() {
        let m = Mlp::init(&[2, 4, 3], 1).unwrap();
        let x = Array2::<f64>::zeros((3, 5));
        assert!(matches!(m.forward(x.view(), None), Err(Error::Dimension(_))));
        let x = Array2::<f64>::zeros((2, 2));
        assert!(matches!(
            m.forward(x.view(), Some(&[0, 3])),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn softmax_is_stable_for_huge_logits() {
        let p = softmax_rows(array![[1000.0, 999.0, -1000.0]]);
        assert!((p.sum() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn loss_matches_hand_recomputation() {
        let m = Mlp::init(&[3, 5, 4], 11).unwrap();
        let x = array![[0.1, -0.3, 2.0], [1.5, 0.2, -0.7], [-1.0, -1.0, 0.5]];
        let y = [3usize, 0, 1];
        let r = m.forward(x.view(), Some(&y)).unwrap();
        // Independent scalar recomputation.
        for (i, row) in x.rows().into_iter().enumerate() {
            let mut h = vec![0.0; 5];
            for j in 0..5 {
                let mut s = m.layers()[0].bias[j];
                for c in 0..3 {
                    s += row[c] * m.layers()[0].weights[[c, j]];
                }
                h[j] = if s > 0.0 { s } else { 0.0 };
            }
            let mut z = vec![0.0; 4];
            for o in 0..4 {
                z[o] =
                    m.layers()[1].bias[o] + (0..5).map(|j| h[j] * m.layers()[1].weights[[j, o]]).sum::<f64>();
            }
            let lse = z.iter().map(|v| v.exp()).sum::<f64>().ln();
            let expected = lse - z[y[i]];
            let got = r.per_sample_loss.as_ref().unwrap()[i];
            assert!((expected - got).abs() < 1e-12, "{expected} vs {got}");
        }
    }

    #[test]
    fn flat_param_indexing_round_trips() {
        let mut m = Mlp::init(&[2, 3, 2], 5).unwrap();
        let n = m.param_count();
        assert_eq!(n, 2 * 3 + 3 + 3 * 2 + 2);
        m.set_param(n - 1, 4.5);
        assert_eq!(m.layers()[1].bias[1], 4.5);
        m.set_param(6, -1.0);
        assert_eq!(m.layers()[0].bias[0], -1.0);
        assert_eq!(m.param(6), -1.0);
    }

    #[test]
    fn from_layers_checks_compatibility() {
        let a = Dense {
            weights: Array2::zeros((2, 3)),
            bias: Array1::zeros(3),
        };
        let b = Dense {
            weights: Array2::zeros((4, 2)),
            bias: Array1::zeros(2),
        };
        assert!(matches!(Mlp::from_layers(vec![a, b]), Err(Error::Dimension(_))));
    }
}
