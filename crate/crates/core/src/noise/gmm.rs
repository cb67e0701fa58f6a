//! Two-component one-dimensional Gaussian mixture fitted by EM.

use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::error::{Error, Result};

pub const MIN_VALUES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Component {
    pub mean: f64,
    pub variance: f64,
    pub weight: f64,
}

impl Component {
    fn log_weighted_density(&self, v: f64) -> f64 {
        let d = v - self.mean;
        self.weight.ln() - 0.5 * (2.0 * PI * self.variance).ln() - d * d / (2.0 * self.variance)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmOptions {
    /// Stop once the mean log-likelihood improves by less than this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for EmOptions {
    fn default() -> Self {
        EmOptions {
            tol: 1e-6,
            max_iter: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmFit {
    /// Component with the larger mean.
    pub high: Component,
    pub low: Component,
    /// Total log-likelihood of the returned parameters.
    pub log_likelihood: f64,
    /// Mean log-likelihood after every E-step, in order.
    pub log_likelihood_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub variance_floor: f64,
}

impl GmmFit {
    /// Ashman's D: mean gap over the pooled component spread,
    /// `|μ_high − μ_low| · sqrt(2 / (σ²_high + σ²_low))`.
    pub fn separation(&self) -> f64 {
        let pooled = self.high.variance + self.low.variance;
        (self.high.mean - self.low.mean).abs() * (2.0 / pooled).sqrt()
    }
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Fits the mixture with EM.
///
/// Initialization: means at the 10th and 90th percentiles, equal weights,
/// both variances equal to the sample variance. Variances never drop below
/// `1e-8 · (sample variance + 1e-12)`.
pub fn gmm_fit_em(values: &[f64], opts: EmOptions) -> Result<GmmFit> {
    let n = values.len();
    if n < MIN_VALUES {
        return Err(Error::InsufficientData {
            needed: MIN_VALUES,
            got: n,
        });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateFit("non-finite value".into()));
    }
    let nf = n as f64;
    let mean = values.iter().sum::<f64>() / nf;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / nf;
    if var == 0.0 || values.iter().all(|&v| v == values[0]) {
        return Err(Error::DegenerateFit("all values are identical".into()));
    }
    let floor = 1e-8 * (var + 1e-12);

    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut comps = [
        Component {
            mean: percentile(&sorted, 0.1),
            variance: var,
            weight: 0.5,
        },
        Component {
            mean: percentile(&sorted, 0.9),
            variance: var,
            weight: 0.5,
        },
    ];

    let mut resp = vec![0.0; n];
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    // E-step for the current parameters; fills `resp` with the posterior of
    // component 1 and returns the mean log-likelihood.
    let e_step = |comps: &[Component; 2], resp: &mut [f64]| -> f64 {
        let mut ll = 0.0;
        for (r, &v) in resp.iter_mut().zip(values) {
            let a = comps[0].log_weighted_density(v);
            let b = comps[1].log_weighted_density(v);
            let lse = log_sum_exp(a, b);
            *r = (b - lse).exp();
            ll += lse;
        }
        ll / nf
    };

    loop {
        let ll = e_step(&comps, &mut resp);
        let improved = trace.last().map(|&prev| ll - prev);
        trace.push(ll);
        if let Some(delta) = improved {
            if delta < opts.tol {
                converged = true;
                break;
            }
        }
        if iterations == opts.max_iter {
            break;
        }
        iterations += 1;

        // M-step
        let n1: f64 = resp.iter().sum();
        let n0 = nf - n1;
        for (c, nk) in [(0usize, n0), (1usize, n1)] {
            if nk <= f64::MIN_POSITIVE {
                continue;
            }
            let w = |r: f64| if c == 1 { r } else { 1.0 - r };
            let m = resp.iter().zip(values).map(|(&r, &v)| w(r) * v).sum::<f64>() / nk;
            let s = resp
                .iter()
                .zip(values)
                .map(|(&r, &v)| w(r) * (v - m).powi(2))
                .sum::<f64>()
                / nk;
            comps[c] = Component {
                mean: m,
                variance: s.max(floor),
                weight: nk / nf,
            };
        }
    }

    let (low, high) = if comps[1].mean >= comps[0].mean {
        (comps[0], comps[1])
    } else {
        (comps[1], comps[0])
    };
    Ok(GmmFit {
        high,
        low,
        log_likelihood: trace.last().copied().unwrap_or(f64::NAN) * nf,
        log_likelihood_trace: trace,
        iterations,
        converged,
        variance_floor: floor,
    })
}

/// Posterior probability that `v` was drawn from the larger-mean component.
pub fn posterior_large(fit: &GmmFit, v: f64) -> f64 {
    let a = fit.high.log_weighted_density(v);
    let b = fit.low.log_weighted_density(v);
    (a - log_sum_exp(a, b)).exp()
}

/// Bounds applied to the noise-rate estimate.
pub const DEFAULT_TAU_MAX: f64 = 0.9;

/// Mean posterior of the larger-mean component, clamped to `[0, tau_max]`.
///
/// Posteriors are summed in sorted order so the result does not depend on
/// the order of `values`.
pub fn estimate_tau(fit: &GmmFit, values: &[f64], tau_max: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut post: Vec<f64> = values.iter().map(|&v| posterior_large(fit, v)).collect();
    post.sort_by(f64::total_cmp);
    let mean = post.iter().sum::<f64>() / values.len() as f64;
    mean.clamp(0.0, tau_max)
}

/// Below this separation the two components need not form two modes, so
/// the split says nothing about a second population.
pub const MIN_SEPARATION: f64 = 2.0;

/// Noise-rate estimate from per-sample loss signals. Returns 0 when the fit is
/// degenerate (identical or non-finite values) or its components are not
/// separated by more than [`MIN_SEPARATION`].
pub fn estimate_noise_rate(values: &[f64], opts: EmOptions, tau_max: f64) -> Result<f64> {
    match gmm_fit_em(values, opts) {
        Ok(fit) if fit.separation() > MIN_SEPARATION => Ok(estimate_tau(&fit, values, tau_max)),
        Ok(_) | Err(Error::DegenerateFit(_)) => Ok(0.0),
        Err(e) => Err(e),
    }
}

/// `value,posterior_high` rows for plotting the fitted split.
pub fn posterior_dump_csv(fit: &GmmFit, values: &[f64]) -> String {
    let mut out = String::from("value,posterior_high\n");
    for &v in values {
        let _ = writeln!(out, "{v:.6},{:.6}", posterior_large(fit, v));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::Rng as _;
    use rand_distr::{Distribution, Normal};

    fn mixture(n: usize, frac_high: f64, seed: u64) -> Vec<f64> {
        let mut r = rng::from_seed(seed);
        let lo = Normal::new(1.0, 0.5).unwrap();
        let hi = Normal::new(5.0, 0.5).unwrap();
        (0..n)
            .map(|i| {
                if (i as f64) < frac_high * n as f64 {
                    hi.sample(&mut r)
                } else {
                    lo.sample(&mut r)
                }
            })
            .collect()
    }

    #[test]
    fn recovers_separated_mixture() {
        let v = mixture(10_000, 0.4, 3);
        let fit = gmm_fit_em(&v, EmOptions::default()).unwrap();
        assert!((0.37..=0.43).contains(&fit.high.weight), "{:?}", fit.high);
        assert!((fit.high.mean - 5.0).abs() <= 0.1);
        assert!((fit.low.mean - 1.0).abs() <= 0.1);
        assert!((fit.high.weight + fit.low.weight - 1.0).abs() < 1e-9);
        for w in fit.log_likelihood_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-9);
        }
        let tau = estimate_tau(&fit, &v, DEFAULT_TAU_MAX);
        assert!((0.37..=0.43).contains(&tau), "{tau}");
    }

    #[test]
    fn two_atoms() {
        let fit = gmm_fit_em(&[0.0, 0.0, 5.0, 5.0], EmOptions::default()).unwrap();
        assert!((fit.low.mean - 0.0).abs() < 1e-9);
        assert!((fit.high.mean - 5.0).abs() < 1e-9);
        assert!((fit.high.weight - 0.5).abs() < 1e-9);
        assert_eq!(fit.high.variance, fit.variance_floor);
        assert_eq!(fit.low.variance, fit.variance_floor);
    }

    #[test]
    fn unimodal_signal_estimates_zero() {
        let mut r = rng::from_seed(9);
        let skewed: Vec<f64> = (0..3000)
            .map(|_| {
                let u: f64 = r.random();
                -(1.0 - u).ln()
            })
            .collect();
        let fit = gmm_fit_em(&skewed, EmOptions::default()).unwrap();
        assert!(fit.separation() <= MIN_SEPARATION, "D = {}", fit.separation());
        assert_eq!(
            estimate_noise_rate(&skewed, EmOptions::default(), DEFAULT_TAU_MAX).unwrap(),
            0.0
        );
        assert_eq!(
            estimate_noise_rate(&[3.0; 50], EmOptions::default(), DEFAULT_TAU_MAX).unwrap(),
            0.0
        );
        let two = mixture(4000, 0.4, 2);
        let tau = estimate_noise_rate(&two, EmOptions::default(), DEFAULT_TAU_MAX).unwrap();
        assert!((tau - 0.4).abs() < 0.03, "{tau}");
    }

    #[test]
    fn degenerate_and_short_inputs() {
        assert!(matches!(
            gmm_fit_em(&[2.0; 10], EmOptions::default()),
            Err(Error::DegenerateFit(_))
        ));
        assert!(matches!(
            gmm_fit_em(&[1.0, 2.0, 3.0], EmOptions::default()),
            Err(Error::InsufficientData { needed: 4, got: 3 })
        ));
    }

    fn symmetric_fit(m1: f64, m2: f64) -> GmmFit {
        GmmFit {
            high: Component {
                mean: m1,
                variance: 1.0,
                weight: 0.5,
            },
            low: Component {
                mean: m2,
                variance: 1.0,
                weight: 0.5,
            },
            log_likelihood: 0.0,
            log_likelihood_trace: vec![],
            iterations: 0,
            converged: true,
            variance_floor: 0.0,
        }
    }

    #[test]
    fn posterior_shapes() {
        let fit = symmetric_fit(6.0, 1.0);
        assert!((posterior_large(&fit, 3.5) - 0.5).abs() < 1e-12);
        assert!(posterior_large(&fit, 1e3) > 1.0 - 1e-12);
        // density ratio at the low mean: exp(-(5²)/2) / (1 + exp(-(5²)/2))
        let p = posterior_large(&fit, 1.0);
        let r = (-12.5f64).exp();
        assert!((p - r / (1.0 + r)).abs() < 1e-15);
        assert!(p < 0.01);
    }

    #[test]
    fn one_sided_data_gives_small_tau() {
        // Mostly low values; a sliver of outliers lets EM still use two components.
        let mut r = rng::from_seed(8);
        let lo = Normal::new(1.0, 0.3).unwrap();
        let mut v: Vec<f64> = (0..5000).map(|_| lo.sample(&mut r)).collect();
        for _ in 0..50 {
            v.push(4.0 + r.random::<f64>());
        }
        let fit = gmm_fit_em(&v, EmOptions::default()).unwrap();
        assert!(estimate_tau(&fit, &v, DEFAULT_TAU_MAX) < 0.05);
    }

    #[test]
    fn fit_is_deterministic() {
        let v = mixture(2000, 0.3, 5);
        assert_eq!(
            gmm_fit_em(&v, EmOptions::default()).unwrap(),
            gmm_fit_em(&v, EmOptions::default()).unwrap()
        );
    }

    #[test]
    fn dump_has_header_and_rows() {
        let v = mixture(10, 0.5, 1);
        let fit = gmm_fit_em(&v, EmOptions::default()).unwrap();
        let csv = posterior_dump_csv(&fit, &v);
        assert_eq!(csv.lines().count(), 11);
        assert!(csv.starts_with("value,posterior_high\n"));
    }

    proptest! {
        #[test]
        fn tau_is_permutation_invariant(seed in any::<u64>(), frac in 0.1f64..0.9) {
            let v = mixture(300, frac, seed);
            let fit = gmm_fit_em(&v, EmOptions::default()).unwrap();
            let mut shuffled = v.clone();
            shuffled.shuffle(&mut rng::from_seed(seed ^ 1));
            prop_assert_eq!(estimate_tau(&fit, &v, 0.9), estimate_tau(&fit, &shuffled, 0.9));
        }

        #[test]
        fn log_likelihood_never_decreases(seed in any::<u64>(), frac in 0.05f64..0.95) {
            let v = mixture(500, frac, seed);
            let fit = gmm_fit_em(&v, EmOptions { tol: 0.0, max_iter: 60 }).unwrap();
            for w in fit.log_likelihood_trace.windows(2) {
                prop_assert!(w[1] >= w[0] - 1e-9, "{} -> {}", w[0], w[1]);
            }
        }
    }
}
