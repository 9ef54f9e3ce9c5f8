//! Gaussian mixture fitting by expectation–maximization.
//!
//! Initialization: component k starts at the ((k + ½)/K)-quantile of the
//! training data, shifted by `jitter · σ̂ · (2u − 1)` with u drawn from the
//! settings' seed; all components start with the pooled variance σ̂² and
//! weight 1/K. Variances are floored at σ_min² inside every M-step, which is
//! still the constrained maximizer, so the log-likelihood stays monotone.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::density::{log_sum_exp, Density, Gaussian, GaussianMixture};
use crate::rng::rng_from_seed;

use super::SIGMA_MIN;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmSettings {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_jitter")]
    pub jitter: f64,
}

pub(super) fn default_tol() -> f64 {
    1e-8
}
pub(super) fn default_max_iters() -> usize {
    500
}
pub(super) fn default_jitter() -> f64 {
    0.01
}

impl Default for EmSettings {
    fn default() -> Self {
        EmSettings {
            tol: default_tol(),
            max_iters: default_max_iters(),
            seed: 0,
            jitter: default_jitter(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmFit {
    pub mixture: GaussianMixture,
    /// Log-likelihood at the initial parameters and after every M-step.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

pub(crate) fn fit_em(data: &[f64], k: usize, settings: &EmSettings) -> EmFit {
    let n = data.len();
    debug_assert!(k >= 1 && n >= 2 * k);
    let mut sorted = data.to_vec();
    sorted.sort_by(f64::total_cmp);

    let mean = data.iter().sum::<f64>() / n as f64;
    let var = (data.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64).max(SIGMA_MIN * SIGMA_MIN);
    let sd = var.sqrt();
    let mut rng = rng_from_seed(settings.seed);
    let mut means: Vec<f64> = (0..k)
        .map(|j| {
            let q = (j as f64 + 0.5) / k as f64;
            let idx = ((q * n as f64).floor() as usize).min(n - 1);
            sorted[idx] + settings.jitter * sd * (2.0 * rng.random::<f64>() - 1.0)
        })
        .collect();
    let mut vars = vec![var; k];
    let mut weights = vec![1.0 / k as f64; k];

    let mut resp = vec![0.0; n * k];
    let mut ll = e_step(data, &weights, &means, &vars, &mut resp);
    let mut trace = vec![ll];
    let mut iterations = 0;
    let mut converged = false;

    for it in 1..=settings.max_iters {
        m_step(data, &resp, &mut weights, &mut means, &mut vars);
        let prev = ll;
        ll = e_step(data, &weights, &means, &vars, &mut resp);
        trace.push(ll);
        iterations = it;
        if (ll - prev).abs() <= settings.tol * prev.abs() {
            converged = true;
            break;
        }
    }

    let components = means
        .iter()
        .zip(&vars)
        .map(|(&m, &v)| Gaussian::new(m, v.sqrt()))
        .collect();
    EmFit {
        mixture: GaussianMixture::new(weights, components),
        trace,
        iterations,
        converged,
    }
}

/// Fills responsibilities (row-major, n × k) and returns the log-likelihood.
fn e_step(data: &[f64], weights: &[f64], means: &[f64], vars: &[f64], resp: &mut [f64]) -> f64 {
    let k = weights.len();
    let comps: Vec<Gaussian> = means
        .iter()
        .zip(vars)
        .map(|(&m, &v)| Gaussian { mean: m, sd: v.sqrt() })
        .collect();
    let log_w: Vec<f64> = weights.iter().map(|w| w.ln()).collect();
    let mut ll = 0.0;
    let mut terms = vec![0.0; k];
    for (i, &x) in data.iter().enumerate() {
        for j in 0..k {
            terms[j] = log_w[j] + comps[j].ln_pdf_raw(x);
        }
        let lse = log_sum_exp(terms.iter().copied());
        ll += lse;
        for j in 0..k {
            resp[i * k + j] = (terms[j] - lse).exp();
        }
    }
    ll
}

fn m_step(data: &[f64], resp: &[f64], weights: &mut [f64], means: &mut [f64], vars: &mut [f64]) {
    let k = weights.len();
    let n = data.len() as f64;
    for j in 0..k {
        let nk: f64 = (0..data.len()).map(|i| resp[i * k + j]).sum();
        weights[j] = nk / n;
        if nk <= f64::MIN_POSITIVE {
            // Empty component: weight vanishes, location is kept.
            continue;
        }
        let mu = data.iter().enumerate().map(|(i, &x)| resp[i * k + j] * x).sum::<f64>() / nk;
        let var = data
            .iter()
            .enumerate()
            .map(|(i, &x)| resp[i * k + j] * (x - mu).powi(2))
            .sum::<f64>()
            / nk;
        means[j] = mu;
        vars[j] = var.max(SIGMA_MIN * SIGMA_MIN);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_clusters() -> Vec<f64> {
        vec![-10.4, -10.2, -10.0, -9.8, -9.6, 9.6, 9.8, 10.0, 10.2, 10.4]
    }

    /// Brute-force maximizer of the two-component log-likelihood over a grid
    /// of (μ1, μ2, w, σ), with a shared σ.
    fn grid_oracle(data: &[f64]) -> (f64, f64, f64) {
        let mut best = (f64::NEG_INFINITY, 0.0, 0.0, 0.0);
        let mus: Vec<f64> = (0..=240).map(|i| -12.0 + 0.1 * i as f64).collect();
        for (a, &m1) in mus.iter().enumerate() {
            for &m2 in &mus[a..] {
                for wi in 1..20 {
                    let w = wi as f64 * 0.05;
                    for si in 1..=20 {
                        let s = si as f64 * 0.05;
                        let g1 = Gaussian { mean: m1, sd: s };
                        let g2 = Gaussian { mean: m2, sd: s };
                        let ll: f64 = data
                            .iter()
                            .map(|&x| (w * g1.pdf(x) + (1.0 - w) * g2.pdf(x)).max(1e-300).ln())
                            .sum();
                        if ll > best.0 {
                            best = (ll, m1, m2, w);
                        }
                    }
                }
            }
        }
        (best.1, best.2, best.3)
    }

    #[test]
    fn separated_clusters_match_grid_oracle() {
        let data = two_clusters();
        let (o1, o2, ow) = grid_oracle(&data);
        assert!((o1 + 10.0).abs() < 0.5 && (o2 - 10.0).abs() < 0.5 && (ow - 0.5).abs() < 0.1);

        let fit = fit_em(&data, 2, &EmSettings::default());
        let mut comps: Vec<(f64, f64)> = fit
            .mixture
            .components
            .iter()
            .zip(&fit.mixture.weights)
            .map(|(c, &w)| (c.mean, w))
            .collect();
        comps.sort_by(|a, b| a.0.total_cmp(&b.0));
        assert!((comps[0].0 - o1).abs() < 0.15, "{comps:?} vs {o1}");
        assert!((comps[1].0 - o2).abs() < 0.15, "{comps:?} vs {o2}");
        assert!((comps[0].0 + 10.0).abs() < 0.5);
        assert!((comps[1].0 - 10.0).abs() < 0.5);
        assert!((comps[0].1 - 0.5).abs() < 0.1);
        assert!((comps[1].1 - ow.max(1.0 - ow)).abs() < 0.1);
        assert!(fit.converged);
    }

    #[test]
    fn log_likelihood_is_monotone() {
        let data: Vec<f64> = (0..200)
            .map(|i| {
                let u = ((i * 2654435761u64 as usize) % 1000) as f64 / 1000.0;
                if i % 3 == 0 { 4.0 + u } else { -1.0 + 2.0 * u }
            })
            .collect();
        for k in 1..=4 {
            let fit = fit_em(&data, k, &EmSettings { max_iters: 200, ..Default::default() });
            for pair in fit.trace.windows(2) {
                assert!(pair[1] >= pair[0] - 1e-9, "k={k}: {} -> {}", pair[0], pair[1]);
            }
        }
    }

    #[test]
    fn hits_iteration_cap_without_converging() {
        let data: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin() * 3.0).collect();
        let fit = fit_em(&data, 3, &EmSettings { max_iters: 2, tol: 0.0, ..Default::default() });
        assert_eq!(fit.iterations, 2);
        assert!(!fit.converged);
        assert_eq!(fit.trace.len(), 3);
    }

    #[test]
    fn collapsed_component_is_floored() {
        let data = vec![0.0, 0.0, 0.0, 5.0, 5.0, 5.0];
        let fit = fit_em(&data, 2, &EmSettings::default());
        for c in &fit.mixture.components {
            assert!(c.sd >= SIGMA_MIN);
        }
        assert!(fit.trace.iter().all(|v| v.is_finite()));
    }
}
