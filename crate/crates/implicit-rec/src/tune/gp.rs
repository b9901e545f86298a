//! Gaussian-process surrogate on the unit hypercube: Matern-5/2 kernel,
//! standardized outputs, kernel hyperparameters picked by marginal
//! likelihood over a small log-grid, and the closed-form expected
//! improvement acquisition.

use crate::error::{Error, Result};
use crate::linalg;

const LENGTH_SCALE_GRID: [f64; 7] = [0.05, 0.1, 0.2, 0.35, 0.5, 1.0, 2.0];
const NOISE_GRID: [f64; 4] = [1e-6, 1e-4, 1e-2, 1e-1];

fn matern52(distance: f64, length_scale: f64) -> f64 {
    let r = distance / length_scale;
    let s = 5f64.sqrt() * r;
    (1.0 + s + 5.0 * r * r / 3.0) * (-s).exp()
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Fitted surrogate over standardized observations.
pub struct GpModel {
    x: Vec<Vec<f64>>,
    chol: Vec<f64>,
    alpha: Vec<f64>,
    length_scale: f64,
    noise: f64,
    y_mean: f64,
    y_std: f64,
}

fn cholesky_with_jitter(mut gram: Vec<f64>, n: usize) -> Result<(Vec<f64>, f64)> {
    let mut jitter = 0.0;
    for attempt in 0..8 {
        let mut candidate = gram.clone();
        if jitter > 0.0 {
            for d in 0..n {
                candidate[d * n + d] += jitter;
            }
        }
        match linalg::cholesky_decompose(&mut candidate, n) {
            Ok(()) => return Ok((candidate, jitter)),
            Err(_) => {
                jitter = if attempt == 0 { 1e-10 } else { jitter * 10.0 };
            }
        }
    }
    // Hand back the final failure.
    linalg::cholesky_decompose(&mut gram, n)?;
    unreachable!("jitter escalation exhausted")
}

impl GpModel {
    pub fn fit(observations: &[(Vec<f64>, f64)]) -> Result<GpModel> {
        if observations.is_empty() {
            return Err(Error::InvalidConfig("gp: no observations".into()));
        }
        let n = observations.len();
        let y_raw: Vec<f64> = observations.iter().map(|(_, y)| *y).collect();
        if y_raw.iter().any(|y| !y.is_finite()) {
            return Err(Error::NonFinite {
                context: "gp observation",
            });
        }
        let y_mean = y_raw.iter().sum::<f64>() / n as f64;
        let var = y_raw.iter().map(|y| (y - y_mean) * (y - y_mean)).sum::<f64>() / n as f64;
        let y_std = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
        let y: Vec<f64> = y_raw.iter().map(|v| (v - y_mean) / y_std).collect();

        let mut best: Option<(f64, GpModel)> = None;
        for &length_scale in &LENGTH_SCALE_GRID {
            // Kernel matrix without noise, reused across the noise grid.
            let mut base = vec![0.0; n * n];
            for i in 0..n {
                for j in i..n {
                    let k = matern52(
                        euclidean(&observations[i].0, &observations[j].0),
                        length_scale,
                    );
                    base[i * n + j] = k;
                    base[j * n + i] = k;
                }
            }
            for &noise in &NOISE_GRID {
                let mut gram = base.clone();
                for d in 0..n {
                    gram[d * n + d] += noise;
                }
                let Ok((chol, _)) = cholesky_with_jitter(gram, n) else {
                    continue;
                };
                let mut alpha = y.clone();
                linalg::cholesky_solve(&chol, n, &mut alpha);
                let data_fit: f64 = y.iter().zip(&alpha).map(|(a, b)| a * b).sum();
                let log_likelihood = -0.5 * data_fit
                    - 0.5 * linalg::log_det_from_cholesky(&chol, n)
                    - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
                if best.as_ref().map(|(ll, _)| log_likelihood > *ll).unwrap_or(true) {
                    best = Some((
                        log_likelihood,
                        GpModel {
                            x: observations.iter().map(|(x, _)| x.clone()).collect(),
                            chol,
                            alpha,
                            length_scale,
                            noise,
                            y_mean,
                            y_std,
                        },
                    ));
                }
            }
        }
        best.map(|(_, model)| model).ok_or(Error::SingularMatrix)
    }

    /// Posterior mean and variance (of the latent function) at a query.
    pub fn predict(&self, query: &[f64]) -> (f64, f64) {
        let n = self.x.len();
        let k_star: Vec<f64> = self
            .x
            .iter()
            .map(|xi| matern52(euclidean(xi, query), self.length_scale))
            .collect();
        let mean_std: f64 = k_star.iter().zip(&self.alpha).map(|(a, b)| a * b).sum();
        // v = L^-1 k*, via forward substitution.
        let mut v = k_star;
        for i in 0..n {
            let mut value = v[i];
            for j in 0..i {
                value -= self.chol[i * n + j] * v[j];
            }
            v[i] = value / self.chol[i * n + i];
        }
        let var_std = (1.0 - v.iter().map(|x| x * x).sum::<f64>()).max(0.0);
        (
            self.y_mean + self.y_std * mean_std,
            self.y_std * self.y_std * var_std,
        )
    }

    pub fn noise(&self) -> f64 {
        self.noise
    }
}

/// Fits a surrogate to the observations and evaluates one query.
pub fn gp_posterior(observations: &[(Vec<f64>, f64)], query: &[f64]) -> Result<(f64, f64)> {
    Ok(GpModel::fit(observations)?.predict(query))
}

fn standard_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn standard_normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + libm::erf(z / std::f64::consts::SQRT_2))
}

/// Closed-form expected improvement for maximization.
pub fn expected_improvement(mean: f64, variance: f64, best_so_far: f64) -> f64 {
    let sigma = variance.max(0.0).sqrt();
    let gap = mean - best_so_far;
    if sigma < 1e-15 {
        return gap.max(0.0);
    }
    let z = gap / sigma;
    (gap * standard_normal_cdf(z) + sigma * standard_normal_pdf(z)).max(0.0)
}
