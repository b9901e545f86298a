//! Binary cross-entropy with clamped probabilities.

use crate::error::{Error, Result};

/// Predictions are clamped into [CLAMP, 1-CLAMP] before the logs so saturated
/// sigmoids cannot produce infinities.
pub const CLAMP: f64 = 1e-12;

/// Mean binary cross-entropy over the batch and its gradient with respect to
/// the (unclamped) predictions.
pub fn bce_loss(predicted: &[f64], labels: &[f64]) -> Result<(f64, Vec<f64>)> {
    if predicted.len() != labels.len() {
        return Err(Error::ShapeMismatch {
            context: "bce_loss",
            got: format!("{}", predicted.len()),
            expected: format!("{}", labels.len()),
        });
    }
    let n = predicted.len() as f64;
    let mut total = 0.0;
    let mut grad = vec![0.0; predicted.len()];
    for (g, (&p, &y)) in grad.iter_mut().zip(predicted.iter().zip(labels.iter())) {
        if y != 0.0 && y != 1.0 {
            return Err(Error::InvalidLabel(y));
        }
        let p = p.clamp(CLAMP, 1.0 - CLAMP);
        total -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
        *g = (-y / p + (1.0 - y) / (1.0 - p)) / n;
    }
    Ok((total / n, grad))
}
