//! Adam optimizer: a dense variant for full tensors and a lazy per-row
//! variant for embedding tables, where an update touches only the rows that
//! received gradient.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::neural::matrix::Matrix2D;

pub const DEFAULT_BETA1: f64 = 0.9;
pub const DEFAULT_BETA2: f64 = 0.999;
pub const DEFAULT_EPSILON: f64 = 1e-8;

/// Bias-corrected Adam state for one flat parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub step_count: u64,
    m: Vec<f64>,
    v: Vec<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub learning_rate: f64,
}

impl AdamState {
    pub fn new(n_params: usize, learning_rate: f64) -> Self {
        AdamState {
            step_count: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            beta1: DEFAULT_BETA1,
            beta2: DEFAULT_BETA2,
            epsilon: DEFAULT_EPSILON,
            learning_rate,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::ShapeMismatch {
                context: "adam_step",
                got: format!("params {} / grads {}", params.len(), grads.len()),
                expected: format!("{}", self.m.len()),
            });
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite {
                context: "adam gradient",
            });
        }
        self.step_count += 1;
        let t = self.step_count as f64;
        let bc1 = 1.0 - self.beta1.powf(t);
        let bc2 = 1.0 - self.beta2.powf(t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads.iter())
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(())
    }
}

/// Lazy Adam over the rows of an embedding table. Rows absent from a step's
/// gradient map keep their parameters and moments untouched, so sparse
/// training steps only move the rows they named.
#[derive(Debug, Clone)]
pub struct RowAdamState {
    m: Matrix2D,
    v: Matrix2D,
    step_counts: Vec<u64>,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub learning_rate: f64,
}

impl RowAdamState {
    pub fn new(rows: usize, cols: usize, learning_rate: f64) -> Self {
        RowAdamState {
            m: Matrix2D::zeros(rows, cols),
            v: Matrix2D::zeros(rows, cols),
            step_counts: vec![0; rows],
            beta1: DEFAULT_BETA1,
            beta2: DEFAULT_BETA2,
            epsilon: DEFAULT_EPSILON,
            learning_rate,
        }
    }

    /// Applies accumulated row gradients. The BTreeMap keeps update order
    /// deterministic.
    pub fn step_rows(
        &mut self,
        table: &mut Matrix2D,
        row_grads: &BTreeMap<usize, Vec<f64>>,
    ) -> Result<()> {
        for (&row, grad) in row_grads {
            if row >= table.rows() {
                return Err(Error::IndexOutOfRange {
                    what: "embedding row",
                    index: row,
                    bound: table.rows(),
                });
            }
            if grad.len() != table.cols() {
                return Err(Error::ShapeMismatch {
                    context: "row gradient width",
                    got: format!("{}", grad.len()),
                    expected: format!("{}", table.cols()),
                });
            }
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite {
                    context: "adam row gradient",
                });
            }
            self.step_counts[row] += 1;
            let t = self.step_counts[row] as f64;
            let bc1 = 1.0 - self.beta1.powf(t);
            let bc2 = 1.0 - self.beta2.powf(t);
            let m_row = self.m.row_mut(row);
            for ((p, g), (m, v)) in table
                .row_mut(row)
                .iter_mut()
                .zip(grad.iter())
                .zip(m_row.iter_mut().zip(self.v.row_mut(row).iter_mut()))
            {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradients_leave_fresh_params_unchanged() {
        let mut params = vec![1.0, -2.0, 3.0];
        let original = params.clone();
        let mut state = AdamState::new(3, 0.1);
        state.step(&mut params, &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(params, original);
    }

    #[test]
    fn first_step_magnitude_is_learning_rate() {
        // Bias correction makes m_hat/sqrt(v_hat) = g/|g| on step one.
        let mut params = vec![0.0];
        let mut state = AdamState::new(1, 0.05);
        state.step(&mut params, &[0.7]).unwrap();
        assert!((params[0].abs() - 0.05).abs() < 1e-8);
        assert_eq!(state.step_count, 1);
    }

    #[test]
    fn minimizes_scalar_quadratic() {
        let mut x = vec![1.0];
        let mut state = AdamState::new(1, 0.1);
        for _ in 0..200 {
            let grad = [2.0 * x[0]];
            state.step(&mut x, &grad).unwrap();
        }
        assert!(x[0].abs() < 1e-2, "x = {}", x[0]);
    }

    #[test]
    fn rejects_non_finite_gradient() {
        let mut params = vec![0.0];
        let mut state = AdamState::new(1, 0.1);
        assert!(state.step(&mut params, &[f64::NAN]).is_err());
    }

    #[test]
    fn row_adam_touches_only_named_rows() {
        let mut table = Matrix2D::from_vec(3, 2, vec![1.0; 6]).unwrap();
        let mut state = RowAdamState::new(3, 2, 0.1);
        let mut grads = BTreeMap::new();
        grads.insert(1usize, vec![0.5, -0.5]);
        state.step_rows(&mut table, &grads).unwrap();
        assert_eq!(table.row(0), &[1.0, 1.0]);
        assert_eq!(table.row(2), &[1.0, 1.0]);
        assert!(table.row(1).iter().all(|&v| v != 1.0));
    }
}
