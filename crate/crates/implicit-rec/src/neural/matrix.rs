//! Dense row-major f64 matrix used for weights, embeddings and activations.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix2D {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix2D {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix2D {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                context: "Matrix2D::from_vec",
                got: format!("{} values", data.len()),
                expected: format!("{}x{}", rows, cols),
            });
        }
        Ok(Matrix2D { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `self (m x k) * other (k x n) -> m x n`.
    pub fn matmul(&self, other: &Matrix2D) -> Result<Matrix2D> {
        if self.cols != other.rows {
            return Err(Error::ShapeMismatch {
                context: "matmul",
                got: format!("{}x{} * {}x{}", self.rows, self.cols, other.rows, other.cols),
                expected: "inner dimensions equal".to_string(),
            });
        }
        let mut out = Matrix2D::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let a_row = self.row(i);
            let out_row = out.row_mut(i);
            for (k, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let b_row = other.row(k);
                for (o, &b) in out_row.iter_mut().zip(b_row.iter()) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self^T (k x m) * other (k x n) -> m x n`. Both inputs have k rows.
    pub fn matmul_at_b(&self, other: &Matrix2D) -> Result<Matrix2D> {
        if self.rows != other.rows {
            return Err(Error::ShapeMismatch {
                context: "matmul_at_b",
                got: format!("{}x{} vs {}x{}", self.rows, self.cols, other.rows, other.cols),
                expected: "equal row counts".to_string(),
            });
        }
        let mut out = Matrix2D::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            let a_row = self.row(k);
            let b_row = other.row(k);
            for (i, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let out_row = out.row_mut(i);
                for (o, &b) in out_row.iter_mut().zip(b_row.iter()) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self (m x k) * other^T (n x k) -> m x n`.
    pub fn matmul_a_bt(&self, other: &Matrix2D) -> Result<Matrix2D> {
        if self.cols != other.cols {
            return Err(Error::ShapeMismatch {
                context: "matmul_a_bt",
                got: format!("{}x{} vs {}x{}", self.rows, self.cols, other.rows, other.cols),
                expected: "equal column counts".to_string(),
            });
        }
        let mut out = Matrix2D::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let a_row = self.row(i);
            let out_row = out.row_mut(i);
            for (j, o) in out_row.iter_mut().enumerate() {
                *o = dot(a_row, other.row(j));
            }
        }
        Ok(out)
    }

    /// Copies the given rows of a table into a dense batch matrix.
    pub fn gather_rows(&self, indices: &[usize]) -> Result<Matrix2D> {
        let mut out = Matrix2D::zeros(indices.len(), self.cols);
        for (dst, &src) in indices.iter().enumerate() {
            if src >= self.rows {
                return Err(Error::IndexOutOfRange {
                    what: "row",
                    index: src,
                    bound: self.rows,
                });
            }
            out.row_mut(dst).copy_from_slice(self.row(src));
        }
        Ok(out)
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Uniform Xavier/Glorot initialization on +-sqrt(6 / (rows + cols)).
pub fn xavier_init(rows: usize, cols: usize, seed: u64) -> Matrix2D {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| rng.gen_range(-bound..bound))
        .collect();
    Matrix2D { rows, cols, data }
}

/// N(0, sigma^2) entries via Box-Muller, deterministic for a given seed.
pub fn gaussian_init(rows: usize, cols: usize, sigma: f64, seed: u64) -> Matrix2D {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..rows * cols)
        .map(|_| {
            let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            let u2: f64 = rng.gen();
            sigma * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        })
        .collect();
    Matrix2D { rows, cols, data }
}
