//! Implicit-feedback matrix factorization trained by alternating regularized
//! least squares with confidence weighting.
//!
//! Every cell contributes to the objective: observed cells carry confidence
//! `1 + alpha * count` toward a binary preference of 1, unobserved cells
//! carry confidence 1 toward 0. Each half-sweep solves one side's rows
//! exactly from the k x k normal equations, so the objective never increases.

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::InteractionMatrix;
use crate::error::{Error, Result};
use crate::io;
use crate::linalg;
use crate::neural::{dot, Matrix2D};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct AlsConfig {
    /// Latent dimension.
    pub k: usize,
    /// L2 regularization strength.
    pub reg: f64,
    /// Confidence scaling factor: confidence = 1 + alpha * count.
    pub alpha: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for AlsConfig {
    fn default() -> Self {
        AlsConfig {
            k: 200,
            reg: 1e-4,
            alpha: 15.0,
            epochs: 30,
            seed: 42,
        }
    }
}

impl AlsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::InvalidConfig("als: k must be >= 1".into()));
        }
        if self.reg < 0.0 || self.alpha < 0.0 {
            return Err(Error::InvalidConfig("als: reg and alpha must be >= 0".into()));
        }
        if self.epochs < 1 {
            return Err(Error::InvalidConfig("als: epochs must be >= 1".into()));
        }
        Ok(())
    }
}

/// Paired latent factor matrices; scoring is the plain dot product.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel {
    pub user_factors: Matrix2D,
    pub item_factors: Matrix2D,
}

impl FactorModel {
    pub fn score(&self, user: usize, item: usize) -> Result<f64> {
        if user >= self.user_factors.rows() {
            return Err(Error::IndexOutOfRange {
                what: "user",
                index: user,
                bound: self.user_factors.rows(),
            });
        }
        if item >= self.item_factors.rows() {
            return Err(Error::IndexOutOfRange {
                what: "item",
                index: item,
                bound: self.item_factors.rows(),
            });
        }
        Ok(dot(self.user_factors.row(user), self.item_factors.row(item)))
    }
}

pub fn confidence(count: f64, alpha: f64) -> f64 {
    1.0 + alpha * count
}

/// One side of the interaction matrix in CSR form: for the user solve, rows
/// are users and indices point into the item factors; for the item solve,
/// the transpose.
pub struct SideRows<'a> {
    pub row_ptr: &'a [usize],
    pub indices: &'a [u32],
    pub counts: &'a [f64],
}

impl<'a> SideRows<'a> {
    pub fn n_rows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    fn row(&self, r: usize) -> (&[u32], &[f64]) {
        let lo = self.row_ptr[r];
        let hi = self.row_ptr[r + 1];
        (&self.indices[lo..hi], &self.counts[lo..hi])
    }
}

/// Full objective over all M x N cells:
/// sum c_ui (pref_ui - x_ui)^2 + reg (||P||^2 + ||Q||^2), evaluated in
/// O(nnz k + (M + N) k^2) via the Gram-matrix decomposition.
pub fn als_objective(model: &FactorModel, train: &InteractionMatrix, cfg: &AlsConfig) -> f64 {
    let k = model.user_factors.cols();
    // gram[q] = Q^T Q
    let mut gram = vec![0.0; k * k];
    for i in 0..model.item_factors.rows() {
        let row = model.item_factors.row(i);
        for a in 0..k {
            for b in 0..k {
                gram[a * k + b] += row[a] * row[b];
            }
        }
    }
    // sum over all cells of x^2 = sum_u p_u^T (Q^T Q) p_u
    let mut total = 0.0;
    for u in 0..model.user_factors.rows() {
        let p = model.user_factors.row(u);
        for a in 0..k {
            let mut acc = 0.0;
            for b in 0..k {
                acc += gram[a * k + b] * p[b];
            }
            total += p[a] * acc;
        }
    }
    // Observed cells: replace the c=1, pref=0 contribution with the real one.
    for u in 0..train.n_users() {
        let (items, counts) = train.row(u);
        let p = model.user_factors.row(u);
        for (&i, &c) in items.iter().zip(counts.iter()) {
            let x = dot(p, model.item_factors.row(i as usize));
            let conf = confidence(c, cfg.alpha);
            total += conf * (1.0 - x) * (1.0 - x) - x * x;
        }
    }
    let norm = |m: &Matrix2D| m.as_slice().iter().map(|v| v * v).sum::<f64>();
    total + cfg.reg * (norm(&model.user_factors) + norm(&model.item_factors))
}

/// Solves one side's rows exactly while the other side stays fixed. Row `r`
/// solves (Y^T Y + sum_i alpha c_i y_i y_i^T + reg I) x = sum_i (1 + alpha c_i) y_i
/// over that row's observed entries. Rows are independent and solved in
/// parallel.
pub fn solve_side(fixed: &Matrix2D, rows: &SideRows, cfg: &AlsConfig) -> Result<Matrix2D> {
    let k = fixed.cols();
    // Shared Gram matrix Y^T Y, computed once per half-sweep.
    let mut gram = vec![0.0; k * k];
    for r in 0..fixed.rows() {
        let y = fixed.row(r);
        for a in 0..k {
            for b in a..k {
                gram[a * k + b] += y[a] * y[b];
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            gram[a * k + b] = gram[b * k + a];
        }
    }

    let n_rows = rows.n_rows();
    let mut out = Matrix2D::zeros(n_rows, k);
    let results: Result<Vec<Vec<f64>>> = (0..n_rows)
        .into_par_iter()
        .map(|r| {
            let (indices, counts) = rows.row(r);
            let mut a = gram.clone();
            for d in 0..k {
                a[d * k + d] += cfg.reg;
            }
            let mut b = vec![0.0; k];
            for (&i, &c) in indices.iter().zip(counts.iter()) {
                let y = fixed.row(i as usize);
                let conf = confidence(c, cfg.alpha);
                let extra = conf - 1.0; // alpha * count
                for p in 0..k {
                    for q in 0..k {
                        a[p * k + q] += extra * y[p] * y[q];
                    }
                    b[p] += conf * y[p];
                }
            }
            linalg::solve_spd(&mut a, k, &mut b)?;
            Ok(b)
        })
        .collect();
    for (r, solution) in results?.into_iter().enumerate() {
        out.row_mut(r).copy_from_slice(&solution);
    }
    Ok(out)
}

/// Alternates exact user and item solves. Returns the model and the objective
/// recorded after every half-sweep (2 * epochs entries).
pub fn fit(train: &InteractionMatrix, cfg: &AlsConfig) -> Result<(FactorModel, Vec<f64>)> {
    cfg.validate()?;
    if train.nnz() == 0 {
        return Err(Error::EmptyRecords);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut init = |rows: usize| {
        let data = (0..rows * cfg.k).map(|_| rng.gen_range(-0.01..0.01)).collect();
        Matrix2D::from_vec(rows, cfg.k, data).expect("sized data")
    };
    let mut model = FactorModel {
        user_factors: init(train.n_users()),
        item_factors: init(train.n_items()),
    };

    let (t_ptr, t_idx, t_counts) = train.transposed_csr();
    let user_rows = SideRows {
        row_ptr: train.row_ptr(),
        indices: train.item_indices(),
        counts: train.counts(),
    };
    let item_rows = SideRows {
        row_ptr: &t_ptr,
        indices: &t_idx,
        counts: &t_counts,
    };

    let mut trace = Vec::with_capacity(2 * cfg.epochs);
    for _ in 0..cfg.epochs {
        model.user_factors = solve_side(&model.item_factors, &user_rows, cfg)?;
        trace.push(als_objective(&model, train, cfg));
        model.item_factors = solve_side(&model.user_factors, &item_rows, cfg)?;
        trace.push(als_objective(&model, train, cfg));
    }
    Ok((model, trace))
}

#[derive(Debug, Serialize, Deserialize)]
struct AlsManifest {
    k: usize,
    reg: f64,
    alpha: f64,
    n_users: usize,
    n_items: usize,
}

/// Writes `als.json` plus `P.bin`/`Q.bin` (little-endian f64, row-major).
pub fn save_model(dir: &Path, model: &FactorModel, cfg: &AlsConfig) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let manifest = AlsManifest {
        k: model.user_factors.cols(),
        reg: cfg.reg,
        alpha: cfg.alpha,
        n_users: model.user_factors.rows(),
        n_items: model.item_factors.rows(),
    };
    io::write_json_file(&dir.join("als.json"), &manifest)?;
    io::write_f64_file(&dir.join("P.bin"), model.user_factors.as_slice())?;
    io::write_f64_file(&dir.join("Q.bin"), model.item_factors.as_slice())
}

pub fn load_model(dir: &Path) -> Result<FactorModel> {
    let manifest: AlsManifest = io::read_json_file(&dir.join("als.json"))?;
    load_factors(dir, manifest.n_users, manifest.n_items, manifest.k)
}

pub(crate) fn load_factors(
    dir: &Path,
    n_users: usize,
    n_items: usize,
    k: usize,
) -> Result<FactorModel> {
    let p = io::read_f64_file(&dir.join("P.bin"), n_users * k)?;
    let q = io::read_f64_file(&dir.join("Q.bin"), n_items * k)?;
    Ok(FactorModel {
        user_factors: Matrix2D::from_vec(n_users, k, p)?,
        item_factors: Matrix2D::from_vec(n_items, k, q)?,
    })
}
