//! Matrix factorization trained with the pairwise ranking criterion over
//! sampled (user, observed item, unobserved item) triplets: push the score of
//! the observed item above the unobserved one through -ln sigmoid of the
//! score difference, plus L2 regularization on the touched factor rows.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::als::FactorModel;
use crate::dataset::{sample_triplets, InteractionMatrix, Triplet};
use crate::error::{Error, Result};
use crate::io;
use crate::neural::{dot, sigmoid, Matrix2D, RowAdamState};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct BprConfig {
    pub k: usize,
    pub learning_rate: f64,
    pub reg: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for BprConfig {
    fn default() -> Self {
        BprConfig {
            k: 200,
            learning_rate: 0.01,
            reg: 1e-4,
            epochs: 200,
            batch_size: 512,
            seed: 42,
        }
    }
}

impl BprConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::InvalidConfig("bpr: k must be >= 1".into()));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::InvalidConfig("bpr: learning_rate must be > 0".into()));
        }
        if self.reg < 0.0 {
            return Err(Error::InvalidConfig("bpr: reg must be >= 0".into()));
        }
        if self.epochs < 1 || self.batch_size < 1 {
            return Err(Error::InvalidConfig(
                "bpr: epochs and batch_size must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Score difference between the observed and unobserved item of a triplet.
pub fn score_difference(model: &FactorModel, t: &Triplet) -> f64 {
    let p = model.user_factors.row(t.user as usize);
    let qi = model.item_factors.row(t.pos_item as usize);
    let qj = model.item_factors.row(t.neg_item as usize);
    dot(p, qi) - dot(p, qj)
}

/// -ln sigmoid(diff) + reg * (||p_u||^2 + ||q_i||^2 + ||q_j||^2).
pub fn pairwise_loss(model: &FactorModel, t: &Triplet, reg: f64) -> f64 {
    let diff = score_difference(model, t);
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
    let reg_term = reg
        * (norm(model.user_factors.row(t.user as usize))
            + norm(model.item_factors.row(t.pos_item as usize))
            + norm(model.item_factors.row(t.neg_item as usize)));
    // ln(1 + e^-d) computed stably for either sign of d.
    let neg_log_sigmoid = if diff >= 0.0 {
        (-diff).exp().ln_1p()
    } else {
        -diff + diff.exp().ln_1p()
    };
    neg_log_sigmoid + reg_term
}

/// Accumulated gradients of the summed pairwise loss over a batch. Only rows
/// named by the batch appear.
#[derive(Debug, Clone, Default)]
pub struct BprGradients {
    pub user_rows: BTreeMap<usize, Vec<f64>>,
    pub item_rows: BTreeMap<usize, Vec<f64>>,
}

/// Summed batch loss plus its analytic gradients.
pub fn loss_and_gradients(model: &FactorModel, batch: &[Triplet], reg: f64) -> (f64, BprGradients) {
    let k = model.user_factors.cols();
    let mut grads = BprGradients::default();
    let mut total = 0.0;
    for t in batch {
        total += pairwise_loss(model, t, reg);
        let u = t.user as usize;
        let i = t.pos_item as usize;
        let j = t.neg_item as usize;
        let p = model.user_factors.row(u);
        let qi = model.item_factors.row(i);
        let qj = model.item_factors.row(j);
        // d(-ln sigmoid(d))/dd = sigmoid(d) - 1
        let coeff = sigmoid(score_difference(model, t)) - 1.0;

        let gu = grads.user_rows.entry(u).or_insert_with(|| vec![0.0; k]);
        for ((g, &a), (&b, &pu)) in gu.iter_mut().zip(qi).zip(qj.iter().zip(p)) {
            *g += coeff * (a - b) + 2.0 * reg * pu;
        }
        let gi = grads.item_rows.entry(i).or_insert_with(|| vec![0.0; k]);
        for ((g, &pu), &q) in gi.iter_mut().zip(p).zip(qi) {
            *g += coeff * pu + 2.0 * reg * q;
        }
        let gj = grads.item_rows.entry(j).or_insert_with(|| vec![0.0; k]);
        for ((g, &pu), &q) in gj.iter_mut().zip(p).zip(qj) {
            *g += coeff * -pu + 2.0 * reg * q;
        }
    }
    (total, grads)
}

/// Adam moments for the two factor tables. Rows move only when a batch
/// names them.
pub struct BprOptimizer {
    user_adam: RowAdamState,
    item_adam: RowAdamState,
    reg: f64,
}

impl BprOptimizer {
    pub fn new(n_users: usize, n_items: usize, cfg: &BprConfig) -> Self {
        BprOptimizer {
            user_adam: RowAdamState::new(n_users, cfg.k, cfg.learning_rate),
            item_adam: RowAdamState::new(n_items, cfg.k, cfg.learning_rate),
            reg: cfg.reg,
        }
    }
}

/// Applies one Adam step from the summed pairwise loss over the batch.
/// Returns the batch loss evaluated before the update.
pub fn sgd_step(
    model: &mut FactorModel,
    batch: &[Triplet],
    opt: &mut BprOptimizer,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::InvalidConfig("bpr: empty batch".into()));
    }
    let (loss, grads) = loss_and_gradients(model, batch, opt.reg);
    if !loss.is_finite() {
        return Err(Error::NonFinite {
            context: "bpr batch loss",
        });
    }
    opt.user_adam.step_rows(&mut model.user_factors, &grads.user_rows)?;
    opt.item_adam.step_rows(&mut model.item_factors, &grads.item_rows)?;
    Ok(loss)
}

#[derive(Debug, Serialize, Deserialize)]
struct BprManifest {
    k: usize,
    learning_rate: f64,
    reg: f64,
    n_users: usize,
    n_items: usize,
}

/// Same factor layout as the alternating-least-squares model with a
/// `bpr.json` manifest.
pub fn save_model(dir: &Path, model: &FactorModel, cfg: &BprConfig) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let manifest = BprManifest {
        k: model.user_factors.cols(),
        learning_rate: cfg.learning_rate,
        reg: cfg.reg,
        n_users: model.user_factors.rows(),
        n_items: model.item_factors.rows(),
    };
    io::write_json_file(&dir.join("bpr.json"), &manifest)?;
    io::write_f64_file(&dir.join("P.bin"), model.user_factors.as_slice())?;
    io::write_f64_file(&dir.join("Q.bin"), model.item_factors.as_slice())
}

pub fn load_model(dir: &Path) -> Result<FactorModel> {
    let manifest: BprManifest = io::read_json_file(&dir.join("bpr.json"))?;
    crate::als::load_factors(dir, manifest.n_users, manifest.n_items, manifest.k)
}

/// Trains factors over resampled triplets: each epoch draws `nnz` fresh
/// triplets, walks them in batches, and records the mean triplet loss.
pub fn fit(train: &InteractionMatrix, cfg: &BprConfig) -> Result<(FactorModel, Vec<f64>)> {
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
    let mut opt = BprOptimizer::new(train.n_users(), train.n_items(), cfg);

    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let triplets = sample_triplets(train, train.nnz(), cfg.seed.wrapping_add(epoch as u64))?;
        let mut epoch_loss = 0.0;
        for batch in triplets.chunks(cfg.batch_size) {
            epoch_loss += sgd_step(&mut model, batch, &mut opt)?;
        }
        trace.push(epoch_loss / triplets.len() as f64);
    }
    Ok((model, trace))
}
