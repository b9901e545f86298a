//! Neural collaborative filtering: a GMF tower (element-wise product of
//! embeddings under a weighted output head), an MLP tower over concatenated
//! embeddings, and the fused NeuMF model that concatenates both towers'
//! final representations under one head. All three train with binary
//! cross-entropy over observed pairs plus sampled negatives.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::InteractionMatrix;
use crate::error::{Error, Result};
use crate::io;
use crate::neural::{
    backward, bce_loss, dot, forward, gaussian_init, sigmoid, xavier_init, Activation, AdamState,
    DenseLayer, LayerGrads, Matrix2D, RowAdamState,
};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct NcfConfig {
    /// GMF embedding width.
    pub n_factors: usize,
    /// MLP tower widths; the first entry is the tower input width, so the
    /// MLP embeddings are half that wide.
    pub layer_sizes: Vec<usize>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Sampled negatives per observed positive.
    pub neg_ratio: usize,
    pub seed: u64,
}

impl Default for NcfConfig {
    fn default() -> Self {
        NcfConfig {
            n_factors: 16,
            layer_sizes: vec![64, 32, 16],
            epochs: 50,
            learning_rate: 0.001,
            batch_size: 256,
            neg_ratio: 4,
            seed: 42,
        }
    }
}

impl NcfConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_factors < 1 {
            return Err(Error::InvalidConfig("ncf: n_factors must be >= 1".into()));
        }
        if self.layer_sizes.is_empty() {
            return Err(Error::InvalidConfig("ncf: layer_sizes must be nonempty".into()));
        }
        if self.layer_sizes[0] % 2 != 0 {
            return Err(Error::InvalidConfig(
                "ncf: layer_sizes[0] must be even (it is the concatenation of two embeddings)"
                    .into(),
            ));
        }
        if self.layer_sizes.iter().any(|&w| w == 0) {
            return Err(Error::InvalidConfig("ncf: zero-width layer".into()));
        }
        if self.neg_ratio < 1 {
            return Err(Error::InvalidConfig("ncf: neg_ratio must be >= 1".into()));
        }
        if self.epochs < 1 || self.batch_size < 1 {
            return Err(Error::InvalidConfig(
                "ncf: epochs and batch_size must be >= 1".into(),
            ));
        }
        Ok(())
    }

    pub fn mlp_emb_width(&self) -> usize {
        self.layer_sizes[0] / 2
    }
}

/// Builds the ReLU tower for the given embedding width, rejecting widths
/// that do not chain with `layer_sizes[0]`.
pub fn mlp_tower_layers(
    emb_width: usize,
    layer_sizes: &[usize],
    seed: u64,
) -> Result<Vec<DenseLayer>> {
    if layer_sizes.is_empty() {
        return Err(Error::InvalidConfig("ncf: layer_sizes must be nonempty".into()));
    }
    if 2 * emb_width != layer_sizes[0] {
        return Err(Error::ShapeMismatch {
            context: "mlp tower input",
            got: format!("2 x {} = {}", emb_width, 2 * emb_width),
            expected: format!("{}", layer_sizes[0]),
        });
    }
    let mut layers = Vec::new();
    for (l, pair) in layer_sizes.windows(2).enumerate() {
        layers.push(DenseLayer::new(
            xavier_init(pair[0], pair[1], seed.wrapping_add(l as u64)),
            vec![0.0; pair[1]],
            Activation::Relu,
        )?);
    }
    Ok(layers)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmfModel {
    pub user_emb: Matrix2D,
    pub item_emb: Matrix2D,
    pub output_weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub user_emb: Matrix2D,
    pub item_emb: Matrix2D,
    pub layers: Vec<DenseLayer>,
    pub output_weights: Vec<f64>,
}

/// The fused model: GMF's product vector and the MLP's last hidden layer
/// concatenated under a single output head.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuMfModel {
    pub gmf_user_emb: Matrix2D,
    pub gmf_item_emb: Matrix2D,
    pub mlp_user_emb: Matrix2D,
    pub mlp_item_emb: Matrix2D,
    pub mlp_layers: Vec<DenseLayer>,
    pub output_weights: Vec<f64>,
}

fn check_pair(n_users: usize, n_items: usize, user: usize, item: usize) -> Result<()> {
    if user >= n_users {
        return Err(Error::IndexOutOfRange {
            what: "user",
            index: user,
            bound: n_users,
        });
    }
    if item >= n_items {
        return Err(Error::IndexOutOfRange {
            what: "item",
            index: item,
            bound: n_items,
        });
    }
    Ok(())
}

impl GmfModel {
    pub fn new(n_users: usize, n_items: usize, n_factors: usize, seed: u64) -> Self {
        GmfModel {
            user_emb: gaussian_init(n_users, n_factors, 0.01, seed),
            item_emb: gaussian_init(n_items, n_factors, 0.01, seed.wrapping_add(1)),
            output_weights: xavier_init(n_factors, 1, seed.wrapping_add(2))
                .as_slice()
                .to_vec(),
        }
    }

    pub fn logit(&self, user: usize, item: usize) -> f64 {
        let p = self.user_emb.row(user);
        let q = self.item_emb.row(item);
        p.iter()
            .zip(q)
            .zip(&self.output_weights)
            .map(|((&a, &b), &h)| h * a * b)
            .sum()
    }

    /// sigma(h . (p_u * q_i))
    pub fn forward(&self, user: usize, item: usize) -> Result<f64> {
        check_pair(self.user_emb.rows(), self.item_emb.rows(), user, item)?;
        Ok(sigmoid(self.logit(user, item)))
    }
}

impl MlpModel {
    pub fn new(
        n_users: usize,
        n_items: usize,
        layer_sizes: &[usize],
        seed: u64,
    ) -> Result<Self> {
        let emb_width = layer_sizes[0] / 2;
        let layers = mlp_tower_layers(emb_width, layer_sizes, seed.wrapping_add(2))?;
        let last = *layer_sizes.last().expect("nonempty");
        Ok(MlpModel {
            user_emb: gaussian_init(n_users, emb_width, 0.01, seed),
            item_emb: gaussian_init(n_items, emb_width, 0.01, seed.wrapping_add(1)),
            layers,
            output_weights: xavier_init(last, 1, seed.wrapping_add(99))
                .as_slice()
                .to_vec(),
        })
    }

    fn tower_output(&self, users: &[usize], items: &[usize]) -> Result<Matrix2D> {
        let z1 = concat_embeddings(&self.user_emb, &self.item_emb, users, items)?;
        let (out, _) = forward(&self.layers, &z1, None, 0)?;
        Ok(out)
    }

    pub fn logit(&self, user: usize, item: usize) -> Result<f64> {
        let phi = self.tower_output(&[user], &[item])?;
        Ok(dot(phi.row(0), &self.output_weights))
    }

    /// sigma(h . tower([p_u ; q_i]))
    pub fn forward(&self, user: usize, item: usize) -> Result<f64> {
        check_pair(self.user_emb.rows(), self.item_emb.rows(), user, item)?;
        Ok(sigmoid(self.logit(user, item)?))
    }
}

impl NeuMfModel {
    pub fn new(n_users: usize, n_items: usize, cfg: &NcfConfig) -> Result<Self> {
        cfg.validate()?;
        let emb_width = cfg.mlp_emb_width();
        let last = *cfg.layer_sizes.last().expect("nonempty");
        Ok(NeuMfModel {
            gmf_user_emb: gaussian_init(n_users, cfg.n_factors, 0.01, cfg.seed),
            gmf_item_emb: gaussian_init(n_items, cfg.n_factors, 0.01, cfg.seed.wrapping_add(1)),
            mlp_user_emb: gaussian_init(n_users, emb_width, 0.01, cfg.seed.wrapping_add(2)),
            mlp_item_emb: gaussian_init(n_items, emb_width, 0.01, cfg.seed.wrapping_add(3)),
            mlp_layers: mlp_tower_layers(emb_width, &cfg.layer_sizes, cfg.seed.wrapping_add(4))?,
            output_weights: xavier_init(cfg.n_factors + last, 1, cfg.seed.wrapping_add(5))
                .as_slice()
                .to_vec(),
        })
    }

    /// Initializes the fused model from pre-trained towers with the output
    /// head `[0.5 h_gmf ; 0.5 h_mlp]`, so its initial logits are the mean of
    /// the towers' logits.
    pub fn from_pretrained(gmf: &GmfModel, mlp: &MlpModel) -> Self {
        let mut output_weights = Vec::with_capacity(gmf.output_weights.len() + mlp.output_weights.len());
        output_weights.extend(gmf.output_weights.iter().map(|h| 0.5 * h));
        output_weights.extend(mlp.output_weights.iter().map(|h| 0.5 * h));
        NeuMfModel {
            gmf_user_emb: gmf.user_emb.clone(),
            gmf_item_emb: gmf.item_emb.clone(),
            mlp_user_emb: mlp.user_emb.clone(),
            mlp_item_emb: mlp.item_emb.clone(),
            mlp_layers: mlp.layers.clone(),
            output_weights,
        }
    }

    pub fn n_users(&self) -> usize {
        self.gmf_user_emb.rows()
    }

    pub fn n_items(&self) -> usize {
        self.gmf_item_emb.rows()
    }

    pub fn logits(&self, users: &[usize], items: &[usize]) -> Result<Vec<f64>> {
        let gmf_width = self.gmf_user_emb.cols();
        let z1 = concat_embeddings(&self.mlp_user_emb, &self.mlp_item_emb, users, items)?;
        let (phi_mlp, _) = forward(&self.mlp_layers, &z1, None, 0)?;
        let mut logits = Vec::with_capacity(users.len());
        for (b, (&u, &i)) in users.iter().zip(items.iter()).enumerate() {
            let p = self.gmf_user_emb.row(u);
            let q = self.gmf_item_emb.row(i);
            let mut logit = 0.0;
            for c in 0..gmf_width {
                logit += self.output_weights[c] * p[c] * q[c];
            }
            for (c, &m) in phi_mlp.row(b).iter().enumerate() {
                logit += self.output_weights[gmf_width + c] * m;
            }
            logits.push(logit);
        }
        Ok(logits)
    }

    /// sigma(h . [phi_gmf ; phi_mlp])
    pub fn forward(&self, user: usize, item: usize) -> Result<f64> {
        check_pair(self.n_users(), self.n_items(), user, item)?;
        Ok(sigmoid(self.logits(&[user], &[item])?[0]))
    }
}

fn concat_embeddings(
    user_emb: &Matrix2D,
    item_emb: &Matrix2D,
    users: &[usize],
    items: &[usize],
) -> Result<Matrix2D> {
    let e = user_emb.cols();
    let mut z = Matrix2D::zeros(users.len(), 2 * e);
    for (b, (&u, &i)) in users.iter().zip(items.iter()).enumerate() {
        check_pair(user_emb.rows(), item_emb.rows(), u, i)?;
        z.row_mut(b)[..e].copy_from_slice(user_emb.row(u));
        z.row_mut(b)[e..].copy_from_slice(item_emb.row(i));
    }
    Ok(z)
}

/// One labeled training example: (user, item, 1.0 for observed / 0.0 sampled).
pub type LabeledPair = (u32, u32, f64);

/// Labels every observed pair 1 and draws `neg_ratio` uniformly sampled
/// non-interacted items per positive, labeled 0. Deterministic for a seed;
/// the training loop reshuffles the order each epoch.
pub fn make_training_set(
    train: &InteractionMatrix,
    neg_ratio: usize,
    seed: u64,
) -> Result<Vec<LabeledPair>> {
    if neg_ratio < 1 {
        return Err(Error::InvalidConfig("ncf: neg_ratio must be >= 1".into()));
    }
    let n_items = train.n_items() as u32;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut examples = Vec::with_capacity(train.nnz() * (1 + neg_ratio));
    for u in 0..train.n_users() {
        let (items, _) = train.row(u);
        if items.is_empty() {
            continue;
        }
        if items.len() == train.n_items() {
            return Err(Error::UserHasAllItems { user: u as u32 });
        }
        let interacted: std::collections::HashSet<u32> = items.iter().copied().collect();
        for &i in items {
            examples.push((u as u32, i, 1.0));
            for _ in 0..neg_ratio {
                let neg = loop {
                    let candidate = rng.gen_range(0..n_items);
                    if !interacted.contains(&candidate) {
                        break candidate;
                    }
                };
                examples.push((u as u32, neg, 0.0));
            }
        }
    }
    Ok(examples)
}

#[derive(Debug, Clone, Default)]
pub struct GmfGradients {
    pub user_rows: BTreeMap<usize, Vec<f64>>,
    pub item_rows: BTreeMap<usize, Vec<f64>>,
    pub output_weights: Vec<f64>,
}

/// Mean BCE over the batch and gradients for every touched parameter.
pub fn gmf_loss_and_gradients(model: &GmfModel, batch: &[LabeledPair]) -> Result<(f64, GmfGradients)> {
    let width = model.user_emb.cols();
    let mut preds = Vec::with_capacity(batch.len());
    for &(u, i, _) in batch {
        check_pair(model.user_emb.rows(), model.item_emb.rows(), u as usize, i as usize)?;
        preds.push(sigmoid(model.logit(u as usize, i as usize)));
    }
    let labels: Vec<f64> = batch.iter().map(|&(_, _, y)| y).collect();
    let (loss, _) = bce_loss(&preds, &labels)?;

    let mut grads = GmfGradients {
        output_weights: vec![0.0; width],
        ..GmfGradients::default()
    };
    let n = batch.len() as f64;
    for (b, &(u, i, y)) in batch.iter().enumerate() {
        // d(mean BCE)/d logit for a sigmoid output.
        let dlogit = (preds[b] - y) / n;
        let p = model.user_emb.row(u as usize);
        let q = model.item_emb.row(i as usize);
        let gu = grads
            .user_rows
            .entry(u as usize)
            .or_insert_with(|| vec![0.0; width]);
        for c in 0..width {
            gu[c] += dlogit * model.output_weights[c] * q[c];
        }
        let gi = grads
            .item_rows
            .entry(i as usize)
            .or_insert_with(|| vec![0.0; width]);
        for c in 0..width {
            gi[c] += dlogit * model.output_weights[c] * p[c];
            grads.output_weights[c] += dlogit * p[c] * q[c];
        }
    }
    Ok((loss, grads))
}

#[derive(Debug, Clone, Default)]
pub struct MlpGradients {
    pub user_rows: BTreeMap<usize, Vec<f64>>,
    pub item_rows: BTreeMap<usize, Vec<f64>>,
    pub layers: Vec<LayerGrads>,
    pub output_weights: Vec<f64>,
}

pub fn mlp_loss_and_gradients(model: &MlpModel, batch: &[LabeledPair]) -> Result<(f64, MlpGradients)> {
    let users: Vec<usize> = batch.iter().map(|&(u, _, _)| u as usize).collect();
    let items: Vec<usize> = batch.iter().map(|&(_, i, _)| i as usize).collect();
    let z1 = concat_embeddings(&model.user_emb, &model.item_emb, &users, &items)?;
    let (phi, tape) = forward(&model.layers, &z1, None, 0)?;
    let preds: Vec<f64> = (0..batch.len())
        .map(|b| sigmoid(dot(phi.row(b), &model.output_weights)))
        .collect();
    let labels: Vec<f64> = batch.iter().map(|&(_, _, y)| y).collect();
    let (loss, _) = bce_loss(&preds, &labels)?;

    let n = batch.len() as f64;
    let last_width = model.output_weights.len();
    let mut upstream = Matrix2D::zeros(batch.len(), last_width);
    let mut h_grad = vec![0.0; last_width];
    for b in 0..batch.len() {
        let dlogit = (preds[b] - labels[b]) / n;
        for c in 0..last_width {
            upstream.set(b, c, dlogit * model.output_weights[c]);
            h_grad[c] += dlogit * phi.get(b, c);
        }
    }
    let tower = backward(&model.layers, &tape, &upstream)?;

    let e = model.user_emb.cols();
    let mut grads = MlpGradients {
        layers: tower.layers,
        output_weights: h_grad,
        ..MlpGradients::default()
    };
    for (b, &(u, i, _)) in batch.iter().enumerate() {
        let dz = tower.input.row(b);
        let gu = grads
            .user_rows
            .entry(u as usize)
            .or_insert_with(|| vec![0.0; e]);
        for c in 0..e {
            gu[c] += dz[c];
        }
        let gi = grads
            .item_rows
            .entry(i as usize)
            .or_insert_with(|| vec![0.0; e]);
        for c in 0..e {
            gi[c] += dz[e + c];
        }
    }
    Ok((loss, grads))
}

#[derive(Debug, Clone, Default)]
pub struct NeuMfGradients {
    pub gmf_user_rows: BTreeMap<usize, Vec<f64>>,
    pub gmf_item_rows: BTreeMap<usize, Vec<f64>>,
    pub mlp_user_rows: BTreeMap<usize, Vec<f64>>,
    pub mlp_item_rows: BTreeMap<usize, Vec<f64>>,
    pub layers: Vec<LayerGrads>,
    pub output_weights: Vec<f64>,
}

pub fn neumf_loss_and_gradients(
    model: &NeuMfModel,
    batch: &[LabeledPair],
) -> Result<(f64, NeuMfGradients)> {
    let users: Vec<usize> = batch.iter().map(|&(u, _, _)| u as usize).collect();
    let items: Vec<usize> = batch.iter().map(|&(_, i, _)| i as usize).collect();
    let gmf_width = model.gmf_user_emb.cols();
    let mlp_width = model.output_weights.len() - gmf_width;

    let z1 = concat_embeddings(&model.mlp_user_emb, &model.mlp_item_emb, &users, &items)?;
    let (phi_mlp, tape) = forward(&model.mlp_layers, &z1, None, 0)?;

    let mut preds = Vec::with_capacity(batch.len());
    for (b, (&u, &i)) in users.iter().zip(items.iter()).enumerate() {
        let p = model.gmf_user_emb.row(u);
        let q = model.gmf_item_emb.row(i);
        let mut logit = 0.0;
        for c in 0..gmf_width {
            logit += model.output_weights[c] * p[c] * q[c];
        }
        for (c, &m) in phi_mlp.row(b).iter().enumerate() {
            logit += model.output_weights[gmf_width + c] * m;
        }
        preds.push(sigmoid(logit));
    }
    let labels: Vec<f64> = batch.iter().map(|&(_, _, y)| y).collect();
    let (loss, _) = bce_loss(&preds, &labels)?;

    let n = batch.len() as f64;
    let mut grads = NeuMfGradients {
        output_weights: vec![0.0; model.output_weights.len()],
        ..NeuMfGradients::default()
    };
    let mut upstream = Matrix2D::zeros(batch.len(), mlp_width);
    for (b, &(u, i, y)) in batch.iter().enumerate() {
        let dlogit = (preds[b] - y) / n;
        let p = model.gmf_user_emb.row(u as usize);
        let q = model.gmf_item_emb.row(i as usize);
        let gu = grads
            .gmf_user_rows
            .entry(u as usize)
            .or_insert_with(|| vec![0.0; gmf_width]);
        let gi = grads
            .gmf_item_rows
            .entry(i as usize)
            .or_insert_with(|| vec![0.0; gmf_width]);
        for c in 0..gmf_width {
            let h = model.output_weights[c];
            gu[c] += dlogit * h * q[c];
            gi[c] += dlogit * h * p[c];
            grads.output_weights[c] += dlogit * p[c] * q[c];
        }
        for c in 0..mlp_width {
            upstream.set(b, c, dlogit * model.output_weights[gmf_width + c]);
            grads.output_weights[gmf_width + c] += dlogit * phi_mlp.get(b, c);
        }
    }
    let tower = backward(&model.mlp_layers, &tape, &upstream)?;
    grads.layers = tower.layers;
    let e = model.mlp_user_emb.cols();
    for (b, &(u, i, _)) in batch.iter().enumerate() {
        let dz = tower.input.row(b);
        let gu = grads
            .mlp_user_rows
            .entry(u as usize)
            .or_insert_with(|| vec![0.0; e]);
        for c in 0..e {
            gu[c] += dz[c];
        }
        let gi = grads
            .mlp_item_rows
            .entry(i as usize)
            .or_insert_with(|| vec![0.0; e]);
        for c in 0..e {
            gi[c] += dz[e + c];
        }
    }
    Ok((loss, grads))
}

/// Adam states for a dense layer stack plus output head.
struct StackOptimizer {
    layer_weights: Vec<AdamState>,
    layer_biases: Vec<AdamState>,
    output: AdamState,
}

impl StackOptimizer {
    fn new(layers: &[DenseLayer], head_width: usize, lr: f64) -> Self {
        StackOptimizer {
            layer_weights: layers
                .iter()
                .map(|l| AdamState::new(l.weight.as_slice().len(), lr))
                .collect(),
            layer_biases: layers
                .iter()
                .map(|l| AdamState::new(l.bias.len(), lr))
                .collect(),
            output: AdamState::new(head_width, lr),
        }
    }

    fn step(
        &mut self,
        layers: &mut [DenseLayer],
        output_weights: &mut [f64],
        layer_grads: &[LayerGrads],
        output_grad: &[f64],
    ) -> Result<()> {
        for ((layer, grad), (w_state, b_state)) in layers
            .iter_mut()
            .zip(layer_grads.iter())
            .zip(self.layer_weights.iter_mut().zip(self.layer_biases.iter_mut()))
        {
            w_state.step(layer.weight.as_mut_slice(), grad.weight.as_slice())?;
            b_state.step(&mut layer.bias, &grad.bias)?;
        }
        self.output.step(output_weights, output_grad)
    }
}

fn epoch_order(n: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    order
}

/// Trains the GMF tower alone with its own output head.
pub fn train_gmf(train: &InteractionMatrix, cfg: &NcfConfig) -> Result<(GmfModel, Vec<f64>)> {
    cfg.validate()?;
    let mut model = GmfModel::new(train.n_users(), train.n_items(), cfg.n_factors, cfg.seed);
    let mut user_adam = RowAdamState::new(train.n_users(), cfg.n_factors, cfg.learning_rate);
    let mut item_adam = RowAdamState::new(train.n_items(), cfg.n_factors, cfg.learning_rate);
    let mut head_adam = AdamState::new(cfg.n_factors, cfg.learning_rate);

    let examples = make_training_set(train, cfg.neg_ratio, cfg.seed)?;
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let order = epoch_order(examples.len(), cfg.seed.wrapping_add(1_000 + epoch as u64));
        let mut epoch_loss = 0.0;
        let mut seen = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<LabeledPair> = chunk.iter().map(|&ix| examples[ix]).collect();
            let (loss, grads) = gmf_loss_and_gradients(&model, &batch)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite {
                    context: "gmf batch loss",
                });
            }
            epoch_loss += loss * batch.len() as f64;
            seen += batch.len();
            user_adam.step_rows(&mut model.user_emb, &grads.user_rows)?;
            item_adam.step_rows(&mut model.item_emb, &grads.item_rows)?;
            head_adam.step(&mut model.output_weights, &grads.output_weights)?;
        }
        trace.push(epoch_loss / seen as f64);
    }
    Ok((model, trace))
}

/// Trains the MLP tower alone with its own output head.
pub fn train_mlp(train: &InteractionMatrix, cfg: &NcfConfig) -> Result<(MlpModel, Vec<f64>)> {
    cfg.validate()?;
    let mut model = MlpModel::new(
        train.n_users(),
        train.n_items(),
        &cfg.layer_sizes,
        cfg.seed.wrapping_add(7),
    )?;
    let e = cfg.mlp_emb_width();
    let mut user_adam = RowAdamState::new(train.n_users(), e, cfg.learning_rate);
    let mut item_adam = RowAdamState::new(train.n_items(), e, cfg.learning_rate);
    let mut stack_opt = StackOptimizer::new(&model.layers, model.output_weights.len(), cfg.learning_rate);

    let examples = make_training_set(train, cfg.neg_ratio, cfg.seed)?;
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let order = epoch_order(examples.len(), cfg.seed.wrapping_add(2_000 + epoch as u64));
        let mut epoch_loss = 0.0;
        let mut seen = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<LabeledPair> = chunk.iter().map(|&ix| examples[ix]).collect();
            let (loss, grads) = mlp_loss_and_gradients(&model, &batch)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite {
                    context: "mlp batch loss",
                });
            }
            epoch_loss += loss * batch.len() as f64;
            seen += batch.len();
            user_adam.step_rows(&mut model.user_emb, &grads.user_rows)?;
            item_adam.step_rows(&mut model.item_emb, &grads.item_rows)?;
            stack_opt.step(
                &mut model.layers,
                &mut model.output_weights,
                &grads.layers,
                &grads.output_weights,
            )?;
        }
        trace.push(epoch_loss / seen as f64);
    }
    Ok((model, trace))
}

/// Outcome of pre-training: both towers, their loss traces, and the fused
/// model ready for fine-tuning.
pub struct PretrainOutcome {
    pub gmf: GmfModel,
    pub gmf_loss_trace: Vec<f64>,
    pub mlp: MlpModel,
    pub mlp_loss_trace: Vec<f64>,
    pub fused: NeuMfModel,
}

/// Trains GMF and MLP separately, then fuses them with the half-and-half
/// output head.
pub fn pretrain_and_fuse(train: &InteractionMatrix, cfg: &NcfConfig) -> Result<PretrainOutcome> {
    let (gmf, gmf_loss_trace) = train_gmf(train, cfg)?;
    let (mlp, mlp_loss_trace) = train_mlp(train, cfg)?;
    let fused = NeuMfModel::from_pretrained(&gmf, &mlp);
    Ok(PretrainOutcome {
        gmf,
        gmf_loss_trace,
        mlp,
        mlp_loss_trace,
        fused,
    })
}

/// Trains the fused NeuMF model, starting from `pretrained` when given and
/// from a fresh gaussian initialization otherwise. Returns the model and the
/// per-epoch mean binary cross-entropy.
pub fn fit(
    train: &InteractionMatrix,
    cfg: &NcfConfig,
    pretrained: Option<NeuMfModel>,
) -> Result<(NeuMfModel, Vec<f64>)> {
    cfg.validate()?;
    let mut model = match pretrained {
        Some(m) => {
            if m.n_users() != train.n_users() || m.n_items() != train.n_items() {
                return Err(Error::ShapeMismatch {
                    context: "pretrained model dimensions",
                    got: format!("{}x{}", m.n_users(), m.n_items()),
                    expected: format!("{}x{}", train.n_users(), train.n_items()),
                });
            }
            m
        }
        None => NeuMfModel::new(train.n_users(), train.n_items(), cfg)?,
    };
    let e = cfg.mlp_emb_width();
    let mut gmf_user_adam = RowAdamState::new(train.n_users(), cfg.n_factors, cfg.learning_rate);
    let mut gmf_item_adam = RowAdamState::new(train.n_items(), cfg.n_factors, cfg.learning_rate);
    let mut mlp_user_adam = RowAdamState::new(train.n_users(), e, cfg.learning_rate);
    let mut mlp_item_adam = RowAdamState::new(train.n_items(), e, cfg.learning_rate);
    let mut stack_opt =
        StackOptimizer::new(&model.mlp_layers, model.output_weights.len(), cfg.learning_rate);

    let examples = make_training_set(train, cfg.neg_ratio, cfg.seed)?;
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let order = epoch_order(examples.len(), cfg.seed.wrapping_add(3_000 + epoch as u64));
        let mut epoch_loss = 0.0;
        let mut seen = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<LabeledPair> = chunk.iter().map(|&ix| examples[ix]).collect();
            let (loss, grads) = neumf_loss_and_gradients(&model, &batch)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite {
                    context: "neumf batch loss",
                });
            }
            epoch_loss += loss * batch.len() as f64;
            seen += batch.len();
            gmf_user_adam.step_rows(&mut model.gmf_user_emb, &grads.gmf_user_rows)?;
            gmf_item_adam.step_rows(&mut model.gmf_item_emb, &grads.gmf_item_rows)?;
            mlp_user_adam.step_rows(&mut model.mlp_user_emb, &grads.mlp_user_rows)?;
            mlp_item_adam.step_rows(&mut model.mlp_item_emb, &grads.mlp_item_rows)?;
            stack_opt.step(
                &mut model.mlp_layers,
                &mut model.output_weights,
                &grads.layers,
                &grads.output_weights,
            )?;
        }
        trace.push(epoch_loss / seen as f64);
    }
    Ok((model, trace))
}

#[derive(Debug, Serialize, Deserialize)]
struct NeuMfManifest {
    n_users: usize,
    n_items: usize,
    n_factors: usize,
    mlp_emb_width: usize,
    layer_sizes: Vec<usize>,
}

/// `ncf.json` manifest plus one `weights.bin` holding, in order: GMF user and
/// item embeddings, MLP user and item embeddings, each tower layer's weights
/// then bias, and the output head. All little-endian f64.
pub fn save_model(dir: &Path, model: &NeuMfModel) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let layer_sizes: Vec<usize> = std::iter::once(model.mlp_layers[0].input_width())
        .chain(model.mlp_layers.iter().map(|l| l.output_width()))
        .collect();
    let manifest = NeuMfManifest {
        n_users: model.n_users(),
        n_items: model.n_items(),
        n_factors: model.gmf_user_emb.cols(),
        mlp_emb_width: model.mlp_user_emb.cols(),
        layer_sizes,
    };
    io::write_json_file(&dir.join("ncf.json"), &manifest)?;
    let mut values = Vec::new();
    values.extend_from_slice(model.gmf_user_emb.as_slice());
    values.extend_from_slice(model.gmf_item_emb.as_slice());
    values.extend_from_slice(model.mlp_user_emb.as_slice());
    values.extend_from_slice(model.mlp_item_emb.as_slice());
    for layer in &model.mlp_layers {
        values.extend_from_slice(layer.weight.as_slice());
        values.extend_from_slice(&layer.bias);
    }
    values.extend_from_slice(&model.output_weights);
    io::write_f64_file(&dir.join("weights.bin"), &values)
}

pub fn load_model(dir: &Path) -> Result<NeuMfModel> {
    let manifest: NeuMfManifest = io::read_json_file(&dir.join("ncf.json"))?;
    let last = *manifest
        .layer_sizes
        .last()
        .ok_or_else(|| Error::CorruptSnapshot("ncf manifest has no layers".into()))?;
    let mut total = manifest.n_users * manifest.n_factors
        + manifest.n_items * manifest.n_factors
        + manifest.n_users * manifest.mlp_emb_width
        + manifest.n_items * manifest.mlp_emb_width;
    for pair in manifest.layer_sizes.windows(2) {
        total += pair[0] * pair[1] + pair[1];
    }
    total += manifest.n_factors + last;
    let values = io::read_f64_file(&dir.join("weights.bin"), total)?;

    struct Cursor<'a> {
        values: &'a [f64],
        offset: usize,
    }
    impl<'a> Cursor<'a> {
        fn take(&mut self, n: usize) -> &'a [f64] {
            let slice = &self.values[self.offset..self.offset + n];
            self.offset += n;
            slice
        }
        fn take_matrix(&mut self, rows: usize, cols: usize) -> Result<Matrix2D> {
            Matrix2D::from_vec(rows, cols, self.take(rows * cols).to_vec())
        }
    }
    let mut cursor = Cursor {
        values: &values,
        offset: 0,
    };
    let gmf_user_emb = cursor.take_matrix(manifest.n_users, manifest.n_factors)?;
    let gmf_item_emb = cursor.take_matrix(manifest.n_items, manifest.n_factors)?;
    let mlp_user_emb = cursor.take_matrix(manifest.n_users, manifest.mlp_emb_width)?;
    let mlp_item_emb = cursor.take_matrix(manifest.n_items, manifest.mlp_emb_width)?;
    let mut mlp_layers = Vec::new();
    for pair in manifest.layer_sizes.windows(2) {
        let weight = cursor.take_matrix(pair[0], pair[1])?;
        let bias = cursor.take(pair[1]).to_vec();
        mlp_layers.push(DenseLayer::new(weight, bias, Activation::Relu)?);
    }
    let output_weights = cursor.take(manifest.n_factors + last).to_vec();
    Ok(NeuMfModel {
        gmf_user_emb,
        gmf_item_emb,
        mlp_user_emb,
        mlp_item_emb,
        mlp_layers,
        output_weights,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct GmfManifest {
    n_users: usize,
    n_items: usize,
    n_factors: usize,
}

pub fn save_gmf(dir: &Path, model: &GmfModel) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let manifest = GmfManifest {
        n_users: model.user_emb.rows(),
        n_items: model.item_emb.rows(),
        n_factors: model.user_emb.cols(),
    };
    io::write_json_file(&dir.join("gmf.json"), &manifest)?;
    let mut values = Vec::new();
    values.extend_from_slice(model.user_emb.as_slice());
    values.extend_from_slice(model.item_emb.as_slice());
    values.extend_from_slice(&model.output_weights);
    io::write_f64_file(&dir.join("weights.bin"), &values)
}

pub fn load_gmf(dir: &Path) -> Result<GmfModel> {
    let m: GmfManifest = io::read_json_file(&dir.join("gmf.json"))?;
    let total = (m.n_users + m.n_items + 1) * m.n_factors;
    let values = io::read_f64_file(&dir.join("weights.bin"), total)?;
    let ue = m.n_users * m.n_factors;
    let ie = m.n_items * m.n_factors;
    Ok(GmfModel {
        user_emb: Matrix2D::from_vec(m.n_users, m.n_factors, values[..ue].to_vec())?,
        item_emb: Matrix2D::from_vec(m.n_items, m.n_factors, values[ue..ue + ie].to_vec())?,
        output_weights: values[ue + ie..].to_vec(),
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct MlpManifest {
    n_users: usize,
    n_items: usize,
    emb_width: usize,
    layer_sizes: Vec<usize>,
}

pub fn save_mlp(dir: &Path, model: &MlpModel) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let layer_sizes: Vec<usize> = std::iter::once(model.layers[0].input_width())
        .chain(model.layers.iter().map(|l| l.output_width()))
        .collect();
    let manifest = MlpManifest {
        n_users: model.user_emb.rows(),
        n_items: model.item_emb.rows(),
        emb_width: model.user_emb.cols(),
        layer_sizes,
    };
    io::write_json_file(&dir.join("mlp.json"), &manifest)?;
    let mut values = Vec::new();
    values.extend_from_slice(model.user_emb.as_slice());
    values.extend_from_slice(model.item_emb.as_slice());
    for layer in &model.layers {
        values.extend_from_slice(layer.weight.as_slice());
        values.extend_from_slice(&layer.bias);
    }
    values.extend_from_slice(&model.output_weights);
    io::write_f64_file(&dir.join("weights.bin"), &values)
}

pub fn load_mlp(dir: &Path) -> Result<MlpModel> {
    let m: MlpManifest = io::read_json_file(&dir.join("mlp.json"))?;
    let last = *m
        .layer_sizes
        .last()
        .ok_or_else(|| Error::CorruptSnapshot("mlp manifest has no layers".into()))?;
    let mut total = (m.n_users + m.n_items) * m.emb_width + last;
    for pair in m.layer_sizes.windows(2) {
        total += pair[0] * pair[1] + pair[1];
    }
    let values = io::read_f64_file(&dir.join("weights.bin"), total)?;
    let mut offset = 0usize;
    let ue = m.n_users * m.emb_width;
    let user_emb = Matrix2D::from_vec(m.n_users, m.emb_width, values[..ue].to_vec())?;
    offset += ue;
    let ie = m.n_items * m.emb_width;
    let item_emb = Matrix2D::from_vec(m.n_items, m.emb_width, values[offset..offset + ie].to_vec())?;
    offset += ie;
    let mut layers = Vec::new();
    for pair in m.layer_sizes.windows(2) {
        let n = pair[0] * pair[1];
        let weight = Matrix2D::from_vec(pair[0], pair[1], values[offset..offset + n].to_vec())?;
        offset += n;
        let bias = values[offset..offset + pair[1]].to_vec();
        offset += pair[1];
        layers.push(DenseLayer::new(weight, bias, Activation::Relu)?);
    }
    let output_weights = values[offset..].to_vec();
    Ok(MlpModel {
        user_emb,
        item_emb,
        layers,
        output_weights,
    })
}
