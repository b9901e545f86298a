//! Denoising autoencoder over each user's binary interaction vector: a ReLU
//! bottleneck encoder and a sigmoid decoder, trained on the logistic
//! reconstruction likelihood with input-noise dropout, bottleneck dropout,
//! and L2 weight decay on both parameter sets.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::InteractionMatrix;
use crate::error::{Error, Result};
use crate::io;
use crate::neural::{
    backward, forward, xavier_init, Activation, AdamState, DenseLayer, DropoutSpec, LayerGrads,
    Matrix2D, CLAMP,
};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct AcfConfig {
    /// Bottleneck width.
    pub hidden_layer: usize,
    /// Input dropout probability.
    pub noise_prob: f64,
    /// Bottleneck dropout probability.
    pub dropout_prob: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for AcfConfig {
    fn default() -> Self {
        AcfConfig {
            hidden_layer: 7,
            noise_prob: 0.3,
            dropout_prob: 0.2,
            learning_rate: 0.001,
            weight_decay: 2e-5,
            batch_size: 256,
            epochs: 30,
            seed: 42,
        }
    }
}

impl AcfConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_layer < 1 {
            return Err(Error::InvalidConfig("acf: hidden_layer must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.noise_prob) || !(0.0..1.0).contains(&self.dropout_prob) {
            return Err(Error::InvalidConfig(
                "acf: dropout probabilities must be in [0, 1)".into(),
            ));
        }
        if self.learning_rate <= 0.0 || self.weight_decay < 0.0 {
            return Err(Error::InvalidConfig(
                "acf: learning_rate must be > 0 and weight_decay >= 0".into(),
            ));
        }
        if self.batch_size < 1 || self.epochs < 1 {
            return Err(Error::InvalidConfig(
                "acf: batch_size and epochs must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Encoder (items -> bottleneck, ReLU) and mirrored decoder (bottleneck ->
/// items, sigmoid). Kept as layer lists so deeper mirrored stacks would load
/// through the same path.
#[derive(Debug, Clone, PartialEq)]
pub struct AcfModel {
    pub encoder: Vec<DenseLayer>,
    pub decoder: Vec<DenseLayer>,
}

impl AcfModel {
    pub fn new(n_items: usize, hidden: usize, seed: u64) -> Result<Self> {
        if n_items < hidden {
            return Err(Error::InvalidConfig(format!(
                "acf: hidden width {hidden} exceeds item count {n_items}"
            )));
        }
        Ok(AcfModel {
            encoder: vec![DenseLayer::new(
                xavier_init(n_items, hidden, seed),
                vec![0.0; hidden],
                Activation::Relu,
            )?],
            decoder: vec![DenseLayer::new(
                xavier_init(hidden, n_items, seed.wrapping_add(1)),
                vec![0.0; n_items],
                Activation::Sigmoid,
            )?],
        })
    }

    pub fn n_items(&self) -> usize {
        self.encoder[0].input_width()
    }

    fn stack(&self) -> Vec<DenseLayer> {
        self.encoder.iter().chain(self.decoder.iter()).cloned().collect()
    }

    /// Sum of squares over every weight and bias of one parameter set.
    fn squared_norm(layers: &[DenseLayer]) -> f64 {
        layers
            .iter()
            .map(|l| {
                l.weight.as_slice().iter().map(|v| v * v).sum::<f64>()
                    + l.bias.iter().map(|v| v * v).sum::<f64>()
            })
            .sum()
    }

    /// Inference-mode reconstruction restricted to the candidate indices.
    pub fn score_user(&self, x_u: &[f64], candidates: &[u32]) -> Result<Vec<f64>> {
        let recon = forward_user(self, x_u, &AcfMode::Inference)?;
        candidates
            .iter()
            .map(|&i| {
                recon
                    .get(i as usize)
                    .copied()
                    .ok_or(Error::IndexOutOfRange {
                        what: "item",
                        index: i as usize,
                        bound: recon.len(),
                    })
            })
            .collect()
    }
}

/// Dropout configuration for one pass: train mode draws both masks from the
/// seed, inference applies none.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AcfMode {
    Train {
        noise_prob: f64,
        dropout_prob: f64,
        seed: u64,
    },
    Inference,
}

fn dropout_specs(model: &AcfModel, mode: &AcfMode) -> Option<Vec<DropoutSpec>> {
    match mode {
        AcfMode::Inference => None,
        AcfMode::Train {
            noise_prob,
            dropout_prob,
            ..
        } => {
            let mut specs = Vec::new();
            for (l, _) in model.encoder.iter().enumerate() {
                // Input noise applies to the encoder input only.
                specs.push(if l == 0 {
                    DropoutSpec::train(*noise_prob)
                } else {
                    DropoutSpec::train(0.0)
                });
            }
            for (l, _) in model.decoder.iter().enumerate() {
                // Bottleneck dropout applies to the decoder input.
                specs.push(if l == 0 {
                    DropoutSpec::train(*dropout_prob)
                } else {
                    DropoutSpec::train(0.0)
                });
            }
            Some(specs)
        }
    }
}

fn mode_seed(mode: &AcfMode) -> u64 {
    match mode {
        AcfMode::Inference => 0,
        AcfMode::Train { seed, .. } => *seed,
    }
}

/// Runs a batch of user vectors (rows of `x`) through the autoencoder.
pub fn forward_batch(model: &AcfModel, x: &Matrix2D, mode: &AcfMode) -> Result<Matrix2D> {
    let layers = model.stack();
    let specs = dropout_specs(model, mode);
    let (out, _) = forward(&layers, x, specs.as_deref(), mode_seed(mode))?;
    Ok(out)
}

/// Reconstruction probabilities for one user vector.
pub fn forward_user(model: &AcfModel, x_u: &[f64], mode: &AcfMode) -> Result<Vec<f64>> {
    if x_u.len() != model.n_items() {
        return Err(Error::ShapeMismatch {
            context: "acf input",
            got: format!("{}", x_u.len()),
            expected: format!("{}", model.n_items()),
        });
    }
    let x = Matrix2D::from_vec(1, x_u.len(), x_u.to_vec())?;
    Ok(forward_batch(model, &x, mode)?.as_slice().to_vec())
}

/// Negative log-likelihood of one user: binary cross-entropy summed over
/// items plus weight decay on both parameter sets.
pub fn acf_loss(x_u: &[f64], reconstruction: &[f64], model: &AcfModel, weight_decay: f64) -> f64 {
    debug_assert_eq!(x_u.len(), reconstruction.len());
    let bce: f64 = x_u
        .iter()
        .zip(reconstruction.iter())
        .map(|(&x, &r)| {
            let r = r.clamp(CLAMP, 1.0 - CLAMP);
            -(x * r.ln() + (1.0 - x) * (1.0 - r).ln())
        })
        .sum();
    bce + weight_decay * (AcfModel::squared_norm(&model.encoder) + AcfModel::squared_norm(&model.decoder))
}

#[derive(Debug, Clone)]
pub struct AcfGradients {
    pub encoder: Vec<LayerGrads>,
    pub decoder: Vec<LayerGrads>,
}

/// Batch objective (mean over users of the per-user summed reconstruction
/// loss, plus the decay term once) and its gradients, decay included.
pub fn batch_loss_and_gradients(
    model: &AcfModel,
    x: &Matrix2D,
    weight_decay: f64,
    mode: &AcfMode,
) -> Result<(f64, AcfGradients)> {
    let layers = model.stack();
    let specs = dropout_specs(model, mode);
    let (recon, tape) = forward(&layers, x, specs.as_deref(), mode_seed(mode))?;

    let b = x.rows() as f64;
    let mut loss = 0.0;
    let mut upstream = Matrix2D::zeros(recon.rows(), recon.cols());
    for (slot, (&r, &xv)) in upstream
        .as_mut_slice()
        .iter_mut()
        .zip(recon.as_slice().iter().zip(x.as_slice().iter()))
    {
        let rc = r.clamp(CLAMP, 1.0 - CLAMP);
        loss -= xv * rc.ln() + (1.0 - xv) * (1.0 - rc).ln();
        *slot = (-xv / rc + (1.0 - xv) / (1.0 - rc)) / b;
    }
    loss /= b;
    loss += weight_decay
        * (AcfModel::squared_norm(&model.encoder) + AcfModel::squared_norm(&model.decoder));

    let grads = backward(&layers, &tape, &upstream)?;
    let n_enc = model.encoder.len();
    let mut encoder = Vec::with_capacity(n_enc);
    let mut decoder = Vec::with_capacity(model.decoder.len());
    for (l, mut grad) in grads.layers.into_iter().enumerate() {
        let layer = &layers[l];
        for (g, w) in grad
            .weight
            .as_mut_slice()
            .iter_mut()
            .zip(layer.weight.as_slice())
        {
            *g += 2.0 * weight_decay * w;
        }
        for (g, bias) in grad.bias.iter_mut().zip(&layer.bias) {
            *g += 2.0 * weight_decay * bias;
        }
        if l < n_enc {
            encoder.push(grad);
        } else {
            decoder.push(grad);
        }
    }
    Ok((loss, AcfGradients { encoder, decoder }))
}

/// Binarized user rows of the training matrix.
pub fn user_vectors(train: &InteractionMatrix, users: &[usize]) -> Matrix2D {
    let mut x = Matrix2D::zeros(users.len(), train.n_items());
    for (slot, &u) in users.iter().enumerate() {
        let row = x.row_mut(slot);
        for &i in train.row(u).0 {
            row[i as usize] = 1.0;
        }
    }
    x
}

/// Xavier-initialized model trained with Adam over batches of user vectors.
/// Returns the model and per-epoch mean loss.
pub fn fit(train: &InteractionMatrix, cfg: &AcfConfig) -> Result<(AcfModel, Vec<f64>)> {
    cfg.validate()?;
    let mut model = AcfModel::new(train.n_items(), cfg.hidden_layer, cfg.seed)?;
    let mut opts: Vec<(AdamState, AdamState)> = model
        .encoder
        .iter()
        .chain(model.decoder.iter())
        .map(|l| {
            (
                AdamState::new(l.weight.as_slice().len(), cfg.learning_rate),
                AdamState::new(l.bias.len(), cfg.learning_rate),
            )
        })
        .collect();

    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..train.n_users()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(10_000 + epoch as u64));
        order.shuffle(&mut rng);

        let mut epoch_loss = 0.0;
        let mut seen = 0usize;
        for (batch_idx, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let x = user_vectors(train, chunk);
            let mode = AcfMode::Train {
                noise_prob: cfg.noise_prob,
                dropout_prob: cfg.dropout_prob,
                seed: cfg
                    .seed
                    .wrapping_add(((epoch as u64) << 20) | batch_idx as u64),
            };
            let (loss, grads) = batch_loss_and_gradients(&model, &x, cfg.weight_decay, &mode)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite {
                    context: "acf batch loss",
                });
            }
            epoch_loss += loss * chunk.len() as f64;
            seen += chunk.len();
            let all_grads = grads.encoder.iter().chain(grads.decoder.iter());
            for ((layer, grad), (w_state, b_state)) in model
                .encoder
                .iter_mut()
                .chain(model.decoder.iter_mut())
                .zip(all_grads)
                .zip(opts.iter_mut())
            {
                w_state.step(layer.weight.as_mut_slice(), grad.weight.as_slice())?;
                b_state.step(&mut layer.bias, &grad.bias)?;
            }
        }
        trace.push(epoch_loss / seen as f64);
    }
    Ok((model, trace))
}

#[derive(Debug, Serialize, Deserialize)]
struct AcfManifest {
    n_items: usize,
    hidden_layer: usize,
}

/// `acf.json` records the item universe so serving can validate dimensions;
/// `weights.bin` holds encoder then decoder layers, weights then bias each.
pub fn save_model(dir: &Path, model: &AcfModel) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let manifest = AcfManifest {
        n_items: model.n_items(),
        hidden_layer: model.encoder[0].output_width(),
    };
    io::write_json_file(&dir.join("acf.json"), &manifest)?;
    let mut values = Vec::new();
    for layer in model.encoder.iter().chain(model.decoder.iter()) {
        values.extend_from_slice(layer.weight.as_slice());
        values.extend_from_slice(&layer.bias);
    }
    io::write_f64_file(&dir.join("weights.bin"), &values)
}

pub fn load_model(dir: &Path) -> Result<AcfModel> {
    let m: AcfManifest = io::read_json_file(&dir.join("acf.json"))?;
    let (n, h) = (m.n_items, m.hidden_layer);
    let total = n * h + h + h * n + n;
    let values = io::read_f64_file(&dir.join("weights.bin"), total)?;
    let mut offset = 0usize;
    let enc_w = Matrix2D::from_vec(n, h, values[offset..offset + n * h].to_vec())?;
    offset += n * h;
    let enc_b = values[offset..offset + h].to_vec();
    offset += h;
    let dec_w = Matrix2D::from_vec(h, n, values[offset..offset + h * n].to_vec())?;
    offset += h * n;
    let dec_b = values[offset..].to_vec();
    Ok(AcfModel {
        encoder: vec![DenseLayer::new(enc_w, enc_b, Activation::Relu)?],
        decoder: vec![DenseLayer::new(dec_w, dec_b, Activation::Sigmoid)?],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{build_matrix, InteractionRecord};
    use crate::neural::bce_loss;

    fn rec(u: u32, i: u32) -> InteractionRecord {
        InteractionRecord {
            user_key: format!("u{u}"),
            item_key: format!("i{i}"),
            count: 1,
            timestamp: None,
        }
    }

    fn small_matrix() -> InteractionMatrix {
        let cells = [(0, 0), (0, 1), (1, 1), (1, 2), (2, 3), (2, 0), (3, 4), (3, 5)];
        build_matrix(&cells.map(|(u, i)| rec(u, i))).unwrap()
    }

    #[test]
    fn default_hyperparameters() {
        let cfg = AcfConfig::default();
        assert_eq!(cfg.hidden_layer, 7);
        assert_eq!(cfg.noise_prob, 0.3);
        assert_eq!(cfg.dropout_prob, 0.2);
        assert_eq!(cfg.learning_rate, 0.001);
        assert_eq!(cfg.weight_decay, 2e-5);
        assert_eq!(cfg.batch_size, 256);
        assert_eq!(cfg.epochs, 30);
    }

    #[test]
    fn zero_weights_reconstruct_half() {
        let mut model = AcfModel::new(5, 2, 1).unwrap();
        for layer in model.encoder.iter_mut().chain(model.decoder.iter_mut()) {
            for v in layer.weight.as_mut_slice() {
                *v = 0.0;
            }
        }
        let x = vec![1.0, 0.0, 1.0, 0.0, 0.0];
        let recon = forward_user(&model, &x, &AcfMode::Inference).unwrap();
        assert!(recon.iter().all(|&r| r == 0.5));
    }

    #[test]
    fn inference_is_deterministic() {
        let model = AcfModel::new(6, 3, 2).unwrap();
        let x = vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0];
        let a = forward_user(&model, &x, &AcfMode::Inference).unwrap();
        let b = forward_user(&model, &x, &AcfMode::Inference).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn noise_zeroes_the_configured_fraction() {
        // Identity encoder (hidden = N, ReLU passes the nonnegative inputs)
        // and identity sigmoid decoder: a zeroed input coordinate shows up as
        // an output of exactly 0.5.
        let n = 10;
        let mut model = AcfModel::new(n, n, 3).unwrap();
        for layer in model.encoder.iter_mut().chain(model.decoder.iter_mut()) {
            for v in layer.weight.as_mut_slice() {
                *v = 0.0;
            }
            for d in 0..n {
                layer.weight.set(d, d, 1.0);
            }
        }
        let x = vec![1.0; n];
        let mut zeroed = 0usize;
        let draws = 10_000;
        for seed in 0..draws {
            let recon = forward_user(
                &model,
                &x,
                &AcfMode::Train {
                    noise_prob: 0.3,
                    dropout_prob: 0.0,
                    seed,
                },
            )
            .unwrap();
            zeroed += recon.iter().filter(|&&r| r == 0.5).count();
        }
        let fraction = zeroed as f64 / (draws * n as u64) as f64;
        assert!((fraction - 0.3).abs() < 0.02, "fraction {fraction}");
    }

    #[test]
    fn loss_of_uniform_half_is_n_ln2_plus_decay() {
        let model = AcfModel::new(4, 2, 5).unwrap();
        let x = vec![1.0, 0.0, 0.0, 1.0];
        let recon = vec![0.5; 4];
        let wd = 0.01;
        let decay = wd
            * (AcfModel::squared_norm(&model.encoder) + AcfModel::squared_norm(&model.decoder));
        let loss = acf_loss(&x, &recon, &model, wd);
        assert!((loss - (4.0 * std::f64::consts::LN_2 + decay)).abs() < 1e-12);
    }

    #[test]
    fn perfect_reconstruction_leaves_decay_only() {
        let model = AcfModel::new(3, 1, 6).unwrap();
        let x = vec![1.0, 0.0, 1.0];
        let wd = 0.02;
        let decay = wd
            * (AcfModel::squared_norm(&model.encoder) + AcfModel::squared_norm(&model.decoder));
        let loss = acf_loss(&x, &x, &model, wd);
        assert!((loss - decay).abs() < 1e-9);
    }

    #[test]
    fn loss_matches_mean_bce_summed_over_items() {
        // Cross-check against the shared bce_loss: summed (not averaged)
        // over items plus decay.
        let model = AcfModel::new(5, 2, 7).unwrap();
        let x = vec![1.0, 0.0, 1.0, 0.0, 0.0];
        let recon = forward_user(&model, &x, &AcfMode::Inference).unwrap();
        let wd = 3e-4;
        let (mean_bce, _) = bce_loss(&recon, &x).unwrap();
        let decay = wd
            * (AcfModel::squared_norm(&model.encoder) + AcfModel::squared_norm(&model.decoder));
        let expected = mean_bce * 5.0 + decay;
        assert!((acf_loss(&x, &recon, &model, wd) - expected).abs() < 1e-10);
    }

    #[test]
    fn weight_decay_strictly_increases_loss() {
        let model = AcfModel::new(4, 2, 8).unwrap();
        let x = vec![1.0, 1.0, 0.0, 0.0];
        let recon = forward_user(&model, &x, &AcfMode::Inference).unwrap();
        assert!(acf_loss(&x, &recon, &model, 1e-3) > acf_loss(&x, &recon, &model, 0.0));
    }

    #[test]
    fn zero_dropout_train_equals_inference() {
        let model = AcfModel::new(6, 2, 9).unwrap();
        let x = vec![0.0, 1.0, 1.0, 0.0, 1.0, 0.0];
        let train = forward_user(
            &model,
            &x,
            &AcfMode::Train {
                noise_prob: 0.0,
                dropout_prob: 0.0,
                seed: 123,
            },
        )
        .unwrap();
        let infer = forward_user(&model, &x, &AcfMode::Inference).unwrap();
        assert_eq!(train, infer);
    }

    #[test]
    fn gradients_match_finite_differences() {
        // Tiny N=6, hidden=2 instance with dropout active under a fixed mask
        // seed and weight decay on.
        let mut model = AcfModel::new(6, 2, 10).unwrap();
        let x = user_vectors(&small_matrix(), &[0, 1, 2]);
        let x = {
            // Restrict to 6 columns (small_matrix has 6 items).
            assert_eq!(x.cols(), 6);
            x
        };
        let wd = 1e-3;
        let mode = AcfMode::Train {
            noise_prob: 0.25,
            dropout_prob: 0.2,
            seed: 99,
        };
        let (_, grads) = batch_loss_and_gradients(&model, &x, wd, &mode).unwrap();
        let analytic: Vec<f64> = grads
            .encoder
            .iter()
            .chain(grads.decoder.iter())
            .flat_map(|g| {
                g.weight
                    .as_slice()
                    .iter()
                    .chain(g.bias.iter())
                    .copied()
                    .collect::<Vec<_>>()
            })
            .collect();

        let flatten = |m: &AcfModel| -> Vec<f64> {
            m.encoder
                .iter()
                .chain(m.decoder.iter())
                .flat_map(|l| {
                    l.weight
                        .as_slice()
                        .iter()
                        .chain(l.bias.iter())
                        .copied()
                        .collect::<Vec<_>>()
                })
                .collect()
        };
        let write = |m: &mut AcfModel, flat: &[f64]| {
            let mut offset = 0;
            for l in m.encoder.iter_mut().chain(m.decoder.iter_mut()) {
                let nw = l.weight.as_slice().len();
                l.weight.as_mut_slice().copy_from_slice(&flat[offset..offset + nw]);
                offset += nw;
                let nb = l.bias.len();
                l.bias.copy_from_slice(&flat[offset..offset + nb]);
                offset += nb;
            }
        };

        let base = flatten(&model);
        let h = 1e-6;
        for p in 0..base.len() {
            let mut plus = base.clone();
            plus[p] += h;
            write(&mut model, &plus);
            let (up, _) = batch_loss_and_gradients(&model, &x, wd, &mode).unwrap();
            let mut minus = base.clone();
            minus[p] -= h;
            write(&mut model, &minus);
            let (down, _) = batch_loss_and_gradients(&model, &x, wd, &mode).unwrap();
            let fd = (up - down) / (2.0 * h);
            let denom = analytic[p].abs().max(fd.abs()).max(1e-3);
            assert!(
                (analytic[p] - fd).abs() / denom < 1e-4,
                "param {p}: {} vs {fd}",
                analytic[p]
            );
        }
        write(&mut model, &base);
    }

    #[test]
    fn training_reduces_loss_on_planted_data() {
        let train = small_matrix();
        let cfg = AcfConfig {
            hidden_layer: 3,
            noise_prob: 0.1,
            dropout_prob: 0.1,
            learning_rate: 0.01,
            weight_decay: 1e-5,
            batch_size: 4,
            epochs: 30,
            seed: 3,
        };
        let (_, trace) = fit(&train, &cfg).unwrap();
        assert_eq!(trace.len(), 30);
        assert!(trace.iter().all(|v| v.is_finite()));
        assert!(trace.last().unwrap() < trace.first().unwrap());
    }

    #[test]
    fn defaults_complete_on_synthetic_data() {
        // 200 users over a modest catalog, default hyperparameters.
        let mut records = Vec::new();
        let mut state = 5u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            state >> 33
        };
        for u in 0..200u32 {
            for _ in 0..3 {
                records.push(rec(u, (next() % 40) as u32));
            }
        }
        let train = build_matrix(&records).unwrap();
        let cfg = AcfConfig {
            epochs: 30,
            ..AcfConfig::default()
        };
        let (model, trace) = fit(&train, &cfg).unwrap();
        assert_eq!(trace.len(), 30);
        assert!(trace.iter().all(|v| v.is_finite()));
        assert!(model
            .encoder
            .iter()
            .chain(model.decoder.iter())
            .all(|l| l.weight.is_finite()));
    }

    #[test]
    fn score_user_slices_the_reconstruction() {
        let train = small_matrix();
        let model = AcfModel::new(train.n_items(), 2, 14).unwrap();
        let x = user_vectors(&train, &[1]);
        let x_row = x.row(0);
        let full = model
            .score_user(x_row, &(0..train.n_items() as u32).collect::<Vec<_>>())
            .unwrap();
        let recon = forward_user(&model, x_row, &AcfMode::Inference).unwrap();
        assert_eq!(full, recon);

        let candidates = vec![3u32, 0, 5];
        let scores = model.score_user(x_row, &candidates).unwrap();
        assert_eq!(scores, vec![recon[3], recon[0], recon[5]]);

        // Permuting candidates permutes scores identically.
        let permuted = model.score_user(x_row, &[5, 3, 0]).unwrap();
        assert_eq!(permuted, vec![recon[5], recon[3], recon[0]]);

        assert!(model.score_user(x_row, &[99]).is_err());
    }

    #[test]
    fn model_round_trip() {
        let model = AcfModel::new(7, 3, 15).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_model(dir.path(), &model).unwrap();
        assert_eq!(load_model(dir.path()).unwrap(), model);
    }
}
