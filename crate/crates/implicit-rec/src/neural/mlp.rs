//! Dense layer stack: forward pass with an autodiff tape, reverse pass,
//! inverted dropout.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::matrix::Matrix2D;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(&self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => sigmoid(z),
            Activation::Identity => z,
        }
    }

    /// Derivative as a function of the pre-activation.
    #[inline]
    fn derivative(&self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => {
                let s = sigmoid(z);
                s * (1.0 - s)
            }
            Activation::Identity => 1.0,
        }
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// One affine layer: `activation(x W + b)` with `weight` stored input x output.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weight: Matrix2D,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn new(weight: Matrix2D, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if bias.len() != weight.cols() {
            return Err(Error::ShapeMismatch {
                context: "DenseLayer bias",
                got: format!("{}", bias.len()),
                expected: format!("{}", weight.cols()),
            });
        }
        Ok(DenseLayer {
            weight,
            bias,
            activation,
        })
    }

    pub fn input_width(&self) -> usize {
        self.weight.rows()
    }

    pub fn output_width(&self) -> usize {
        self.weight.cols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DropoutMode {
    Train,
    Inference,
}

/// Inverted dropout: kept units are scaled by 1/(1-p) at train time so the
/// inference pass applies no correction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DropoutSpec {
    pub probability: f64,
    pub mode: DropoutMode,
}

impl DropoutSpec {
    pub fn train(probability: f64) -> Self {
        DropoutSpec {
            probability,
            mode: DropoutMode::Train,
        }
    }

    pub fn inference() -> Self {
        DropoutSpec {
            probability: 0.0,
            mode: DropoutMode::Inference,
        }
    }

    fn is_active(&self) -> bool {
        self.mode == DropoutMode::Train && self.probability > 0.0
    }
}

struct LayerTrace {
    /// Layer input after dropout masking; what the affine transform consumed.
    input: Matrix2D,
    preact: Matrix2D,
    /// Per-element mask scale (0 or 1/(1-p)); None when dropout was inactive.
    mask: Option<Matrix2D>,
}

/// Cached pre-activations and masked inputs from one forward pass.
pub struct ForwardTape {
    layers: Vec<LayerTrace>,
}

/// Runs the stack on a batch (`x` is batch x input_width). `dropout[l]`, when
/// present, masks the input of layer `l` before its affine transform.
pub fn forward(
    layers: &[DenseLayer],
    x: &Matrix2D,
    dropout: Option<&[DropoutSpec]>,
    seed: u64,
) -> Result<(Matrix2D, ForwardTape)> {
    if let Some(specs) = dropout {
        if specs.len() != layers.len() {
            return Err(Error::ShapeMismatch {
                context: "dropout specs",
                got: format!("{}", specs.len()),
                expected: format!("{}", layers.len()),
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut traces = Vec::with_capacity(layers.len());
    let mut current = x.clone();
    for (l, layer) in layers.iter().enumerate() {
        if current.cols() != layer.input_width() {
            return Err(Error::ShapeMismatch {
                context: "layer input width",
                got: format!("{}", current.cols()),
                expected: format!("{}", layer.input_width()),
            });
        }
        let mask = match dropout.and_then(|d| d.get(l)) {
            Some(spec) if spec.is_active() => {
                let scale = 1.0 / (1.0 - spec.probability);
                let mut mask = Matrix2D::zeros(current.rows(), current.cols());
                for v in mask.as_mut_slice() {
                    if rng.gen::<f64>() >= spec.probability {
                        *v = scale;
                    }
                }
                for (c, m) in current.as_mut_slice().iter_mut().zip(mask.as_slice()) {
                    *c *= m;
                }
                Some(mask)
            }
            _ => None,
        };
        let mut preact = current.matmul(&layer.weight)?;
        for r in 0..preact.rows() {
            for (p, b) in preact.row_mut(r).iter_mut().zip(layer.bias.iter()) {
                *p += b;
            }
        }
        let mut out = preact.clone();
        for v in out.as_mut_slice() {
            *v = layer.activation.apply(*v);
        }
        traces.push(LayerTrace {
            input: current,
            preact,
            mask,
        });
        current = out;
    }
    Ok((current, ForwardTape { layers: traces }))
}

#[derive(Debug, Clone)]
pub struct LayerGrads {
    pub weight: Matrix2D,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct BackwardGrads {
    /// One entry per layer, in the same order as the forward stack.
    pub layers: Vec<LayerGrads>,
    /// Gradient with respect to the stack input (before any dropout mask).
    pub input: Matrix2D,
}

/// Reverse pass. `upstream` is dLoss/dOutput for the final activation,
/// same shape as the forward output.
pub fn backward(
    layers: &[DenseLayer],
    tape: &ForwardTape,
    upstream: &Matrix2D,
) -> Result<BackwardGrads> {
    if tape.layers.len() != layers.len() {
        return Err(Error::ShapeMismatch {
            context: "tape length",
            got: format!("{}", tape.layers.len()),
            expected: format!("{}", layers.len()),
        });
    }
    let last = tape
        .layers
        .last()
        .ok_or(Error::InvalidConfig("empty layer stack".to_string()))?;
    if upstream.rows() != last.preact.rows() || upstream.cols() != last.preact.cols() {
        return Err(Error::ShapeMismatch {
            context: "upstream gradient",
            got: format!("{}x{}", upstream.rows(), upstream.cols()),
            expected: format!("{}x{}", last.preact.rows(), last.preact.cols()),
        });
    }

    let mut grads: Vec<LayerGrads> = Vec::with_capacity(layers.len());
    let mut delta = upstream.clone();
    for (layer, trace) in layers.iter().zip(tape.layers.iter()).rev() {
        // dL/dz = dL/da * a'(z)
        for (d, &z) in delta.as_mut_slice().iter_mut().zip(trace.preact.as_slice()) {
            *d *= layer.activation.derivative(z);
        }
        let weight_grad = trace.input.matmul_at_b(&delta)?;
        let mut bias_grad = vec![0.0; layer.output_width()];
        for r in 0..delta.rows() {
            for (b, d) in bias_grad.iter_mut().zip(delta.row(r)) {
                *b += d;
            }
        }
        let mut input_grad = delta.matmul_a_bt(&layer.weight)?;
        if let Some(mask) = &trace.mask {
            for (g, m) in input_grad.as_mut_slice().iter_mut().zip(mask.as_slice()) {
                *g *= m;
            }
        }
        grads.push(LayerGrads {
            weight: weight_grad,
            bias: bias_grad,
        });
        delta = input_grad;
    }
    grads.reverse();
    Ok(BackwardGrads {
        layers: grads,
        input: delta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::matrix::xavier_init;

    fn identity_layer(n: usize) -> DenseLayer {
        let mut w = Matrix2D::zeros(n, n);
        for i in 0..n {
            w.set(i, i, 1.0);
        }
        DenseLayer::new(w, vec![0.0; n], Activation::Identity).unwrap()
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let layers = vec![identity_layer(3)];
        let x = Matrix2D::from_vec(2, 3, vec![1.0, -2.0, 3.0, 0.5, 0.0, -1.0]).unwrap();
        let (out, _) = forward(&layers, &x, None, 0).unwrap();
        assert_eq!(out, x);
    }

    #[test]
    fn sigmoid_at_zero_is_half() {
        let layers = vec![DenseLayer::new(
            Matrix2D::zeros(4, 2),
            vec![0.0, 0.0],
            Activation::Sigmoid,
        )
        .unwrap()];
        let x = Matrix2D::from_vec(1, 4, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (out, _) = forward(&layers, &x, None, 0).unwrap();
        assert_eq!(out.as_slice(), &[0.5, 0.5]);
    }

    #[test]
    fn forward_matches_naive_reimplementation() {
        // Independent naive forward for a 2-layer net on a random batch.
        let l1 = DenseLayer::new(xavier_init(4, 3, 10), vec![0.1, -0.2, 0.3], Activation::Relu)
            .unwrap();
        let l2 = DenseLayer::new(xavier_init(3, 2, 11), vec![0.05, -0.4], Activation::Sigmoid)
            .unwrap();
        let x = xavier_init(5, 4, 12);
        let (out, _) = forward(&[l1.clone(), l2.clone()], &x, None, 0).unwrap();

        for r in 0..5 {
            let mut h = vec![0.0; 3];
            for j in 0..3 {
                let mut z = l1.bias[j];
                for i in 0..4 {
                    z += x.get(r, i) * l1.weight.get(i, j);
                }
                h[j] = z.max(0.0);
            }
            for j in 0..2 {
                let mut z = l2.bias[j];
                for (i, hv) in h.iter().enumerate() {
                    z += hv * l2.weight.get(i, j);
                }
                let expected = 1.0 / (1.0 + (-z).exp());
                assert!((out.get(r, j) - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let layers = vec![
            DenseLayer::new(xavier_init(3, 4, 1), vec![0.0; 4], Activation::Relu).unwrap(),
            DenseLayer::new(xavier_init(4, 2, 2), vec![0.0; 2], Activation::Sigmoid).unwrap(),
        ];
        let x = xavier_init(3, 3, 3);
        let (_, tape) = forward(&layers, &x, None, 0).unwrap();
        let grads = backward(&layers, &tape, &Matrix2D::zeros(3, 2)).unwrap();
        for lg in &grads.layers {
            assert!(lg.weight.as_slice().iter().all(|&v| v == 0.0));
            assert!(lg.bias.iter().all(|&v| v == 0.0));
        }
        assert!(grads.input.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn inference_mode_is_mask_free_and_deterministic() {
        let layers = vec![
            DenseLayer::new(xavier_init(6, 4, 5), vec![0.0; 4], Activation::Relu).unwrap(),
        ];
        let x = xavier_init(2, 6, 6);
        let specs = vec![DropoutSpec {
            probability: 0.5,
            mode: DropoutMode::Inference,
        }];
        let (a, _) = forward(&layers, &x, Some(&specs), 1).unwrap();
        let (b, _) = forward(&layers, &x, Some(&specs), 2).unwrap();
        let (c, _) = forward(&layers, &x, None, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn inverted_dropout_preserves_expectation() {
        // Mean of masked activations over 10^4 masks within 2% of unmasked.
        let layers = vec![identity_layer(8)];
        let x = Matrix2D::from_vec(1, 8, vec![1.0; 8]).unwrap();
        let spec = vec![DropoutSpec::train(0.3)];
        let mut totals = vec![0.0; 8];
        let n = 10_000;
        for seed in 0..n {
            let (out, _) = forward(&layers, &x, Some(&spec), seed).unwrap();
            for (t, v) in totals.iter_mut().zip(out.as_slice()) {
                *t += v;
            }
        }
        for t in totals {
            let mean = t / n as f64;
            assert!((mean - 1.0).abs() < 0.02, "mean {mean} drifted");
        }
    }

    #[test]
    fn relu_nonnegative_sigmoid_in_open_unit_interval() {
        let relu = vec![
            DenseLayer::new(xavier_init(5, 5, 21), vec![0.0; 5], Activation::Relu).unwrap(),
        ];
        let sig = vec![
            DenseLayer::new(xavier_init(5, 5, 22), vec![0.0; 5], Activation::Sigmoid).unwrap(),
        ];
        let x = xavier_init(7, 5, 23);
        let (r, _) = forward(&relu, &x, None, 0).unwrap();
        assert!(r.as_slice().iter().all(|&v| v >= 0.0));
        let (s, _) = forward(&sig, &x, None, 0).unwrap();
        assert!(s.as_slice().iter().all(|&v| v > 0.0 && v < 1.0));
    }
}
