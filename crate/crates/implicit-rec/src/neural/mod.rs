//! Minimal dense-tensor and reverse-mode differentiation core shared by the
//! neural recommenders: dense layers, activations, inverted dropout, Xavier
//! initialization, binary cross-entropy, and Adam.

mod adam;
mod loss;
mod matrix;
mod mlp;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use adam::{AdamState, RowAdamState, DEFAULT_BETA1, DEFAULT_BETA2, DEFAULT_EPSILON};
pub use loss::{bce_loss, CLAMP};
pub use matrix::{dot, gaussian_init, xavier_init, Matrix2D};
pub use mlp::{
    backward, forward, sigmoid, Activation, BackwardGrads, DenseLayer, DropoutMode, DropoutSpec,
    ForwardTape, LayerGrads,
};

use crate::error::{Error, Result};
use crate::io;

#[derive(Debug, Serialize, Deserialize)]
struct LayerManifest {
    rows: usize,
    cols: usize,
    activation: Activation,
}

#[derive(Debug, Serialize, Deserialize)]
struct StackManifest {
    layers: Vec<LayerManifest>,
}

/// Saves a dense stack as `weights.json` (shapes and activations) plus
/// `weights.bin` (little-endian f64: each layer's weights row-major, then its
/// bias, in manifest order).
pub fn save_stack(dir: &Path, layers: &[DenseLayer]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let manifest = StackManifest {
        layers: layers
            .iter()
            .map(|l| LayerManifest {
                rows: l.weight.rows(),
                cols: l.weight.cols(),
                activation: l.activation,
            })
            .collect(),
    };
    io::write_json_file(&dir.join("weights.json"), &manifest)?;
    let mut values = Vec::new();
    for layer in layers {
        values.extend_from_slice(layer.weight.as_slice());
        values.extend_from_slice(&layer.bias);
    }
    io::write_f64_file(&dir.join("weights.bin"), &values)
}

pub fn load_stack(dir: &Path) -> Result<Vec<DenseLayer>> {
    let manifest: StackManifest = io::read_json_file(&dir.join("weights.json"))?;
    let total: usize = manifest
        .layers
        .iter()
        .map(|l| l.rows * l.cols + l.cols)
        .sum();
    let values = io::read_f64_file(&dir.join("weights.bin"), total)?;
    let mut layers = Vec::with_capacity(manifest.layers.len());
    let mut offset = 0;
    for spec in &manifest.layers {
        let n_weights = spec.rows * spec.cols;
        let weight =
            Matrix2D::from_vec(spec.rows, spec.cols, values[offset..offset + n_weights].to_vec())?;
        offset += n_weights;
        let bias = values[offset..offset + spec.cols].to_vec();
        offset += spec.cols;
        layers.push(DenseLayer::new(weight, bias, spec.activation)?);
    }
    Ok(layers)
}

#[cfg(test)]
mod stack_io_tests {
    use super::*;

    #[test]
    fn stack_round_trip() {
        let layers = vec![
            DenseLayer::new(xavier_init(4, 3, 1), vec![0.5, -0.5, 0.25], Activation::Relu)
                .unwrap(),
            DenseLayer::new(xavier_init(3, 1, 2), vec![0.0], Activation::Sigmoid).unwrap(),
        ];
        let dir = tempfile::tempdir().unwrap();
        save_stack(dir.path(), &layers).unwrap();
        let loaded = load_stack(dir.path()).unwrap();
        assert_eq!(layers, loaded);
    }
}
