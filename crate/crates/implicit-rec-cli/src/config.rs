//! Run configuration: one JSON file drives every subcommand. Model blocks
//! omit whatever they want; missing fields take the library defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};

use implicit_rec::acf::AcfConfig;
use implicit_rec::als::AlsConfig;
use implicit_rec::bpr::BprConfig;
use implicit_rec::dataset::CsvSchema;
use implicit_rec::ncf::NcfConfig;
use implicit_rec::tune::{ParamPoint, ParamValue};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Als,
    Bpr,
    Ncf,
    Acf,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            ModelKind::Als => "als",
            ModelKind::Bpr => "bpr",
            ModelKind::Ncf => "ncf",
            ModelKind::Acf => "acf",
        };
        f.write_str(name)
    }
}

fn default_n_neg() -> usize {
    100
}

fn default_k() -> usize {
    12
}

fn default_split_seed() -> u64 {
    42
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelKind>,
    /// Negatives sampled per tested user for the leave-one-out split.
    pub n_neg: usize,
    /// Ranking cutoff for evaluation and recommendation.
    pub k: usize,
    pub split_seed: u64,
    pub csv: CsvSchema,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub als: Option<AlsConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bpr: Option<BprConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ncf: Option<NcfConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub acf: Option<AcfConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: None,
            n_neg: default_n_neg(),
            k: default_k(),
            split_seed: default_split_seed(),
            csv: CsvSchema::default(),
            als: None,
            bpr: None,
            ncf: None,
            acf: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<RunConfig, CliError> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::new(1, format!("cannot read config {}: {e}", path.display())))?;
        let config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::new(1, format!("invalid config {}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    /// Exactly one model block may be present, and it must match `model`
    /// when both are given.
    pub fn validate(&self) -> Result<(), CliError> {
        let blocks = [
            (ModelKind::Als, self.als.is_some()),
            (ModelKind::Bpr, self.bpr.is_some()),
            (ModelKind::Ncf, self.ncf.is_some()),
            (ModelKind::Acf, self.acf.is_some()),
        ];
        let present: Vec<ModelKind> = blocks
            .iter()
            .filter(|(_, set)| *set)
            .map(|(kind, _)| *kind)
            .collect();
        if present.len() > 1 {
            return Err(CliError::new(
                1,
                format!("config declares {} model blocks; exactly one is allowed", present.len()),
            ));
        }
        if let (Some(declared), Some(block)) = (self.model, present.first()) {
            if declared != *block {
                return Err(CliError::new(
                    1,
                    format!("config model `{declared}` does not match the `{block}` block"),
                ));
            }
        }
        Ok(())
    }

    /// The model to use: the CLI flag wins, then the config, then the block.
    pub fn resolve_model(&self, flag: Option<ModelKind>) -> Result<ModelKind, CliError> {
        flag.or(self.model)
            .or_else(|| {
                [
                    self.als.is_some().then_some(ModelKind::Als),
                    self.bpr.is_some().then_some(ModelKind::Bpr),
                    self.ncf.is_some().then_some(ModelKind::Ncf),
                    self.acf.is_some().then_some(ModelKind::Acf),
                ]
                .into_iter()
                .flatten()
                .next()
            })
            .ok_or_else(|| {
                CliError::new(1, "no model selected: pass --model or set it in the config".into())
            })
    }

    pub fn als_config(&self) -> AlsConfig {
        self.als.clone().unwrap_or_default()
    }

    pub fn bpr_config(&self) -> BprConfig {
        self.bpr.clone().unwrap_or_default()
    }

    pub fn ncf_config(&self) -> NcfConfig {
        self.ncf.clone().unwrap_or_default()
    }

    pub fn acf_config(&self) -> AcfConfig {
        self.acf.clone().unwrap_or_default()
    }

    /// Applies a tuning point to the selected model's block, so the tuner's
    /// best point round-trips through an ordinary config file.
    pub fn apply_point(&mut self, kind: ModelKind, point: &ParamPoint) -> Result<(), CliError> {
        for (name, value) in point {
            self.apply_param(kind, name, value)?;
        }
        self.model = Some(kind);
        Ok(())
    }

    fn apply_param(
        &mut self,
        kind: ModelKind,
        name: &str,
        value: &ParamValue,
    ) -> Result<(), CliError> {
        let bad = |name: &str| {
            CliError::new(
                1,
                format!("search-space parameter `{name}` does not apply to model `{kind}`"),
            )
        };
        let as_f64 = |v: &ParamValue| v.as_f64().ok_or_else(|| bad(name));
        let as_usize = |v: &ParamValue| {
            v.as_f64()
                .filter(|x| x.fract() == 0.0 && *x >= 1.0)
                .map(|x| x as usize)
                .ok_or_else(|| bad(name))
        };
        match kind {
            ModelKind::Als => {
                let cfg = self.als.get_or_insert_with(AlsConfig::default);
                match name {
                    "k" => cfg.k = as_usize(value)?,
                    "reg" => cfg.reg = as_f64(value)?,
                    "alpha" => cfg.alpha = as_f64(value)?,
                    "epochs" => cfg.epochs = as_usize(value)?,
                    _ => return Err(bad(name)),
                }
            }
            ModelKind::Bpr => {
                let cfg = self.bpr.get_or_insert_with(BprConfig::default);
                match name {
                    "k" => cfg.k = as_usize(value)?,
                    "learning_rate" => cfg.learning_rate = as_f64(value)?,
                    "reg" => cfg.reg = as_f64(value)?,
                    "epochs" => cfg.epochs = as_usize(value)?,
                    "batch_size" => cfg.batch_size = as_usize(value)?,
                    _ => return Err(bad(name)),
                }
            }
            ModelKind::Ncf => {
                let cfg = self.ncf.get_or_insert_with(NcfConfig::default);
                match name {
                    "n_factors" => cfg.n_factors = as_usize(value)?,
                    "learning_rate" => cfg.learning_rate = as_f64(value)?,
                    "epochs" => cfg.epochs = as_usize(value)?,
                    "batch_size" => cfg.batch_size = as_usize(value)?,
                    "neg_ratio" => cfg.neg_ratio = as_usize(value)?,
                    _ => return Err(bad(name)),
                }
            }
            ModelKind::Acf => {
                let cfg = self.acf.get_or_insert_with(AcfConfig::default);
                match name {
                    "hidden_layer" => cfg.hidden_layer = as_usize(value)?,
                    "noise_prob" => cfg.noise_prob = as_f64(value)?,
                    "dropout_prob" => cfg.dropout_prob = as_f64(value)?,
                    "learning_rate" => cfg.learning_rate = as_f64(value)?,
                    "weight_decay" => cfg.weight_decay = as_f64(value)?,
                    "batch_size" => cfg.batch_size = as_usize(value)?,
                    "epochs" => cfg.epochs = as_usize(value)?,
                    _ => return Err(bad(name)),
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_published_hyperparameters() {
        // Field-for-field table of the four models' default blocks.
        let config = RunConfig::default();
        assert_eq!(config.n_neg, 100);
        assert_eq!(config.k, 12);

        let als = config.als_config();
        assert_eq!(
            (als.k, als.reg, als.alpha, als.epochs),
            (200, 1e-4, 15.0, 30)
        );

        let bpr = config.bpr_config();
        assert_eq!(
            (bpr.k, bpr.learning_rate, bpr.reg, bpr.epochs, bpr.batch_size),
            (200, 0.01, 1e-4, 200, 512)
        );

        let ncf = config.ncf_config();
        assert_eq!(ncf.n_factors, 16);
        assert_eq!(ncf.layer_sizes, vec![64, 32, 16]);
        assert_eq!(
            (ncf.epochs, ncf.learning_rate, ncf.batch_size, ncf.neg_ratio),
            (50, 0.001, 256, 4)
        );

        let acf = config.acf_config();
        assert_eq!(acf.hidden_layer, 7);
        assert_eq!(acf.noise_prob, 0.3);
        assert_eq!(acf.dropout_prob, 0.2);
        assert_eq!(acf.learning_rate, 0.001);
        assert_eq!(acf.weight_decay, 2e-5);
        assert_eq!((acf.batch_size, acf.epochs), (256, 30));
    }

    #[test]
    fn two_model_blocks_rejected() {
        let config: RunConfig = serde_json::from_str(
            r#"{"model":"als","als":{"k":8},"bpr":{"k":8}}"#,
        )
        .unwrap();
        assert!(config.validate().is_err());
    }

    #[test]
    fn mismatched_block_rejected() {
        let config: RunConfig =
            serde_json::from_str(r#"{"model":"als","bpr":{"k":8}}"#).unwrap();
        assert!(config.validate().is_err());
    }

    #[test]
    fn partial_block_fills_defaults() {
        let config: RunConfig = serde_json::from_str(r#"{"als":{"k":32}}"#).unwrap();
        config.validate().unwrap();
        let als = config.als_config();
        assert_eq!(als.k, 32);
        assert_eq!(als.alpha, 15.0);
        assert_eq!(config.resolve_model(None).unwrap(), ModelKind::Als);
    }

    #[test]
    fn tuning_point_round_trips() {
        let mut config = RunConfig::default();
        let mut point = ParamPoint::new();
        point.insert("learning_rate".into(), ParamValue::Float(0.005));
        point.insert("n_factors".into(), ParamValue::Int(8));
        config.apply_point(ModelKind::Ncf, &point).unwrap();
        let ncf = config.ncf_config();
        assert_eq!(ncf.learning_rate, 0.005);
        assert_eq!(ncf.n_factors, 8);

        let text = serde_json::to_string(&config).unwrap();
        let reloaded: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(reloaded.ncf_config().n_factors, 8);
        assert_eq!(reloaded.resolve_model(None).unwrap(), ModelKind::Ncf);
    }

    #[test]
    fn unknown_parameter_is_rejected() {
        let mut config = RunConfig::default();
        let mut point = ParamPoint::new();
        point.insert("bogus".into(), ParamValue::Float(1.0));
        assert!(config.apply_point(ModelKind::Als, &point).is_err());
    }
}
