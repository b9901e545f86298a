//! Hyperparameter search space and its unit-hypercube encoding.

use std::collections::BTreeMap;

use rand::Rng;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ParamKind {
    /// Log-scale continuous parameter (bounds strictly positive).
    Log { low: f64, high: f64 },
    Linear { low: f64, high: f64 },
    Int { low: i64, high: i64 },
    Categorical { choices: Vec<String> },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: ParamKind,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SearchSpace {
    pub params: Vec<ParamSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum ParamValue {
    Int(i64),
    Float(f64),
    Categorical(String),
}

impl ParamValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            ParamValue::Float(v) => Some(*v),
            ParamValue::Int(v) => Some(*v as f64),
            ParamValue::Categorical(_) => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            ParamValue::Int(v) => Some(*v),
            _ => None,
        }
    }
}

/// One assignment of every parameter, keyed by name.
pub type ParamPoint = BTreeMap<String, ParamValue>;

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        if self.params.is_empty() {
            return Err(Error::InvalidConfig("search space has no parameters".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for spec in &self.params {
            if spec.name.is_empty() || !seen.insert(&spec.name) {
                return Err(Error::InvalidConfig(format!(
                    "duplicate or empty parameter name `{}`",
                    spec.name
                )));
            }
            match &spec.kind {
                ParamKind::Log { low, high } => {
                    if !(low.is_finite() && high.is_finite() && *low > 0.0 && low < high) {
                        return Err(Error::InvalidConfig(format!(
                            "log parameter `{}` needs 0 < low < high",
                            spec.name
                        )));
                    }
                }
                ParamKind::Linear { low, high } => {
                    if !(low.is_finite() && high.is_finite() && low < high) {
                        return Err(Error::InvalidConfig(format!(
                            "linear parameter `{}` needs low < high",
                            spec.name
                        )));
                    }
                }
                ParamKind::Int { low, high } => {
                    if low >= high {
                        return Err(Error::InvalidConfig(format!(
                            "integer parameter `{}` needs low < high",
                            spec.name
                        )));
                    }
                }
                ParamKind::Categorical { choices } => {
                    if choices.is_empty() {
                        return Err(Error::InvalidConfig(format!(
                            "categorical parameter `{}` has no choices",
                            spec.name
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Hypercube dimensionality: one coordinate per numeric parameter and a
    /// one-hot block per categorical.
    pub fn encoded_dim(&self) -> usize {
        self.params
            .iter()
            .map(|s| match &s.kind {
                ParamKind::Categorical { choices } => choices.len(),
                _ => 1,
            })
            .sum()
    }
}

/// Maps a point into [0,1]^dim: log parameters by log-scale interpolation,
/// linear and integer parameters linearly, categoricals one-hot.
pub fn encode(point: &ParamPoint, space: &SearchSpace) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(space.encoded_dim());
    for spec in &space.params {
        let value = point.get(&spec.name).ok_or_else(|| Error::ParamOutOfBounds {
            name: spec.name.clone(),
        })?;
        match &spec.kind {
            ParamKind::Log { low, high } => {
                let v = value.as_f64().ok_or_else(|| Error::ParamOutOfBounds {
                    name: spec.name.clone(),
                })?;
                if v < *low || v > *high {
                    return Err(Error::ParamOutOfBounds {
                        name: spec.name.clone(),
                    });
                }
                out.push((v.ln() - low.ln()) / (high.ln() - low.ln()));
            }
            ParamKind::Linear { low, high } => {
                let v = value.as_f64().ok_or_else(|| Error::ParamOutOfBounds {
                    name: spec.name.clone(),
                })?;
                if v < *low || v > *high {
                    return Err(Error::ParamOutOfBounds {
                        name: spec.name.clone(),
                    });
                }
                out.push((v - low) / (high - low));
            }
            ParamKind::Int { low, high } => {
                let v = value.as_i64().ok_or_else(|| Error::ParamOutOfBounds {
                    name: spec.name.clone(),
                })?;
                if v < *low || v > *high {
                    return Err(Error::ParamOutOfBounds {
                        name: spec.name.clone(),
                    });
                }
                out.push((v - low) as f64 / (high - low) as f64);
            }
            ParamKind::Categorical { choices } => {
                let chosen = match value {
                    ParamValue::Categorical(c) => choices.iter().position(|x| x == c),
                    _ => None,
                }
                .ok_or_else(|| Error::ParamOutOfBounds {
                    name: spec.name.clone(),
                })?;
                for c in 0..choices.len() {
                    out.push(if c == chosen { 1.0 } else { 0.0 });
                }
            }
        }
    }
    Ok(out)
}

/// Inverse of [`encode`] with integer rounding and categorical argmax.
pub fn decode(x: &[f64], space: &SearchSpace) -> ParamPoint {
    let mut point = ParamPoint::new();
    let mut cursor = 0usize;
    for spec in &space.params {
        match &spec.kind {
            ParamKind::Log { low, high } => {
                let t = x[cursor].clamp(0.0, 1.0);
                cursor += 1;
                let v = (low.ln() + t * (high.ln() - low.ln())).exp();
                point.insert(spec.name.clone(), ParamValue::Float(v.clamp(*low, *high)));
            }
            ParamKind::Linear { low, high } => {
                let t = x[cursor].clamp(0.0, 1.0);
                cursor += 1;
                point.insert(spec.name.clone(), ParamValue::Float(low + t * (high - low)));
            }
            ParamKind::Int { low, high } => {
                let t = x[cursor].clamp(0.0, 1.0);
                cursor += 1;
                let v = low + (t * (high - low) as f64).round() as i64;
                point.insert(spec.name.clone(), ParamValue::Int(v.clamp(*low, *high)));
            }
            ParamKind::Categorical { choices } => {
                let block = &x[cursor..cursor + choices.len()];
                cursor += choices.len();
                let argmax = block
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(b.0.cmp(&a.0)))
                    .map(|(ix, _)| ix)
                    .unwrap_or(0);
                point.insert(
                    spec.name.clone(),
                    ParamValue::Categorical(choices[argmax].clone()),
                );
            }
        }
    }
    point
}

/// Latin hypercube: each dimension's strata are permuted independently and a
/// uniform offset is drawn inside each stratum.
pub fn latin_hypercube(n: usize, dim: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(dim);
    for _ in 0..dim {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(rng);
        columns.push(
            strata
                .into_iter()
                .map(|s| (s as f64 + rng.gen::<f64>()) / n as f64)
                .collect(),
        );
    }
    (0..n)
        .map(|i| columns.iter().map(|c| c[i]).collect())
        .collect()
}
