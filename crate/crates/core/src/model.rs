//! Fitted model parameters and their on-disk JSON form.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::corpus::ResponseTransform;
use crate::error::{Error, Result};
use crate::family::{FamilyKind, GlmParams, PoissonDispersion, PoissonLogNormalizer, ResponseFamily};

pub const MODEL_FORMAT_VERSION: u64 = 1;

/// Topic log-probabilities are floored here when used during inference, so
/// a term unseen under some topic still yields finite logits.
pub const LOG_BETA_FLOOR: f64 = -27.631_021_115_928_547; // ln(1e-12)

/// α, β₁:K, η, δ and the response family.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// Symmetric Dirichlet parameter (per component).
    pub alpha: f64,
    /// K × V matrix of ln β.
    pub log_beta: Array2<f64>,
    pub glm: GlmParams,
    pub family: ResponseFamily,
    /// Transform that was applied to the training responses.
    pub transform: ResponseTransform,
}

impl ModelParams {
    pub fn num_topics(&self) -> usize {
        self.log_beta.nrows()
    }

    pub fn vocab_size(&self) -> usize {
        self.log_beta.ncols()
    }

    pub fn beta(&self) -> Array2<f64> {
        self.log_beta.mapv(f64::exp)
    }

    pub fn eta(&self) -> ArrayView1<'_, f64> {
        self.glm.eta.view()
    }

    /// Floored ln β_{k,w} for inference.
    #[inline]
    pub(crate) fn log_beta_at(&self, k: usize, w: usize) -> f64 {
        self.log_beta[[k, w]].max(LOG_BETA_FLOOR)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.num_topics();
        if k == 0 || self.vocab_size() == 0 {
            return Err(Error::ModelSchema("K and V must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::ModelSchema(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.glm.delta > 0.0 && self.glm.delta.is_finite()) {
            return Err(Error::ModelSchema(format!("delta must be positive, got {}", self.glm.delta)));
        }
        if self.glm.eta.len() != k {
            return Err(Error::ModelSchema(format!("eta has {} entries, expected {k}", self.glm.eta.len())));
        }
        if self.glm.eta.iter().chain(self.log_beta.iter()).any(|v| !v.is_finite()) {
            return Err(Error::ModelSchema("non-finite parameter".into()));
        }
        Ok(())
    }

    /// Serializes to the versioned JSON model format.
    pub fn to_json(&self) -> String {
        let file = ModelFile {
            version: MODEL_FORMAT_VERSION,
            family: self.family.kind,
            modes: Modes {
                poisson_lognorm: self.family.poisson_lognorm,
                poisson_dispersion: self.family.poisson_dispersion,
            },
            transform: self.transform,
            k: self.num_topics(),
            v: self.vocab_size(),
            alpha: self.alpha,
            eta: self.glm.eta.to_vec(),
            delta: self.glm.delta,
            log_beta: self.log_beta.rows().into_iter().map(|r| r.to_vec()).collect(),
        };
        let mut s = serde_json::to_string_pretty(&file).expect("model serialization cannot fail");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| Error::ModelSchema(e.to_string()))?;
        let found = value
            .get("version")
            .ok_or_else(|| Error::ModelSchema("missing field `version`".into()))?
            .as_u64()
            .ok_or_else(|| Error::ModelSchema("`version` must be an unsigned integer".into()))?;
        if found != MODEL_FORMAT_VERSION {
            return Err(Error::ModelVersion {
                found,
                expected: MODEL_FORMAT_VERSION,
            });
        }
        let file: ModelFile = serde_json::from_value(value).map_err(|e| Error::ModelSchema(e.to_string()))?;
        if file.log_beta.len() != file.k || file.log_beta.iter().any(|r| r.len() != file.v) {
            return Err(Error::ModelSchema(format!("log_beta must be {} x {}", file.k, file.v)));
        }
        let flat: Vec<f64> = file.log_beta.into_iter().flatten().collect();
        let log_beta = Array2::from_shape_vec((file.k, file.v), flat).map_err(|e| Error::ModelSchema(e.to_string()))?;
        let model = ModelParams {
            alpha: file.alpha,
            log_beta,
            glm: GlmParams {
                eta: Array1::from(file.eta),
                delta: file.delta,
            },
            family: ResponseFamily {
                kind: file.family,
                poisson_dispersion: file.modes.poisson_dispersion,
                poisson_lognorm: file.modes.poisson_lognorm,
            },
            transform: file.transform,
        };
        model.validate()?;
        Ok(model)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Modes {
    poisson_lognorm: PoissonLogNormalizer,
    poisson_dispersion: PoissonDispersion,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    version: u64,
    family: FamilyKind,
    modes: Modes,
    transform: ResponseTransform,
    #[serde(rename = "K")]
    k: usize,
    #[serde(rename = "V")]
    v: usize,
    alpha: f64,
    eta: Vec<f64>,
    delta: f64,
    log_beta: Vec<Vec<f64>>,
}

pub fn save_model(model: &ModelParams, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, model.to_json())?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelParams> {
    ModelParams::from_json(&fs::read_to_string(path)?)
}
