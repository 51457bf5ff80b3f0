//! Declarative run configuration: a single TOML file names the data, the
//! model, prior and sampler settings, and the output directory. The schema is
//! strict — unknown keys anywhere are rejected before any computation starts.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    BasisConfig, CategoricalSpec, CovariateSpec, HyperDefaults, ModelSpec, SamplerConfig,
};

fn default_elicitation_draws() -> usize {
    100_000
}

/// The `[model]` table: response column, quantile levels, covariates (as
/// `[[model.covariate]]` entries), categorical mandatory terms, and the
/// spline basis layout.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub response: String,
    pub quantiles: Vec<f64>,
    #[serde(default, rename = "covariate")]
    pub covariates: Vec<CovariateSpec>,
    #[serde(default, rename = "categorical")]
    pub categoricals: Vec<CategoricalSpec>,
    #[serde(default)]
    pub basis: BasisConfig,
}

/// A full run configuration. `data` and `output` are resolved against the
/// config file's directory when loaded from disk.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: PathBuf,
    pub output: PathBuf,
    pub model: ModelSection,
    #[serde(default)]
    pub hyper: HyperDefaults,
    #[serde(default)]
    pub sampler: SamplerConfig,
    /// Monte Carlo sample size for prior elicitation.
    #[serde(default = "default_elicitation_draws")]
    pub elicitation_draws: usize,
}

impl RunConfig {
    /// Parse and validate a configuration from TOML text.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.to_model_spec()?;
        Ok(cfg)
    }

    /// Load from a file, resolving relative `data`/`output` paths against the
    /// file's directory.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| crate::error::Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        if let Some(dir) = path.parent() {
            if cfg.data.is_relative() {
                cfg.data = dir.join(&cfg.data);
            }
            if cfg.output.is_relative() {
                cfg.output = dir.join(&cfg.output);
            }
        }
        Ok(cfg)
    }

    /// Assemble the model specification and run every validation on it.
    pub fn to_model_spec(&self) -> Result<ModelSpec> {
        let spec = ModelSpec {
            response: self.model.response.clone(),
            covariates: self.model.covariates.clone(),
            categoricals: self.model.categoricals.clone(),
            quantiles: self.model.quantiles.clone(),
            basis: self.model.basis,
            hyper: self.hyper,
            sampler: self.sampler,
        };
        spec.validate()?;
        Ok(spec)
    }
}
