//! Declarative model assembly: standardization, effect-block construction
//! for selectable and mandatory terms, and predictor evaluation.
//!
//! A model is a response column, a set of covariates each contributing a
//! linear part and/or a smooth deviation as separately selectable blocks,
//! plus mandatory terms (an intercept, always, and optional categorical
//! dummies) that are never subject to selection. Blocks are immutable once
//! built; per-quantile fits clone nothing and share them read-only.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::{self, SplineBasis};
use crate::data::Dataset;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovariateKind {
    /// Linear part plus smooth deviation, each its own block.
    Decomposed,
    LinearOnly,
    NonlinearOnly,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovariateSpec {
    pub name: String,
    #[serde(default = "default_kind")]
    pub kind: CovariateKind,
    #[serde(default = "default_true")]
    pub selectable: bool,
    /// Per-covariate override of the elicitation tail probability.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Per-covariate override of the elicitation effect-size bound.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
}

fn default_kind() -> CovariateKind {
    CovariateKind::Decomposed
}

fn default_true() -> bool {
    true
}

/// Categorical mandatory term: one dummy per level except the reference.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CategoricalSpec {
    pub name: String,
    pub reference: String,
}

/// Prior hyperparameters shared by every selectable block unless overridden
/// by elicitation, plus the diffuse precision for mandatory coefficients.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperDefaults {
    /// Hypervariance shape; the slab keeps heavy tails for small values.
    pub a: f64,
    /// Inclusion-probability Beta prior (a0, b0); (1, 1) is flat.
    pub a0: f64,
    pub b0: f64,
    /// Elicitation tail probability for the slab statement.
    pub alpha: f64,
    /// Elicitation effect-size threshold on the response scale.
    pub c: f64,
    /// Scale-parameter Gamma prior (shape a_delta, rate b_delta).
    pub a_delta: f64,
    pub b_delta: f64,
    /// Precision of the diffuse Gaussian prior on mandatory coefficients.
    pub mandatory_precision: f64,
}

impl Default for HyperDefaults {
    fn default() -> Self {
        HyperDefaults {
            a: 5.0,
            a0: 1.0,
            b0: 1.0,
            alpha: 0.1,
            c: 0.1,
            a_delta: 0.001,
            b_delta: 0.001,
            mandatory_precision: 1e-6,
        }
    }
}

impl HyperDefaults {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("a", self.a),
            ("a0", self.a0),
            ("b0", self.b0),
            ("c", self.c),
            ("a_delta", self.a_delta),
            ("b_delta", self.b_delta),
            ("mandatory_precision", self.mandatory_precision),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("hyper.{name} must be positive, got {v}")));
            }
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!(
                "hyper.alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub chains: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig { iterations: 12_000, burn_in: 2_000, thin: 10, chains: 2, seed: 1 }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations <= self.burn_in {
            return Err(Error::Config(format!(
                "iterations ({}) must exceed burn_in ({})",
                self.iterations, self.burn_in
            )));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be at least 1".to_string()));
        }
        if self.chains == 0 {
            return Err(Error::Config("chains must be at least 1".to_string()));
        }
        Ok(())
    }

    /// Number of draws each chain stores after burn-in and thinning.
    pub fn stored_per_chain(&self) -> usize {
        (self.iterations - self.burn_in).div_ceil(self.thin)
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BasisConfig {
    pub inner_knots: usize,
    pub degree: usize,
}

impl Default for BasisConfig {
    fn default() -> Self {
        BasisConfig { inner_knots: 7, degree: 3 }
    }
}

/// Full declarative description of a fit.
#[derive(Clone, Debug)]
pub struct ModelSpec {
    pub response: String,
    pub covariates: Vec<CovariateSpec>,
    pub categoricals: Vec<CategoricalSpec>,
    pub quantiles: Vec<f64>,
    pub basis: BasisConfig,
    pub hyper: HyperDefaults,
    pub sampler: SamplerConfig,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.response.is_empty() {
            return Err(Error::Config("response column name is empty".to_string()));
        }
        if self.quantiles.is_empty() {
            return Err(Error::Config("at least one quantile level is required".to_string()));
        }
        for w in self.quantiles.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::Config(
                    "quantile levels must be strictly increasing".to_string(),
                ));
            }
        }
        for &t in &self.quantiles {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::Config(format!("quantile level {t} outside (0, 1)")));
            }
        }
        let mut seen = Vec::new();
        for c in &self.covariates {
            if c.name == self.response {
                return Err(Error::Config(format!(
                    "response '{}' also listed as a covariate",
                    c.name
                )));
            }
            if seen.contains(&&c.name) {
                return Err(Error::Config(format!("covariate '{}' listed twice", c.name)));
            }
            if let Some(alpha) = c.alpha {
                if !(alpha > 0.0 && alpha < 1.0) {
                    return Err(Error::Config(format!(
                        "covariate '{}': alpha must lie in (0, 1), got {alpha}",
                        c.name
                    )));
                }
            }
            if let Some(bound) = c.c {
                if !(bound > 0.0) {
                    return Err(Error::Config(format!(
                        "covariate '{}': c must be positive, got {bound}",
                        c.name
                    )));
                }
            }
            seen.push(&c.name);
        }
        for c in &self.categoricals {
            if seen.contains(&&c.name) || c.name == self.response {
                return Err(Error::Config(format!(
                    "categorical term '{}' clashes with another column role",
                    c.name
                )));
            }
            seen.push(&c.name);
        }
        self.hyper.validate()?;
        self.sampler.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EffectPart {
    Linear,
    Nonlinear,
}

impl std::fmt::Display for EffectPart {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EffectPart::Linear => write!(f, "linear"),
            EffectPart::Nonlinear => write!(f, "nonlinear"),
        }
    }
}

/// One selectable (or fixed-in) additive term with its design, penalty and
/// identifiability constraint. Immutable after construction; sampler state
/// lives with the chain that owns it.
#[derive(Clone, Debug)]
pub struct EffectBlock {
    pub id: String,
    pub covariate: String,
    pub part: EffectPart,
    pub selectable: bool,
    pub design: DMatrix<f64>,
    pub penalty: DMatrix<f64>,
    pub penalty_rank: usize,
    /// Columns span the penalty null space (empty for full-rank penalties).
    pub kernel: DMatrix<f64>,
    pub constraint: DMatrix<f64>,
    pub recipe: basis::DesignRecipe,
}

impl EffectBlock {
    pub fn dim(&self) -> usize {
        self.design.ncols()
    }

    /// Design matrix at new standardized points, matching the training
    /// design's columns (effect curves evaluate blocks on a plotting grid).
    pub fn design_at(&self, x_std: &[f64]) -> Result<DMatrix<f64>> {
        self.recipe.design_at(x_std)
    }

    fn from_design(
        covariate: &str,
        part: EffectPart,
        selectable: bool,
        bd: basis::BlockDesign,
    ) -> Self {
        EffectBlock {
            id: format!("{covariate}:{part}"),
            covariate: covariate.to_string(),
            part,
            selectable,
            design: bd.design,
            penalty: bd.penalty.matrix,
            penalty_rank: bd.penalty.rank,
            kernel: bd.penalty.kernel,
            constraint: bd.constraint,
            recipe: bd.recipe,
        }
    }
}

/// Linear min-max map to [0, 1] for one covariate.
pub fn standardize(x: &[f64]) -> Result<(Vec<f64>, (f64, f64))> {
    let min = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(max > min) {
        return Err(Error::Data("covariate has zero variance".to_string()));
    }
    Ok((x.iter().map(|&v| (v - min) / (max - min)).collect(), (min, max)))
}

pub fn back_transform(std_value: f64, range: (f64, f64)) -> f64 {
    range.0 + std_value * (range.1 - range.0)
}

/// Everything the sampler and the summaries need, derived deterministically
/// from (data, spec).
#[derive(Clone, Debug)]
pub struct BuiltModel {
    pub response: DVector<f64>,
    pub blocks: Vec<EffectBlock>,
    pub mandatory: DMatrix<f64>,
    pub mandatory_names: Vec<String>,
    /// Raw (min, max) per covariate, for axis back-transformation.
    pub ranges: BTreeMap<String, (f64, f64)>,
    pub dropped_rows: usize,
}

/// Assemble design matrices from a dataset and a model description. Rows
/// with missing values in any used column are dropped (count retained);
/// covariates are standardized; every `decomposed` covariate yields two
/// blocks, in declaration order with the linear part first.
pub fn build_blocks(data: &Dataset, spec: &ModelSpec) -> Result<BuiltModel> {
    spec.validate()?;
    let mut used: Vec<String> = vec![spec.response.clone()];
    used.extend(spec.covariates.iter().map(|c| c.name.clone()));
    used.extend(spec.categoricals.iter().map(|c| c.name.clone()));
    for name in &used {
        if !data.has_column(name) {
            return Err(Error::Data(format!("column '{name}' not found in data")));
        }
    }

    let mut data = data.clone();
    let dropped = data.retain_complete_rows(&used)?;
    if dropped > 0 {
        log::info!("dropped {dropped} rows with missing values in used columns");
    }
    let n = data.n_rows();
    if n == 0 {
        return Err(Error::Data("no complete rows remain after missing-value drop".into()));
    }

    let response = DVector::from_vec(data.numeric_column(&spec.response)?);
    let spline = SplineBasis::new(spec.basis.inner_knots, spec.basis.degree)?;

    let mut blocks = Vec::new();
    let mut ranges = BTreeMap::new();
    for cov in &spec.covariates {
        let raw = data.numeric_column(&cov.name)?;
        let (std, range) = standardize(&raw)
            .map_err(|e| Error::Data(format!("covariate '{}': {e}", cov.name)))?;
        ranges.insert(cov.name.clone(), range);
        match cov.kind {
            CovariateKind::Decomposed => {
                let (lin, non) = basis::decompose_effect(&std, &spline)?;
                blocks.push(EffectBlock::from_design(
                    &cov.name,
                    EffectPart::Linear,
                    cov.selectable,
                    lin,
                ));
                blocks.push(EffectBlock::from_design(
                    &cov.name,
                    EffectPart::Nonlinear,
                    cov.selectable,
                    non,
                ));
            }
            CovariateKind::LinearOnly => {
                blocks.push(EffectBlock::from_design(
                    &cov.name,
                    EffectPart::Linear,
                    cov.selectable,
                    basis::linear_block_design(&std)?,
                ));
            }
            CovariateKind::NonlinearOnly => {
                blocks.push(EffectBlock::from_design(
                    &cov.name,
                    EffectPart::Nonlinear,
                    cov.selectable,
                    basis::nonlinear_block_design(&std, &spline)?,
                ));
            }
        }
    }

    let mut mandatory_cols: Vec<DVector<f64>> = vec![DVector::from_element(n, 1.0)];
    let mut mandatory_names = vec!["intercept".to_string()];
    for cat in &spec.categoricals {
        let col = data.string_column(&cat.name)?;
        let mut levels: Vec<&String> = col.iter().collect();
        levels.sort();
        levels.dedup();
        if !levels.iter().any(|l| **l == cat.reference) {
            return Err(Error::Config(format!(
                "reference level '{}' not observed in column '{}'",
                cat.reference, cat.name
            )));
        }
        if levels.len() < 2 {
            return Err(Error::Data(format!(
                "categorical column '{}' has a single level",
                cat.name
            )));
        }
        for level in levels {
            if **level == cat.reference {
                continue;
            }
            mandatory_cols.push(DVector::from_fn(n, |r, _| {
                if col[r] == **level { 1.0 } else { 0.0 }
            }));
            mandatory_names.push(format!("{}={level}", cat.name));
        }
    }
    let mandatory = DMatrix::from_columns(&mandatory_cols);

    Ok(BuiltModel { response, blocks, mandatory, mandatory_names, ranges, dropped_rows: dropped })
}

/// Additive predictor from explicit coefficient values: the mandatory part
/// plus each block's design times its full-scale coefficient vector.
pub fn predictor_from_parts(
    mandatory: &DMatrix<f64>,
    mandatory_coef: &DVector<f64>,
    blocks: &[EffectBlock],
    block_coefs: &[DVector<f64>],
) -> DVector<f64> {
    let mut eta = mandatory * mandatory_coef;
    for (b, coef) in blocks.iter().zip(block_coefs) {
        eta += &b.design * coef;
    }
    eta
}
