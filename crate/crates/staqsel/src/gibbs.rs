//! The Gibbs sampler: every full conditional is available in closed form,
//! so one sweep is a fixed sequence of exact draws with no tuning.
//!
//! Coefficients are carried at unit scale (beta_tilde, with the scalar
//! importance zeta multiplying the design), which keeps the importance
//! update exactly conjugate: given the full-scale coefficients
//! beta = zeta * beta_tilde, the importance full conditional is generalized
//! inverse Gaussian, and after redrawing zeta the stored beta_tilde is
//! rescaled so beta — and therefore the predictor — is unchanged by that
//! update. The selection indicator only ever moves the prior scale of the
//! importance between spike and slab; effects always enter the predictor,
//! shrunk rather than zeroed while excluded.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::dist::{
    quantile_constants, sample_beta, sample_bernoulli, sample_constrained_mvn, sample_gamma,
    sample_gig, sample_inverse_gamma, sample_inverse_gaussian, GigParams, QuantileConstants,
};
use crate::elicit::{Elicited, PriorSpectrum};
use crate::error::{Error, Result};
use crate::model::{EffectBlock, HyperDefaults, SamplerConfig};
use crate::stream::RandomStream;

/// Deliberate single-site corruption for sampler self-tests: a correct
/// implementation must pass the joint-distribution test, and the same test
/// must catch this seeded bug.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Fault {
    #[default]
    None,
    /// Halves the scale of the hypervariance full conditional.
    HypervarianceScale,
}

/// Immutable per-fit context: blocks, elicited prior scales, data, and the
/// quantile-level constants. Shared read-only by all chains of one fit.
pub struct GibbsModel<'m> {
    pub blocks: &'m [EffectBlock],
    pub scales: &'m [Elicited],
    pub mandatory: &'m DMatrix<f64>,
    /// Owned so self-tests can redraw the data between sweeps.
    pub response: DVector<f64>,
    pub hyper: HyperDefaults,
    pub constants: QuantileConstants,
    pub fault: Fault,
    pub(crate) priors: Vec<PriorSpectrum>,
}

impl<'m> GibbsModel<'m> {
    pub fn new(
        blocks: &'m [EffectBlock],
        scales: &'m [Elicited],
        mandatory: &'m DMatrix<f64>,
        response: DVector<f64>,
        hyper: HyperDefaults,
        tau: f64,
    ) -> Result<Self> {
        hyper.validate()?;
        let n = response.len();
        if mandatory.nrows() != n {
            return Err(Error::Domain(format!(
                "mandatory design has {} rows for {n} responses",
                mandatory.nrows()
            )));
        }
        if blocks.len() != scales.len() {
            return Err(Error::Domain(format!(
                "{} blocks but {} elicited scale sets",
                blocks.len(),
                scales.len()
            )));
        }
        for (b, s) in blocks.iter().zip(scales) {
            if b.id != s.block_id {
                return Err(Error::Domain(format!(
                    "elicited scales for '{}' paired with block '{}'",
                    s.block_id, b.id
                )));
            }
            if !(s.b > 0.0 && s.r > 0.0) {
                return Err(Error::Domain(format!(
                    "block '{}': elicited scales must be positive",
                    b.id
                )));
            }
            if b.design.nrows() != n {
                return Err(Error::Domain(format!(
                    "block '{}' has {} rows for {n} responses",
                    b.id,
                    b.design.nrows()
                )));
            }
        }
        let priors = blocks.iter().map(PriorSpectrum::new).collect::<Result<Vec<_>>>()?;
        Ok(GibbsModel {
            blocks,
            scales,
            mandatory,
            response,
            hyper,
            constants: quantile_constants(tau)?,
            fault: Fault::None,
            priors,
        })
    }

    /// Install a deliberate fault (sampler self-test machinery).
    pub fn with_fault(mut self, fault: Fault) -> Self {
        self.fault = fault;
        self
    }

    /// Replace the response vector (used by the joint-distribution self-test,
    /// which redraws the data from the likelihood between sweeps).
    pub fn set_response(&mut self, y: DVector<f64>) -> Result<()> {
        if y.len() != self.response.len() {
            return Err(Error::Domain(format!(
                "replacement response has {} rows, expected {}",
                y.len(),
                self.response.len()
            )));
        }
        self.response = y;
        Ok(())
    }

    fn n(&self) -> usize {
        self.response.len()
    }
}

/// Mutable per-block sampler state.
#[derive(Clone, Debug)]
pub struct BlockState {
    /// Unit-scale coefficients; the block contributes zeta * B * beta_tilde.
    pub beta_tilde: DVector<f64>,
    pub zeta2: f64,
    pub gamma: bool,
    pub psi2: f64,
    pub omega: f64,
    /// Cached full-scale contribution at the training rows.
    pub contrib: DVector<f64>,
}

/// Full chain state; `eta` always equals the sum of the cached
/// contributions (refreshed incrementally within a sweep, recomputed exactly
/// at its end).
#[derive(Clone, Debug)]
pub struct ChainState {
    pub blocks: Vec<BlockState>,
    pub mandatory_coef: DVector<f64>,
    pub mandatory_contrib: DVector<f64>,
    pub weights: DVector<f64>,
    pub delta2: f64,
    pub eta: DVector<f64>,
}

impl ChainState {
    /// Deterministic starting point: coefficients zero, unit importance and
    /// weights, everything included, hypervariance and inclusion probability
    /// at their prior centers, mandatory coefficients from least squares.
    pub fn init(model: &GibbsModel) -> ChainState {
        let n = model.n();
        let blocks = model
            .blocks
            .iter()
            .zip(model.scales)
            .map(|(b, s)| {
                let a = model.hyper.a;
                BlockState {
                    beta_tilde: DVector::zeros(b.dim()),
                    zeta2: 1.0,
                    gamma: true,
                    psi2: if a > 1.0 { s.b / (a - 1.0) } else { s.b },
                    omega: model.hyper.a0 / (model.hyper.a0 + model.hyper.b0),
                    contrib: DVector::zeros(n),
                }
            })
            .collect();

        let m = model.mandatory.ncols();
        let mandatory_coef = if m == 0 {
            DVector::zeros(0)
        } else {
            let xtx = model.mandatory.transpose() * model.mandatory
                + DMatrix::identity(m, m) * 1e-8;
            let xty = model.mandatory.transpose() * &model.response;
            xtx.cholesky().map_or_else(|| DVector::zeros(m), |c| c.solve(&xty))
        };
        let mandatory_contrib = model.mandatory * &mandatory_coef;
        let eta = mandatory_contrib.clone();
        ChainState {
            blocks,
            mandatory_coef,
            mandatory_contrib,
            weights: DVector::from_element(n, 1.0),
            delta2: 1.0,
            eta,
        }
    }
}

// Gaussian update for the mandatory coefficients: diffuse normal prior,
// scale-mixture likelihood, no constraint.
fn update_mandatory(
    model: &GibbsModel,
    state: &mut ChainState,
    rng: &mut RandomStream,
) -> Result<()> {
    let m = model.mandatory.ncols();
    if m == 0 {
        return Ok(());
    }
    let n = model.n();
    let qc = model.constants;
    let lik = state.delta2 / qc.sigma2;
    let mut precision = DMatrix::identity(m, m) * model.hyper.mandatory_precision;
    let mut linear = DVector::zeros(m);
    if n > 0 {
        let mut scaled = model.mandatory.clone(); // rows divided by weights
        let mut resid = DVector::zeros(n);
        for i in 0..n {
            let w = state.weights[i];
            scaled.row_mut(i).scale_mut(1.0 / w);
            resid[i] = model.response[i]
                - qc.xi * w
                - (state.eta[i] - state.mandatory_contrib[i]);
        }
        precision += model.mandatory.transpose() * &scaled * lik;
        linear = scaled.transpose() * resid * lik;
    }
    let coef = sample_constrained_mvn(&precision, &linear, &DMatrix::zeros(0, m), rng)?;
    let contrib = model.mandatory * &coef;
    state.eta += &contrib - &state.mandatory_contrib;
    state.mandatory_coef = coef;
    state.mandatory_contrib = contrib;
    Ok(())
}

// Gaussian update of one block's unit-scale coefficients under its
// constraint. With no observations the full conditional is the constrained
// coefficient prior itself, drawn spectrally (the penalty may be singular).
fn update_coefficients(
    model: &GibbsModel,
    state: &mut ChainState,
    j: usize,
    rng: &mut RandomStream,
) -> Result<()> {
    let block = &model.blocks[j];
    let n = model.n();
    if n == 0 {
        let beta = model.priors[j].draw(rng);
        let st = &mut state.blocks[j];
        st.contrib = DVector::zeros(0);
        st.beta_tilde = beta;
        return Ok(());
    }
    let qc = model.constants;
    let zeta = state.blocks[j].zeta2.sqrt();
    let lik = state.delta2 / qc.sigma2;

    let mut scaled = block.design.clone();
    let mut resid = DVector::zeros(n);
    for i in 0..n {
        let w = state.weights[i];
        scaled.row_mut(i).scale_mut(1.0 / w);
        resid[i] =
            model.response[i] - qc.xi * w - (state.eta[i] - state.blocks[j].contrib[i]);
    }
    let precision = &block.penalty + block.design.transpose() * &scaled * (zeta * zeta * lik);
    let linear = scaled.transpose() * resid * (zeta * lik);
    let beta = sample_constrained_mvn(&precision, &linear, &block.constraint, rng)?;

    let contrib = &block.design * &beta * zeta;
    let st = &mut state.blocks[j];
    state.eta += &contrib - &st.contrib;
    st.beta_tilde = beta;
    st.contrib = contrib;
    Ok(())
}

// Importance update: conditionally on the full-scale coefficients the
// importance is generalized inverse Gaussian; beta_tilde is rescaled
// afterwards so the full-scale coefficients (and the predictor) are
// untouched by this update. A zero quadratic form degenerates the GIG to
// the gamma prior slice.
fn update_importance(
    model: &GibbsModel,
    state: &mut ChainState,
    j: usize,
    rng: &mut RandomStream,
) -> Result<()> {
    let block = &model.blocks[j];
    let st = &mut state.blocks[j];
    let r_gamma = if st.gamma { 1.0 } else { model.scales[j].r };
    let quad_unit = (st.beta_tilde.transpose() * &block.penalty * &st.beta_tilde)[(0, 0)];
    let quad = (st.zeta2 * quad_unit).max(0.0);
    let a_gig = 1.0 / (r_gamma * st.psi2);
    let new_zeta2 = if quad <= 1e-300 {
        sample_gamma(0.5, 0.5 * a_gig, rng)?
    } else {
        let p = -(block.penalty_rank as f64) / 2.0 + 0.5;
        sample_gig(&GigParams { p, a: a_gig, b: quad }, rng)?
    }
    .max(1e-290);
    let ratio = (st.zeta2 / new_zeta2).sqrt();
    st.beta_tilde *= ratio;
    st.zeta2 = new_zeta2;
    Ok(())
}

// Spike/slab indicator: Bernoulli with the odds of the two zero-mean normal
// densities at zeta, evaluated in log space.
fn update_indicator(
    model: &GibbsModel,
    state: &mut ChainState,
    j: usize,
    rng: &mut RandomStream,
) -> Result<()> {
    let st = &mut state.blocks[j];
    let r = model.scales[j].r;
    // log phi(zeta; 0, r psi^2) - log phi(zeta; 0, psi^2) + log((1-w)/w)
    let lr = -0.5 * r.ln() - st.zeta2 / (2.0 * st.psi2) * (1.0 / r - 1.0)
        + ((1.0 - st.omega) / st.omega).ln();
    let p_include = if lr > 700.0 {
        0.0
    } else if lr < -700.0 {
        1.0
    } else {
        1.0 / (1.0 + lr.exp())
    };
    st.gamma = sample_bernoulli(p_include, rng)?;
    Ok(())
}

// Conjugate inverse-gamma update of the hypervariance.
fn update_hypervariance(
    model: &GibbsModel,
    state: &mut ChainState,
    j: usize,
    rng: &mut RandomStream,
) -> Result<()> {
    let st = &mut state.blocks[j];
    let r_gamma = if st.gamma { 1.0 } else { model.scales[j].r };
    let mut scale = model.scales[j].b + st.zeta2 / (2.0 * r_gamma);
    if model.fault == Fault::HypervarianceScale {
        scale *= 0.5;
    }
    st.psi2 = sample_inverse_gamma(model.hyper.a + 0.5, scale, rng)?;
    Ok(())
}

// Conjugate beta update of the prior inclusion probability.
fn update_inclusion(
    model: &GibbsModel,
    state: &mut ChainState,
    j: usize,
    rng: &mut RandomStream,
) -> Result<()> {
    let st = &mut state.blocks[j];
    let g = if st.gamma { 1.0 } else { 0.0 };
    st.omega = sample_beta(model.hyper.a0 + g, model.hyper.b0 + 1.0 - g, rng)?;
    Ok(())
}

// Latent-weight update: reciprocals are inverse Gaussian. The residual is
// clamped away from zero to keep the mean parameter finite.
fn update_weights(model: &GibbsModel, state: &mut ChainState, rng: &mut RandomStream) -> Result<()> {
    let qc = model.constants;
    let s2 = qc.xi * qc.xi + 2.0 * qc.sigma2;
    let shape = state.delta2 * s2 / qc.sigma2;
    let s_root = s2.sqrt();
    for i in 0..model.n() {
        let resid = (model.response[i] - state.eta[i]).abs().max(1e-10);
        let v = sample_inverse_gaussian(s_root / resid, shape, rng)?;
        state.weights[i] = (1.0 / v).clamp(1e-290, 1e290);
    }
    Ok(())
}

// Conjugate gamma update of the likelihood scale.
fn update_scale(model: &GibbsModel, state: &mut ChainState, rng: &mut RandomStream) -> Result<()> {
    let qc = model.constants;
    let n = model.n();
    let mut rate = model.hyper.b_delta;
    for i in 0..n {
        let w = state.weights[i];
        let dev = model.response[i] - state.eta[i] - qc.xi * w;
        rate += dev * dev / (2.0 * qc.sigma2 * w) + w;
    }
    let shape = model.hyper.a_delta + 1.5 * n as f64;
    state.delta2 = sample_gamma(shape, rate, rng)?;
    Ok(())
}

// Exact recomputation of the cached predictor from the cached parts; kills
// floating-point drift from the incremental updates.
fn refresh_eta(state: &mut ChainState) {
    let mut eta = state.mandatory_contrib.clone();
    for b in &state.blocks {
        eta += &b.contrib;
    }
    state.eta = eta;
}

fn step_context(e: Error, sweep: usize, what: &str) -> Error {
    match e {
        Error::Numerical { context, detail } => Error::Numerical {
            context: format!("sweep {sweep}, {what} ({context})"),
            detail,
        },
        Error::Domain(msg) => Error::numerical(format!("sweep {sweep}, {what}"), msg),
        other => other,
    }
}

/// One full Gibbs sweep: mandatory coefficients, then each block's
/// coefficient / importance / indicator / hypervariance / inclusion updates
/// contiguously in declaration order, then the latent weights and the
/// likelihood scale.
pub fn sweep(
    model: &GibbsModel,
    state: &mut ChainState,
    sweep_idx: usize,
    rng: &mut RandomStream,
) -> Result<()> {
    update_mandatory(model, state, rng)
        .map_err(|e| step_context(e, sweep_idx, "mandatory coefficient update"))?;
    for j in 0..model.blocks.len() {
        let id = &model.blocks[j].id;
        update_coefficients(model, state, j, rng)
            .map_err(|e| step_context(e, sweep_idx, &format!("block {id}, coefficient update")))?;
        update_importance(model, state, j, rng)
            .map_err(|e| step_context(e, sweep_idx, &format!("block {id}, importance update")))?;
        if model.blocks[j].selectable {
            update_indicator(model, state, j, rng)
                .map_err(|e| step_context(e, sweep_idx, &format!("block {id}, indicator update")))?;
        }
        update_hypervariance(model, state, j, rng).map_err(|e| {
            step_context(e, sweep_idx, &format!("block {id}, hypervariance update"))
        })?;
        if model.blocks[j].selectable {
            update_inclusion(model, state, j, rng)
                .map_err(|e| step_context(e, sweep_idx, &format!("block {id}, inclusion update")))?;
        }
    }
    refresh_eta(state);
    update_weights(model, state, rng)
        .map_err(|e| step_context(e, sweep_idx, "weight update"))?;
    update_scale(model, state, rng)
        .map_err(|e| step_context(e, sweep_idx, "scale update"))?;
    Ok(())
}

/// Stored draws for one block across a chain: selection indicator,
/// importance, hypervariance, inclusion probability, and the full-scale
/// coefficients (zeta * beta_tilde), from which every effect summary is an
/// exact linear projection.
#[derive(Clone, Debug, Serialize)]
pub struct BlockDraws {
    pub block_id: String,
    pub gamma: Vec<u8>,
    pub zeta2: Vec<f64>,
    pub psi2: Vec<f64>,
    pub omega: Vec<f64>,
    pub coefs: Vec<Vec<f64>>,
}

/// Thinned post-burn-in draws of one chain.
#[derive(Clone, Debug, Serialize)]
pub struct PosteriorDraws {
    pub tau: f64,
    pub chain: usize,
    pub sweeps: Vec<usize>,
    pub delta2: Vec<f64>,
    pub mandatory: Vec<Vec<f64>>,
    pub blocks: Vec<BlockDraws>,
}

impl PosteriorDraws {
    pub fn len(&self) -> usize {
        self.sweeps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sweeps.is_empty()
    }
}

/// Run one chain to completion, storing the state after every sweep s with
/// s > burn_in and (s - burn_in - 1) divisible by thin.
pub fn run_chain(
    model: &GibbsModel,
    config: &SamplerConfig,
    tau: f64,
    chain: usize,
    rng: &mut RandomStream,
) -> Result<PosteriorDraws> {
    config.validate()?;
    let mut state = ChainState::init(model);
    let stored = config.stored_per_chain();
    let mut draws = PosteriorDraws {
        tau,
        chain,
        sweeps: Vec::with_capacity(stored),
        delta2: Vec::with_capacity(stored),
        mandatory: Vec::with_capacity(stored),
        blocks: model
            .blocks
            .iter()
            .map(|b| BlockDraws {
                block_id: b.id.clone(),
                gamma: Vec::with_capacity(stored),
                zeta2: Vec::with_capacity(stored),
                psi2: Vec::with_capacity(stored),
                omega: Vec::with_capacity(stored),
                coefs: Vec::with_capacity(stored),
            })
            .collect(),
    };
    for s in 1..=config.iterations {
        sweep(model, &mut state, s, rng)?;
        if s > config.burn_in && (s - config.burn_in - 1).is_multiple_of(config.thin) {
            draws.sweeps.push(s);
            draws.delta2.push(state.delta2);
            draws.mandatory.push(state.mandatory_coef.iter().cloned().collect());
            for (bd, bs) in draws.blocks.iter_mut().zip(&state.blocks) {
                bd.gamma.push(u8::from(bs.gamma));
                bd.zeta2.push(bs.zeta2);
                bd.psi2.push(bs.psi2);
                bd.omega.push(bs.omega);
                let zeta = bs.zeta2.sqrt();
                bd.coefs.push(bs.beta_tilde.iter().map(|v| v * zeta).collect());
            }
        }
    }
    Ok(draws)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{linear_block_design, nonlinear_block_design, SplineBasis};
    use crate::model::EffectPart;
    use crate::oracle::ks_two_sample;

    fn wrap(id: &str, part: EffectPart, bd: crate::basis::BlockDesign) -> EffectBlock {
        EffectBlock {
            id: id.to_string(),
            covariate: id.split(':').next().unwrap().to_string(),
            part,
            selectable: true,
            design: bd.design,
            penalty: bd.penalty.matrix,
            penalty_rank: bd.penalty.rank,
            kernel: bd.penalty.kernel,
            constraint: bd.constraint,
            recipe: bd.recipe,
        }
    }

    fn elicited(id: &str, b: f64, r: f64) -> Elicited {
        Elicited {
            block_id: id.to_string(),
            a: 5.0,
            alpha: 0.1,
            c: 0.1,
            b,
            r,
            q_slab: 1.0,
            q_spike: 1.0,
            num_draws: 0,
        }
    }

    fn two_block_setup(n: usize) -> (Vec<EffectBlock>, Vec<Elicited>, DMatrix<f64>, DVector<f64>) {
        let x1: Vec<f64> = (0..n).map(|i| i as f64 / (n.max(2) - 1) as f64).collect();
        let x2: Vec<f64> = (0..n).map(|i| ((i * 7 + 3) % n) as f64 / n as f64).collect();
        let basis = SplineBasis::new(7, 3).unwrap();
        let blocks = vec![
            wrap("x1:linear", EffectPart::Linear, linear_block_design(&x1).unwrap()),
            wrap("x2:nonlinear", EffectPart::Nonlinear, nonlinear_block_design(&x2, &basis).unwrap()),
        ];
        let scales = vec![elicited("x1:linear", 2.0, 0.01), elicited("x2:nonlinear", 5.0, 0.02)];
        let mandatory = DMatrix::from_element(n, 1, 1.0);
        let y = DVector::from_fn(n, |i, _| {
            1.0 + 2.0 * (x1[i] - 0.5) + 0.3 * ((i * 31 % 17) as f64 / 17.0 - 0.5)
        });
        (blocks, scales, mandatory, y)
    }

    #[test]
    fn mandatory_posterior_mean_approaches_weighted_mean() {
        // Single intercept at the median: with unit likelihood precision per
        // row and a vanishing prior, the Gaussian update centers on the
        // sample mean of the residual target.
        let n = 40;
        let y = DVector::from_fn(n, |i, _| 3.0 + ((i % 5) as f64 - 2.0));
        let mandatory = DMatrix::from_element(n, 1, 1.0);
        let blocks: Vec<EffectBlock> = vec![];
        let scales: Vec<Elicited> = vec![];
        let hyper = HyperDefaults::default();
        let model = GibbsModel::new(&blocks, &scales, &mandatory, y.clone(), hyper, 0.5).unwrap();
        let mut state = ChainState::init(&model);
        // Unit per-row precision: delta^2 / (sigma^2 w) = 1.
        state.delta2 = 1.0;
        state.weights = DVector::from_element(n, 1.0 / model.constants.sigma2);
        state.eta = DVector::zeros(n);
        state.mandatory_contrib = DVector::zeros(n);

        let mut rng = RandomStream::new(1);
        let m = 20_000;
        let mut acc = 0.0;
        for _ in 0..m {
            // Keep eta consistent with a fresh update each time.
            state.eta = state.mandatory_contrib.clone();
            update_mandatory(&model, &mut state, &mut rng).unwrap();
            acc += state.mandatory_coef[0];
        }
        let ybar = y.sum() / n as f64;
        let se = (1.0 / (n as f64)).sqrt() / (m as f64).sqrt();
        assert!((acc / m as f64 - ybar).abs() < 6.0 * se + 1e-3, "{}", acc / m as f64);
    }

    #[test]
    fn chains_are_deterministic_given_seed() {
        let (blocks, scales, mandatory, y) = two_block_setup(30);
        let hyper = HyperDefaults::default();
        let model = GibbsModel::new(&blocks, &scales, &mandatory, y.clone(), hyper, 0.8).unwrap();
        let config = SamplerConfig { iterations: 60, burn_in: 20, thin: 2, chains: 1, seed: 9 };
        let mut r1 = RandomStream::new(77);
        let mut r2 = RandomStream::new(77);
        let d1 = run_chain(&model, &config, 0.8, 0, &mut r1).unwrap();
        let d2 = run_chain(&model, &config, 0.8, 0, &mut r2).unwrap();
        assert_eq!(d1.delta2, d2.delta2);
        assert_eq!(d1.blocks[1].zeta2, d2.blocks[1].zeta2);
        assert_eq!(d1.blocks[1].coefs, d2.blocks[1].coefs);
    }

    #[test]
    fn storage_rule_counts() {
        let (blocks, scales, mandatory, y) = two_block_setup(12);
        let model =
            GibbsModel::new(&blocks, &scales, &mandatory, y.clone(), HyperDefaults::default(), 0.5)
                .unwrap();
        let config = SamplerConfig { iterations: 21, burn_in: 20, thin: 1, chains: 1, seed: 9 };
        let mut rng = RandomStream::new(5);
        let d = run_chain(&model, &config, 0.5, 0, &mut rng).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.sweeps, vec![21]);

        let config = SamplerConfig { iterations: 30, burn_in: 20, thin: 4, chains: 1, seed: 9 };
        let mut rng = RandomStream::new(5);
        let d = run_chain(&model, &config, 0.5, 0, &mut rng).unwrap();
        assert_eq!(d.sweeps, vec![21, 25, 29]);
    }

    #[test]
    fn stored_draws_respect_constraints_and_positivity() {
        let (blocks, scales, mandatory, y) = two_block_setup(25);
        let model =
            GibbsModel::new(&blocks, &scales, &mandatory, y.clone(), HyperDefaults::default(), 0.6)
                .unwrap();
        let config = SamplerConfig { iterations: 300, burn_in: 50, thin: 5, chains: 1, seed: 9 };
        let mut rng = RandomStream::new(11);
        let d = run_chain(&model, &config, 0.6, 0, &mut rng).unwrap();
        for (bd, block) in d.blocks.iter().zip(&blocks) {
            for (k, coef) in bd.coefs.iter().enumerate() {
                assert!(bd.zeta2[k] > 0.0 && bd.psi2[k] > 0.0);
                assert!(bd.omega[k] > 0.0 && bd.omega[k] < 1.0);
                // Constraints hold for the unit-scale coefficients.
                let beta = DVector::from_vec(coef.clone()) / bd.zeta2[k].sqrt();
                if block.constraint.nrows() > 0 {
                    let viol = (&block.constraint * &beta).amax();
                    assert!(viol < 1e-10, "constraint violation {viol}");
                }
            }
        }
        assert!(d.delta2.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn eta_cache_matches_exact_recomputation() {
        let (blocks, scales, mandatory, y) = two_block_setup(25);
        let model =
            GibbsModel::new(&blocks, &scales, &mandatory, y.clone(), HyperDefaults::default(), 0.8)
                .unwrap();
        let mut state = ChainState::init(&model);
        let mut rng = RandomStream::new(13);
        for s in 1..=50 {
            sweep(&model, &mut state, s, &mut rng).unwrap();
        }
        let mut eta = &mandatory * &state.mandatory_coef;
        for (b, st) in blocks.iter().zip(&state.blocks) {
            eta += &b.design * &st.beta_tilde * st.zeta2.sqrt();
        }
        assert!((&eta - &state.eta).amax() < 1e-10);
    }

    #[test]
    fn no_data_gibbs_preserves_the_importance_prior() {
        // With zero observations every update draws from a conditional of
        // the prior alone, so the long-run zeta^2 marginal must match fresh
        // simulation from the hierarchical prior.
        let basis = SplineBasis::new(7, 3).unwrap();
        let blocks =
            vec![wrap("x:nonlinear", EffectPart::Nonlinear, nonlinear_block_design(&[], &basis).unwrap())];
        let (b_scale, r_scale) = (2.0, 0.05);
        let scales = vec![elicited("x:nonlinear", b_scale, r_scale)];
        let mandatory = DMatrix::zeros(0, 0);
        let y = DVector::zeros(0);
        let hyper = HyperDefaults::default();
        let model = GibbsModel::new(&blocks, &scales, &mandatory, y.clone(), hyper, 0.5).unwrap();

        let mut state = ChainState::init(&model);
        let mut rng = RandomStream::new(21);
        let mut gibbs_draws = Vec::new();
        for s in 1..=40_000 {
            sweep(&model, &mut state, s, &mut rng).unwrap();
            if s % 10 == 0 {
                gibbs_draws.push(state.blocks[0].zeta2);
            }
        }

        // Independent prior simulation of the same marginal.
        let mut prior_draws = Vec::new();
        for _ in 0..4_000 {
            let omega = sample_beta(hyper.a0, hyper.b0, &mut rng).unwrap();
            let gamma = sample_bernoulli(omega, &mut rng).unwrap();
            let r_gamma = if gamma { 1.0 } else { r_scale };
            let psi2 = sample_inverse_gamma(hyper.a, b_scale, &mut rng).unwrap();
            let z2 = sample_gamma(0.5, 1.0 / (2.0 * r_gamma * psi2), &mut rng).unwrap();
            prior_draws.push(z2);
        }
        // Compare on the log scale: the marginal spans many decades.
        let lg: Vec<f64> = gibbs_draws.iter().map(|v| v.ln()).collect();
        let lp: Vec<f64> = prior_draws.iter().map(|v| v.ln()).collect();
        let rep = ks_two_sample(&lg, &lp).unwrap();
        assert!(
            rep.pass,
            "no-data chain drifted from the prior: KS {} >= {}",
            rep.statistic, rep.critical
        );
    }

    #[test]
    fn fault_injection_shifts_hypervariance() {
        let (blocks, scales, mandatory, y) = two_block_setup(20);
        let hyper = HyperDefaults::default();
        let clean = GibbsModel::new(&blocks, &scales, &mandatory, y.clone(), hyper, 0.5).unwrap();
        let faulty = GibbsModel::new(&blocks, &scales, &mandatory, y.clone(), hyper, 0.5)
            .unwrap()
            .with_fault(Fault::HypervarianceScale);

        let mut rng = RandomStream::new(31);
        let mut state = ChainState::init(&clean);
        let m = 30_000;
        let mut mean_clean = 0.0;
        for _ in 0..m {
            update_hypervariance(&clean, &mut state, 0, &mut rng).unwrap();
            mean_clean += state.blocks[0].psi2;
        }
        let mut mean_fault = 0.0;
        for _ in 0..m {
            update_hypervariance(&faulty, &mut state, 0, &mut rng).unwrap();
            mean_fault += state.blocks[0].psi2;
        }
        let ratio = mean_fault / mean_clean;
        assert!((ratio - 0.5).abs() < 0.03, "fault ratio {ratio}");
    }

    #[test]
    fn weights_grow_with_residual_magnitude() {
        let n = 2;
        let y = DVector::from_vec(vec![2.0, 0.05]); // eta will be ~0
        let mandatory = DMatrix::zeros(n, 0);
        let blocks: Vec<EffectBlock> = vec![];
        let scales: Vec<Elicited> = vec![];
        let model =
            GibbsModel::new(&blocks, &scales, &mandatory, y.clone(), HyperDefaults::default(), 0.5)
                .unwrap();
        let mut state = ChainState::init(&model);
        state.eta = DVector::zeros(n);
        let mut rng = RandomStream::new(41);
        let (mut w_big, mut w_small) = (0.0, 0.0);
        let m = 20_000;
        for _ in 0..m {
            update_weights(&model, &mut state, &mut rng).unwrap();
            w_big += state.weights[0];
            w_small += state.weights[1];
        }
        assert!(
            w_big / m as f64 > 1.5 * w_small / m as f64,
            "large residual should imply larger weights"
        );
    }

    #[test]
    fn model_construction_validates_pairing() {
        let (blocks, mut scales, mandatory, y) = two_block_setup(10);
        scales.swap(0, 1);
        assert!(
            GibbsModel::new(&blocks, &scales, &mandatory, y.clone(), HyperDefaults::default(), 0.5)
                .is_err()
        );
        let (blocks, scales, mandatory, _) = two_block_setup(10);
        let y_short = DVector::zeros(5);
        assert!(
            GibbsModel::new(&blocks, &scales, &mandatory, y_short, HyperDefaults::default(), 0.5)
                .is_err()
        );
    }

    #[test]
    fn short_fit_recovers_rough_median_calibration() {
        // Smoke test: on easy linear data the median fit should put roughly
        // half the observations below the posterior-mean predictor.
        let n = 60;
        let (blocks, scales, mandatory, _) = two_block_setup(n);
        let x1: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let mut rng = RandomStream::new(99);
        let y = DVector::from_fn(n, |i, _| {
            1.0 + 2.0 * x1[i] + 0.3 * (rand::Rng::random::<f64>(&mut rng) - 0.5)
        });
        let model =
            GibbsModel::new(&blocks, &scales, &mandatory, y.clone(), HyperDefaults::default(), 0.5)
                .unwrap();
        let config =
            SamplerConfig { iterations: 1_500, burn_in: 500, thin: 2, chains: 1, seed: 1 };
        let mut rng = RandomStream::new(7);
        let draws = run_chain(&model, &config, 0.5, 0, &mut rng).unwrap();

        // Posterior-mean predictor from stored full-scale coefficients.
        let mut eta_mean = DVector::zeros(n);
        for k in 0..draws.len() {
            let mut eta = &mandatory * &DVector::from_vec(draws.mandatory[k].clone());
            for (bd, block) in draws.blocks.iter().zip(&blocks) {
                eta += &block.design * &DVector::from_vec(bd.coefs[k].clone());
            }
            eta_mean += eta;
        }
        eta_mean /= draws.len() as f64;
        let below = (0..n).filter(|&i| y[i] <= eta_mean[i]).count() as f64 / n as f64;
        assert!((below - 0.5).abs() < 0.15, "median calibration {below}");
    }
}
