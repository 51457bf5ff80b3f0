//! Joint-distribution self-test of the Gibbs sampler, after Geweke's
//! "getting it right" construction: two simulators target the same joint
//! distribution of (parameters, latent weights, data). The first draws
//! everything forward — parameters from the prior, data from the
//! likelihood — giving independent samples. The second runs the actual
//! Gibbs sweep and then redraws the data from the likelihood, so the data
//! become one more Gibbs coordinate. If every full conditional is exact the
//! two simulators agree in distribution, and any single biased update drags
//! some moment many standard errors apart. Standard errors on the chain
//! side are autocorrelation-adjusted through the effective sample size.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::basis::{linear_block_design, nonlinear_block_design, SplineBasis};
use crate::dist::{
    sample_bernoulli, sample_beta, sample_exponential, sample_gamma, sample_inverse_gamma,
    sample_normal,
};
use crate::elicit::Elicited;
use crate::error::{Error, Result};
use crate::gibbs::{sweep, BlockState, ChainState, Fault, GibbsModel};
use crate::model::{EffectBlock, EffectPart, HyperDefaults};
use crate::stream::RandomStream;
use crate::summary::effective_sample_size;

/// Everything the joint test needs: a small model with proper priors whose
/// test-function variances are finite.
pub struct GewekeSetup {
    pub blocks: Vec<EffectBlock>,
    pub scales: Vec<Elicited>,
    pub mandatory: DMatrix<f64>,
    pub hyper: HyperDefaults,
    pub tau: f64,
}

fn block(id: &str, part: EffectPart, bd: crate::basis::BlockDesign) -> EffectBlock {
    EffectBlock {
        id: id.to_string(),
        covariate: id.split(':').next().unwrap_or(id).to_string(),
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

/// The reduced model for the joint test: one linear and one nonlinear block
/// over `n` rows, an intercept with a standard-normal prior, and a data
/// scale prior concentrated enough that fourth moments of the data exist
/// (the second-moment test function needs them).
pub fn reduced_model(n: usize) -> Result<GewekeSetup> {
    if n < 8 {
        return Err(Error::Domain(format!("reduced joint-test model needs n >= 8, got {n}")));
    }
    let x1: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
    // Deterministic shuffle so the two covariates are not monotone together.
    let x2: Vec<f64> = (0..n).map(|i| ((i * 7 + 3) % n) as f64 / (n - 1) as f64).collect();
    let basis = SplineBasis::new(7, 3)?;
    let blocks = vec![
        block("x1:linear", EffectPart::Linear, linear_block_design(&x1)?),
        block("x2:nonlinear", EffectPart::Nonlinear, nonlinear_block_design(&x2, &basis)?),
    ];
    let hyper = HyperDefaults {
        a_delta: 6.0,
        b_delta: 6.0,
        mandatory_precision: 1.0,
        ..HyperDefaults::default()
    };
    let scales = blocks
        .iter()
        .map(|b| Elicited {
            block_id: b.id.clone(),
            a: hyper.a,
            alpha: hyper.alpha,
            c: hyper.c,
            b: 1.0,
            r: 0.1,
            q_slab: 0.0,
            q_spike: 0.0,
            num_draws: 0,
        })
        .collect();
    Ok(GewekeSetup {
        blocks,
        scales,
        mandatory: DMatrix::from_element(n, 1, 1.0),
        hyper,
        tau: 0.7,
    })
}

/// One test function's comparison between the two simulators.
#[derive(Clone, Debug, Serialize)]
pub struct GewekeFunction {
    pub label: String,
    pub forward_mean: f64,
    pub chain_mean: f64,
    /// Effective sample size of the chain-side series.
    pub chain_ess: f64,
    /// Standardized mean difference.
    pub z: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GewekeReport {
    pub sweeps: usize,
    pub fault: String,
    pub functions: Vec<GewekeFunction>,
}

impl GewekeReport {
    pub fn max_abs_z(&self) -> f64 {
        self.functions.iter().map(|f| f.z.abs()).fold(0.0, f64::max)
    }
}

fn labels(setup: &GewekeSetup) -> Vec<String> {
    let mut out = vec![
        "mean response".to_string(),
        "mean squared response".to_string(),
        "likelihood scale".to_string(),
        "mean latent weight".to_string(),
        "coefficient norm".to_string(),
    ];
    for b in &setup.blocks {
        out.push(format!("{} importance", b.id));
        out.push(format!("{} indicator", b.id));
        out.push(format!("{} hypervariance", b.id));
        out.push(format!("{} inclusion", b.id));
    }
    out
}

fn evaluate(state: &ChainState, y: &DVector<f64>) -> Vec<f64> {
    let n = y.len() as f64;
    let mut out = vec![
        y.sum() / n,
        y.iter().map(|v| v * v).sum::<f64>() / n,
        state.delta2,
        state.weights.sum() / n,
        state.blocks.iter().map(|b| b.zeta2 * b.beta_tilde.norm_squared()).sum::<f64>(),
    ];
    for b in &state.blocks {
        out.push(b.zeta2);
        out.push(f64::from(u8::from(b.gamma)));
        out.push(b.psi2);
        out.push(b.omega);
    }
    out
}

/// Draw (parameters, weights) from the prior and data from the likelihood —
/// one exact sample from the joint the sampler targets.
fn draw_joint(model: &GibbsModel, rng: &mut RandomStream) -> Result<(ChainState, DVector<f64>)> {
    let n = model.mandatory.nrows();
    let hyper = &model.hyper;
    let qc = model.constants;

    let mut blocks = Vec::with_capacity(model.blocks.len());
    for (j, (b, s)) in model.blocks.iter().zip(model.scales).enumerate() {
        let omega = sample_beta(hyper.a0, hyper.b0, rng)?;
        let gamma = sample_bernoulli(omega, rng)?;
        let r_gamma = if gamma { 1.0 } else { s.r };
        let psi2 = sample_inverse_gamma(hyper.a, s.b, rng)?;
        let zeta2 = sample_gamma(0.5, 1.0 / (2.0 * r_gamma * psi2), rng)?;
        let beta_tilde = model.priors[j].draw(rng);
        let contrib = &b.design * &beta_tilde * zeta2.sqrt();
        blocks.push(BlockState { beta_tilde, zeta2, gamma, psi2, omega, contrib });
    }
    let sd0 = (1.0 / hyper.mandatory_precision).sqrt();
    let mut mandatory_coef = DVector::zeros(model.mandatory.ncols());
    for v in mandatory_coef.iter_mut() {
        *v = sample_normal(0.0, sd0, rng)?;
    }
    let mandatory_contrib = model.mandatory * &mandatory_coef;
    let mut eta = mandatory_contrib.clone();
    for b in &blocks {
        eta += &b.contrib;
    }
    let delta2 = sample_gamma(hyper.a_delta, hyper.b_delta, rng)?;
    let mut weights = DVector::zeros(n);
    let mut y = DVector::zeros(n);
    for i in 0..n {
        let w = sample_exponential(delta2, rng)?;
        weights[i] = w;
        y[i] = sample_normal(eta[i] + qc.xi * w, (qc.sigma2 * w / delta2).sqrt(), rng)?;
    }
    let state =
        ChainState { blocks, mandatory_coef, mandatory_contrib, weights, delta2, eta };
    Ok((state, y))
}

/// Redraw the data from the likelihood given the current parameters and
/// latent weights.
fn redraw_response(model: &GibbsModel, state: &ChainState, rng: &mut RandomStream) -> Result<DVector<f64>> {
    let qc = model.constants;
    let n = state.eta.len();
    let mut y = DVector::zeros(n);
    for i in 0..n {
        let w = state.weights[i];
        y[i] = sample_normal(
            state.eta[i] + qc.xi * w,
            (qc.sigma2 * w / state.delta2).sqrt(),
            rng,
        )?;
    }
    Ok(y)
}

fn mean_and_variance(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|&v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Run both simulators for `sweeps` iterations each and standardize the
/// test-function mean differences. `fault` deliberately corrupts one update
/// so the test's own sensitivity can be demonstrated.
pub fn geweke_joint_test(
    setup: &GewekeSetup,
    sweeps: usize,
    fault: Fault,
    rng: &mut RandomStream,
) -> Result<GewekeReport> {
    if sweeps < 100 {
        return Err(Error::Domain(format!("joint test needs at least 100 sweeps, got {sweeps}")));
    }
    // Propriety is not enough: z-scores need finite test-function variances.
    // The binding case is the squared-response function, whose variance
    // involves the fourth moment of the latent weights and hence the fourth
    // inverse moment of the data scale.
    if setup.hyper.a_delta <= 4.0 {
        return Err(Error::Domain(format!(
            "joint test needs a data-scale shape above 4 for finite test-function \
             variances, got {}",
            setup.hyper.a_delta
        )));
    }
    if setup.hyper.a <= 2.0 {
        return Err(Error::Domain(format!(
            "joint test needs a hypervariance shape above 2 for finite test-function \
             variances, got {}",
            setup.hyper.a
        )));
    }
    if !(setup.hyper.mandatory_precision > 1e-3) {
        return Err(Error::Domain(
            "joint test needs a proper mandatory-coefficient prior (precision > 1e-3)"
                .to_string(),
        ));
    }

    let n = setup.mandatory.nrows();
    let mut model = GibbsModel::new(
        &setup.blocks,
        &setup.scales,
        &setup.mandatory,
        DVector::zeros(n),
        setup.hyper,
        setup.tau,
    )?
    .with_fault(fault);

    let labels = labels(setup);
    let k = labels.len();

    // Forward simulator: independent joint draws.
    let mut forward: Vec<Vec<f64>> = vec![Vec::with_capacity(sweeps); k];
    for _ in 0..sweeps {
        let (state, y) = draw_joint(&model, rng)?;
        for (series, value) in forward.iter_mut().zip(evaluate(&state, &y)) {
            series.push(value);
        }
    }

    // Successive-conditional simulator: Gibbs sweep, then data redraw.
    // Starting from an exact joint draw, the chain is stationary from the
    // first iteration.
    let mut chain: Vec<Vec<f64>> = vec![Vec::with_capacity(sweeps); k];
    let (mut state, mut y) = draw_joint(&model, rng)?;
    for s in 1..=sweeps {
        model.set_response(y)?;
        sweep(&model, &mut state, s, rng)?;
        y = redraw_response(&model, &state, rng)?;
        for (series, value) in chain.iter_mut().zip(evaluate(&state, &y)) {
            series.push(value);
        }
    }

    let functions = labels
        .into_iter()
        .enumerate()
        .map(|(i, label)| {
            let (mf, vf) = mean_and_variance(&forward[i]);
            let (mc, vc) = mean_and_variance(&chain[i]);
            let ess = effective_sample_size(&chain[i]);
            let se = (vf / sweeps as f64 + vc / ess).sqrt();
            let diff = mf - mc;
            let z = if se > 0.0 {
                diff / se
            } else if diff.abs() < 1e-12 {
                0.0
            } else {
                f64::INFINITY
            };
            GewekeFunction { label, forward_mean: mf, chain_mean: mc, chain_ess: ess, z }
        })
        .collect();
    Ok(GewekeReport {
        sweeps,
        fault: format!("{fault:?}"),
        functions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn joint_test_passes_for_the_correct_sampler() {
        let setup = reduced_model(20).unwrap();
        let mut rng = RandomStream::new(0x6e3e);
        let report = geweke_joint_test(&setup, 20_000, Fault::None, &mut rng).unwrap();
        assert_eq!(report.functions.len(), 13);
        let max_z = report.max_abs_z();
        assert!(
            max_z < 4.0,
            "joint test failed: max |z| = {max_z:.2}\n{:?}",
            report
                .functions
                .iter()
                .map(|f| format!("{}: {:.2}", f.label, f.z))
                .collect::<Vec<_>>()
        );
    }

    #[test]
    fn corrupted_update_is_detected() {
        let setup = reduced_model(20).unwrap();
        let mut rng = RandomStream::new(0x6e3e);
        let report =
            geweke_joint_test(&setup, 20_000, Fault::HypervarianceScale, &mut rng).unwrap();
        assert!(
            report.max_abs_z() > 5.0,
            "halved hypervariance scale went undetected: max |z| = {}",
            report.max_abs_z()
        );
    }

    #[test]
    fn joint_test_is_deterministic_given_seed() {
        let setup = reduced_model(12).unwrap();
        let mut r1 = RandomStream::new(7);
        let mut r2 = RandomStream::new(7);
        let a = geweke_joint_test(&setup, 500, Fault::None, &mut r1).unwrap();
        let b = geweke_joint_test(&setup, 500, Fault::None, &mut r2).unwrap();
        let za: Vec<f64> = a.functions.iter().map(|f| f.z).collect();
        let zb: Vec<f64> = b.functions.iter().map(|f| f.z).collect();
        assert_eq!(za, zb);
    }

    #[test]
    fn insufficient_prior_moments_are_rejected() {
        let mut setup = reduced_model(12).unwrap();
        setup.hyper.a_delta = 2.0;
        let mut rng = RandomStream::new(1);
        assert!(geweke_joint_test(&setup, 500, Fault::None, &mut rng).is_err());

        let mut setup = reduced_model(12).unwrap();
        setup.hyper.mandatory_precision = 1e-6;
        assert!(geweke_joint_test(&setup, 500, Fault::None, &mut rng).is_err());

        let setup = reduced_model(12).unwrap();
        assert!(geweke_joint_test(&setup, 10, Fault::None, &mut rng).is_err());
    }
}
