//! Hyperparameter elicitation from sup-norm probability statements.
//!
//! For each selectable block the user states: with probability `alpha` an
//! included effect stays below `c` in sup-norm, and with probability
//! `1 - alpha` an excluded effect does. Both statements pin down the slab
//! scale `b` and the spike factor `r` through one Monte Carlo simulation of
//! the unit-scale sup-norm: marginally over the hypervariance, the scalar
//! importance satisfies zeta = sqrt(2 r b) * zeta_tilde with zeta_tilde the
//! square root of a beta-prime(1/2, a) variate, so the scale factor can be
//! divided out, simulated once, and reinstated in closed form — no iterative
//! optimization. The same simulation serves both statements because only the
//! quantile looked up differs.

use nalgebra::{DMatrix, DVector};
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::dist::{sample_gamma, sample_inverse_gamma, sample_sqrt_beta_prime};
use crate::error::{Error, Result};
use crate::model::EffectBlock;
use crate::stream::RandomStream;

const MIN_DRAWS: usize = 10_000;

/// Sampler for the constrained coefficient prior: a spectral draw from
/// N(0, K^+) restricted to the penalty's positive eigenspace, then shifted
/// along the penalty kernel until the constraint holds exactly. The shift
/// moves only through flat directions of the prior density, so the result
/// has precisely the law of the unconstrained prior restricted to the
/// constraint subspace — the same distribution the data-driven coefficient
/// update converges to as the likelihood vanishes. That identity is what
/// makes the importance update's quadratic form a chi-square with
/// rank-of-penalty degrees of freedom under the prior.
pub struct PriorSpectrum {
    /// D x m: eigenvectors scaled by 1/sqrt(eigenvalue).
    components: DMatrix<f64>,
    /// Kernel-direction correction I - N (A N)^+ A; absent when the block
    /// has no constraint.
    projector: Option<DMatrix<f64>>,
}

impl PriorSpectrum {
    pub fn new(block: &EffectBlock) -> Result<Self> {
        let d = block.dim();
        let eig = block.penalty.clone().symmetric_eigen();
        let max_ev = eig.eigenvalues.amax();
        let kept: Vec<usize> =
            (0..d).filter(|&j| eig.eigenvalues[j] > 1e-10 * max_ev).collect();
        if kept.is_empty() {
            return Err(Error::Domain(format!("block '{}' has a zero penalty", block.id)));
        }
        let mut components = DMatrix::zeros(d, kept.len());
        let mut row_space = DMatrix::zeros(d, d); // projector onto the support
        for (k, &j) in kept.iter().enumerate() {
            let u = eig.eigenvectors.column(j);
            components.set_column(k, &(u / eig.eigenvalues[j].sqrt()));
            row_space += u * u.transpose();
        }

        let a = &block.constraint;
        let m = a.nrows();
        let projector = if m == 0 {
            None
        } else {
            let kernel = &block.kernel;
            let an = a * kernel; // m x k
            let an_pinv = if kernel.ncols() == 0 {
                DMatrix::zeros(0, m)
            } else {
                an.clone().svd(true, true).pseudo_inverse(1e-12 * an.amax().max(1.0)).map_err(
                    |e| Error::Domain(format!("block '{}': constraint pseudo-inverse: {e}", block.id)),
                )?
            };
            // The correction can only zero constraint functionals reachable
            // through the kernel; verify the remainder already vanishes on
            // the spectral support.
            let reached = &an * &an_pinv; // m x m
            let resid = (DMatrix::identity(m, m) - reached) * (a * &row_space);
            if resid.amax() > 1e-8 * a.amax().max(1.0) {
                return Err(Error::Domain(format!(
                    "block '{}': constraint is not attainable by a kernel-direction shift \
                     of the coefficient prior",
                    block.id
                )));
            }
            Some(DMatrix::identity(d, d) - kernel * an_pinv * a)
        };
        Ok(PriorSpectrum { components, projector })
    }

    /// One coefficient draw honoring the block constraint exactly.
    pub fn draw(&self, rng: &mut RandomStream) -> DVector<f64> {
        let z = DVector::from_fn(self.components.ncols(), |_, _| {
            rand_distr::StandardNormal.sample(rng)
        });
        let beta = &self.components * z;
        match &self.projector {
            Some(p) => p * beta,
            None => beta,
        }
    }

    fn draw_batch(&self, count: usize, rng: &mut RandomStream) -> DMatrix<f64> {
        let z = DMatrix::from_fn(self.components.ncols(), count, |_, _| {
            rand_distr::StandardNormal.sample(rng)
        });
        let betas = &self.components * z;
        match &self.projector {
            Some(p) => p * betas,
            None => betas,
        }
    }
}

/// Monte Carlo sample of the unit-scale sup-norm: each draw is
/// max over observed rows of |zeta_tilde * (B beta_tilde)| with
/// zeta_tilde ~ sqrt-beta-prime(1/2, a) and beta_tilde from the constrained
/// coefficient prior.
pub fn simulate_supnorm(
    block: &EffectBlock,
    a: f64,
    num_draws: usize,
    rng: &mut RandomStream,
) -> Result<Vec<f64>> {
    if num_draws < MIN_DRAWS {
        return Err(Error::Domain(format!(
            "sup-norm simulation needs at least {MIN_DRAWS} draws, got {num_draws}"
        )));
    }
    if block.design.nrows() == 0 {
        return Err(Error::Domain(format!("block '{}' has no observed rows", block.id)));
    }
    let spectrum = PriorSpectrum::new(block)?;
    let mut out = Vec::with_capacity(num_draws);
    let chunk = 512;
    let mut remaining = num_draws;
    while remaining > 0 {
        let m = remaining.min(chunk);
        let betas = spectrum.draw_batch(m, rng);
        let effects = &block.design * &betas; // n x m
        for c in 0..m {
            let zt = sample_sqrt_beta_prime(a, rng)?;
            out.push(zt * effects.column(c).amax());
        }
        remaining -= m;
    }
    Ok(out)
}

/// Quantile by linear interpolation of order statistics (the convention
/// where q(p) sits at rank (n-1)p within the sorted sample).
pub fn interpolated_quantile(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty() && (0.0..=1.0).contains(&p));
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    if lo + 1 >= sorted.len() {
        return sorted[sorted.len() - 1];
    }
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
}

/// Solved hyperparameters for one block, with the simulation evidence kept
/// for the manifest.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Elicited {
    pub block_id: String,
    pub a: f64,
    pub alpha: f64,
    pub c: f64,
    pub b: f64,
    pub r: f64,
    pub q_slab: f64,
    pub q_spike: f64,
    pub num_draws: usize,
}

/// Slab scale from the alpha-quantile of the unit sup-norm sample:
/// sqrt(2b) * q_slab = c.
pub fn solve_slab_scale(c: f64, alpha: f64, sorted_supnorm: &[f64]) -> Result<f64> {
    if !(c > 0.0) || !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("need c > 0 and alpha in (0, 1), got ({c}, {alpha})")));
    }
    if sorted_supnorm.is_empty() {
        return Err(Error::Domain("empty sup-norm sample".to_string()));
    }
    let q = interpolated_quantile(sorted_supnorm, alpha);
    if !(q > 0.0) {
        return Err(Error::numerical("slab elicitation", "degenerate sup-norm sample"));
    }
    Ok(c * c / (2.0 * q * q))
}

/// Spike factor from the (1-alpha)-quantile: sqrt(2 r b) * q_spike = c.
/// Values at or above one (possible only for alpha >= 0.5) are returned with
/// a warning — they signal an inconsistent (c, alpha) statement.
pub fn solve_spike_factor(c: f64, alpha: f64, b: f64, sorted_supnorm: &[f64]) -> Result<f64> {
    if !(b > 0.0) {
        return Err(Error::Domain(format!("slab scale must be positive, got {b}")));
    }
    let q = interpolated_quantile(sorted_supnorm, 1.0 - alpha);
    if !(q > 0.0) {
        return Err(Error::numerical("spike elicitation", "degenerate sup-norm sample"));
    }
    let r = c * c / (2.0 * b * q * q);
    if r >= 1.0 {
        log::warn!("elicited spike factor {r} >= 1; the (c, alpha) statement is inconsistent");
    }
    Ok(r)
}

/// Full elicitation for one block: one simulation pass, two quantile
/// look-ups.
pub fn elicit_block(
    block: &EffectBlock,
    a: f64,
    alpha: f64,
    c: f64,
    num_draws: usize,
    rng: &mut RandomStream,
) -> Result<Elicited> {
    let mut sims = simulate_supnorm(block, a, num_draws, rng)?;
    sims.sort_by(|x, y| x.partial_cmp(y).expect("non-finite sup-norm draw"));
    let b = solve_slab_scale(c, alpha, &sims)?;
    let r = solve_spike_factor(c, alpha, b, &sims)?;
    Ok(Elicited {
        block_id: block.id.clone(),
        a,
        alpha,
        c,
        b,
        r,
        q_slab: interpolated_quantile(&sims, alpha),
        q_spike: interpolated_quantile(&sims, 1.0 - alpha),
        num_draws,
    })
}

/// Per-block elicitation statement: tail probability and effect-size bound.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElicitParams {
    pub alpha: f64,
    pub c: f64,
}

/// Elicit every block of a model, each on its own forked stream (block order
/// therefore does not perturb results) and with its own (alpha, c) statement.
/// Non-selectable blocks are included too: they still need a slab scale for
/// their importance prior.
pub fn elicit_model(
    blocks: &[EffectBlock],
    a: f64,
    params: &[ElicitParams],
    num_draws: usize,
    parent: &RandomStream,
) -> Result<Vec<Elicited>> {
    if params.len() != blocks.len() {
        return Err(Error::Config(format!(
            "elicitation needs one (alpha, c) pair per block: {} pairs for {} blocks",
            params.len(),
            blocks.len()
        )));
    }
    blocks
        .iter()
        .zip(params)
        .enumerate()
        .map(|(i, (block, p))| {
            let mut rng = parent.fork(0x5e1e_c700 + i as u64);
            elicit_block(block, a, p.alpha, p.c, num_draws, &mut rng)
        })
        .collect()
}

/// Forward check of an elicited pair: simulate the *full* prior hierarchy
/// (hypervariance, then importance, then coefficients) and report
/// P(sup-norm <= c) under inclusion (`gamma` true) or exclusion. Written
/// against the hierarchy directly — not the beta-prime shortcut — so it
/// exercises an independent path through the prior.
pub fn forward_supnorm_probability(
    block: &EffectBlock,
    a: f64,
    b: f64,
    r: f64,
    gamma: bool,
    c: f64,
    num_draws: usize,
    rng: &mut RandomStream,
) -> Result<f64> {
    if num_draws < MIN_DRAWS {
        return Err(Error::Domain(format!(
            "forward check needs at least {MIN_DRAWS} draws, got {num_draws}"
        )));
    }
    let spectrum = PriorSpectrum::new(block)?;
    let r_gamma = if gamma { 1.0 } else { r };
    let mut hits = 0usize;
    for _ in 0..num_draws {
        let psi2 = sample_inverse_gamma(a, b, rng)?;
        let zeta2 = sample_gamma(0.5, 1.0 / (2.0 * r_gamma * psi2), rng)?;
        let beta = spectrum.draw(rng);
        let sup = zeta2.sqrt() * (&block.design * beta).amax();
        if sup <= c {
            hits += 1;
        }
    }
    Ok(hits as f64 / num_draws as f64)
}
