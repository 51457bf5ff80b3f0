//! Posterior summaries and convergence diagnostics computed from stored
//! draws: effective sample sizes, split-chain shrink factors, inclusion
//! probabilities, effect curves, and fitted quantiles.
//!
//! Every summary here is a deterministic function of the stored draws; chains
//! at the same quantile level are pooled for point estimates and intervals.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::dist::check_loss;
use crate::elicit::interpolated_quantile;
use crate::error::{Error, Result};
use crate::gibbs::PosteriorDraws;
use crate::model::{back_transform, EffectBlock};

/// Autocovariance at lag `k` (biased 1/n normalization, the standard choice
/// for spectral estimation).
fn autocovariance(x: &[f64], mean: f64, k: usize) -> f64 {
    let n = x.len();
    let mut acc = 0.0;
    for i in 0..n - k {
        acc += (x[i] - mean) * (x[i + k] - mean);
    }
    acc / n as f64
}

/// Effective sample size by the initial-positive-sequence estimator: sum
/// adjacent autocovariance pairs until a pair turns non-positive, which for
/// a reversible chain is the first provably spurious term. Capped at the
/// nominal size; degenerate (constant) series count as fully independent.
pub fn effective_sample_size(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 4 {
        return n as f64;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let g0 = autocovariance(x, mean, 0);
    if !(g0 > 0.0) || !g0.is_finite() {
        return n as f64;
    }
    // paired_sum accumulates (gamma_{2m} + gamma_{2m+1}) / gamma_0.
    let mut paired_sum = 0.0;
    let mut m = 0usize;
    while 2 * m + 1 < n / 2 {
        let g = autocovariance(x, mean, 2 * m) + autocovariance(x, mean, 2 * m + 1);
        if g <= 0.0 {
            break;
        }
        paired_sum += g / g0;
        m += 1;
    }
    let iact = (2.0 * paired_sum - 1.0).max(1.0);
    (n as f64 / iact).min(n as f64)
}

/// Split-chain potential scale reduction: each chain is halved, and the
/// between-half variance of means is compared with the within-half variance.
/// Values near one indicate the halves are statistically interchangeable.
pub fn split_rhat(chains: &[Vec<f64>]) -> Result<f64> {
    if chains.is_empty() {
        return Err(Error::Domain("shrink factor needs at least one chain".to_string()));
    }
    let half = chains.iter().map(|c| c.len() / 2).min().unwrap_or(0);
    if half < 2 {
        return Ok(1.0); // too short to split; treat as converged-by-default
    }
    let mut pieces: Vec<&[f64]> = Vec::with_capacity(2 * chains.len());
    for c in chains {
        pieces.push(&c[..half]);
        pieces.push(&c[c.len() - half..]);
    }
    let m = pieces.len() as f64;
    let l = half as f64;
    let means: Vec<f64> = pieces.iter().map(|p| p.iter().sum::<f64>() / l).collect();
    let grand = means.iter().sum::<f64>() / m;
    let b = l * means.iter().map(|&x| (x - grand).powi(2)).sum::<f64>() / (m - 1.0);
    let w = pieces
        .iter()
        .zip(&means)
        .map(|(p, &mu)| p.iter().map(|&x| (x - mu).powi(2)).sum::<f64>() / (l - 1.0))
        .sum::<f64>()
        / m;
    if w <= 0.0 {
        // Zero within-half variance: either all constant (converged) or a
        // pathological point mass — report 1 rather than dividing by zero.
        return Ok(1.0);
    }
    Ok((((l - 1.0) / l * w + b / l) / w).sqrt())
}

/// Default number of grid points for effect curves.
pub const DEFAULT_GRID_SIZE: usize = 200;

/// Central credible band of a sample at the given level, by empirical
/// percentile interpolation. Widens monotonically with the level.
pub fn credible_band(sample: &[f64], level: f64) -> (f64, f64) {
    let mut sorted = sample.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let lo = (1.0 - level) / 2.0;
    (interpolated_quantile(&sorted, lo), interpolated_quantile(&sorted, 1.0 - lo))
}

fn mean_of(sample: &[f64]) -> f64 {
    sample.iter().sum::<f64>() / sample.len() as f64
}

/// Sorted distinct quantile levels present in the stored chains.
fn quantile_levels(chains: &[PosteriorDraws]) -> Vec<f64> {
    let mut taus: Vec<f64> = Vec::new();
    for c in chains {
        if !taus.contains(&c.tau) {
            taus.push(c.tau);
        }
    }
    taus.sort_by(|a, b| a.partial_cmp(b).unwrap());
    taus
}

fn ensure_stored(chains: &[PosteriorDraws]) -> Result<()> {
    if chains.is_empty() || chains.iter().any(|c| c.is_empty()) {
        return Err(Error::Domain("summaries need at least one stored draw".to_string()));
    }
    Ok(())
}

/// One row of the inclusion-probability table.
#[derive(Clone, Debug, Serialize)]
pub struct InclusionRow {
    pub covariate: String,
    pub part: String,
    pub tau: f64,
    pub inclusion_prob: f64,
    pub selected: bool,
}

/// Posterior mean of each block's selection indicator, per quantile level,
/// pooled over chains. An effect is selected when the mean reaches the 0.5
/// decision threshold (inclusive).
pub fn inclusion_probabilities(
    blocks: &[EffectBlock],
    chains: &[PosteriorDraws],
) -> Result<Vec<InclusionRow>> {
    ensure_stored(chains)?;
    let mut rows = Vec::new();
    for block in blocks {
        for &tau in &quantile_levels(chains) {
            let mut ones = 0usize;
            let mut count = 0usize;
            for chain in chains.iter().filter(|c| c.tau == tau) {
                let bd = chain
                    .blocks
                    .iter()
                    .find(|b| b.block_id == block.id)
                    .ok_or_else(|| Error::Domain(format!("no draws for block {}", block.id)))?;
                ones += bd.gamma.iter().map(|&g| g as usize).sum::<usize>();
                count += bd.gamma.len();
            }
            let prob = ones as f64 / count as f64;
            rows.push(InclusionRow {
                covariate: block.covariate.clone(),
                part: block.part.to_string(),
                tau,
                inclusion_prob: prob,
                selected: prob >= 0.5,
            });
        }
    }
    Ok(rows)
}

/// One effect curve: posterior mean and 95% pointwise band of a covariate's
/// linear part, smooth-deviation part, or their sum, on an equidistant grid
/// over the observed range (x in original units).
#[derive(Clone, Debug, Serialize)]
pub struct EffectCurve {
    pub covariate: String,
    pub part: String,
    pub tau: f64,
    pub x: Vec<f64>,
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Turn per-grid-point samples into one curve, guaranteeing the band brackets
/// the mean even when a heavily point-massed sample puts the mean outside the
/// central percentiles.
fn curve_from_samples(
    covariate: &str,
    part: &str,
    tau: f64,
    x: &[f64],
    samples: &[Vec<f64>],
) -> EffectCurve {
    let mut mean = Vec::with_capacity(samples.len());
    let mut lower = Vec::with_capacity(samples.len());
    let mut upper = Vec::with_capacity(samples.len());
    for s in samples {
        let m = mean_of(s);
        let (lo, hi) = credible_band(s, 0.95);
        mean.push(m);
        lower.push(lo.min(m));
        upper.push(hi.max(m));
    }
    EffectCurve {
        covariate: covariate.to_string(),
        part: part.to_string(),
        tau,
        x: x.to_vec(),
        mean,
        lower,
        upper,
    }
}

/// Posterior effect curves for every covariate with at least one block, per
/// quantile level: each present part plus the per-draw sum (`total`). Part
/// values are gated by that draw's selection indicator, so a never-included
/// block contributes an identically-zero curve with a zero-width band.
pub fn effect_curves(
    blocks: &[EffectBlock],
    ranges: &BTreeMap<String, (f64, f64)>,
    chains: &[PosteriorDraws],
    grid_size: usize,
) -> Result<Vec<EffectCurve>> {
    ensure_stored(chains)?;
    if grid_size < 2 {
        return Err(Error::Config("effect-curve grid needs at least two points".to_string()));
    }
    let std_grid: Vec<f64> =
        (0..grid_size).map(|i| i as f64 / (grid_size - 1) as f64).collect();
    let taus = quantile_levels(chains);

    let mut covariates: Vec<&str> = Vec::new();
    for b in blocks {
        if !covariates.contains(&b.covariate.as_str()) {
            covariates.push(&b.covariate);
        }
    }

    let mut curves = Vec::new();
    for cov in covariates {
        let range = *ranges
            .get(cov)
            .ok_or_else(|| Error::Domain(format!("no stored range for covariate {cov}")))?;
        let x_raw: Vec<f64> = std_grid.iter().map(|&s| back_transform(s, range)).collect();
        let parts: Vec<(&EffectBlock, DMatrix<f64>)> = blocks
            .iter()
            .filter(|b| b.covariate == cov)
            .map(|b| Ok((b, b.design_at(&std_grid)?)))
            .collect::<Result<_>>()?;

        for &tau in &taus {
            let pooled: usize = chains.iter().filter(|c| c.tau == tau).map(|c| c.len()).sum();
            let mut totals = vec![vec![0.0f64; pooled]; grid_size];
            for (block, grid_design) in &parts {
                let mut values: Vec<Vec<f64>> =
                    (0..grid_size).map(|_| Vec::with_capacity(pooled)).collect();
                let mut offset = 0usize;
                for chain in chains.iter().filter(|c| c.tau == tau) {
                    let bd = chain
                        .blocks
                        .iter()
                        .find(|b| b.block_id == block.id)
                        .ok_or_else(|| {
                            Error::Domain(format!("no draws for block {}", block.id))
                        })?;
                    for s in 0..chain.len() {
                        let coef = DVector::from_column_slice(&bd.coefs[s]);
                        let gate = f64::from(bd.gamma[s]);
                        let f = grid_design * coef;
                        for g in 0..grid_size {
                            let v = gate * f[g];
                            values[g].push(v);
                            totals[g][offset + s] += v;
                        }
                    }
                    offset += chain.len();
                }
                curves.push(curve_from_samples(
                    cov,
                    &block.part.to_string(),
                    tau,
                    &x_raw,
                    &values,
                ));
            }
            curves.push(curve_from_samples(cov, "total", tau, &x_raw, &totals));
        }
    }
    Ok(curves)
}

/// Per-observation posterior summary of the fitted quantile predictor.
#[derive(Clone, Debug, Serialize)]
pub struct FittedQuantiles {
    pub tau: f64,
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Posterior mean and 95% interval of the predictor at every training row,
/// per quantile level, recomputed exactly from the stored coefficients (no
/// selection gating — the predictor always carries every block).
pub fn fitted_quantiles(
    mandatory: &DMatrix<f64>,
    blocks: &[EffectBlock],
    chains: &[PosteriorDraws],
) -> Result<Vec<FittedQuantiles>> {
    ensure_stored(chains)?;
    let n = mandatory.nrows();
    let mut fits = Vec::new();
    for &tau in &quantile_levels(chains) {
        let mut rows: Vec<Vec<f64>> = vec![Vec::new(); n];
        for chain in chains.iter().filter(|c| c.tau == tau) {
            for s in 0..chain.len() {
                let m_coef = DVector::from_column_slice(&chain.mandatory[s]);
                let mut eta = mandatory * m_coef;
                for block in blocks {
                    let bd = chain
                        .blocks
                        .iter()
                        .find(|b| b.block_id == block.id)
                        .ok_or_else(|| {
                            Error::Domain(format!("no draws for block {}", block.id))
                        })?;
                    eta += &block.design * DVector::from_column_slice(&bd.coefs[s]);
                }
                for i in 0..n {
                    rows[i].push(eta[i]);
                }
            }
        }
        let mut mean = Vec::with_capacity(n);
        let mut lower = Vec::with_capacity(n);
        let mut upper = Vec::with_capacity(n);
        for r in &rows {
            let (lo, hi) = credible_band(r, 0.95);
            mean.push(mean_of(r));
            lower.push(lo);
            upper.push(hi);
        }
        fits.push(FittedQuantiles { tau, mean, lower, upper });
    }
    Ok(fits)
}

/// Count rows whose posterior-mean fit decreases between consecutive quantile
/// levels, and log (not fail on) any violations. Fitted quantile curves of
/// one dataset should be ordered in tau up to Monte Carlo noise.
pub fn log_quantile_crossings(fits: &[FittedQuantiles]) -> usize {
    let mut crossings = 0usize;
    for pair in fits.windows(2) {
        let (lo_fit, hi_fit) = (&pair[0], &pair[1]);
        if lo_fit.tau >= hi_fit.tau {
            continue;
        }
        let bad =
            lo_fit.mean.iter().zip(&hi_fit.mean).filter(|(a, b)| a > b).count();
        if bad > 0 {
            log::warn!(
                "fitted quantiles cross between tau={} and tau={} at {bad} of {} rows",
                lo_fit.tau,
                hi_fit.tau,
                lo_fit.mean.len()
            );
            crossings += bad;
        }
    }
    crossings
}

/// Mean check loss of fitted values against observations; zero iff the fit
/// passes through every point on the correct side.
pub fn pinball_score(y: &[f64], fitted: &[f64], tau: f64) -> Result<f64> {
    if y.len() != fitted.len() {
        return Err(Error::Domain(format!(
            "pinball score needs matching lengths, got {} observations and {} fitted values",
            y.len(),
            fitted.len()
        )));
    }
    if y.is_empty() {
        return Err(Error::Domain("pinball score needs at least one observation".to_string()));
    }
    Ok(y.iter().zip(fitted).map(|(&yi, &fi)| check_loss(yi - fi, tau)).sum::<f64>()
        / y.len() as f64)
}

/// Convergence report for one monitored scalar at one quantile level.
#[derive(Clone, Debug, Serialize)]
pub struct ScalarDiagnostic {
    pub name: String,
    pub tau: f64,
    pub ess: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rhat: Option<f64>,
}

/// Convergence diagnostics for the run: one entry per monitored scalar and
/// quantile level.
#[derive(Clone, Debug, Serialize)]
pub struct Diagnostics {
    pub scalars: Vec<ScalarDiagnostic>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub notice: Option<String>,
}

/// All monitored scalar series of one chain, in a fixed order shared by every
/// chain of the same model: the data scale, each mandatory coefficient, then
/// each block's importance, hypervariance, and inclusion probability.
fn monitored_scalars(
    chain: &PosteriorDraws,
    mandatory_names: &[String],
) -> Vec<(String, Vec<f64>)> {
    let mut out = vec![("delta2".to_string(), chain.delta2.clone())];
    for (i, name) in mandatory_names.iter().enumerate() {
        out.push((name.clone(), chain.mandatory.iter().map(|m| m[i]).collect()));
    }
    for bd in &chain.blocks {
        out.push((format!("{}:zeta2", bd.block_id), bd.zeta2.clone()));
        out.push((format!("{}:psi2", bd.block_id), bd.psi2.clone()));
        out.push((format!("{}:omega", bd.block_id), bd.omega.clone()));
    }
    out
}

/// Effective sample sizes (summed over chains) and split shrink factors for
/// the scale, every mandatory coefficient, and each block's importance,
/// hypervariance, and inclusion probability. With a single chain the shrink
/// factor column is omitted and a notice says why.
pub fn diagnostics(
    mandatory_names: &[String],
    chains: &[PosteriorDraws],
) -> Result<Diagnostics> {
    ensure_stored(chains)?;
    let mut scalars = Vec::new();
    let mut single_chain_seen = false;
    for &tau in &quantile_levels(chains) {
        let per_chain: Vec<Vec<(String, Vec<f64>)>> = chains
            .iter()
            .filter(|c| c.tau == tau)
            .map(|c| monitored_scalars(c, mandatory_names))
            .collect();
        single_chain_seen |= per_chain.len() < 2;
        for k in 0..per_chain[0].len() {
            let name = &per_chain[0][k].0;
            if per_chain.iter().any(|c| c[k].0 != *name) {
                return Err(Error::Domain(
                    "chains at one quantile level disagree on monitored scalars".to_string(),
                ));
            }
            let series: Vec<Vec<f64>> =
                per_chain.iter().map(|c| c[k].1.clone()).collect();
            let ess = series.iter().map(|s| effective_sample_size(s)).sum::<f64>();
            let rhat = if series.len() >= 2 { Some(split_rhat(&series)?) } else { None };
            scalars.push(ScalarDiagnostic { name: name.clone(), tau, ess, rhat });
        }
    }
    let notice = single_chain_seen
        .then(|| "split shrink factor omitted: needs at least two chains".to_string());
    Ok(Diagnostics { scalars, notice })
}
