//! End-to-end pipelines behind the CLI: the fit pipeline (data → blocks →
//! elicitation → chains → summaries → files), the standalone elicitation
//! pass, scenario simulation to disk, and the oracle-backed verification
//! suites.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::data::Dataset;
use crate::dist::{ald_cdf, sample_ald_mixture, sample_gig, sample_inverse_gaussian,
    sample_sqrt_beta_prime, GigParams};
use crate::elicit::{elicit_model, ElicitParams, Elicited};
use crate::error::{Error, Result};
use crate::geweke::{geweke_joint_test, reduced_model};
use crate::gibbs::{run_chain, Fault, GibbsModel, PosteriorDraws};
use crate::model::{build_blocks, BuiltModel, CovariateSpec, EffectBlock, ModelSpec};
use crate::oracle::{ks_critical_1pct, ks_statistic, ks_test, linear_qr_exact,
    linear_qr_smoothed, RefDist};
use crate::scenario::{self, Scenario};
use crate::stream::RandomStream;
use crate::summary::{diagnostics, effect_curves, fitted_quantiles, inclusion_probabilities,
    log_quantile_crossings, pinball_score, Diagnostics, EffectCurve, FittedQuantiles,
    InclusionRow, DEFAULT_GRID_SIZE};

/// Fork tag for the chain at one (quantile index, chain index) slot. The high
/// bits keep these disjoint from the per-block elicitation tags.
fn run_tag(tau_index: usize, chain: usize) -> u64 {
    (0xF17u64 << 48) | ((tau_index as u64) << 32) | chain as u64
}

fn sha256_hex(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Data(format!("serializing {}: {e}", path.display())))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

fn csv_finish(mut w: csv::Writer<fs::File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

fn csv_row(w: &mut csv::Writer<fs::File>, path: &Path, fields: &[String]) -> Result<()> {
    w.write_record(fields)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

/// The (alpha, c) statement for each block: the covariate's own override when
/// given, the global hyper setting otherwise.
fn per_block_params(covariates: &[CovariateSpec], blocks: &[EffectBlock], alpha: f64, c: f64)
    -> Vec<ElicitParams>
{
    blocks
        .iter()
        .map(|b| {
            let cov = covariates.iter().find(|cv| cv.name == b.covariate);
            ElicitParams {
                alpha: cov.and_then(|cv| cv.alpha).unwrap_or(alpha),
                c: cov.and_then(|cv| cv.c).unwrap_or(c),
            }
        })
        .collect()
}

/// Run all (quantile, chain) tasks on the worker pool and return the draws
/// ordered by quantile level, then chain. Every chain gets its own stream
/// forked from the root seed, so the schedule cannot perturb results.
pub fn run_sampling(spec: &ModelSpec, built: &BuiltModel, scales: &[Elicited])
    -> Result<Vec<PosteriorDraws>>
{
    let models: Vec<GibbsModel> = spec
        .quantiles
        .iter()
        .map(|&tau| {
            GibbsModel::new(
                &built.blocks,
                scales,
                &built.mandatory,
                built.response.clone(),
                spec.hyper,
                tau,
            )
        })
        .collect::<Result<_>>()?;
    let root = RandomStream::new(spec.sampler.seed);
    let tasks: Vec<(usize, usize)> = (0..models.len())
        .flat_map(|ti| (0..spec.sampler.chains).map(move |ch| (ti, ch)))
        .collect();
    let mut results: Vec<((usize, usize), PosteriorDraws)> = tasks
        .par_iter()
        .map(|&(ti, ch)| {
            let mut rng = root.fork(run_tag(ti, ch));
            run_chain(&models[ti], &spec.sampler, spec.quantiles[ti], ch, &mut rng)
                .map(|d| ((ti, ch), d))
        })
        .collect::<Result<_>>()?;
    results.sort_by_key(|&((ti, ch), _)| (ti, ch));
    Ok(results.into_iter().map(|(_, d)| d).collect())
}

/// draws.csv column layout, fixed by the model structure.
fn draws_columns(built: &BuiltModel) -> Vec<String> {
    let mut cols: Vec<String> =
        ["tau", "chain", "sweep", "delta2"].iter().map(|s| s.to_string()).collect();
    for name in &built.mandatory_names {
        cols.push(format!("mandatory:{name}"));
    }
    for b in &built.blocks {
        cols.push(format!("gamma:{}", b.id));
        cols.push(format!("zeta2:{}", b.id));
        cols.push(format!("psi2:{}", b.id));
        cols.push(format!("omega:{}", b.id));
        for k in 0..b.dim() {
            cols.push(format!("coef:{}:{k}", b.id));
        }
    }
    cols
}

fn write_draws_csv(path: &Path, built: &BuiltModel, draws: &[PosteriorDraws]) -> Result<()> {
    let mut w = csv_writer(path)?;
    csv_row(&mut w, path, &draws_columns(built))?;
    for chain in draws {
        for s in 0..chain.len() {
            let mut row: Vec<String> = vec![
                format!("{}", chain.tau),
                format!("{}", chain.chain),
                format!("{}", chain.sweeps[s]),
                format!("{}", chain.delta2[s]),
            ];
            for v in &chain.mandatory[s] {
                row.push(format!("{v}"));
            }
            for bd in &chain.blocks {
                row.push(format!("{}", bd.gamma[s]));
                row.push(format!("{}", bd.zeta2[s]));
                row.push(format!("{}", bd.psi2[s]));
                row.push(format!("{}", bd.omega[s]));
                for v in &bd.coefs[s] {
                    row.push(format!("{v}"));
                }
            }
            csv_row(&mut w, path, &row)?;
        }
    }
    csv_finish(w, path)
}

fn write_inclusion_csv(path: &Path, rows: &[InclusionRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    csv_row(&mut w, path, &to_strings(&["covariate", "part", "tau", "inclusion_prob", "selected"]))?;
    for r in rows {
        csv_row(&mut w, path, &[
            r.covariate.clone(),
            r.part.clone(),
            format!("{}", r.tau),
            format!("{}", r.inclusion_prob),
            format!("{}", r.selected),
        ])?;
    }
    csv_finish(w, path)
}

/// Wide companion table: one row per effect part, one probability column per
/// quantile level. Only written for multi-quantile fits.
fn write_inclusion_wide_csv(path: &Path, rows: &[InclusionRow], taus: &[f64]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header = vec!["covariate".to_string(), "part".to_string()];
    for t in taus {
        header.push(format!("tau={t}"));
    }
    csv_row(&mut w, path, &header)?;
    for group in rows.chunks(taus.len()) {
        let mut row = vec![group[0].covariate.clone(), group[0].part.clone()];
        for r in group {
            row.push(format!("{}", r.inclusion_prob));
        }
        csv_row(&mut w, path, &row)?;
    }
    csv_finish(w, path)
}

fn write_curves_csv(path: &Path, curves: &[EffectCurve]) -> Result<()> {
    let mut w = csv_writer(path)?;
    csv_row(&mut w, path, &to_strings(&["covariate", "part", "tau", "x", "mean", "lo95", "hi95"]))?;
    for c in curves {
        for g in 0..c.x.len() {
            csv_row(&mut w, path, &[
                c.covariate.clone(),
                c.part.clone(),
                format!("{}", c.tau),
                format!("{}", c.x[g]),
                format!("{}", c.mean[g]),
                format!("{}", c.lower[g]),
                format!("{}", c.upper[g]),
            ])?;
        }
    }
    csv_finish(w, path)
}

fn write_fitted_csv(path: &Path, fits: &[FittedQuantiles]) -> Result<()> {
    let mut w = csv_writer(path)?;
    csv_row(&mut w, path, &to_strings(&["row", "tau", "mean", "lo95", "hi95"]))?;
    for f in fits {
        for i in 0..f.mean.len() {
            csv_row(&mut w, path, &[
                format!("{i}"),
                format!("{}", f.tau),
                format!("{}", f.mean[i]),
                format!("{}", f.lower[i]),
                format!("{}", f.upper[i]),
            ])?;
        }
    }
    csv_finish(w, path)
}

fn to_strings(fields: &[&str]) -> Vec<String> {
    fields.iter().map(|s| s.to_string()).collect()
}

/// Everything needed to rerun a fit bit-exactly, plus wall-clock accounting.
/// Written with `complete: false` before sampling starts, finalized after the
/// summaries are on disk.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub software: String,
    pub config: RunConfig,
    pub data_sha256: String,
    pub rows_used: usize,
    pub dropped_rows: usize,
    pub root_seed: u64,
    pub runs: Vec<SeedEntry>,
    pub elicitation_reused: bool,
    pub elicitation: Vec<Elicited>,
    pub draws_columns: Vec<String>,
    pub stage_ms: BTreeMap<String, u128>,
    pub complete: bool,
}

/// One sampled (quantile, chain) slot and the stream tag it forks from the
/// root seed.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SeedEntry {
    pub tau: f64,
    pub chain: usize,
    pub fork_tag: u64,
}

/// Per-quantile mean check loss of the posterior-mean fit.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct PinballEntry {
    pub tau: f64,
    pub score: f64,
}

/// diagnostics.json payload.
#[derive(Clone, Debug, Serialize)]
pub struct DiagnosticsReport {
    pub schema_version: u32,
    #[serde(flatten)]
    pub convergence: Diagnostics,
    pub pinball: Vec<PinballEntry>,
    pub quantile_crossings: usize,
}

/// In-memory view of a finished fit; everything here is also on disk in the
/// output directory.
pub struct FitOutputs {
    pub output_dir: PathBuf,
    pub built: BuiltModel,
    pub scales: Vec<Elicited>,
    pub draws: Vec<PosteriorDraws>,
    pub inclusion: Vec<InclusionRow>,
    pub curves: Vec<EffectCurve>,
    pub fits: Vec<FittedQuantiles>,
    pub diagnostics: DiagnosticsReport,
    pub manifest: RunManifest,
}

fn load_elicitation(path: &Path, blocks: &[EffectBlock]) -> Result<Vec<Elicited>> {
    let text = fs::read_to_string(path)?;
    let loaded: Vec<Elicited> = serde_json::from_str(&text)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    if loaded.len() != blocks.len()
        || loaded.iter().zip(blocks).any(|(e, b)| e.block_id != b.id)
    {
        return Err(Error::Config(format!(
            "existing {} does not match the model's blocks; delete it or use a fresh \
             output directory",
            path.display()
        )));
    }
    Ok(loaded)
}

/// The full fit pipeline. Reuses `elicitation.json` from the output directory
/// when one is already there (as written by the `elicit` command or an
/// earlier fit); otherwise elicitation runs first and its result is saved.
pub fn fit(cfg: &RunConfig) -> Result<FitOutputs> {
    let spec = cfg.to_model_spec()?;
    let data = Dataset::from_csv_path(&cfg.data)?;
    let data_sha256 = sha256_hex(&cfg.data)?;
    let built = build_blocks(&data, &spec)?;
    fs::create_dir_all(&cfg.output)?;
    let mut stage_ms = BTreeMap::new();

    let elicit_path = cfg.output.join("elicitation.json");
    let started = Instant::now();
    let (scales, elicitation_reused) = if elicit_path.exists() {
        log::info!("reusing elicitation from {}", elicit_path.display());
        (load_elicitation(&elicit_path, &built.blocks)?, true)
    } else {
        let params = per_block_params(&spec.covariates, &built.blocks, spec.hyper.alpha,
            spec.hyper.c);
        let parent = RandomStream::new(spec.sampler.seed);
        let scales =
            elicit_model(&built.blocks, spec.hyper.a, &params, cfg.elicitation_draws, &parent)?;
        write_json(&elicit_path, &scales)?;
        (scales, false)
    };
    stage_ms.insert("elicitation".to_string(), started.elapsed().as_millis());
    log::info!("elicitation ready ({} blocks, {} ms)", scales.len(), stage_ms["elicitation"]);

    let runs: Vec<SeedEntry> = (0..spec.quantiles.len())
        .flat_map(|ti| {
            (0..spec.sampler.chains).map(move |ch| (ti, ch))
        })
        .map(|(ti, ch)| SeedEntry {
            tau: spec.quantiles[ti],
            chain: ch,
            fork_tag: run_tag(ti, ch),
        })
        .collect();
    let mut manifest = RunManifest {
        schema_version: 1,
        software: format!("staqsel {}", env!("CARGO_PKG_VERSION")),
        config: cfg.clone(),
        data_sha256,
        rows_used: built.response.len(),
        dropped_rows: built.dropped_rows,
        root_seed: spec.sampler.seed,
        runs,
        elicitation_reused,
        elicitation: scales.clone(),
        draws_columns: draws_columns(&built),
        stage_ms: stage_ms.clone(),
        complete: false,
    };
    let manifest_path = cfg.output.join("manifest.json");
    write_json(&manifest_path, &manifest)?;

    let started = Instant::now();
    let draws = run_sampling(&spec, &built, &scales)?;
    stage_ms.insert("sampling".to_string(), started.elapsed().as_millis());
    log::info!(
        "sampling finished: {} chains x {} stored draws in {} ms",
        draws.len(),
        draws.first().map_or(0, PosteriorDraws::len),
        stage_ms["sampling"]
    );

    let started = Instant::now();
    let inclusion = inclusion_probabilities(&built.blocks, &draws)?;
    let curves = effect_curves(&built.blocks, &built.ranges, &draws, DEFAULT_GRID_SIZE)?;
    let fits = fitted_quantiles(&built.mandatory, &built.blocks, &draws)?;
    let crossings = log_quantile_crossings(&fits);
    let convergence = diagnostics(&built.mandatory_names, &draws)?;
    let y: Vec<f64> = built.response.iter().cloned().collect();
    let pinball: Vec<PinballEntry> = fits
        .iter()
        .map(|f| {
            Ok(PinballEntry { tau: f.tau, score: pinball_score(&y, &f.mean, f.tau)? })
        })
        .collect::<Result<_>>()?;
    let report = DiagnosticsReport {
        schema_version: 1,
        convergence,
        pinball,
        quantile_crossings: crossings,
    };

    write_draws_csv(&cfg.output.join("draws.csv"), &built, &draws)?;
    write_inclusion_csv(&cfg.output.join("inclusion_table.csv"), &inclusion)?;
    if spec.quantiles.len() >= 2 {
        write_inclusion_wide_csv(
            &cfg.output.join("inclusion_wide.csv"),
            &inclusion,
            &spec.quantiles,
        )?;
    }
    write_curves_csv(&cfg.output.join("effect_curves.csv"), &curves)?;
    write_fitted_csv(&cfg.output.join("fitted_quantiles.csv"), &fits)?;
    write_json(&cfg.output.join("diagnostics.json"), &report)?;
    stage_ms.insert("summaries".to_string(), started.elapsed().as_millis());

    manifest.stage_ms = stage_ms;
    manifest.complete = true;
    write_json(&manifest_path, &manifest)?;
    log::info!("fit outputs written to {}", cfg.output.display());

    Ok(FitOutputs {
        output_dir: cfg.output.clone(),
        built,
        scales,
        draws,
        inclusion,
        curves,
        fits,
        diagnostics: report,
        manifest,
    })
}

/// The standalone elicitation pass: build the model, solve every block's
/// (b, r), write `elicitation.json`, run no sampling.
pub fn elicit_only(cfg: &RunConfig) -> Result<PathBuf> {
    let spec = cfg.to_model_spec()?;
    let data = Dataset::from_csv_path(&cfg.data)?;
    let built = build_blocks(&data, &spec)?;
    fs::create_dir_all(&cfg.output)?;
    let params =
        per_block_params(&spec.covariates, &built.blocks, spec.hyper.alpha, spec.hyper.c);
    let parent = RandomStream::new(spec.sampler.seed);
    let scales =
        elicit_model(&built.blocks, spec.hyper.a, &params, cfg.elicitation_draws, &parent)?;
    let path = cfg.output.join("elicitation.json");
    write_json(&path, &scales)?;
    log::info!("elicitation for {} blocks written to {}", scales.len(), path.display());
    Ok(path)
}

/// Write one scenario's CSV and ground-truth JSON into a directory; file
/// names carry the scenario id.
pub fn simulate_to_dir(
    scenario: Scenario,
    n: usize,
    seed: u64,
    dir: &Path,
) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir)?;
    let sim = scenario::simulate(scenario, n, seed)?;
    let csv_path = dir.join(format!("{}.csv", scenario.id()));
    let truth_path = dir.join(format!("{}_truth.json", scenario.id()));
    fs::write(&csv_path, &sim.csv)?;
    write_json(&truth_path, &sim.truth)?;
    log::info!("wrote {} and {}", csv_path.display(), truth_path.display());
    Ok((csv_path, truth_path))
}

/// One named check inside a verification suite.
#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub statistic: f64,
    pub threshold: f64,
    pub detail: String,
}

/// Outcome of one verification suite.
#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub suite: String,
    pub passed: bool,
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    fn new(suite: &str, checks: Vec<CheckResult>) -> Self {
        VerifyReport { suite: suite.to_string(), passed: checks.iter().all(|c| c.passed), checks }
    }
}

fn ks_check(name: &str, statistic: f64, critical: f64) -> CheckResult {
    CheckResult {
        name: name.to_string(),
        passed: statistic < critical,
        statistic,
        threshold: critical,
        detail: "Kolmogorov-Smirnov at the 1% level".to_string(),
    }
}

const VERIFY_DRAWS: usize = 100_000;

/// Samplers versus numerically integrated reference CDFs, plus the location
/// mixture against the closed-form asymmetric-Laplace CDF.
pub fn distributions_suite(seed: u64) -> Result<VerifyReport> {
    let mut rng = RandomStream::new(seed);
    let mut checks = Vec::new();

    for (p, a, b) in [(-3.0, 2.0, 1.5), (0.0, 1.0, 0.8), (0.5, 2.0, 3.0)] {
        let par = GigParams { p, a, b };
        let sample: Vec<f64> =
            (0..VERIFY_DRAWS).map(|_| sample_gig(&par, &mut rng)).collect::<Result<_>>()?;
        let r = ks_test(RefDist::Gig { p, a, b }, &sample)?;
        checks.push(ks_check(&format!("gig(p={p}, a={a}, b={b})"), r.statistic, r.critical));
    }
    for (mean, shape) in [(1.0, 2.0), (3.0, 0.5)] {
        let sample: Vec<f64> = (0..VERIFY_DRAWS)
            .map(|_| sample_inverse_gaussian(mean, shape, &mut rng))
            .collect::<Result<_>>()?;
        let r = ks_test(RefDist::InverseGaussian { mean, shape }, &sample)?;
        checks.push(ks_check(
            &format!("inverse-gaussian(mean={mean}, shape={shape})"),
            r.statistic,
            r.critical,
        ));
    }
    {
        let sample: Vec<f64> = (0..VERIFY_DRAWS)
            .map(|_| sample_sqrt_beta_prime(5.0, &mut rng))
            .collect::<Result<_>>()?;
        let r = ks_test(RefDist::SqrtBetaPrime { a: 5.0 }, &sample)?;
        checks.push(ks_check("beta-prime(1/2, 5) via its square root", r.statistic, r.critical));
    }

    let (eta, delta2) = (0.7, 2.0);
    for tau in [0.6, 0.8, 0.9] {
        let mut sample: Vec<f64> = (0..VERIFY_DRAWS)
            .map(|_| sample_ald_mixture(eta, delta2, tau, &mut rng))
            .collect::<Result<_>>()?;
        let below = sample.iter().filter(|&&v| v <= eta).count() as f64 / sample.len() as f64;
        sample.sort_by(|x, y| x.partial_cmp(y).expect("non-finite draw"));
        let cdf: Vec<f64> = sample.iter().map(|&v| ald_cdf(v, eta, delta2, tau)).collect();
        checks.push(ks_check(
            &format!("ald mixture, tau={tau}"),
            ks_statistic(&cdf),
            ks_critical_1pct(sample.len()),
        ));
        checks.push(CheckResult {
            name: format!("P(Y <= eta) at tau={tau}"),
            passed: (below - tau).abs() <= 0.01,
            statistic: below,
            threshold: 0.01,
            detail: format!("below-fraction must be within 0.01 of {tau}"),
        });
    }
    Ok(VerifyReport::new("distributions", checks))
}

/// Joint-distribution sampler test on the reduced model: a clean run must
/// keep every test function's |z| below 3, and a deliberately faulted
/// hypervariance update must push some |z| past 5.
pub fn geweke_suite(sweeps: usize, seed: u64) -> Result<VerifyReport> {
    let setup = reduced_model(20)?;
    let mut rng = RandomStream::new(seed);
    let clean = geweke_joint_test(&setup, sweeps, Fault::None, &mut rng)?;
    let mut checks: Vec<CheckResult> = clean
        .functions
        .iter()
        .map(|f| CheckResult {
            name: format!("clean run: {}", f.label),
            passed: f.z.abs() < 3.0,
            statistic: f.z,
            threshold: 3.0,
            detail: "autocorrelation-adjusted z-score".to_string(),
        })
        .collect();
    let mut rng = RandomStream::new(seed ^ 0x00ff_00ff);
    let faulted = geweke_joint_test(&setup, sweeps, Fault::HypervarianceScale, &mut rng)?;
    checks.push(CheckResult {
        name: "faulted hypervariance update is detected".to_string(),
        passed: faulted.max_abs_z() > 5.0,
        statistic: faulted.max_abs_z(),
        threshold: 5.0,
        detail: "largest |z| must exceed 5 once the update is corrupted".to_string(),
    });
    Ok(VerifyReport::new("geweke", checks))
}

/// Smoothed check-loss minimizer against the exact linear-programming vertex
/// solution on small random instances.
pub fn qr_mode_suite(seed: u64) -> Result<VerifyReport> {
    let mut rng = RandomStream::new(seed);
    let normal = rand_distr::StandardNormal;
    let mut checks = Vec::new();
    for instance in 0..5 {
        let n = 15;
        let x = DMatrix::from_fn(n, 2, |_, c| {
            if c == 0 {
                1.0
            } else {
                rng.uniform_open()
            }
        });
        let y = DVector::from_fn(n, |r, _| {
            let z: f64 = rand_distr::Distribution::sample(&normal, &mut rng);
            0.5 + 1.5 * x[(r, 1)] + 0.4 * z
        });
        for tau in [0.5, 0.8] {
            let exact = linear_qr_exact(&x, &y, tau)?;
            let smoothed = linear_qr_smoothed(&x, &y, tau, 1e-6)?;
            let err = (&exact - &smoothed).amax();
            checks.push(CheckResult {
                name: format!("instance {instance}, tau={tau}"),
                passed: err <= 1e-2,
                statistic: err,
                threshold: 1e-2,
                detail: "max-norm gap between smoothed and exact coefficients".to_string(),
            });
        }
    }
    Ok(VerifyReport::new("qr-mode", checks))
}

/// Full-pipeline calibration on heteroskedastic data: the posterior-mean fit
/// at each quantile level must leave about that fraction of the data below
/// it, and must beat the constant-quantile baseline on check loss.
pub fn calibration_suite(seed: u64) -> Result<VerifyReport> {
    let sim = scenario::simulate(Scenario::HeteroskedasticLinear, 1_000, seed)?;
    let data = Dataset::from_reader(sim.csv.as_bytes())?;
    let mut spec = ModelSpec {
        response: "y".to_string(),
        covariates: vec![CovariateSpec {
            name: "x1".to_string(),
            kind: crate::model::CovariateKind::Decomposed,
            selectable: true,
            alpha: None,
            c: None,
        }],
        categoricals: Vec::new(),
        quantiles: vec![0.6, 0.8, 0.9],
        basis: Default::default(),
        hyper: Default::default(),
        sampler: Default::default(),
    };
    spec.sampler.seed = seed;
    spec.validate()?;
    let built = build_blocks(&data, &spec)?;
    let params =
        per_block_params(&spec.covariates, &built.blocks, spec.hyper.alpha, spec.hyper.c);
    let parent = RandomStream::new(spec.sampler.seed);
    let scales = elicit_model(&built.blocks, spec.hyper.a, &params, 20_000, &parent)?;
    let draws = run_sampling(&spec, &built, &scales)?;
    let fits = fitted_quantiles(&built.mandatory, &built.blocks, &draws)?;
    let y: Vec<f64> = built.response.iter().cloned().collect();

    let mut checks = Vec::new();
    for fit in &fits {
        let below = y
            .iter()
            .zip(&fit.mean)
            .filter(|(yi, fi)| yi <= fi)
            .count() as f64
            / y.len() as f64;
        checks.push(CheckResult {
            name: format!("below-fraction at tau={}", fit.tau),
            passed: (below - fit.tau).abs() <= 0.03,
            statistic: below,
            threshold: 0.03,
            detail: format!("fraction of y at or below the fit must be within 0.03 of {}",
                fit.tau),
        });

        let fitted_score = pinball_score(&y, &fit.mean, fit.tau)?;
        let mut sorted = y.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("non-finite response"));
        let constant = crate::elicit::interpolated_quantile(&sorted, fit.tau);
        let baseline = pinball_score(&y, &vec![constant; y.len()], fit.tau)?;
        checks.push(CheckResult {
            name: format!("beats constant baseline at tau={}", fit.tau),
            passed: fitted_score <= baseline,
            statistic: fitted_score,
            threshold: baseline,
            detail: "mean check loss of the fit vs the best constant".to_string(),
        });
    }
    Ok(VerifyReport::new("calibration", checks))
}

/// Dispatch a verification suite by id. `geweke` runs at the full sweep count
/// used for acceptance.
pub fn verify_suite(suite: &str, seed: u64) -> Result<VerifyReport> {
    match suite {
        "distributions" => distributions_suite(seed),
        "geweke" => geweke_suite(200_000, seed),
        "qr-mode" => qr_mode_suite(seed),
        "calibration" => calibration_suite(seed),
        other => Err(Error::Config(format!(
            "unknown suite {other:?}; available: distributions, geweke, qr-mode, calibration"
        ))),
    }
}
