//! Independent reference computations for the verification suites.
//!
//! Everything here deliberately avoids the sampler's own code paths:
//! distribution functions come from numeric quadrature of the density
//! kernels, and the linear quantile-regression reference is an exhaustive
//! vertex search. These are the yardsticks the Monte Carlo machinery is
//! measured against, so they favor transparency over speed.

use nalgebra::{DMatrix, DVector};

use crate::dist::check_loss;
use crate::error::{Error, Result};

/// Distributions with a known density kernel that the verification suites
/// integrate numerically. `SqrtBetaPrime { a }` is the distribution of
/// sqrt(W) for W ~ beta-prime(1/2, a); working on the square-root scale
/// removes the w^(-1/2) endpoint singularity, and Kolmogorov-Smirnov
/// distances are invariant under that monotone change of variable.
#[derive(Clone, Copy, Debug)]
pub enum RefDist {
    /// Density propto x^(p-1) exp(-(a*x + b/x)/2) on x > 0.
    Gig { p: f64, a: f64, b: f64 },
    /// (mean, shape) convention.
    InverseGaussian { mean: f64, shape: f64 },
    /// Density propto (1 + z^2)^-(a + 1/2) on z >= 0.
    SqrtBetaPrime { a: f64 },
}

impl RefDist {
    fn log_kernel(&self, x: f64) -> f64 {
        match *self {
            RefDist::Gig { p, a, b } => {
                if x <= 0.0 {
                    f64::NEG_INFINITY
                } else {
                    (p - 1.0) * x.ln() - 0.5 * (a * x + b / x)
                }
            }
            RefDist::InverseGaussian { mean, shape } => {
                if x <= 0.0 {
                    f64::NEG_INFINITY
                } else {
                    -1.5 * x.ln() - shape * (x - mean).powi(2) / (2.0 * mean * mean * x)
                }
            }
            RefDist::SqrtBetaPrime { a } => {
                if x < 0.0 {
                    f64::NEG_INFINITY
                } else {
                    -(a + 0.5) * (1.0 + x * x).ln()
                }
            }
        }
    }

    // Location of the kernel maximum; used both to normalize the kernel to
    // peak height one and to condition the change of variable for the tails.
    fn mode(&self) -> f64 {
        match *self {
            RefDist::Gig { p, a, b } => ((p - 1.0) + ((p - 1.0).powi(2) + a * b).sqrt()) / a,
            RefDist::InverseGaussian { mean, shape } => {
                let r = 1.5 * mean / shape;
                mean * ((1.0 + r * r).sqrt() - r)
            }
            RefDist::SqrtBetaPrime { a } => {
                // Mode sits at zero; return a spread measure instead so the
                // tail transform is well conditioned.
                if a > 1.0 { (0.5 / (a - 1.0)).sqrt() } else { 1.0 }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            RefDist::Gig { p, a, b } => p.is_finite() && a > 0.0 && b > 0.0,
            RefDist::InverseGaussian { mean, shape } => mean > 0.0 && shape > 0.0,
            RefDist::SqrtBetaPrime { a } => a > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("invalid reference distribution {self:?}")))
        }
    }
}

// Adaptive Simpson quadrature with Richardson correction.
fn simpson_rec(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if a >= b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_rec(f, a, b, fa, fm, fb, whole, tol, 48)
}

// Kernel normalized to peak height one, so quadrature never sees huge or
// vanishing magnitudes regardless of the raw normalizing constant.
struct PeakKernel {
    dist: RefDist,
    log_peak: f64,
    scale: f64,
}

impl PeakKernel {
    fn new(dist: RefDist) -> Result<Self> {
        dist.validate()?;
        let scale = dist.mode();
        let log_peak = dist.log_kernel(scale.max(1e-300)).max(dist.log_kernel(scale));
        // For SqrtBetaPrime the peak is at zero, not at the spread measure.
        let log_peak = log_peak.max(dist.log_kernel(0.0_f64.max(f64::MIN_POSITIVE)));
        Ok(PeakKernel { dist, log_peak, scale })
    }

    fn eval(&self, x: f64) -> f64 {
        let lk = self.dist.log_kernel(x);
        if lk == f64::NEG_INFINITY {
            0.0
        } else {
            (lk - self.log_peak).exp()
        }
    }

    // Mass on the finite interval [lo, hi].
    fn mass_between(&self, lo: f64, hi: f64, tol: f64) -> f64 {
        adaptive_simpson(&|x| self.eval(x), lo, hi, tol)
    }

    // Mass on (x0, infinity) via x = x0 + scale * t / (1 - t).
    fn mass_above(&self, x0: f64, tol: f64) -> f64 {
        let s = self.scale;
        let g = |t: f64| {
            if t >= 1.0 {
                return 0.0;
            }
            let om = 1.0 - t;
            self.eval(x0 + s * t / om) * s / (om * om)
        };
        adaptive_simpson(&g, 0.0, 1.0, tol)
    }
}

/// Distribution function of `dist` at `x`, computed by self-normalized
/// quadrature of the density kernel (no closed-form normalizing constants
/// involved). Absolute accuracy is far inside 1e-8 for the parameter ranges
/// the samplers are tested on.
pub fn numeric_cdf(dist: RefDist, x: f64) -> Result<f64> {
    let k = PeakKernel::new(dist)?;
    if x <= 0.0 {
        // All reference distributions live on the non-negative half line.
        return Ok(0.0);
    }
    let tol = 1e-13 * k.scale.max(1e-6);
    let below = k.mass_between(0.0, x, tol);
    let above = k.mass_above(x, tol);
    Ok(below / (below + above))
}

/// Distribution function evaluated at every point of an ascending sequence,
/// sharing one normalization pass. Integration is segment-wise between
/// consecutive points, so the cost stays linear in the number of points.
pub fn numeric_cdf_many(dist: RefDist, sorted: &[f64]) -> Result<Vec<f64>> {
    let k = PeakKernel::new(dist)?;
    if sorted.is_empty() {
        return Ok(Vec::new());
    }
    for w in sorted.windows(2) {
        if w[0] > w[1] {
            return Err(Error::Domain("numeric_cdf_many needs ascending points".to_string()));
        }
    }
    if !sorted.iter().all(|v| v.is_finite()) {
        return Err(Error::Domain("numeric_cdf_many needs finite points".to_string()));
    }
    let n = sorted.len();
    let span = (sorted[n - 1] - sorted[0].min(0.0)).max(k.scale);
    let tol_total = 1e-12 * k.scale.max(1e-6);
    let seg_tol = |width: f64| tol_total * (width / span).max(1e-6);

    let first = sorted[0].max(0.0);
    let mut cum = Vec::with_capacity(n);
    let mut acc = k.mass_between(0.0, first, tol_total);
    cum.push(acc);
    for i in 1..n {
        let lo = sorted[i - 1].max(0.0);
        let hi = sorted[i].max(0.0);
        acc += k.mass_between(lo, hi, seg_tol(hi - lo));
        cum.push(acc);
    }
    let total = acc + k.mass_above(sorted[n - 1].max(0.0), tol_total);
    Ok(cum.into_iter().map(|c| (c / total).clamp(0.0, 1.0)).collect())
}

/// Two-sided Kolmogorov-Smirnov statistic given the reference CDF evaluated
/// at the ascending sample points.
pub fn ks_statistic(cdf_at_sorted: &[f64]) -> f64 {
    let n = cdf_at_sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &f) in cdf_at_sorted.iter().enumerate() {
        let hi = (i as f64 + 1.0) / n - f;
        let lo = f - i as f64 / n;
        d = d.max(hi).max(lo);
    }
    d
}

/// Asymptotic 1% critical value of the two-sided KS statistic.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.6276 / (n as f64).sqrt()
}

/// Result of one Kolmogorov-Smirnov comparison at the 1% level.
#[derive(Clone, Copy, Debug)]
pub struct KsReport {
    pub statistic: f64,
    pub critical: f64,
    pub pass: bool,
}

/// KS test of a sample against a reference distribution; sorts a copy of the
/// sample and integrates the reference kernel once across it.
pub fn ks_test(dist: RefDist, sample: &[f64]) -> Result<KsReport> {
    if sample.is_empty() {
        return Err(Error::Domain("KS test needs a non-empty sample".to_string()));
    }
    let mut xs = sample.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).expect("non-finite sample value"));
    let cdf = numeric_cdf_many(dist, &xs)?;
    let statistic = ks_statistic(&cdf);
    let critical = ks_critical_1pct(xs.len());
    Ok(KsReport { statistic, critical, pass: statistic < critical })
}

/// Two-sample KS test at the 1% level (critical value scaled by the
/// effective sample size), for comparing two Monte Carlo samples.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsReport> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Domain("KS test needs non-empty samples".to_string()));
    }
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(|x, y| x.partial_cmp(y).expect("non-finite sample value"));
    xb.sort_by(|x, y| x.partial_cmp(y).expect("non-finite sample value"));
    let (n, m) = (xa.len(), xb.len());
    let mut d: f64 = 0.0;
    let (mut i, mut j) = (0usize, 0usize);
    while i < n && j < m {
        if xa[i] <= xb[j] {
            i += 1;
        } else {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let critical = 1.6276 * ((n + m) as f64 / (n as f64 * m as f64)).sqrt();
    Ok(KsReport { statistic: d, critical, pass: d < critical })
}

const QR_EXACT_MAX_ROWS: usize = 30;
const QR_EXACT_MAX_COLS: usize = 4;

fn validate_qr_inputs(x: &DMatrix<f64>, y: &DVector<f64>, tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::Domain(format!("quantile level must lie in (0, 1), got {tau}")));
    }
    if x.nrows() != y.len() || x.ncols() == 0 || x.nrows() < x.ncols() {
        return Err(Error::Domain(format!(
            "design is {}x{} against {} responses",
            x.nrows(),
            x.ncols(),
            y.len()
        )));
    }
    if !x.iter().all(|v| v.is_finite()) || !y.iter().all(|v| v.is_finite()) {
        return Err(Error::Data("quantile regression inputs must be finite".to_string()));
    }
    Ok(())
}

fn qr_objective(x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>, tau: f64) -> f64 {
    let r = y - x * beta;
    r.iter().map(|&u| check_loss(u, tau)).sum()
}

// Advance `idx` to the next p-subset of {0, .., n-1} in lexicographic order.
fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let p = idx.len();
    let mut k = p;
    while k > 0 {
        k -= 1;
        if idx[k] != k + n - p {
            idx[k] += 1;
            for j in k + 1..p {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

fn lex_less(a: &DVector<f64>, b: &DVector<f64>) -> bool {
    for i in 0..a.len() {
        if a[i] < b[i] {
            return true;
        }
        if a[i] > b[i] {
            return false;
        }
    }
    false
}

/// Exact linear quantile regression by exhaustive vertex enumeration.
///
/// Every optimum of the check-loss objective is attained at a coefficient
/// vector interpolating p of the n observations, so for small problems the
/// global optimum is found by solving all n-choose-p square systems and
/// keeping the best. Objective ties (within a relative 1e-9 window) resolve
/// to the lexicographically smallest coefficient vector, which makes the
/// intercept-only median the lower-middle order statistic. Limited to
/// n <= 30, p <= 4.
pub fn linear_qr_exact(x: &DMatrix<f64>, y: &DVector<f64>, tau: f64) -> Result<DVector<f64>> {
    validate_qr_inputs(x, y, tau)?;
    let (n, p) = (x.nrows(), x.ncols());
    if n > QR_EXACT_MAX_ROWS || p > QR_EXACT_MAX_COLS {
        return Err(Error::Domain(format!(
            "exact search limited to {QR_EXACT_MAX_ROWS} rows and {QR_EXACT_MAX_COLS} columns, got {n}x{p}"
        )));
    }

    let mut idx: Vec<usize> = (0..p).collect();
    let mut best: Option<(f64, DVector<f64>)> = None;
    loop {
        let xs = DMatrix::from_fn(p, p, |r, c| x[(idx[r], c)]);
        let ys = DVector::from_fn(p, |r, _| y[idx[r]]);
        if let Some(beta) = xs.clone().lu().solve(&ys) {
            // Partial-pivot LU can return garbage for a singular block;
            // only exact interpolants of the p chosen rows are vertices.
            let resid = (&xs * &beta - &ys).amax();
            if resid <= 1e-8 * (1.0 + ys.amax()) && beta.iter().all(|v| v.is_finite()) {
                let obj = qr_objective(x, y, &beta, tau);
                let tie = 1e-9 * (1.0 + obj.abs());
                let take = match &best {
                    None => true,
                    Some((bo, bb)) => obj < bo - tie || (obj <= bo + tie && lex_less(&beta, bb)),
                };
                if take {
                    best = Some((obj, beta));
                }
            }
        }
        if !next_combination(&mut idx, n) {
            break;
        }
    }
    best.map(|(_, b)| b)
        .ok_or_else(|| Error::numerical("exact quantile regression", "no full-rank row subset"))
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

// Smoothed check loss tau*u + eps*softplus(-u/eps); converges to the check
// loss uniformly as eps -> 0, with curvature sigma(1-sigma)/eps at the kink.
fn smoothed_objective(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    beta: &DVector<f64>,
    tau: f64,
    eps: f64,
    ridge: f64,
) -> f64 {
    let r = y - x * beta;
    let loss: f64 = r.iter().map(|&u| tau * u + eps * softplus(-u / eps)).sum();
    loss + 0.5 * ridge * beta.norm_squared()
}

/// Linear quantile regression by damped Newton on a smoothed check loss,
/// with the smoothing width driven down a geometric schedule. `ridge` adds a
/// Gaussian penalty 0.5 * ridge * |beta|^2, so with a small positive value
/// this is the posterior mode of the working likelihood under a diffuse
/// normal prior.
pub fn linear_qr_smoothed(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    tau: f64,
    ridge: f64,
) -> Result<DVector<f64>> {
    validate_qr_inputs(x, y, tau)?;
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::Domain(format!("ridge must be non-negative, got {ridge}")));
    }
    let (n, p) = (x.nrows(), x.ncols());

    // Least-squares start.
    let xtx = x.transpose() * x + DMatrix::identity(p, p) * 1e-10;
    let xty = x.transpose() * y;
    let mut beta = xtx
        .cholesky()
        .ok_or_else(|| Error::numerical("smoothed quantile regression", "degenerate design"))?
        .solve(&xty);

    let spread = {
        let mean = y.sum() / n as f64;
        let sd = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        1.0 + sd
    };

    let mut eps = 0.1 * spread;
    let eps_floor = 1e-8 * spread;
    while eps >= eps_floor {
        for _ in 0..200 {
            let r = y - x * &beta;
            let mut grad = DVector::zeros(p);
            let mut hess = DMatrix::zeros(p, p);
            for i in 0..n {
                let z = -r[i] / eps;
                let s = sigmoid(z);
                let w = (s * (1.0 - s) / eps).max(0.0);
                let xi = x.row(i).transpose();
                grad -= &xi * (tau - s);
                hess += &xi * xi.transpose() * w;
            }
            grad += ridge * &beta;
            hess += DMatrix::identity(p, p) * (ridge + 1e-12 * (1.0 + hess.diagonal().amax()));
            let step = hess
                .cholesky()
                .ok_or_else(|| {
                    Error::numerical("smoothed quantile regression", "singular curvature")
                })?
                .solve(&grad);

            let f0 = smoothed_objective(x, y, &beta, tau, eps, ridge);
            let mut t = 1.0;
            let mut moved = false;
            for _ in 0..60 {
                let cand = &beta - &step * t;
                if smoothed_objective(x, y, &cand, tau, eps, ridge) <= f0 {
                    let shift = (&cand - &beta).amax();
                    beta = cand;
                    moved = shift > 1e-13 * (1.0 + beta.amax());
                    break;
                }
                t *= 0.5;
            }
            if !moved {
                break;
            }
        }
        eps *= 0.1;
    }
    Ok(beta)
}
