//! Distribution kernels for the quantile-regression sampler.
//!
//! Hand-rolled samplers live here when correctness of a specific
//! parameterization matters (generalized inverse Gaussian, inverse Gaussian,
//! sqrt-beta-prime, canonical and constrained multivariate normal); everyday
//! draws (gamma, beta, normal, exponential) are delegated to `rand_distr`.
//!
//! Parameter conventions, used consistently across the crate:
//! gamma is (shape, rate); inverse gamma is (shape, scale);
//! inverse Gaussian is (mean, shape); GIG density is
//! proportional to x^(p-1) * exp(-(a*x + b/x)/2) on x > 0.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::Distribution;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::stream::RandomStream;

/// Check loss u * (tau - 1{u < 0}); non-negative, zero only at u = 0.
/// `tau` must lie strictly inside (0, 1).
pub fn check_loss(u: f64, tau: f64) -> f64 {
    debug_assert!(tau > 0.0 && tau < 1.0);
    if u < 0.0 {
        u * (tau - 1.0)
    } else {
        u * tau
    }
}

/// Constants tying a quantile level to its auxiliary Gaussian scale mixture.
///
/// `sigma2` is the variance scale of the Gaussian kernel: given a latent
/// weight W ~ Exp(delta2), the mixture Y = eta + xi*W + sqrt(sigma2*W/delta2)*Z
/// has an asymmetric Laplace marginal with density
/// tau*(1-tau)*delta2 * exp(-delta2 * check_loss(y - eta, tau)).
/// The pair (xi, sigma2) = ((1-2tau)/(tau(1-tau)), 2/(tau(1-tau))) is the
/// unique choice with that property, which also pins the tau-quantile of the
/// noise at zero.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct QuantileConstants {
    pub tau: f64,
    pub xi: f64,
    pub sigma2: f64,
}

pub fn quantile_constants(tau: f64) -> Result<QuantileConstants> {
    if !(tau > 0.0 && tau < 1.0) || !tau.is_finite() {
        return Err(Error::Domain(format!("quantile level must lie in (0, 1), got {tau}")));
    }
    let tq = tau * (1.0 - tau);
    Ok(QuantileConstants { tau, xi: (1.0 - 2.0 * tau) / tq, sigma2: 2.0 / tq })
}

/// Log density of the asymmetric Laplace working likelihood at quantile
/// level `tau` with precision-like scale `delta2`.
pub fn ald_log_density(y: f64, eta: f64, delta2: f64, tau: f64) -> f64 {
    debug_assert!(tau > 0.0 && tau < 1.0 && delta2 > 0.0);
    (tau * (1.0 - tau) * delta2).ln() - delta2 * check_loss(y - eta, tau)
}

/// Closed-form CDF of the asymmetric Laplace above; F(eta) = tau exactly.
pub fn ald_cdf(y: f64, eta: f64, delta2: f64, tau: f64) -> f64 {
    let u = y - eta;
    if u <= 0.0 {
        tau * (delta2 * (1.0 - tau) * u).exp()
    } else {
        1.0 - (1.0 - tau) * (-delta2 * tau * u).exp()
    }
}

/// One draw from the location-scale mixture representation of the
/// asymmetric Laplace: Y = eta + xi*W + sqrt(sigma2*W/delta2)*Z.
pub fn sample_ald_mixture(
    eta: f64,
    delta2: f64,
    tau: f64,
    rng: &mut RandomStream,
) -> Result<f64> {
    let qc = quantile_constants(tau)?;
    let w = sample_exponential(delta2, rng)?;
    let z: f64 = rand_distr::StandardNormal.sample(rng);
    Ok(eta + qc.xi * w + (qc.sigma2 * w / delta2).sqrt() * z)
}

fn require_positive(name: &str, value: f64) -> Result<()> {
    if !(value > 0.0 && value.is_finite()) {
        return Err(Error::Domain(format!("{name} must be positive and finite, got {value}")));
    }
    Ok(())
}

/// Gamma draw with the (shape, rate) convention.
pub fn sample_gamma(shape: f64, rate: f64, rng: &mut RandomStream) -> Result<f64> {
    require_positive("gamma shape", shape)?;
    require_positive("gamma rate", rate)?;
    let g = rand_distr::Gamma::new(shape, 1.0 / rate)
        .map_err(|e| Error::Domain(format!("gamma({shape}, {rate}): {e}")))?;
    Ok(g.sample(rng))
}

/// Inverse-gamma draw with the (shape, scale) convention:
/// X ~ IG(shape, scale) iff 1/X ~ Gamma(shape, rate = scale).
pub fn sample_inverse_gamma(shape: f64, scale: f64, rng: &mut RandomStream) -> Result<f64> {
    require_positive("inverse-gamma shape", shape)?;
    require_positive("inverse-gamma scale", scale)?;
    let g = sample_gamma(shape, scale, rng)?;
    Ok((1.0 / g).min(1e300))
}

pub fn sample_beta(alpha: f64, beta: f64, rng: &mut RandomStream) -> Result<f64> {
    require_positive("beta alpha", alpha)?;
    require_positive("beta beta", beta)?;
    let d = rand_distr::Beta::new(alpha, beta)
        .map_err(|e| Error::Domain(format!("beta({alpha}, {beta}): {e}")))?;
    Ok(d.sample(rng))
}

pub fn sample_exponential(rate: f64, rng: &mut RandomStream) -> Result<f64> {
    require_positive("exponential rate", rate)?;
    let u = rng.uniform_open();
    Ok(-u.ln() / rate)
}

pub fn sample_normal(mean: f64, sd: f64, rng: &mut RandomStream) -> Result<f64> {
    require_positive("normal sd", sd)?;
    let z: f64 = rand_distr::StandardNormal.sample(rng);
    Ok(mean + sd * z)
}

pub fn sample_bernoulli(p: f64, rng: &mut RandomStream) -> Result<bool> {
    if !(0.0..=1.0).contains(&p) || !p.is_finite() {
        return Err(Error::Domain(format!("bernoulli probability must lie in [0, 1], got {p}")));
    }
    Ok(rng.random::<f64>() < p)
}

/// Inverse-Gaussian draw, (mean, shape) convention, by the
/// transformation-with-rejection method: a chi-square variate is mapped to
/// the smaller root of the defining quadratic, then either that root or its
/// mirror mean^2/root is kept with the appropriate probability.
pub fn sample_inverse_gaussian(mean: f64, shape: f64, rng: &mut RandomStream) -> Result<f64> {
    require_positive("inverse-gaussian mean", mean)?;
    require_positive("inverse-gaussian shape", shape)?;
    let z: f64 = rand_distr::StandardNormal.sample(rng);
    let nu = z * z;
    let t = nu * mean / (2.0 * shape);
    // Smaller root mean*(1 + t - sqrt(t(t+2))) in a cancellation-free form.
    let x1 = mean / (1.0 + t + (t * (t + 2.0)).sqrt());
    let u: f64 = rng.random();
    if u * (mean + x1) <= mean {
        Ok(x1)
    } else {
        Ok(mean * mean / x1)
    }
}

/// Square root of a beta-prime(1/2, a) variate, built from the defining
/// gamma ratio: sqrt(X/Y) with X ~ Gamma(1/2, 1) and Y ~ Gamma(a, 1).
pub fn sample_sqrt_beta_prime(a: f64, rng: &mut RandomStream) -> Result<f64> {
    require_positive("beta-prime shape", a)?;
    let x = sample_gamma(0.5, 1.0, rng)?;
    let y = sample_gamma(a, 1.0, rng)?;
    Ok((x / y).sqrt())
}

/// Parameters of the generalized inverse Gaussian with density proportional
/// to x^(p-1) * exp(-(a*x + b/x)/2) on x > 0.
#[derive(Clone, Copy, Debug)]
pub struct GigParams {
    pub p: f64,
    pub a: f64,
    pub b: f64,
}

/// Exact GIG sampler.
///
/// Reductions: p = -1/2 is an inverse Gaussian, p = 1/2 its reciprocal, and
/// p < 0 in general is handled through 1/X ~ GIG(-p, b, a). The standardized
/// remainder (lambda >= 0, omega = sqrt(ab)) uses ratio-of-uniforms with mode
/// shift when lambda >= 1 or omega >= 1; for lambda < 1 and omega < 1, where
/// that envelope degenerates, it switches to tangent rejection on Y = ln X,
/// whose density exp(lambda*y - omega*cosh(y)) is strictly log-concave for
/// every parameter pair.
pub fn sample_gig(par: &GigParams, rng: &mut RandomStream) -> Result<f64> {
    require_positive("gig a", par.a)?;
    require_positive("gig b", par.b)?;
    if !par.p.is_finite() {
        return Err(Error::Domain(format!("gig p must be finite, got {}", par.p)));
    }
    if (par.p + 0.5).abs() < 1e-14 {
        // GIG(-1/2, a, b) is inverse Gaussian with mean sqrt(b/a), shape b.
        return sample_inverse_gaussian((par.b / par.a).sqrt(), par.b, rng);
    }
    if (par.p - 0.5).abs() < 1e-14 {
        let ig = sample_inverse_gaussian((par.a / par.b).sqrt(), par.a, rng)?;
        return Ok(1.0 / ig);
    }
    if par.p < 0.0 {
        let flipped = GigParams { p: -par.p, a: par.b, b: par.a };
        return Ok(1.0 / sample_gig(&flipped, rng)?);
    }

    let lambda = par.p;
    let omega = (par.a * par.b).sqrt();
    let scale = (par.b / par.a).sqrt();
    if omega < 1e-250 {
        return Err(Error::Domain(format!(
            "gig parameters out of numeric range: sqrt(a*b) = {omega}"
        )));
    }
    let z = if lambda >= 1.0 || omega >= 1.0 {
        gig_rou_shift(lambda, omega, rng)
    } else {
        gig_log_concave(lambda, omega, rng)
    };
    Ok(scale * z)
}

// Log of the standardized GIG density kernel x^(lambda-1) exp(-omega(x+1/x)/2).
fn gig_log_kernel(x: f64, lambda: f64, omega: f64) -> f64 {
    (lambda - 1.0) * x.ln() - 0.5 * omega * (x + 1.0 / x)
}

// Ratio-of-uniforms with the region shifted to the mode. The v-extremes of
// the acceptance region solve a cubic; both roots bracket the mode, so plain
// bisection is reliable. Bounds are inflated slightly so floating-point
// error in the root cannot shrink the envelope below the true region.
fn gig_rou_shift(lambda: f64, omega: f64, rng: &mut RandomStream) -> f64 {
    let m = ((lambda - 1.0) + ((lambda - 1.0).powi(2) + omega * omega).sqrt()) / omega;
    let c = 2.0 * (lambda - 1.0) / omega;
    let q = |x: f64| -> f64 {
        x * x * x - (m + c + 4.0 / omega) * x * x + (m * c - 1.0) * x + m
    };
    // q(0) = m > 0 and q(m) = -4 m^2 / omega < 0: one root on each side of m.
    let x_lo = bisect(&q, 0.0, m);
    let mut hi = 2.0 * m + 1.0;
    while q(hi) <= 0.0 {
        hi *= 2.0;
    }
    let x_hi = bisect(&q, m, hi);

    let psi_m = gig_log_kernel(m, lambda, omega);
    let half = |x: f64| (0.5 * (gig_log_kernel(x, lambda, omega) - psi_m)).exp();
    let v_minus = (x_lo - m) * half(x_lo) * 1.000001;
    let v_plus = (x_hi - m) * half(x_hi) * 1.000001;

    loop {
        let u = rng.uniform_open();
        let v = v_minus + (v_plus - v_minus) * rng.random::<f64>();
        let x = m + v / u;
        if x > 0.0 && 2.0 * u.ln() <= gig_log_kernel(x, lambda, omega) - psi_m {
            return x;
        }
    }
}

// Tangent rejection for Y = ln X with log density g(y) = lambda*y - omega*cosh(y)
// (strictly concave). The hat is flat between the two points where g drops one
// unit below the mode and follows the tangents outside them.
fn gig_log_concave(lambda: f64, omega: f64, rng: &mut RandomStream) -> f64 {
    let g = |y: f64| lambda * y - omega * y.cosh();
    let ys = (lambda / omega).asinh();
    let g_mode = g(ys);
    let g0 = |y: f64| g(y) - g_mode;

    // Points with g0 = -1 on each side of the mode, found by doubling brackets.
    let drop = |y: f64| g0(y) + 1.0;
    let mut d = 1.0;
    while drop(ys + d) >= 0.0 {
        d *= 2.0;
    }
    let y_r = bisect(&drop, ys, ys + d);
    d = 1.0;
    while drop(ys - d) >= 0.0 {
        d *= 2.0;
    }
    let y_l = bisect(&drop, ys - d, ys);

    let slope_l = lambda - omega * y_l.sinh(); // > 0
    let slope_r = lambda - omega * y_r.sinh(); // < 0
    let area_center = y_r - y_l;
    let area_left = (-1.0f64).exp() / slope_l;
    let area_right = (-1.0f64).exp() / (-slope_r);
    let total = area_center + area_left + area_right;

    loop {
        let pick = rng.random::<f64>() * total;
        let (y, hat) = if pick < area_center {
            (y_l + rng.random::<f64>() * area_center, 0.0)
        } else if pick < area_center + area_left {
            let y = y_l + rng.uniform_open().ln() / slope_l;
            (y, -1.0 + slope_l * (y - y_l))
        } else {
            let y = y_r + rng.uniform_open().ln() / slope_r;
            (y, -1.0 + slope_r * (y - y_r))
        };
        if rng.uniform_open().ln() <= g0(y) - hat + 1e-12 {
            return y.exp();
        }
    }
}

fn bisect(f: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    // Assumes a sign change on [lo, hi]; 200 halvings reach f64 resolution.
    let f_lo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if (f(mid) > 0.0) == (f_lo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn cholesky_of(precision: &DMatrix<f64>, context: &str) -> Result<Cholesky<f64, Dyn>> {
    precision
        .clone()
        .cholesky()
        .ok_or_else(|| Error::numerical(context, "precision matrix not positive definite"))
}

fn standard_normal_vector(n: usize, rng: &mut RandomStream) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rand_distr::StandardNormal.sample(rng))
}

fn draw_from_factor(
    chol: &Cholesky<f64, Dyn>,
    linear: &DVector<f64>,
    rng: &mut RandomStream,
) -> Result<DVector<f64>> {
    // With P = L L^T: x = L^-T (L^-1 h + z) has mean P^-1 h and covariance P^-1.
    let l = chol.l();
    let y = l
        .solve_lower_triangular(linear)
        .ok_or_else(|| Error::numerical("mvn", "singular triangular factor"))?;
    let z = standard_normal_vector(linear.len(), rng);
    l.transpose()
        .solve_upper_triangular(&(y + z))
        .ok_or_else(|| Error::numerical("mvn", "singular triangular factor"))
}

/// Gaussian draw in canonical form: precision matrix P and linear term h,
/// i.e. N(P^-1 h, P^-1), via one Cholesky factorization and two triangular
/// solves.
pub fn sample_mvn_canonical(
    precision: &DMatrix<f64>,
    linear: &DVector<f64>,
    rng: &mut RandomStream,
) -> Result<DVector<f64>> {
    let n = linear.len();
    if precision.nrows() != n || precision.ncols() != n {
        return Err(Error::Domain(format!(
            "precision is {}x{} but linear term has length {n}",
            precision.nrows(),
            precision.ncols()
        )));
    }
    let chol = cholesky_of(precision, "mvn")?;
    draw_from_factor(&chol, linear, rng)
}

/// Canonical Gaussian draw conditioned on the exact linear constraint
/// A x = 0, by projecting an unconstrained draw:
/// x* = x - P^-1 A^T (A P^-1 A^T)^-1 A x.
/// `constraint` may have zero rows, in which case this is the unconstrained
/// draw; rank-deficient constraint rows are a domain error.
pub fn sample_constrained_mvn(
    precision: &DMatrix<f64>,
    linear: &DVector<f64>,
    constraint: &DMatrix<f64>,
    rng: &mut RandomStream,
) -> Result<DVector<f64>> {
    let n = linear.len();
    if constraint.nrows() > 0 && constraint.ncols() != n {
        return Err(Error::Domain(format!(
            "constraint has {} columns but state dimension is {n}",
            constraint.ncols()
        )));
    }
    let chol = cholesky_of(precision, "constrained mvn")?;
    let x = draw_from_factor(&chol, linear, rng)?;
    if constraint.nrows() == 0 {
        return Ok(x);
    }
    let w = chol.solve(&constraint.transpose()); // P^-1 A^T
    let s = constraint * &w;
    let s_chol = s
        .cholesky()
        .ok_or_else(|| Error::Domain("constraint matrix is rank-deficient".to_string()))?;
    let correction = &w * s_chol.solve(&(constraint * &x));
    Ok(x - correction)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn stream(seed: u64) -> RandomStream {
        RandomStream::new(seed)
    }

    fn sample_mean_var(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var)
    }

    #[test]
    fn check_loss_values() {
        assert_eq!(check_loss(0.0, 0.3), 0.0);
        assert!((check_loss(2.0, 0.3) - 0.6).abs() < 1e-15);
        assert!((check_loss(-2.0, 0.3) - 1.4).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn check_loss_reflection(u in -1e6f64..1e6, tau in 0.01f64..0.99) {
            let lhs = check_loss(u, tau);
            let rhs = check_loss(-u, 1.0 - tau);
            prop_assert!(lhs >= 0.0);
            prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()));
        }
    }

    #[test]
    fn quantile_constants_known_values() {
        let qc = quantile_constants(0.5).unwrap();
        assert_eq!(qc.xi, 0.0);
        assert!((qc.sigma2 - 8.0).abs() < 1e-12);

        let qc = quantile_constants(0.9).unwrap();
        assert!((qc.xi - (-80.0 / 9.0)).abs() < 1e-12);
        assert!((qc.sigma2 - 200.0 / 9.0).abs() < 1e-12);

        // Antisymmetry of the skew constant.
        let a = quantile_constants(0.2).unwrap();
        let b = quantile_constants(0.8).unwrap();
        assert!((a.xi + b.xi).abs() < 1e-12);
        assert!(quantile_constants(0.0).is_err());
        assert!(quantile_constants(1.0).is_err());
    }

    #[test]
    fn ald_cdf_hits_tau_at_eta() {
        for &tau in &[0.1, 0.5, 0.6, 0.8, 0.9] {
            assert!((ald_cdf(1.3, 1.3, 2.0, tau) - tau).abs() < 1e-14);
        }
        // Monotone and bounded.
        let mut prev = 0.0;
        for i in 0..200 {
            let y = -10.0 + i as f64 * 0.1;
            let f = ald_cdf(y, 0.0, 1.5, 0.7);
            assert!(f >= prev && f <= 1.0);
            prev = f;
        }
    }

    #[test]
    fn ald_log_density_integrates_to_one() {
        // Trapezoid over a wide grid; the density has exponential tails.
        let (delta2, tau) = (1.7, 0.8);
        let (lo, hi, m) = (-80.0, 80.0, 400_000);
        let h = (hi - lo) / m as f64;
        let total: f64 = (0..=m)
            .map(|i| {
                let y = lo + i as f64 * h;
                let w = if i == 0 || i == m { 0.5 } else { 1.0 };
                w * ald_log_density(y, 0.0, delta2, tau).exp()
            })
            .sum::<f64>()
            * h;
        assert!((total - 1.0).abs() < 1e-6, "mass {total}");
    }

    #[test]
    fn gamma_and_inverse_gamma_moments() {
        let mut rng = stream(11);
        let xs: Vec<f64> = (0..40_000).map(|_| sample_gamma(3.0, 2.0, &mut rng).unwrap()).collect();
        let (mean, var) = sample_mean_var(&xs);
        assert!((mean - 1.5).abs() < 0.02, "gamma mean {mean}");
        assert!((var - 0.75).abs() < 0.05, "gamma var {var}");

        // IG(shape 4, scale 6): mean = 6/3 = 2.
        let xs: Vec<f64> =
            (0..40_000).map(|_| sample_inverse_gamma(4.0, 6.0, &mut rng).unwrap()).collect();
        let (mean, _) = sample_mean_var(&xs);
        assert!((mean - 2.0).abs() < 0.05, "inverse-gamma mean {mean}");
    }

    #[test]
    fn inverse_gaussian_moments() {
        let mut rng = stream(12);
        let (mu, lam) = (2.0, 5.0);
        let xs: Vec<f64> =
            (0..60_000).map(|_| sample_inverse_gaussian(mu, lam, &mut rng).unwrap()).collect();
        let (mean, var) = sample_mean_var(&xs);
        assert!((mean - mu).abs() < 0.02, "mean {mean}");
        assert!((var - mu.powi(3) / lam).abs() < 0.08, "var {var}");
    }

    #[test]
    fn inverse_gaussian_stable_at_extreme_mean() {
        // Huge mean relative to shape: draws must stay finite and positive.
        let mut rng = stream(13);
        for _ in 0..2_000 {
            let x = sample_inverse_gaussian(1e12, 2.5, &mut rng).unwrap();
            assert!(x.is_finite() && x > 0.0);
        }
    }

    #[test]
    fn sqrt_beta_prime_squared_moments() {
        // Z^2 ~ beta-prime(1/2, a) has mean (1/2)/(a-1).
        let mut rng = stream(14);
        let a = 5.0;
        let xs: Vec<f64> = (0..80_000)
            .map(|_| sample_sqrt_beta_prime(a, &mut rng).unwrap().powi(2))
            .collect();
        let (mean, _) = sample_mean_var(&xs);
        assert!((mean - 0.125).abs() < 0.004, "beta-prime mean {mean}");
    }

    #[test]
    fn gig_matches_inverse_gaussian_at_half() {
        // GIG(-1/2, a, b) and IG(sqrt(b/a), b) are the same distribution.
        let mut rng = stream(15);
        let par = GigParams { p: -0.5, a: 3.0, b: 2.0 };
        let gig: Vec<f64> = (0..50_000).map(|_| sample_gig(&par, &mut rng).unwrap()).collect();
        let ig: Vec<f64> = (0..50_000)
            .map(|_| sample_inverse_gaussian((2.0f64 / 3.0).sqrt(), 2.0, &mut rng).unwrap())
            .collect();
        let (mg, vg) = sample_mean_var(&gig);
        let (mi, vi) = sample_mean_var(&ig);
        assert!((mg - mi).abs() < 0.02, "{mg} vs {mi}");
        assert!((vg - vi).abs() < 0.05, "{vg} vs {vi}");
    }

    #[test]
    fn gig_gamma_limit_for_tiny_b() {
        // As b -> 0 with p > 0, GIG(p, a, b) approaches Gamma(p, a/2).
        let mut rng = stream(16);
        let par = GigParams { p: 2.0, a: 3.0, b: 1e-12 };
        let xs: Vec<f64> = (0..60_000).map(|_| sample_gig(&par, &mut rng).unwrap()).collect();
        let (mean, var) = sample_mean_var(&xs);
        assert!((mean - 4.0 / 3.0).abs() < 0.02, "mean {mean}");
        assert!((var - 8.0 / 9.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn gig_small_omega_regime_stays_sane() {
        // lambda < 1 and omega << 1 exercises the log-concave path.
        let mut rng = stream(17);
        let par = GigParams { p: 0.0, a: 1e4, b: 1e-8 }; // omega = 1e-2
        for _ in 0..5_000 {
            let x = sample_gig(&par, &mut rng).unwrap();
            assert!(x.is_finite() && x > 0.0);
        }
    }

    #[test]
    fn gig_rejects_bad_parameters() {
        let mut rng = stream(18);
        assert!(sample_gig(&GigParams { p: 1.0, a: 0.0, b: 1.0 }, &mut rng).is_err());
        assert!(sample_gig(&GigParams { p: 1.0, a: 1.0, b: -1.0 }, &mut rng).is_err());
        assert!(sample_gig(&GigParams { p: f64::NAN, a: 1.0, b: 1.0 }, &mut rng).is_err());
    }

    #[test]
    fn mvn_canonical_matches_dense_inverse() {
        // Reference: mean = P^-1 h and covariance = P^-1 computed densely.
        let p = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let h = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let pinv = p.clone().try_inverse().unwrap();
        let mean_ref = &pinv * &h;

        let mut rng = stream(19);
        let m = 60_000;
        let mut acc = DVector::zeros(3);
        let mut cov = DMatrix::zeros(3, 3);
        for _ in 0..m {
            let x = sample_mvn_canonical(&p, &h, &mut rng).unwrap();
            acc += &x;
            cov += &x * x.transpose();
        }
        let mean = acc / m as f64;
        let cov = cov / m as f64 - &mean * mean.transpose();
        for i in 0..3 {
            assert!((mean[i] - mean_ref[i]).abs() < 0.015, "mean[{i}]");
            for j in 0..3 {
                assert!((cov[(i, j)] - pinv[(i, j)]).abs() < 0.02, "cov[({i},{j})]");
            }
        }
    }

    #[test]
    fn constrained_mvn_satisfies_constraint_exactly() {
        let p = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let h = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let a = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 1.0]);
        let mut rng = stream(20);
        for _ in 0..2_000 {
            let x = sample_constrained_mvn(&p, &h, &a, &mut rng).unwrap();
            let v = (&a * &x)[(0, 0)];
            assert!(v.abs() < 1e-10, "constraint violation {v}");
        }
    }

    #[test]
    fn constrained_mvn_mean_matches_projection_formula() {
        let p = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let h = DVector::from_vec(vec![1.0, 1.0]);
        let a = DMatrix::from_row_slice(1, 2, &[1.0, -1.0]);
        let pinv = p.clone().try_inverse().unwrap();
        let mu = &pinv * &h;
        let s = (&a * &pinv * a.transpose())[(0, 0)];
        let mu_star = &mu - &pinv * a.transpose() * ((&a * &mu) / s);

        let mut rng = stream(21);
        let m = 60_000;
        let mut acc = DVector::zeros(2);
        for _ in 0..m {
            acc += sample_constrained_mvn(&p, &h, &a, &mut rng).unwrap();
        }
        let mean = acc / m as f64;
        assert!((mean[0] - mu_star[0]).abs() < 0.01);
        assert!((mean[1] - mu_star[1]).abs() < 0.01);
    }

    #[test]
    fn constrained_mvn_rejects_rank_deficient_rows() {
        let p = DMatrix::identity(3, 3);
        let h = DVector::zeros(3);
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 1.0, 1.0, 2.0, 2.0, 2.0]);
        let mut rng = stream(22);
        assert!(matches!(
            sample_constrained_mvn(&p, &h, &a, &mut rng),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn mvn_rejects_indefinite_precision() {
        let p = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let h = DVector::zeros(2);
        let mut rng = stream(23);
        assert!(sample_mvn_canonical(&p, &h, &mut rng).is_err());
    }

    #[test]
    fn draws_are_reproducible_across_streams() {
        let mut a = stream(99);
        let mut b = stream(99);
        for _ in 0..50 {
            let pa = sample_gig(&GigParams { p: -3.0, a: 2.0, b: 1.5 }, &mut a).unwrap();
            let pb = sample_gig(&GigParams { p: -3.0, a: 2.0, b: 1.5 }, &mut b).unwrap();
            assert_eq!(pa, pb);
        }
    }

    #[test]
    fn ald_mixture_median_centering() {
        // At tau = 0.5 the mixture is symmetric around eta.
        let mut rng = stream(24);
        let xs: Vec<f64> =
            (0..40_000).map(|_| sample_ald_mixture(1.0, 2.0, 0.5, &mut rng).unwrap()).collect();
        let below = xs.iter().filter(|&&y| y <= 1.0).count() as f64 / xs.len() as f64;
        assert!((below - 0.5).abs() < 0.01, "below fraction {below}");
    }
}
