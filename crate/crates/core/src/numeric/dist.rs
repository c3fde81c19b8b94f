//! Distribution functions and their inverses.
//!
//! CDFs are built on the regularized incomplete gamma and beta functions
//! from `statrs`; every quantile is obtained by bracketed root finding on the
//! corresponding CDF so that monotonicity in `p` holds by construction.

use std::f64::consts::{PI, SQRT_2};

use statrs::function::beta::beta_reg;
use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::error::{Error, Result};

/// Residual Poisson mass at which the noncentral series is truncated.
const POISSON_TAIL: f64 = 1e-12;
const MAX_ROOT_ITER: usize = 2_000;

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

fn check_prob(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("probability {p} outside (0, 1)")))
    }
}

pub fn chisq_cdf(x: f64, df: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        gamma_lr(df / 2.0, x / 2.0)
    }
}

/// CDF of the noncentral chi-square distribution as a Poisson(ncp/2) mixture
/// of central chi-square CDFs.
///
/// Summation starts at the Poisson mode and walks outward; the central CDFs
/// are advanced with the recurrence `P(a+1, y) = P(a, y) − yᵃe⁻ʸ/Γ(a+1)`, so
/// only one incomplete gamma evaluation is needed per call.
pub fn noncentral_chisq_cdf(x: f64, df: f64, ncp: f64) -> Result<f64> {
    if !(df > 0.0) || !(ncp >= 0.0) || !ncp.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "noncentral chi-square needs df > 0 and finite ncp >= 0 (df={df}, ncp={ncp})"
        )));
    }
    if x.is_nan() {
        return Err(Error::NonFinite("chi-square argument".into()));
    }
    if x <= 0.0 {
        return Ok(0.0);
    }
    if x == f64::INFINITY {
        return Ok(1.0);
    }
    if ncp == 0.0 {
        return Ok(chisq_cdf(x, df));
    }

    let lambda = ncp / 2.0;
    let y = x / 2.0;
    let half_df = df / 2.0;
    let ln_y = y.ln();
    // yᵃe⁻ʸ/Γ(a+1), the decrement between consecutive central CDFs.
    let step = |a: f64| (a * ln_y - y - ln_gamma(a + 1.0)).exp();

    let mode = lambda.floor();
    let w_mode = (-lambda + mode * lambda.ln() - ln_gamma(mode + 1.0)).exp();
    let p_mode = gamma_lr(half_df + mode, y);

    let mut sum = w_mode * p_mode;
    let mut mass = w_mode;

    // Downward from the mode; the Poisson weights shrink geometrically.
    let (mut w, mut p) = (w_mode, p_mode);
    let mut k = mode;
    while k >= 1.0 {
        w *= k / lambda;
        k -= 1.0;
        p = (p + step(half_df + k)).min(1.0);
        sum += w * p;
        mass += w;
        if w < POISSON_TAIL * 1e-6 {
            break;
        }
    }

    // Upward until the unvisited Poisson mass is negligible.
    let (mut w, mut p) = (w_mode, p_mode);
    let mut k = mode;
    let max_terms = (lambda + 100.0 * lambda.sqrt() + 1_000.0) as usize;
    let mut terms = 0usize;
    while 1.0 - mass > POISSON_TAIL {
        p = (p - step(half_df + k)).max(0.0);
        k += 1.0;
        w *= lambda / k;
        sum += w * p;
        mass += w;
        terms += 1;
        if terms > max_terms || (w == 0.0 && k > lambda) {
            if 1.0 - mass > 1e-9 {
                return Err(Error::NonConvergence("noncentral chi-square series".into()));
            }
            break;
        }
        // Once both the weight and the central CDF vanish, nothing more accrues.
        if p == 0.0 && k > lambda {
            break;
        }
    }
    Ok(sum.clamp(0.0, 1.0))
}

/// Quantile of the noncentral chi-square distribution by bracket expansion
/// and bisection.
pub fn noncentral_chisq_quantile(p: f64, df: u32, ncp: f64) -> Result<f64> {
    check_prob(p)?;
    if df == 0 {
        return Err(Error::InvalidArgument("df must be positive".into()));
    }
    let df = f64::from(df);
    let cdf = |x: f64| noncentral_chisq_cdf(x, df, ncp);
    let mean = df + ncp;
    let sd = (2.0 * (df + 2.0 * ncp)).sqrt();
    let mut lo = (mean - 10.0 * sd).max(0.0);
    if lo > 0.0 && cdf(lo)? > p {
        lo = 0.0;
    }
    let mut hi = (mean + 10.0 * sd).max(1.0);
    while cdf(hi)? < p {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::NonConvergence("chi-square quantile bracket".into()));
        }
    }
    for _ in 0..MAX_ROOT_ITER {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= 1e-10 * hi.max(1.0) || mid == lo || mid == hi {
            return Ok(mid);
        }
        if cdf(mid)? < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::NonConvergence("chi-square quantile bisection".into()))
}

pub fn chisq_quantile(p: f64, df: u32) -> Result<f64> {
    noncentral_chisq_quantile(p, df, 0.0)
}

pub fn student_t_cdf(t: f64, df: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    if t.is_infinite() {
        return if t > 0.0 { 1.0 } else { 0.0 };
    }
    let x = df / (df + t * t);
    let tail = 0.5 * beta_reg(df / 2.0, 0.5, x);
    if t > 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

pub fn student_t_pdf(t: f64, df: f64) -> f64 {
    let ln_norm = ln_gamma((df + 1.0) / 2.0) - ln_gamma(df / 2.0) - 0.5 * (df * PI).ln();
    (ln_norm - (df + 1.0) / 2.0 * (t * t / df).ln_1p()).exp()
}

pub fn student_t_quantile(p: f64, df: u32) -> Result<f64> {
    check_prob(p)?;
    if df == 0 {
        return Err(Error::InvalidArgument("df must be >= 1".into()));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    let nu = f64::from(df);
    // Solve on the lower half and reflect, which keeps precision for p near 1.
    let q = p.min(1.0 - p);
    let cdf = |t: f64| student_t_cdf(t, nu);
    let mut lo = -1.0;
    while cdf(lo) > q {
        lo *= 2.0;
        if !lo.is_finite() {
            return Err(Error::NonConvergence("t quantile bracket".into()));
        }
    }
    let root = newton_bracketed(cdf, |t| student_t_pdf(t, nu), q, lo, 0.0, 1e-14)?;
    Ok(if p < 0.5 { root } else { -root })
}

pub fn gamma_cdf(x: f64, shape: f64, rate: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        gamma_lr(shape, rate * x)
    }
}

pub fn gamma_pdf(x: f64, shape: f64, rate: f64) -> f64 {
    if x < 0.0 {
        return 0.0;
    }
    let z = rate * x;
    ((shape - 1.0) * z.ln() - z - ln_gamma(shape)).exp() * rate
}

pub fn gamma_quantile(p: f64, shape: f64, rate: f64) -> Result<f64> {
    check_prob(p)?;
    if !(shape > 0.0 && rate > 0.0 && shape.is_finite() && rate.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "gamma needs shape, rate > 0 (shape={shape}, rate={rate})"
        )));
    }
    // Solve for the unit-rate variate, then rescale.
    let cdf = |z: f64| gamma_cdf(z, shape, 1.0);
    let mut hi = shape.max(1.0);
    while cdf(hi) < p {
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::NonConvergence("gamma quantile bracket".into()));
        }
    }
    let z = newton_bracketed(cdf, |z| gamma_pdf(z, shape, 1.0), p, 0.0, hi, 1e-14)?;
    Ok(z / rate)
}

/// Newton iteration safeguarded by a bracket `[lo, hi]` with
/// `cdf(lo) <= p <= cdf(hi)`. Falls back to bisection whenever the Newton
/// step leaves the bracket.
fn newton_bracketed(
    cdf: impl Fn(f64) -> f64,
    pdf: impl Fn(f64) -> f64,
    p: f64,
    mut lo: f64,
    mut hi: f64,
    rel_tol: f64,
) -> Result<f64> {
    let mut x = 0.5 * (lo + hi);
    for _ in 0..MAX_ROOT_ITER {
        let f = cdf(x) - p;
        if f == 0.0 {
            return Ok(x);
        }
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let d = pdf(x);
        let newton = x - f / d;
        let next = if d > 0.0 && newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        let tol = rel_tol * next.abs().max(f64::MIN_POSITIVE);
        if (next - x).abs() <= tol || hi - lo <= tol {
            return Ok(next);
        }
        x = next;
    }
    Err(Error::NonConvergence("quantile root finding".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Trapezoid-integrated gamma CDF, an oracle independent of the
    /// incomplete gamma function.
    fn gamma_cdf_trapezoid(x: f64, shape: f64, rate: f64) -> f64 {
        let steps = 200_000;
        let h = x / steps as f64;
        let mut acc = 0.5 * (gamma_pdf(0.0, shape, rate) + gamma_pdf(x, shape, rate));
        for i in 1..steps {
            acc += gamma_pdf(i as f64 * h, shape, rate);
        }
        acc * h
    }

    #[test]
    fn gamma_quantile_fixtures() {
        assert_abs_diff_eq!(gamma_quantile(0.5, 1.0, 1.0).unwrap(), 2f64.ln(), epsilon = 1e-12);
        let p = 1.0 - (-1f64).exp();
        assert_abs_diff_eq!(gamma_quantile(p, 1.0, 2.0).unwrap(), 0.5, epsilon = 1e-12);

        // Oracle: bisect the trapezoid CDF.
        let (mut lo, mut hi) = (0.0, 20.0);
        while hi - lo > 1e-9 {
            let mid = 0.5 * (lo + hi);
            if gamma_cdf_trapezoid(mid, 8.0, 2.0) < 0.9 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let oracle = 0.5 * (lo + hi);
        assert_abs_diff_eq!(gamma_quantile(0.9, 8.0, 2.0).unwrap(), oracle, epsilon = 1e-6);
    }

    #[test]
    fn t_quantile_fixtures() {
        for df in [1, 2, 5, 30, 999] {
            assert_eq!(student_t_quantile(0.5, df).unwrap(), 0.0);
        }
        assert_abs_diff_eq!(student_t_quantile(0.05, 999).unwrap(), -1.646, epsilon = 5e-4);
        assert_abs_diff_eq!(student_t_quantile(0.975, 999).unwrap(), 1.962, epsilon = 5e-4);
        // Cauchy closed form: tan(π(p − 1/2)).
        let exact = (PI * (0.9 - 0.5)).tan();
        assert_abs_diff_eq!(student_t_quantile(0.9, 1).unwrap(), exact, epsilon = 1e-10);
        // df = 2 closed form: t = (2p − 1)/sqrt(2p(1 − p)).
        let p: f64 = 0.01;
        let exact = (2.0 * p - 1.0) / (2.0 * p * (1.0 - p)).sqrt();
        assert_abs_diff_eq!(student_t_quantile(p, 2).unwrap(), exact, epsilon = 1e-10);
    }

    #[test]
    fn chisq_fixtures() {
        assert_abs_diff_eq!(chisq_quantile(0.05, 8).unwrap(), 2.7326, epsilon = 1e-4);
        assert_abs_diff_eq!(chisq_quantile(0.95, 8).unwrap(), 15.507, epsilon = 1e-3);
        let q = noncentral_chisq_quantile(0.05, 4, 505.5).unwrap();
        assert_abs_diff_eq!(q, 437.148, epsilon = 0.5);
        // df = 2 central closed form: −2 ln(1 − p).
        assert_abs_diff_eq!(chisq_quantile(0.3, 2).unwrap(), -2.0 * 0.7f64.ln(), epsilon = 1e-9);
    }

    #[test]
    fn noncentral_df1_matches_folded_normal() {
        // χ²₁(λ) is the square of N(√λ, 1).
        for &(x, ncp) in &[(0.5, 2.0), (3.0, 4.5), (10.0, 9.0), (40.0, 30.0)] {
            let r = f64::sqrt(x);
            let mu = f64::sqrt(ncp);
            let exact = normal_cdf(r - mu) - normal_cdf(-r - mu);
            assert_abs_diff_eq!(noncentral_chisq_cdf(x, 1.0, ncp).unwrap(), exact, epsilon = 1e-11);
        }
    }

    #[test]
    fn invalid_probabilities_rejected() {
        for p in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(student_t_quantile(p, 3).is_err());
            assert!(gamma_quantile(p, 2.0, 1.0).is_err());
            assert!(noncentral_chisq_quantile(p, 3, 1.0).is_err());
        }
        assert!(student_t_quantile(0.3, 0).is_err());
        assert!(gamma_quantile(0.3, 0.0, 1.0).is_err());
        assert!(gamma_quantile(0.3, 1.0, -1.0).is_err());
    }

    #[test]
    fn normal_cdf_fixtures() {
        assert_eq!(normal_cdf(0.0), 0.5);
        assert_abs_diff_eq!(normal_cdf(1.6449), 0.95, epsilon = 1e-4);
        assert_abs_diff_eq!(normal_cdf(-1.959963984540054), 0.025, epsilon = 1e-12);
    }
}
