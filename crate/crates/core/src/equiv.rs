//! Equivalence tests for two fitted logistic regression models.
//!
//! Three levels are tested, each against its own threshold:
//!
//! * **descriptive** (DE): the coefficient difference `q̂ = β̂ᴬ − β̂ᴮ` is small
//!   in the Mahalanobis norm of `S_q = V̂ᴬ + V̂ᴮ`; the Wald statistic is
//!   compared with a lower quantile of the noncentral χ² whose noncentrality
//!   is the squared threshold.
//! * **individual predictive** (IPE): the mean absolute log-odds difference
//!   on a shared test set is below `ε_θ` (one-sided t-test).
//! * **performance** (PE): the Brier score ratio lies in `(1/ε_B, ε_B)`
//!   (two one-sided tests on paired per-sample squared errors).
//!
//! Each test rejects its null of *non*-equivalence; [`Decision::Equivalent`]
//! therefore means the data established equivalence at level `alpha`.
//!
//! The module also carries the cascade converters that map a DE threshold
//! to an IPE threshold and an IPE threshold to a PE threshold, and the
//! two-sample normal-means equivalence test these tests generalize.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::FittedModel;
use crate::numeric::{
    mahalanobis_sq, max_eigenvalue, noncentral_chisq_cdf, noncentral_chisq_quantile,
    student_t_cdf, student_t_quantile, SpdMatrix,
};

pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_DELTA_BETA: f64 = 0.1;
pub const DEFAULT_DELTA_THETA: f64 = 0.075;
pub const DEFAULT_DELTA_B: f64 = 1.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EquivMethod {
    #[serde(rename = "DE")]
    De,
    #[serde(rename = "IPE")]
    Ipe,
    #[serde(rename = "PE-lower")]
    PeLower,
    #[serde(rename = "PE-upper")]
    PeUpper,
    #[serde(rename = "PE-combined")]
    PeCombined,
    #[serde(rename = "NormalMeans")]
    NormalMeans,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Decision {
    /// Null of non-equivalence rejected.
    Equivalent,
    /// Null not rejected.
    NotEstablished,
}

impl Decision {
    fn from_reject(reject: bool) -> Self {
        if reject {
            Decision::Equivalent
        } else {
            Decision::NotEstablished
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivTestResult {
    pub method: EquivMethod,
    pub statistic: f64,
    pub critical_value: f64,
    pub p_value: f64,
    /// The threshold actually used (`ε_β²` for DE, `ε_θ` for IPE, `ε_B` for PE).
    pub epsilon: f64,
    pub alpha: f64,
    pub decision: Decision,
    /// Zero-variance shortcut: the statistic is the raw mean contrast and
    /// the critical value is 0.
    pub degenerate: bool,
}

impl EquivTestResult {
    pub fn is_equivalent(&self) -> bool {
        self.decision == Decision::Equivalent
    }
}

/// Absolute log-odds differences `ξᵢ = |θᴬᵢ − θᴮᵢ|` on one test set.
#[derive(Debug, Clone, PartialEq)]
pub struct LogOddsDiffSample {
    xi: Vec<f64>,
    mean: f64,
    sd: f64,
}

impl LogOddsDiffSample {
    pub fn new(theta_a: &[f64], theta_b: &[f64]) -> Result<Self> {
        if theta_a.len() != theta_b.len() {
            return Err(Error::DimensionMismatch {
                expected: theta_a.len(),
                found: theta_b.len(),
            });
        }
        Self::from_xi(theta_a.iter().zip(theta_b).map(|(a, b)| (a - b).abs()).collect())
    }

    pub fn from_xi(xi: Vec<f64>) -> Result<Self> {
        if xi.is_empty() {
            return Err(Error::InvalidArgument("empty log-odds sample".into()));
        }
        if xi.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidArgument("xi must be finite and nonnegative".into()));
        }
        let (mean, sd) = mean_sd(&xi);
        Ok(Self { xi, mean, sd })
    }

    pub fn xi(&self) -> &[f64] {
        &self.xi
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Sample standard deviation (denominator `m − 1`).
    pub fn sd(&self) -> f64 {
        self.sd
    }

    pub fn len(&self) -> usize {
        self.xi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xi.is_empty()
    }
}

/// User-facing sensitivity levels, converted to test thresholds by
/// [`de_threshold`], [`ipe_threshold`] and [`pe_threshold`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityLevels {
    delta_beta: Vec<f64>,
    delta_theta: f64,
    delta_b: f64,
}

impl SensitivityLevels {
    pub fn new(delta_beta: Vec<f64>, delta_theta: f64, delta_b: f64) -> Result<Self> {
        if delta_beta.is_empty() || delta_beta.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(Error::InvalidArgument(
                "delta-beta entries must be finite and >= 0".into(),
            ));
        }
        if delta_beta.iter().all(|&d| d == 0.0) {
            return Err(Error::InvalidArgument("delta-beta must not be all zero".into()));
        }
        if !(delta_theta > 0.0 && delta_theta < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "delta-theta {delta_theta} outside (0, 1)"
            )));
        }
        if !(delta_b > 1.0 && delta_b.is_finite()) {
            return Err(Error::InvalidArgument(format!("delta-B {delta_b} must be > 1")));
        }
        Ok(Self {
            delta_beta,
            delta_theta,
            delta_b,
        })
    }

    /// The same `delta_beta` for each of the `p` coefficients.
    pub fn uniform(p: usize, delta_beta: f64, delta_theta: f64, delta_b: f64) -> Result<Self> {
        Self::new(vec![delta_beta; p], delta_theta, delta_b)
    }

    pub fn delta_beta(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.delta_beta)
    }

    pub fn delta_theta(&self) -> f64 {
        self.delta_theta
    }

    pub fn delta_b(&self) -> f64 {
        self.delta_b
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("alpha {alpha} outside (0, 1)")))
    }
}

pub(crate) fn mean_sd(v: &[f64]) -> (f64, f64) {
    let m = v.len() as f64;
    let mean = v.iter().sum::<f64>() / m;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = v.iter().map(|x| (x - mean).powi(2)).sum();
    (mean, (ss / (m - 1.0)).sqrt())
}

/// Treats a standard deviation as zero when it is rounding noise relative
/// to the mean.
fn is_degenerate(mean: f64, sd: f64) -> bool {
    sd == 0.0 || sd <= 1e-13 * mean.abs()
}

/// `ε_β² = ‖δ_β‖²_{S_q}`.
pub fn de_threshold(delta_beta: &DVector<f64>, s_q: &SpdMatrix) -> Result<f64> {
    mahalanobis_sq(delta_beta, s_q)
}

/// How the DE threshold is supplied.
#[derive(Debug, Clone, PartialEq)]
pub enum DeThreshold {
    /// Per-coefficient sensitivity levels, converted with [`de_threshold`].
    Levels(DVector<f64>),
    /// A raw squared threshold `ε_β²`.
    EpsilonSq(f64),
}

/// `q̂ = β̂ᴬ − β̂ᴮ` and `S_q = V̂ᴬ + V̂ᴮ`, after checking the models are comparable.
pub fn coefficient_difference(
    a: &FittedModel,
    b: &FittedModel,
) -> Result<(DVector<f64>, SpdMatrix)> {
    if a.feature_names != b.feature_names {
        return Err(Error::FeatureMismatch(
            a.feature_names.clone(),
            b.feature_names.clone(),
        ));
    }
    if !a.converged {
        return Err(Error::NotConverged("A".into()));
    }
    if !b.converged {
        return Err(Error::NotConverged("B".into()));
    }
    Ok((&a.beta - &b.beta, a.cov.sum(&b.cov)?))
}

pub fn descriptive_equivalence(
    a: &FittedModel,
    b: &FittedModel,
    threshold: &DeThreshold,
    alpha: f64,
) -> Result<EquivTestResult> {
    check_alpha(alpha)?;
    let (q, s_q) = coefficient_difference(a, b)?;
    let eps_sq = match threshold {
        DeThreshold::Levels(delta) => de_threshold(delta, &s_q)?,
        DeThreshold::EpsilonSq(e) => *e,
    };
    wald_equivalence(&q, &s_q, eps_sq, alpha)
}

/// DE test on a raw difference vector and its covariance.
pub fn wald_equivalence(
    q: &DVector<f64>,
    s_q: &SpdMatrix,
    eps_sq: f64,
    alpha: f64,
) -> Result<EquivTestResult> {
    check_alpha(alpha)?;
    if !(eps_sq > 0.0 && eps_sq.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "squared DE threshold {eps_sq} must be positive"
        )));
    }
    let w = mahalanobis_sq(q, s_q)?;
    let df = q.len() as u32;
    let critical = noncentral_chisq_quantile(alpha, df, eps_sq)?;
    let p_value = noncentral_chisq_cdf(w, f64::from(df), eps_sq)?;
    Ok(EquivTestResult {
        method: EquivMethod::De,
        statistic: w,
        critical_value: critical,
        p_value,
        epsilon: eps_sq,
        alpha,
        decision: Decision::from_reject(w < critical),
        degenerate: false,
    })
}

/// The `⌈δ_θ·m⌉`-th smallest absolute log-odds of the gold-standard predictions.
pub fn ipe_threshold(gold_theta: &[f64], delta_theta: f64) -> Result<f64> {
    if gold_theta.is_empty() {
        return Err(Error::InvalidArgument("empty prediction vector".into()));
    }
    if !(delta_theta > 0.0 && delta_theta < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "delta-theta {delta_theta} outside (0, 1)"
        )));
    }
    let m = gold_theta.len();
    // Guard against 0.075 * 1000 landing a hair above an integer.
    let rank = ((delta_theta * m as f64) - 1e-9).ceil().clamp(1.0, m as f64) as usize;
    let mut abs: Vec<f64> = gold_theta.iter().map(|t| t.abs()).collect();
    let (_, kth, _) = abs.select_nth_unstable_by(rank - 1, f64::total_cmp);
    Ok(*kth)
}

pub fn individual_predictive_equivalence(
    theta_a: &[f64],
    theta_b: &[f64],
    eps_theta: f64,
    alpha: f64,
) -> Result<(EquivTestResult, LogOddsDiffSample)> {
    check_alpha(alpha)?;
    if !(eps_theta > 0.0 && eps_theta.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "IPE threshold {eps_theta} must be positive"
        )));
    }
    let sample = LogOddsDiffSample::new(theta_a, theta_b)?;
    let m = sample.len();
    if m < 2 {
        return Err(Error::InvalidArgument("IPE needs at least 2 test rows".into()));
    }

    let result = if is_degenerate(sample.mean, sample.sd) {
        let diff = sample.mean - eps_theta;
        let reject = diff < 0.0;
        EquivTestResult {
            method: EquivMethod::Ipe,
            statistic: diff,
            critical_value: 0.0,
            p_value: if reject { 0.0 } else { 1.0 },
            epsilon: eps_theta,
            alpha,
            decision: Decision::from_reject(reject),
            degenerate: true,
        }
    } else {
        let df = (m - 1) as u32;
        let t = (m as f64).sqrt() * (sample.mean - eps_theta) / sample.sd;
        let critical = student_t_quantile(alpha, df)?;
        EquivTestResult {
            method: EquivMethod::Ipe,
            statistic: t,
            critical_value: critical,
            p_value: student_t_cdf(t, f64::from(df)),
            epsilon: eps_theta,
            alpha,
            decision: Decision::from_reject(t < critical),
            degenerate: false,
        }
    };
    Ok((result, sample))
}

/// `ε_B = δ_B²`.
pub fn pe_threshold(delta_b: f64) -> Result<f64> {
    if !(delta_b > 1.0 && delta_b.is_finite()) {
        return Err(Error::InvalidArgument(format!("delta-B {delta_b} must be > 1")));
    }
    Ok(delta_b * delta_b)
}

/// Level used for each one-sided half of the PE test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PeAlphaConvention {
    /// Each one-sided test at level `alpha` (critical `t_{1−α, m−1}`).
    #[default]
    PerEq4,
    /// Each one-sided test at level `alpha/2` (critical `t_{1−α/2, m−1}`).
    TableHalved,
}

impl PeAlphaConvention {
    pub fn one_sided_level(self, alpha: f64) -> f64 {
        match self {
            PeAlphaConvention::PerEq4 => alpha,
            PeAlphaConvention::TableHalved => alpha / 2.0,
        }
    }
}

impl std::str::FromStr for PeAlphaConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-eq4" => Ok(Self::PerEq4),
            "table-halved" => Ok(Self::TableHalved),
            other => Err(Error::InvalidArgument(format!(
                "unknown PE alpha convention `{other}` (expected per-eq4 or table-halved)"
            ))),
        }
    }
}

/// Outcome of the two one-sided Brier-ratio tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceEquivalence {
    pub combined: EquivTestResult,
    pub lower: EquivTestResult,
    pub upper: EquivTestResult,
    pub brier_a: f64,
    pub brier_b: f64,
}

impl PerformanceEquivalence {
    pub fn ratio(&self) -> f64 {
        self.brier_b / self.brier_a
    }
}

/// TOST on the ratio `BSᴮ/BSᴬ` with bounds `(1/ε_B, ε_B)`.
///
/// With `dᴬᵢ = (yᵢ − πᴬᵢ)²` and `dᴮᵢ = (yᵢ − πᴮᵢ)²`, the lower statistic is
/// the one-sample t statistic of `dᴮ − dᴬ/ε_B` and the upper one that of
/// `dᴮ − ε_B·dᴬ`. Equivalence requires `t_L > c` and `t_U < −c`.
pub fn performance_equivalence(
    pi_a: &[f64],
    pi_b: &[f64],
    y: &[f64],
    eps_b: f64,
    alpha: f64,
    convention: PeAlphaConvention,
) -> Result<PerformanceEquivalence> {
    check_alpha(alpha)?;
    if !(eps_b > 1.0 && eps_b.is_finite()) {
        return Err(Error::InvalidArgument(format!("PE threshold {eps_b} must be > 1")));
    }
    if pi_a.len() != y.len() || pi_b.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            found: if pi_a.len() != y.len() { pi_a.len() } else { pi_b.len() },
        });
    }
    let m = y.len();
    if m < 2 {
        return Err(Error::InvalidArgument("PE needs at least 2 test rows".into()));
    }
    let da = crate::glm::brier_score(pi_a, y)?;
    let db = crate::glm::brier_score(pi_b, y)?;
    if da.score == 0.0 {
        return Err(Error::ZeroBrier);
    }

    let df = (m - 1) as u32;
    let c = student_t_quantile(1.0 - convention.one_sided_level(alpha), df)?;
    let side = |factor: f64, method: EquivMethod| -> EquivTestResult {
        let contrast: Vec<f64> = da
            .sq_errors
            .iter()
            .zip(&db.sq_errors)
            .map(|(a, b)| b - factor * a)
            .collect();
        let (mean, sd) = mean_sd(&contrast);
        let lower = method == EquivMethod::PeLower;
        if is_degenerate(mean, sd) {
            let reject = if lower { mean > 0.0 } else { mean < 0.0 };
            return EquivTestResult {
                method,
                statistic: mean,
                critical_value: 0.0,
                p_value: if reject { 0.0 } else { 1.0 },
                epsilon: eps_b,
                alpha,
                decision: Decision::from_reject(reject),
                degenerate: true,
            };
        }
        let t = mean / (sd / (m as f64).sqrt());
        let cdf = student_t_cdf(t, f64::from(df));
        let (critical, p_value, reject) = if lower {
            (c, 1.0 - cdf, t > c)
        } else {
            (-c, cdf, t < -c)
        };
        EquivTestResult {
            method,
            statistic: t,
            critical_value: critical,
            p_value,
            epsilon: eps_b,
            alpha,
            decision: Decision::from_reject(reject),
            degenerate: false,
        }
    };

    let lower = side(1.0 / eps_b, EquivMethod::PeLower);
    let upper = side(eps_b, EquivMethod::PeUpper);
    let binding = if lower.p_value >= upper.p_value { &lower } else { &upper };
    let combined = EquivTestResult {
        method: EquivMethod::PeCombined,
        statistic: binding.statistic,
        critical_value: binding.critical_value,
        p_value: lower.p_value.max(upper.p_value),
        epsilon: eps_b,
        alpha,
        decision: Decision::from_reject(lower.is_equivalent() && upper.is_equivalent()),
        degenerate: lower.degenerate || upper.degenerate,
    };
    Ok(PerformanceEquivalence {
        combined,
        lower,
        upper,
        brier_a: da.score,
        brier_b: db.score,
    })
}

/// IPE threshold implied by DE at `eps_beta`:
/// `ε_β·√λ₁(S_q)·√(μ_Xᵀμ_X + tr Σ_X)`.
///
/// `sigma_x` is only required to be symmetric with a nonnegative diagonal,
/// since a test-set covariance that includes the intercept is singular.
pub fn cascade_ipe_bound(
    eps_beta: f64,
    s_q: &SpdMatrix,
    mu_x: &DVector<f64>,
    sigma_x: &DMatrix<f64>,
) -> Result<f64> {
    let p = s_q.dim();
    if mu_x.len() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            found: mu_x.len(),
        });
    }
    if sigma_x.nrows() != p || sigma_x.ncols() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            found: sigma_x.nrows(),
        });
    }
    if !(eps_beta >= 0.0 && eps_beta.is_finite()) {
        return Err(Error::InvalidArgument(format!("eps-beta {eps_beta} must be >= 0")));
    }
    let trace = sigma_x.trace();
    if sigma_x.diagonal().iter().any(|&d| d < 0.0) {
        return Err(Error::InvalidArgument("test-set covariance has a negative variance".into()));
    }
    let lambda1 = max_eigenvalue(s_q)?;
    Ok(eps_beta * lambda1.sqrt() * (mu_x.norm_squared() + trace).sqrt())
}

/// PE threshold implied by IPE at `eps_theta`: `exp(2ε_θ)`.
pub fn cascade_pe_bound(eps_theta: f64) -> Result<f64> {
    if !(eps_theta > 0.0 && eps_theta.is_finite()) {
        return Err(Error::InvalidArgument(format!("eps-theta {eps_theta} must be > 0")));
    }
    Ok((2.0 * eps_theta).exp())
}

/// Equivalence of two unit-variance normal means from samples of size `n`
/// each: equivalent iff `|x̄| < √(χ²_{1,α}(nε²/2)) / √(n/2)`.
pub fn normal_means_equivalence(
    xbar_diff: f64,
    n: usize,
    epsilon: f64,
    alpha: f64,
) -> Result<EquivTestResult> {
    check_alpha(alpha)?;
    if n < 2 {
        return Err(Error::InvalidArgument("need n >= 2".into()));
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) || !xbar_diff.is_finite() {
        return Err(Error::InvalidArgument("epsilon must be > 0 and the mean finite".into()));
    }
    let half_n = n as f64 / 2.0;
    let ncp = half_n * epsilon * epsilon;
    let radius = noncentral_chisq_quantile(alpha, 1, ncp)?.sqrt() / half_n.sqrt();
    let stat = xbar_diff.abs();
    Ok(EquivTestResult {
        method: EquivMethod::NormalMeans,
        statistic: stat,
        critical_value: radius,
        p_value: noncentral_chisq_cdf(half_n * stat * stat, 1.0, ncp)?,
        epsilon,
        alpha,
        decision: Decision::from_reject(stat < radius),
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::RngStream;
    use approx::assert_abs_diff_eq;

    fn model(beta: &[f64], cov: &[f64]) -> FittedModel {
        let p = beta.len();
        FittedModel {
            beta: DVector::from_column_slice(beta),
            cov: SpdMatrix::from_row_slice(p, cov).unwrap(),
            n_train: 100,
            converged: true,
            iterations: 5,
            log_likelihood: -50.0,
            feature_names: (0..p).map(|j| format!("x{j}")).collect(),
        }
    }

    #[test]
    fn de_threshold_fixtures() {
        let s = SpdMatrix::from_row_slice(2, &[2.0, 1.0, 1.0, 2.0]).unwrap();
        let d = DVector::from_vec(vec![1.0, 1.0]);
        assert_abs_diff_eq!(de_threshold(&d, &s).unwrap(), 2.0 / 3.0, epsilon = 1e-14);
        assert_eq!(de_threshold(&DVector::zeros(2), &s).unwrap(), 0.0);
    }

    #[test]
    fn de_identical_models_equivalent() {
        let m = model(&[0.5, -1.0], &[0.04, 0.01, 0.01, 0.09]);
        for alpha in [0.01, 0.05, 0.5] {
            let r = descriptive_equivalence(&m, &m, &DeThreshold::EpsilonSq(0.3), alpha).unwrap();
            assert_eq!(r.statistic, 0.0);
            assert!(r.is_equivalent());
            assert_eq!(r.p_value, 0.0);
        }
    }

    #[test]
    fn de_rejects_mismatched_models() {
        let a = model(&[0.5, -1.0], &[0.04, 0.0, 0.0, 0.09]);
        let mut b = a.clone();
        b.feature_names[1] = "other".into();
        assert!(matches!(
            descriptive_equivalence(&a, &b, &DeThreshold::EpsilonSq(1.0), 0.05),
            Err(Error::FeatureMismatch(..))
        ));
        let mut c = a.clone();
        c.converged = false;
        assert!(matches!(
            descriptive_equivalence(&a, &c, &DeThreshold::EpsilonSq(1.0), 0.05),
            Err(Error::NotConverged(_))
        ));
    }

    #[test]
    fn de_decision_matches_critical() {
        let a = model(&[0.5, -1.0, 0.2], &[0.04, 0.0, 0.0, 0.0, 0.09, 0.0, 0.0, 0.0, 0.01]);
        let b = model(&[0.9, -1.2, 0.25], &[0.04, 0.0, 0.0, 0.0, 0.09, 0.0, 0.0, 0.0, 0.01]);
        let levels = DeThreshold::Levels(DVector::from_element(3, 0.5));
        let r = descriptive_equivalence(&a, &b, &levels, 0.05).unwrap();
        // W = 0.16/0.08 + 0.04/0.18 + 0.0025/0.02
        assert_abs_diff_eq!(r.statistic, 2.0 + 0.04 / 0.18 + 0.125, epsilon = 1e-12);
        assert_abs_diff_eq!(r.epsilon, 0.25 / 0.08 + 0.25 / 0.18 + 0.25 / 0.02, epsilon = 1e-12);
        assert_eq!(r.is_equivalent(), r.statistic < r.critical_value);
    }

    #[test]
    fn ipe_threshold_fixtures() {
        let theta = [-3.0, 1.0, -2.0, 4.0, 5.0, -6.0, 7.0, 8.0, -9.0, 10.0];
        assert_eq!(ipe_threshold(&theta, 0.1).unwrap(), 1.0);
        assert_eq!(ipe_threshold(&theta, 0.25).unwrap(), 3.0);
        assert_eq!(ipe_threshold(&theta, 0.999).unwrap(), 10.0);
        assert!(ipe_threshold(&[], 0.1).is_err());
        assert!(ipe_threshold(&theta, 0.0).is_err());
    }

    #[test]
    fn ipe_threshold_matches_full_sort() {
        let mut rng = RngStream::new(3, 0);
        for m in [1usize, 2, 7, 100, 1000] {
            let theta: Vec<f64> = (0..m).map(|_| rng.normal(1.0, 2.0)).collect();
            for delta in [0.01, 0.075, 0.5, 0.9] {
                let mut sorted: Vec<f64> = theta.iter().map(|t| t.abs()).collect();
                sorted.sort_by(f64::total_cmp);
                let rank = ((delta * m as f64).ceil() as usize).max(1);
                assert_eq!(ipe_threshold(&theta, delta).unwrap(), sorted[rank - 1]);
            }
        }
    }

    #[test]
    fn ipe_identical_predictions_degenerate() {
        let theta = [0.3, -1.0, 2.0, 0.1];
        let (r, s) = individual_predictive_equivalence(&theta, &theta, 0.2, 0.05).unwrap();
        assert!(r.degenerate);
        assert!(r.is_equivalent());
        assert_eq!(r.p_value, 0.0);
        assert_eq!(s.mean(), 0.0);
    }

    #[test]
    fn ipe_statistic_by_hand() {
        let a = [0.0, 0.0, 0.0, 0.0];
        let b = [0.1, -0.2, 0.3, -0.4];
        let (r, s) = individual_predictive_equivalence(&a, &b, 0.5, 0.05).unwrap();
        let mean = 0.25;
        let sd = ((0.0225 + 0.0025 + 0.0025 + 0.0225) / 3.0f64).sqrt();
        assert_abs_diff_eq!(s.mean(), mean, epsilon = 1e-15);
        assert_abs_diff_eq!(s.sd(), sd, epsilon = 1e-15);
        assert_abs_diff_eq!(r.statistic, 2.0 * (mean - 0.5) / sd, epsilon = 1e-12);
        assert_abs_diff_eq!(r.critical_value, student_t_quantile(0.05, 3).unwrap());
        assert_eq!(r.is_equivalent(), r.statistic < r.critical_value);
    }

    #[test]
    fn pe_threshold_fixtures() {
        assert_abs_diff_eq!(pe_threshold(1.1).unwrap(), 1.21, epsilon = 1e-15);
        assert_abs_diff_eq!(pe_threshold(1.05).unwrap(), 1.1025, epsilon = 1e-15);
        assert_abs_diff_eq!(pe_threshold(1.0 + 1e-12).unwrap(), 1.0, epsilon = 1e-11);
        assert!(pe_threshold(1.0).is_err());
        assert!(pe_threshold(0.9).is_err());
    }

    #[test]
    fn pe_identical_models_equivalent() {
        let mut rng = RngStream::new(8, 0);
        let m = 2000;
        let pi: Vec<f64> = (0..m).map(|_| rng.uniform() * 0.9 + 0.05).collect();
        let y: Vec<f64> = pi.iter().map(|&p| f64::from(rng.bernoulli(p))).collect();
        let r = performance_equivalence(&pi, &pi, &y, 1.21, 0.05, PeAlphaConvention::PerEq4)
            .unwrap();
        assert_eq!(r.ratio(), 1.0);
        assert!(r.lower.is_equivalent() && r.upper.is_equivalent());
        assert!(r.combined.is_equivalent());
        assert_eq!(r.combined.p_value, r.lower.p_value.max(r.upper.p_value));
    }

    #[test]
    fn pe_zero_reference_brier() {
        let y = [1.0, 0.0, 1.0];
        let err = performance_equivalence(&y, &[0.5; 3], &y, 1.21, 0.05, PeAlphaConvention::PerEq4);
        assert!(matches!(err, Err(Error::ZeroBrier)));
    }

    #[test]
    fn pe_convention_changes_critical() {
        let mut rng = RngStream::new(9, 0);
        let pi: Vec<f64> = (0..1000).map(|_| rng.uniform() * 0.9 + 0.05).collect();
        let y: Vec<f64> = pi.iter().map(|&p| f64::from(rng.bernoulli(p))).collect();
        let eq4 = performance_equivalence(&pi, &pi, &y, 1.21, 0.05, PeAlphaConvention::PerEq4)
            .unwrap();
        let halved =
            performance_equivalence(&pi, &pi, &y, 1.21, 0.05, PeAlphaConvention::TableHalved)
                .unwrap();
        assert_abs_diff_eq!(eq4.lower.critical_value, 1.646, epsilon = 5e-4);
        assert_abs_diff_eq!(halved.lower.critical_value, 1.962, epsilon = 5e-4);
        assert_abs_diff_eq!(halved.upper.critical_value, -1.962, epsilon = 5e-4);
        assert_eq!("table-halved".parse::<PeAlphaConvention>().unwrap(), PeAlphaConvention::TableHalved);
        assert!("both".parse::<PeAlphaConvention>().is_err());
    }

    #[test]
    fn cascade_fixtures() {
        let s = SpdMatrix::identity(3);
        let mu = DVector::zeros(3);
        let sigma = DMatrix::identity(3, 3);
        assert_eq!(cascade_ipe_bound(0.0, &s, &mu, &sigma).unwrap(), 0.0);
        assert_abs_diff_eq!(cascade_ipe_bound(1.0, &s, &mu, &sigma).unwrap(), 3f64.sqrt(), epsilon = 1e-12);
        assert!(cascade_ipe_bound(1.0, &s, &DVector::zeros(2), &sigma).is_err());

        assert_abs_diff_eq!(cascade_pe_bound(1e-12).unwrap(), 1.0, epsilon = 1e-11);
        assert_abs_diff_eq!(cascade_pe_bound(0.5).unwrap(), std::f64::consts::E, epsilon = 1e-14);
        assert_abs_diff_eq!(cascade_pe_bound(1.1f64.ln()).unwrap(), 1.21, epsilon = 1e-14);
        assert!(cascade_pe_bound(0.0).is_err());
    }

    #[test]
    fn normal_means_fixtures() {
        for n in [2, 10, 100, 10_000] {
            let r = normal_means_equivalence(0.0, n, 0.5, 0.05).unwrap();
            assert!(r.critical_value > 0.0);
            assert!(r.is_equivalent());
        }
        // Consistency: the critical radius approaches epsilon.
        let r = normal_means_equivalence(0.45, 1_000_000, 0.5, 0.05).unwrap();
        assert!((r.critical_value - 0.5).abs() < 0.01);
        assert!(r.is_equivalent());
        assert!(normal_means_equivalence(0.1, 1, 0.5, 0.05).is_err());
        assert!(normal_means_equivalence(0.1, 10, 0.0, 0.05).is_err());
    }

    #[test]
    fn normal_means_radius_is_calibrated() {
        // Under |μ| = ε the test should reject with probability α. Monte
        // Carlo: x̄_A − x̄_B ~ N(ε, 2/n).
        let (n, eps, alpha) = (100usize, 0.5, 0.05);
        let radius = normal_means_equivalence(0.0, n, eps, alpha).unwrap().critical_value;
        let mut rng = RngStream::new(1234, 0);
        let reps = 400_000;
        let sd = (2.0 / n as f64).sqrt();
        let hits = (0..reps).filter(|_| rng.normal(eps, sd).abs() < radius).count();
        let rate = hits as f64 / reps as f64;
        assert!((rate - alpha).abs() < 1e-3, "rate {rate}");

        // And the radius is the boundary that achieves exactly α:
        // P(|N(ε, 2/n)| < r) = α.
        let exact = crate::numeric::normal_cdf((radius - eps) / sd)
            - crate::numeric::normal_cdf((-radius - eps) / sd);
        assert_abs_diff_eq!(exact, alpha, epsilon = 1e-9);
    }
}
