//! Significance tests used as comparators: a deviance test for a group
//! effect, Hosmer-Lemeshow goodness of fit and a paired Brier t-test.
//!
//! These reject a null of *no difference*, so "fail to reject" is the
//! outcome a practitioner would (wrongly) read as "the models agree".

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::equiv::mean_sd;
use crate::error::{Error, Result};
use crate::glm::{self, brier_score, Dataset, FitOptions, INTERCEPT};
use crate::numeric::{chisq_cdf, chisq_quantile, student_t_cdf, student_t_quantile};

pub const DEFAULT_HL_GROUPS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SignifMethod {
    Deviance,
    HosmerLemeshow,
    BrierT,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignifDecision {
    RejectNull,
    FailToReject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignifTestResult {
    pub method: SignifMethod,
    pub statistic: f64,
    pub df: Option<u32>,
    pub critical_value: f64,
    pub p_value: f64,
    pub alpha: f64,
    pub decision: SignifDecision,
    pub degenerate: bool,
}

impl SignifTestResult {
    pub fn rejects(&self) -> bool {
        self.decision == SignifDecision::RejectNull
    }
}

fn decision(reject: bool) -> SignifDecision {
    if reject {
        SignifDecision::RejectNull
    } else {
        SignifDecision::FailToReject
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("alpha {alpha} outside (0, 1)")))
    }
}

/// Stacks two datasets with shared coefficients: `[1 X]` over both groups.
pub fn reduced_design(a: &Dataset, b: &Dataset) -> Result<Dataset> {
    check_same_covariates(a, b)?;
    let (na, nb, p) = (a.n(), b.n(), a.p());
    let mut x = DMatrix::zeros(na + nb, p);
    x.rows_mut(0, na).copy_from(a.x());
    x.rows_mut(na, nb).copy_from(b.x());
    let y = a.y().iter().chain(b.y()).copied().collect();
    Dataset::new(x, y, a.feature_names().to_vec())
}

/// Group-specific design: intercept, group indicator, then the covariates
/// of group A (zero on B rows) and of group B (zero on A rows). Its
/// `2p` coefficients reproduce the two separate fits exactly.
pub fn full_design(a: &Dataset, b: &Dataset) -> Result<Dataset> {
    check_same_covariates(a, b)?;
    let (na, nb) = (a.n(), b.n());
    let k = a.p() - 1;
    let mut x = DMatrix::zeros(na + nb, 2 + 2 * k);
    x.column_mut(0).fill(1.0);
    x.view_mut((na, 1), (nb, 1)).fill(1.0);
    x.view_mut((0, 2), (na, k)).copy_from(&a.covariates());
    x.view_mut((na, 2 + k), (nb, k)).copy_from(&b.covariates());

    let mut names = vec![INTERCEPT.to_string(), "group".to_string()];
    names.extend(a.covariate_names().iter().map(|n| format!("{n}:A")));
    names.extend(a.covariate_names().iter().map(|n| format!("{n}:B")));
    let y = a.y().iter().chain(b.y()).copied().collect();
    Dataset::new(x, y, names)
}

fn check_same_covariates(a: &Dataset, b: &Dataset) -> Result<()> {
    if a.feature_names() != b.feature_names() {
        return Err(Error::FeatureMismatch(
            a.feature_names().to_vec(),
            b.feature_names().to_vec(),
        ));
    }
    Ok(())
}

/// Likelihood-ratio test of the full (group-specific) model against the
/// pooled one. `D = 2(l_full − l_reduced)` on `p` degrees of freedom.
pub fn deviance_test(a: &Dataset, b: &Dataset, alpha: f64) -> Result<SignifTestResult> {
    deviance_test_with(a, b, alpha, FitOptions::default())
}

pub fn deviance_test_with(
    a: &Dataset,
    b: &Dataset,
    alpha: f64,
    opts: FitOptions,
) -> Result<SignifTestResult> {
    check_alpha(alpha)?;
    let reduced = reduced_design(a, b)?;
    let full = full_design(a, b)?;
    let m_reduced = glm::fit_with(&reduced, opts)?;
    let m_full = glm::fit_with(&full, opts)?;
    for (m, name) in [(&m_reduced, "reduced"), (&m_full, "full")] {
        if !m.converged {
            return Err(Error::NotConverged(name.into()));
        }
    }
    let d = (2.0 * (m_full.log_likelihood - m_reduced.log_likelihood)).max(0.0);
    let df = (full.p() - reduced.p()) as u32;
    let critical = chisq_quantile(1.0 - alpha, df)?;
    Ok(SignifTestResult {
        method: SignifMethod::Deviance,
        statistic: d,
        df: Some(df),
        critical_value: critical,
        p_value: 1.0 - chisq_cdf(d, f64::from(df)),
        alpha,
        decision: decision(d > critical),
        degenerate: false,
    })
}

/// Group boundaries for `m` sorted observations split into `g` groups
/// whose sizes differ by at most one (larger groups first).
pub fn hl_group_sizes(m: usize, g: usize) -> Vec<usize> {
    let (base, extra) = (m / g, m % g);
    (0..g).map(|i| base + usize::from(i < extra)).collect()
}

pub fn hosmer_lemeshow(pi: &[f64], y: &[f64], groups: usize, alpha: f64) -> Result<SignifTestResult> {
    check_alpha(alpha)?;
    if pi.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            found: pi.len(),
        });
    }
    if groups < 3 || pi.len() < groups {
        return Err(Error::InvalidArgument(format!(
            "Hosmer-Lemeshow needs m >= G >= 3 (m={}, G={groups})",
            pi.len()
        )));
    }
    if pi.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::InvalidArgument("probabilities must lie in [0, 1]".into()));
    }
    let mut order: Vec<usize> = (0..pi.len()).collect();
    // Stable, so ties keep input order.
    order.sort_by(|&i, &j| pi[i].total_cmp(&pi[j]));

    let mut h = 0.0;
    let mut start = 0;
    for (g, size) in hl_group_sizes(pi.len(), groups).into_iter().enumerate() {
        let idx = &order[start..start + size];
        start += size;
        let n_g = size as f64;
        let observed: f64 = idx.iter().map(|&i| y[i]).sum();
        let expected: f64 = idx.iter().map(|&i| pi[i]).sum();
        let mean = expected / n_g;
        let denom = n_g * mean * (1.0 - mean);
        if !(denom > 0.0) {
            return Err(Error::DegenerateGroup { group: g + 1, mean });
        }
        h += (observed - expected).powi(2) / denom;
    }
    let df = (groups - 2) as u32;
    let critical = chisq_quantile(1.0 - alpha, df)?;
    Ok(SignifTestResult {
        method: SignifMethod::HosmerLemeshow,
        statistic: h,
        df: Some(df),
        critical_value: critical,
        p_value: 1.0 - chisq_cdf(h, f64::from(df)),
        alpha,
        decision: decision(h > critical),
        degenerate: false,
    })
}

/// Paired two-sided t-test of `BSᴮ − BSᴬ` on per-sample squared errors.
pub fn brier_t_test(pi_a: &[f64], pi_b: &[f64], y: &[f64], alpha: f64) -> Result<SignifTestResult> {
    check_alpha(alpha)?;
    if pi_a.len() != y.len() || pi_b.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            found: if pi_a.len() != y.len() { pi_a.len() } else { pi_b.len() },
        });
    }
    let m = y.len();
    if m < 2 {
        return Err(Error::InvalidArgument("Brier t-test needs m >= 2".into()));
    }
    let da = brier_score(pi_a, y)?;
    let db = brier_score(pi_b, y)?;
    let diff: Vec<f64> = db.sq_errors.iter().zip(&da.sq_errors).map(|(b, a)| b - a).collect();
    let (mean, sd) = mean_sd(&diff);
    let df = (m - 1) as u32;
    let critical = student_t_quantile(1.0 - alpha / 2.0, df)?;

    if sd == 0.0 || sd <= 1e-13 * mean.abs() {
        let reject = mean != 0.0;
        return Ok(SignifTestResult {
            method: SignifMethod::BrierT,
            // Raw mean difference: the t statistic would be infinite.
            statistic: mean,
            df: Some(df),
            critical_value: critical,
            p_value: if reject { 0.0 } else { 1.0 },
            alpha,
            decision: decision(reject),
            degenerate: true,
        });
    }
    let t = (m as f64).sqrt() * mean / sd;
    Ok(SignifTestResult {
        method: SignifMethod::BrierT,
        statistic: t,
        df: Some(df),
        critical_value: critical,
        p_value: 2.0 * student_t_cdf(-t.abs(), f64::from(df)),
        alpha,
        decision: decision(t.abs() >= critical),
        degenerate: false,
    })
}
