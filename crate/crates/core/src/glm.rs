//! Logistic regression by maximum likelihood.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::SpdMatrix;

pub const INTERCEPT: &str = "(Intercept)";

/// |θ| beyond which a non-converging fit is treated as separated.
const SEPARATION_THETA: f64 = 30.0;
const STEP_TOL: f64 = 1e-6;
const MAX_HALVINGS: usize = 40;

/// Design matrix with a leading intercept column and a binary response.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: Vec<f64>,
    feature_names: Vec<String>,
}

impl Dataset {
    /// `x` must already carry the intercept as its first column.
    pub fn new(x: DMatrix<f64>, y: Vec<f64>, feature_names: Vec<String>) -> Result<Self> {
        let (n, p) = x.shape();
        if y.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: y.len(),
            });
        }
        if feature_names.len() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                found: feature_names.len(),
            });
        }
        if p == 0 {
            return Err(Error::InvalidArgument("design has no columns".into()));
        }
        if n < p {
            return Err(Error::InvalidArgument(format!(
                "need at least as many rows as coefficients (n={n}, p={p})"
            )));
        }
        if let Some(i) = x.column(0).iter().position(|&v| v != 1.0) {
            return Err(Error::InvalidArgument(format!(
                "row {i}: intercept column must be 1"
            )));
        }
        if let Some(idx) = x.iter().position(|v| !v.is_finite()) {
            let (row, col) = (idx % n, idx / n);
            return Err(Error::NonFinite(format!("design entry at row {row}, column {col}")));
        }
        if let Some(i) = y.iter().position(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidArgument(format!(
                "row {i}: response {} is not 0 or 1",
                y[i]
            )));
        }
        Ok(Self {
            x,
            y,
            feature_names,
        })
    }

    /// Builds a dataset from covariates only, prepending the intercept.
    pub fn from_covariates(
        covariates: &DMatrix<f64>,
        y: Vec<f64>,
        covariate_names: Vec<String>,
    ) -> Result<Self> {
        let x = with_intercept(covariates);
        let mut names = Vec::with_capacity(covariate_names.len() + 1);
        names.push(INTERCEPT.to_string());
        names.extend(covariate_names);
        Self::new(x, y, names)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    /// Design without the intercept column.
    pub fn covariates(&self) -> DMatrix<f64> {
        self.x.columns(1, self.p() - 1).into_owned()
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.feature_names[1..]
    }

    pub fn log_likelihood(&self, beta: &DVector<f64>) -> Result<f64> {
        log_likelihood(beta, &self.x, &self.y)
    }
}

pub fn with_intercept(covariates: &DMatrix<f64>) -> DMatrix<f64> {
    covariates.clone().insert_column(0, 1.0)
}

#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    /// Convergence when the sup-norm of the score falls below this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    pub beta: DVector<f64>,
    /// Inverse Fisher information at the optimum.
    pub cov: SpdMatrix,
    pub n_train: usize,
    pub converged: bool,
    pub iterations: usize,
    pub log_likelihood: f64,
    pub feature_names: Vec<String>,
}

impl FittedModel {
    pub fn p(&self) -> usize {
        self.beta.len()
    }

    pub fn std_errors(&self) -> DVector<f64> {
        self.cov.diagonal().map(f64::sqrt)
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Result<PredictionSet> {
        predict(&self.beta, x)
    }
}

pub fn fit(data: &Dataset) -> Result<FittedModel> {
    fit_with(data, FitOptions::default())
}

/// Newton-Raphson (equivalently IRLS) with step halving whenever a full step
/// lowers the likelihood.
pub fn fit_with(data: &Dataset, opts: FitOptions) -> Result<FittedModel> {
    let x = data.x();
    let y = data.y();
    let n = data.n();
    let events: f64 = y.iter().sum();
    if events == 0.0 || events == n as f64 {
        return Err(Error::SingleClass);
    }

    let mut beta = DVector::zeros(data.p());
    let ybar = events / n as f64;
    beta[0] = (ybar / (1.0 - ybar)).ln();
    let mut state = IrlsState::at(&beta, x, y)?;
    let mut converged = false;
    let mut iterations = 0;

    loop {
        let info = fisher_information(x, &state.weights);
        let Some(chol) = info.cholesky() else {
            return Err(singular_or_separated(&state));
        };
        let step = chol.solve(&state.score);
        // Under separation the score vanishes while Newton keeps marching
        // off to infinity, so a small score alone is not convergence.
        if state.score.amax() < opts.tol && step.amax() < STEP_TOL * (1.0 + beta.amax()) {
            converged = true;
            break;
        }
        if iterations == opts.max_iter {
            break;
        }
        iterations += 1;

        let slack = 1e-12 * (1.0 + state.loglik.abs());
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let candidate = &beta + &step * scale;
            let next = IrlsState::at(&candidate, x, y)?;
            if next.loglik >= state.loglik - slack {
                accepted = Some((candidate, next));
                break;
            }
            scale *= 0.5;
        }
        match accepted {
            Some((b, s)) => {
                beta = b;
                state = s;
            }
            None => break,
        }
    }
    if !converged && state.max_abs_theta > SEPARATION_THETA {
        return Err(Error::Separation {
            max_abs_theta: state.max_abs_theta,
        });
    }

    let info = fisher_information(x, &state.weights);
    let info = SpdMatrix::new(info).map_err(|_| singular_or_separated(&state))?;
    let cov = SpdMatrix::new(info.inverse()).map_err(|_| singular_or_separated(&state))?;

    Ok(FittedModel {
        beta,
        cov,
        n_train: n,
        converged,
        iterations,
        log_likelihood: state.loglik,
        feature_names: data.feature_names().to_vec(),
    })
}

fn singular_or_separated(state: &IrlsState) -> Error {
    if state.max_abs_theta > SEPARATION_THETA {
        Error::Separation {
            max_abs_theta: state.max_abs_theta,
        }
    } else {
        Error::NotPositiveDefinite
    }
}

struct IrlsState {
    loglik: f64,
    score: DVector<f64>,
    weights: DVector<f64>,
    max_abs_theta: f64,
}

impl IrlsState {
    fn at(beta: &DVector<f64>, x: &DMatrix<f64>, y: &[f64]) -> Result<Self> {
        let theta = x * beta;
        let mut loglik = 0.0;
        let mut resid = DVector::zeros(y.len());
        let mut weights = DVector::zeros(y.len());
        for (i, (&t, &yi)) in theta.iter().zip(y).enumerate() {
            let pi = sigmoid(t);
            loglik += yi * t - softplus(t);
            resid[i] = yi - pi;
            weights[i] = pi * (1.0 - pi);
        }
        if !loglik.is_finite() {
            return Err(Error::NonFinite("log-likelihood".into()));
        }
        Ok(Self {
            loglik,
            score: x.tr_mul(&resid),
            weights,
            max_abs_theta: theta.amax(),
        })
    }
}

fn fisher_information(x: &DMatrix<f64>, weights: &DVector<f64>) -> DMatrix<f64> {
    let mut xw = x.clone();
    for (mut row, w) in xw.row_iter_mut().zip(weights.iter()) {
        row *= w.sqrt();
    }
    xw.tr_mul(&xw)
}

pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// `ln(1 + eᵗ)` without overflow.
fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

/// Bernoulli log-likelihood `Σ yᵢθᵢ − ln(1 + e^θᵢ)`.
pub fn log_likelihood(beta: &DVector<f64>, x: &DMatrix<f64>, y: &[f64]) -> Result<f64> {
    check_design(beta, x)?;
    if y.len() != x.nrows() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            found: y.len(),
        });
    }
    let theta = x * beta;
    let ll: f64 = theta.iter().zip(y).map(|(&t, &yi)| yi * t - softplus(t)).sum();
    if !ll.is_finite() {
        return Err(Error::NonFinite("log-likelihood".into()));
    }
    Ok(ll)
}

/// Gradient of the log-likelihood, `Xᵀ(y − π)`.
pub fn score(beta: &DVector<f64>, x: &DMatrix<f64>, y: &[f64]) -> Result<DVector<f64>> {
    check_design(beta, x)?;
    let resid = DVector::from_iterator(
        y.len(),
        (x * beta).iter().zip(y).map(|(&t, &yi)| yi - sigmoid(t)),
    );
    Ok(x.tr_mul(&resid))
}

fn check_design(beta: &DVector<f64>, x: &DMatrix<f64>) -> Result<()> {
    if x.ncols() != beta.len() {
        return Err(Error::DimensionMismatch {
            expected: beta.len(),
            found: x.ncols(),
        });
    }
    Ok(())
}

/// Linear predictors, probabilities and classes for one set of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub theta: Vec<f64>,
    pub pi: Vec<f64>,
    pub y_hat: Vec<u8>,
}

impl PredictionSet {
    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }
}

pub fn predict(beta: &DVector<f64>, x: &DMatrix<f64>) -> Result<PredictionSet> {
    check_design(beta, x)?;
    let theta: Vec<f64> = (x * beta).iter().copied().collect();
    let pi = theta.iter().map(|&t| sigmoid(t)).collect();
    let y_hat = theta.iter().map(|&t| u8::from(t > 0.0)).collect();
    Ok(PredictionSet { theta, pi, y_hat })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BrierResult {
    pub score: f64,
    pub sq_errors: Vec<f64>,
}

pub fn brier_score(pi: &[f64], y: &[f64]) -> Result<BrierResult> {
    if pi.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            found: pi.len(),
        });
    }
    if pi.is_empty() {
        return Err(Error::InvalidArgument("Brier score of an empty sample".into()));
    }
    let sq_errors: Vec<f64> = pi.iter().zip(y).map(|(p, yi)| (yi - p).powi(2)).collect();
    let score = sq_errors.iter().sum::<f64>() / sq_errors.len() as f64;
    Ok(BrierResult { score, sq_errors })
}
