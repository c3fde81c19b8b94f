//! Monte Carlo harness comparing the equivalence tests with their
//! significance-test counterparts on paired synthetic populations.
//!
//! Population A (and the shared test population) has linear predictor
//! `θ = 1 + Σⱼ xⱼ` with `x ∼ N(0, I_p)`; population B applies one of the
//! [`Effect`]s to the same base predictor. Each replicate `r` draws all
//! three datasets from `RngStream(seed, r)`, so a scenario is a pure
//! function of its config whether replicates run serially or in parallel.

pub mod grid;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::{self, DEFAULT_HL_GROUPS};
use crate::equiv::{self, PeAlphaConvention};
use crate::error::{Error, Result};
use crate::glm::{self, Dataset, FittedModel};
use crate::numeric::RngStream;

pub use grid::{preset, preset_names, read_grid, write_sweep_csv, GridFile, SWEEP_CSV_HEADER};

/// Probability clip applied by [`Effect::ProbabilityMultiplicative`].
pub const PROB_CLIP: f64 = 1e-6;
/// Share of failed replicates at which a scenario is abandoned.
pub const MAX_FAILURE_RATE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Effect {
    None,
    /// `θᴮ = kᵢ·θ`
    LogoddsMultiplicative,
    /// `θᴮ = kᵢ + θ`
    LogoddsAdditive,
    /// `πᴮ = kᵢ·sigmoid(θ)`, clipped to `[1e-6, 1 − 1e-6]`
    ProbabilityMultiplicative,
}

impl Effect {
    pub fn as_str(self) -> &'static str {
        match self {
            Effect::None => "none",
            Effect::LogoddsMultiplicative => "logodds-multiplicative",
            Effect::LogoddsAdditive => "logodds-additive",
            Effect::ProbabilityMultiplicative => "probability-multiplicative",
        }
    }

    fn validate_k(self, k: f64) -> Result<()> {
        let ok = match self {
            Effect::None | Effect::LogoddsAdditive => k.is_finite(),
            Effect::LogoddsMultiplicative | Effect::ProbabilityMultiplicative => {
                k.is_finite() && k > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "effect size {k} is out of range for {}",
                self.as_str()
            )))
        }
    }
}

impl std::fmt::Display for Effect {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How a PE sensitivity level becomes the Brier-ratio threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PeLevelMode {
    /// `ε_B = δ_B²`
    #[default]
    Squared,
    /// `ε_B = δ_B`
    Direct,
}

impl PeLevelMode {
    pub fn threshold(self, delta_b: f64) -> Result<f64> {
        match self {
            PeLevelMode::Squared => equiv::pe_threshold(delta_b),
            PeLevelMode::Direct if delta_b > 1.0 && delta_b.is_finite() => Ok(delta_b),
            PeLevelMode::Direct => Err(Error::InvalidArgument(format!(
                "delta-B {delta_b} must be > 1"
            ))),
        }
    }
}

/// Sensitivity levels evaluated on every replicate; each list entry yields
/// its own rate row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelLists {
    pub delta_beta: Vec<f64>,
    pub delta_theta: Vec<f64>,
    pub delta_b: Vec<f64>,
}

impl LevelLists {
    pub fn single(delta_beta: f64, delta_theta: f64, delta_b: f64) -> Self {
        Self {
            delta_beta: vec![delta_beta],
            delta_theta: vec![delta_theta],
            delta_b: vec![delta_b],
        }
    }

    fn validate(&self) -> Result<()> {
        if self.delta_beta.is_empty() || self.delta_theta.is_empty() || self.delta_b.is_empty() {
            return Err(Error::InvalidArgument("every level list must be nonempty".into()));
        }
        if let Some(d) = self.delta_beta.iter().find(|d| !(**d > 0.0 && d.is_finite())) {
            return Err(Error::InvalidArgument(format!("delta-beta {d} must be > 0")));
        }
        if let Some(d) = self.delta_theta.iter().find(|d| !(**d > 0.0 && **d < 1.0)) {
            return Err(Error::InvalidArgument(format!("delta-theta {d} outside (0, 1)")));
        }
        if let Some(d) = self.delta_b.iter().find(|d| !(**d > 1.0 && d.is_finite())) {
            return Err(Error::InvalidArgument(format!("delta-B {d} must be > 1")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub n: usize,
    pub p: usize,
    pub effect: Effect,
    pub k: f64,
    pub k_sd: f64,
    pub replicates: usize,
    pub alpha: f64,
    pub levels: LevelLists,
    pub seed: u64,
    pub pe_level_mode: PeLevelMode,
    pub pe_alpha: PeAlphaConvention,
    pub hl_groups: usize,
}

impl ScenarioConfig {
    pub fn new(n: usize, effect: Effect, k: f64, levels: LevelLists) -> Self {
        Self {
            n,
            p: 3,
            effect,
            k,
            k_sd: 0.1,
            replicates: 1000,
            alpha: 0.05,
            levels,
            seed: 1,
            pe_level_mode: PeLevelMode::default(),
            pe_alpha: PeAlphaConvention::default(),
            hl_groups: DEFAULT_HL_GROUPS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 20 {
            return Err(Error::InvalidArgument(format!("n = {} must be >= 20", self.n)));
        }
        if self.replicates == 0 {
            return Err(Error::InvalidArgument("replicates must be >= 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidArgument(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        if !(self.k_sd >= 0.0 && self.k_sd.is_finite()) {
            return Err(Error::InvalidArgument(format!("k-sd {} must be >= 0", self.k_sd)));
        }
        if self.hl_groups < 3 || self.hl_groups > self.n {
            return Err(Error::InvalidArgument(format!(
                "hl-groups {} must lie in 3..=n",
                self.hl_groups
            )));
        }
        self.effect.validate_k(self.k)?;
        self.levels.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SimMethod {
    #[serde(rename = "DE")]
    De,
    #[serde(rename = "IPE")]
    Ipe,
    #[serde(rename = "PE")]
    Pe,
    Deviance,
    #[serde(rename = "HL")]
    HosmerLemeshow,
    #[serde(rename = "BrierT")]
    BrierT,
}

impl SimMethod {
    pub const ALL: [SimMethod; 6] = [
        SimMethod::De,
        SimMethod::Ipe,
        SimMethod::Pe,
        SimMethod::Deviance,
        SimMethod::HosmerLemeshow,
        SimMethod::BrierT,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SimMethod::De => "DE",
            SimMethod::Ipe => "IPE",
            SimMethod::Pe => "PE",
            SimMethod::Deviance => "Deviance",
            SimMethod::HosmerLemeshow => "HL",
            SimMethod::BrierT => "BrierT",
        }
    }

    pub fn is_equivalence(self) -> bool {
        matches!(self, SimMethod::De | SimMethod::Ipe | SimMethod::Pe)
    }
}

/// Identification rate of one method at one level: the share of replicates
/// where it declared the models alike (equivalence: null rejected;
/// significance: null not rejected).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRate {
    pub method: SimMethod,
    /// Sensitivity level; `None` for the significance tests.
    pub level: Option<f64>,
    pub count: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub config: ScenarioConfig,
    /// Replicates that completed; the denominator of every rate.
    pub replicates: usize,
    pub failures: usize,
    pub rates: Vec<MethodRate>,
    /// Mean over replicates of the per-replicate `ξ̄`.
    pub mean_xi: f64,
}

impl ScenarioResult {
    pub fn rate(&self, method: SimMethod, level: Option<f64>) -> Option<f64> {
        self.rates
            .iter()
            .find(|r| r.method == method && r.level == level)
            .map(|r| r.rate)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Serial,
    #[default]
    Parallel,
}

/// One synthetic population: data plus its true linear predictor.
#[derive(Debug, Clone)]
pub struct Population {
    pub data: Dataset,
    pub theta: Vec<f64>,
}

/// Covariate names used by every simulated dataset.
pub fn covariate_names(p: usize) -> Vec<String> {
    (1..=p).map(|j| format!("x{j}")).collect()
}

fn draw_covariates(n: usize, p: usize, rng: &mut RngStream) -> (DMatrix<f64>, Vec<f64>) {
    let mut x = DMatrix::zeros(n, p);
    let mut base = Vec::with_capacity(n);
    for i in 0..n {
        let mut t = 1.0;
        for j in 0..p {
            let v = rng.standard_normal();
            x[(i, j)] = v;
            t += v;
        }
        base.push(t);
    }
    (x, base)
}

fn attach_response(x: &DMatrix<f64>, theta: Vec<f64>, pi: &[f64], rng: &mut RngStream) -> Result<Population> {
    let y = pi.iter().map(|&p| f64::from(rng.bernoulli(p))).collect();
    let data = Dataset::from_covariates(x, y, covariate_names(x.ncols()))?;
    Ok(Population { data, theta })
}

/// `x ∼ N(0, I_p)`, `θ = 1 + Σⱼ xⱼ`, `y ∼ Bernoulli(sigmoid(θ))`.
pub fn gen_base_population(n: usize, p: usize, rng: &mut RngStream) -> Result<Population> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be >= 1".into()));
    }
    let (x, theta) = draw_covariates(n, p, rng);
    let pi: Vec<f64> = theta.iter().map(|&t| glm::sigmoid(t)).collect();
    attach_response(&x, theta, &pi, rng)
}

/// Applies `effect` to base predictors with `kᵢ ∼ N(k, k_sd²)` drawn per
/// observation. Returns `(θᴮ, πᴮ)`.
pub fn apply_effect(
    effect: Effect,
    k: f64,
    k_sd: f64,
    base_theta: &[f64],
    rng: &mut RngStream,
) -> (Vec<f64>, Vec<f64>) {
    let mut theta = Vec::with_capacity(base_theta.len());
    let mut pi = Vec::with_capacity(base_theta.len());
    for &t in base_theta {
        let (tb, pb) = match effect {
            Effect::None => (t, glm::sigmoid(t)),
            Effect::LogoddsMultiplicative => {
                let tb = rng.normal(k, k_sd) * t;
                (tb, glm::sigmoid(tb))
            }
            Effect::LogoddsAdditive => {
                let tb = rng.normal(k, k_sd) + t;
                (tb, glm::sigmoid(tb))
            }
            Effect::ProbabilityMultiplicative => {
                let pb = (rng.normal(k, k_sd) * glm::sigmoid(t)).clamp(PROB_CLIP, 1.0 - PROB_CLIP);
                (glm::logit(pb), pb)
            }
        };
        theta.push(tb);
        pi.push(pb);
    }
    (theta, pi)
}

/// Population B: fresh covariates, base predictor transformed by `effect`.
pub fn gen_effect_population(
    n: usize,
    p: usize,
    effect: Effect,
    k: f64,
    k_sd: f64,
    rng: &mut RngStream,
) -> Result<Population> {
    let (x, base) = draw_covariates(n, p, rng);
    let (theta, pi) = apply_effect(effect, k, k_sd, &base, rng);
    attach_response(&x, theta, &pi, rng)
}

/// Datasets and fits of a single replicate.
pub struct Replicate {
    pub a: Population,
    pub b: Population,
    pub test: Population,
    pub model_a: FittedModel,
    pub model_b: FittedModel,
}

/// Draws and fits replicate `r` of `cfg`.
pub fn draw_replicate(cfg: &ScenarioConfig, r: u64) -> Result<Replicate> {
    let mut rng = RngStream::new(cfg.seed, r);
    let a = gen_base_population(cfg.n, cfg.p, &mut rng)?;
    let b = gen_effect_population(cfg.n, cfg.p, cfg.effect, cfg.k, cfg.k_sd, &mut rng)?;
    let test = gen_base_population(cfg.n, cfg.p, &mut rng)?;
    let model_a = fit_converged(&a.data)?;
    let model_b = fit_converged(&b.data)?;
    Ok(Replicate {
        a,
        b,
        test,
        model_a,
        model_b,
    })
}

fn fit_converged(data: &Dataset) -> Result<FittedModel> {
    let m = glm::fit(data)?;
    if !m.converged {
        return Err(Error::NotConverged("replicate".into()));
    }
    Ok(m)
}

struct Outcome {
    /// Per (method, level) slot, in [`rate_slots`] order.
    identified: Vec<bool>,
    mean_xi: f64,
}

fn rate_slots(cfg: &ScenarioConfig) -> Vec<(SimMethod, Option<f64>)> {
    let mut slots = Vec::new();
    slots.extend(cfg.levels.delta_beta.iter().map(|&d| (SimMethod::De, Some(d))));
    slots.extend(cfg.levels.delta_theta.iter().map(|&d| (SimMethod::Ipe, Some(d))));
    slots.extend(cfg.levels.delta_b.iter().map(|&d| (SimMethod::Pe, Some(d))));
    slots.push((SimMethod::Deviance, None));
    slots.push((SimMethod::HosmerLemeshow, None));
    slots.push((SimMethod::BrierT, None));
    slots
}

fn run_replicate(cfg: &ScenarioConfig, r: u64) -> Result<Outcome> {
    let rep = draw_replicate(cfg, r)?;
    let x_test = rep.test.data.x();
    let y_test = rep.test.data.y();
    let pred_a = rep.model_a.predict(x_test)?;
    let pred_b = rep.model_b.predict(x_test)?;
    let (q, s_q) = equiv::coefficient_difference(&rep.model_a, &rep.model_b)?;
    let p = q.len();

    let mut identified = Vec::new();
    for &d in &cfg.levels.delta_beta {
        let eps_sq = equiv::de_threshold(&nalgebra::DVector::from_element(p, d), &s_q)?;
        let r = equiv::wald_equivalence(&q, &s_q, eps_sq, cfg.alpha)?;
        identified.push(r.is_equivalent());
    }
    let mut mean_xi = 0.0;
    for &d in &cfg.levels.delta_theta {
        let eps = equiv::ipe_threshold(&pred_a.theta, d)?;
        let (r, sample) =
            equiv::individual_predictive_equivalence(&pred_a.theta, &pred_b.theta, eps, cfg.alpha)?;
        mean_xi = sample.mean();
        identified.push(r.is_equivalent());
    }
    for &d in &cfg.levels.delta_b {
        let eps = cfg.pe_level_mode.threshold(d)?;
        let r = equiv::performance_equivalence(
            &pred_a.pi,
            &pred_b.pi,
            y_test,
            eps,
            cfg.alpha,
            cfg.pe_alpha,
        )?;
        identified.push(r.combined.is_equivalent());
    }

    let dev = baseline::deviance_test(&rep.a.data, &rep.b.data, cfg.alpha)?;
    identified.push(!dev.rejects());
    let hl = baseline::hosmer_lemeshow(&pred_b.pi, y_test, cfg.hl_groups, cfg.alpha)?;
    identified.push(!hl.rejects());
    let bt = baseline::brier_t_test(&pred_a.pi, &pred_b.pi, y_test, cfg.alpha)?;
    identified.push(!bt.rejects());

    Ok(Outcome {
        identified,
        mean_xi,
    })
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioResult> {
    run_scenario_with(cfg, Execution::default())
}

pub fn run_scenario_with(cfg: &ScenarioConfig, exec: Execution) -> Result<ScenarioResult> {
    cfg.validate()?;
    let reps = cfg.replicates as u64;
    let outcomes: Vec<Result<Outcome>> = match exec {
        Execution::Serial => (0..reps).map(|r| run_replicate(cfg, r)).collect(),
        Execution::Parallel => (0..reps).into_par_iter().map(|r| run_replicate(cfg, r)).collect(),
    };

    let slots = rate_slots(cfg);
    let mut counts = vec![0usize; slots.len()];
    let mut failures = 0;
    let mut xi_sum = 0.0;
    for outcome in outcomes {
        match outcome {
            Ok(o) => {
                for (c, hit) in counts.iter_mut().zip(&o.identified) {
                    *c += usize::from(*hit);
                }
                xi_sum += o.mean_xi;
            }
            Err(e) if e.is_numeric() || matches!(e, Error::SingleClass) => {
                log::debug!("replicate failed: {e}");
                failures += 1;
            }
            Err(e) => return Err(e),
        }
    }
    if failures as f64 >= MAX_FAILURE_RATE * cfg.replicates as f64 && failures > 0 {
        return Err(Error::TooManyFailures {
            failures,
            replicates: cfg.replicates,
        });
    }
    let done = cfg.replicates - failures;
    let rates = slots
        .into_iter()
        .zip(counts)
        .map(|((method, level), count)| MethodRate {
            method,
            level,
            count,
            rate: count as f64 / done as f64,
        })
        .collect();
    Ok(ScenarioResult {
        config: cfg.clone(),
        replicates: done,
        failures,
        rates,
        mean_xi: xi_sum / done as f64,
    })
}

/// Runs every cell; a failing cell yields its error and the sweep moves on.
pub fn sweep(cells: &[ScenarioConfig], exec: Execution) -> Vec<Result<ScenarioResult>> {
    cells
        .iter()
        .map(|cfg| {
            let res = run_scenario_with(cfg, exec);
            if let Err(e) = &res {
                log::warn!("cell n={} effect={} k={} failed: {e}", cfg.n, cfg.effect, cfg.k);
            }
            res
        })
        .collect()
}
