//! Full comparison of two populations' models: every equivalence and
//! significance test, laid out as a report.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baseline::{self, SignifTestResult, DEFAULT_HL_GROUPS};
use crate::equiv::{self, EquivMethod, EquivTestResult, PeAlphaConvention};
use crate::error::{Error, Result};
use crate::glm::{self, Dataset, FittedModel};

/// JSON schema every emitted report validates against.
pub const REPORT_SCHEMA: &str = include_str!("../schemas/comparison_report.schema.json");

/// One population: its training data and optionally a held-out test set.
#[derive(Debug, Clone)]
pub struct Population {
    pub name: String,
    pub train: Dataset,
    pub test: Option<Dataset>,
}

/// Source of the gold-standard predictions behind the IPE threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gold {
    /// The model trained on the test set's own population.
    #[default]
    Native,
    A,
    B,
}

impl std::str::FromStr for Gold {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "native" => Ok(Gold::Native),
            "A" | "a" => Ok(Gold::A),
            "B" | "b" => Ok(Gold::B),
            _ => Err(Error::InvalidArgument(format!("unknown gold model `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareOptions {
    pub alpha: f64,
    /// One value for every coefficient, or one per coefficient.
    pub delta_beta: Vec<f64>,
    pub delta_theta: f64,
    pub delta_b: f64,
    pub gold: Gold,
    pub pe_alpha_convention: PeAlphaConvention,
    pub hl_groups: usize,
    pub seed: Option<u64>,
}

impl Default for CompareOptions {
    fn default() -> Self {
        Self {
            alpha: equiv::DEFAULT_ALPHA,
            delta_beta: vec![equiv::DEFAULT_DELTA_BETA],
            delta_theta: equiv::DEFAULT_DELTA_THETA,
            delta_b: equiv::DEFAULT_DELTA_B,
            gold: Gold::Native,
            pe_alpha_convention: PeAlphaConvention::default(),
            hl_groups: DEFAULT_HL_GROUPS,
            seed: None,
        }
    }
}

impl CompareOptions {
    fn levels(&self, p: usize) -> Result<equiv::SensitivityLevels> {
        let delta = match self.delta_beta.len() {
            1 => vec![self.delta_beta[0]; p],
            len if len == p => self.delta_beta.clone(),
            len => {
                return Err(Error::InvalidArgument(format!(
                    "--delta-beta has {len} values; expected 1 or p = {p} (intercept included)"
                )))
            }
        };
        equiv::SensitivityLevels::new(delta, self.delta_theta, self.delta_b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

impl InputDigest {
    pub fn of_file(role: &str, path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Ok(Self {
            role: role.to_string(),
            path: path.display().to_string(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub name: String,
    pub n_train: usize,
    pub beta: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub log_likelihood: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrierEntry {
    pub model: String,
    pub test_set: String,
    pub score: f64,
}

/// One row of the test summary. Field names are part of the output format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestRecord {
    pub method: String,
    /// `Equiv.` or `Signif.`
    pub kind: String,
    pub test_set: Option<String>,
    pub epsilon: Option<f64>,
    pub critical_value: f64,
    pub statistic: f64,
    pub p_value: f64,
    pub decision: String,
    /// `Yes` or `No`.
    pub models_differ: String,
    pub df: Option<u32>,
    pub degenerate: bool,
    /// Row label for the human-readable table.
    pub label: String,
}

impl TestRecord {
    fn equiv(r: &EquivTestResult, test_set: Option<&str>, label: String) -> Self {
        let method = match r.method {
            EquivMethod::De => "DE",
            EquivMethod::Ipe => "IPE",
            EquivMethod::PeLower => "PE-lower",
            EquivMethod::PeUpper => "PE-upper",
            EquivMethod::PeCombined => "PE-combined",
            EquivMethod::NormalMeans => "NormalMeans",
        };
        Self {
            method: method.into(),
            kind: "Equiv.".into(),
            test_set: test_set.map(str::to_string),
            epsilon: Some(r.epsilon),
            critical_value: r.critical_value,
            statistic: r.statistic,
            p_value: r.p_value,
            decision: if r.is_equivalent() { "equivalent" } else { "not-established" }.into(),
            models_differ: if r.is_equivalent() { "No" } else { "Yes" }.into(),
            df: None,
            degenerate: r.degenerate,
            label,
        }
    }

    fn signif(r: &SignifTestResult, test_set: Option<&str>, label: &str) -> Self {
        let method = match r.method {
            baseline::SignifMethod::Deviance => "Deviance",
            baseline::SignifMethod::HosmerLemeshow => "HosmerLemeshow",
            baseline::SignifMethod::BrierT => "BrierT",
        };
        Self {
            method: method.into(),
            kind: "Signif.".into(),
            test_set: test_set.map(str::to_string),
            epsilon: None,
            critical_value: r.critical_value,
            statistic: r.statistic,
            p_value: r.p_value,
            decision: if r.rejects() { "reject-null" } else { "fail-to-reject" }.into(),
            models_differ: if r.rejects() { "Yes" } else { "No" }.into(),
            df: r.df,
            degenerate: r.degenerate,
            label: label.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub tool_version: String,
    pub alpha: f64,
    pub delta_beta: Vec<f64>,
    pub delta_theta: f64,
    pub delta_b: f64,
    pub epsilon_beta_sq: f64,
    pub pe_alpha_convention: PeAlphaConvention,
    pub gold: Gold,
    pub hl_groups: usize,
    pub seed: Option<u64>,
    pub inputs: Vec<InputDigest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub feature_names: Vec<String>,
    pub models: Vec<ModelSummary>,
    /// `β̂ᴬ − β̂ᴮ`
    pub q_hat: Vec<f64>,
    pub brier: Vec<BrierEntry>,
    pub tests: Vec<TestRecord>,
    pub metadata: Metadata,
}

fn summary(name: &str, m: &FittedModel) -> ModelSummary {
    ModelSummary {
        name: name.to_string(),
        n_train: m.n_train,
        beta: m.beta.iter().copied().collect(),
        std_errors: m.std_errors().iter().copied().collect(),
        log_likelihood: m.log_likelihood,
        iterations: m.iterations,
    }
}

fn fit_named(data: &Dataset, name: &str) -> Result<FittedModel> {
    let m = glm::fit(data)?;
    if !m.converged {
        return Err(Error::NotConverged(name.to_string()));
    }
    Ok(m)
}

/// Fits both models and runs every test.
///
/// On the test set of population X, the model trained on X is the
/// reference: PE bounds the ratio `BS(foreign)/BS(native)`, the Brier
/// t-test uses `BS(foreign) − BS(native)` and Hosmer-Lemeshow checks the
/// foreign model's calibration.
pub fn compare(
    a: &Population,
    b: &Population,
    opts: &CompareOptions,
    inputs: Vec<InputDigest>,
) -> Result<ComparisonReport> {
    if a.name == b.name {
        return Err(Error::InvalidArgument(format!(
            "both populations are named `{}`",
            a.name
        )));
    }
    let m_a = fit_named(&a.train, &a.name)?;
    let m_b = fit_named(&b.train, &b.name)?;
    let p = m_a.p();
    let levels = opts.levels(p)?;
    let (q, s_q) = equiv::coefficient_difference(&m_a, &m_b)?;

    let mut tests = Vec::new();
    let eps_sq = equiv::de_threshold(&levels.delta_beta(), &s_q)?;
    let de = equiv::wald_equivalence(&q, &s_q, eps_sq, opts.alpha)?;
    tests.push(TestRecord::equiv(&de, None, format!("DE (δ_β={})", delta_label(&opts.delta_beta))));
    let dev = baseline::deviance_test(&a.train, &b.train, opts.alpha)?;
    tests.push(TestRecord::signif(&dev, None, "Deviance Test"));

    let mut brier = Vec::new();
    let mut pe_rows = Vec::new();
    let sets = [(a, &m_a, &m_b, true), (b, &m_b, &m_a, false)];
    for (pop, native, foreign, native_is_a) in sets {
        let Some(test) = &pop.test else { continue };
        let y = test.y();
        let pred_native = native.predict(test.x())?;
        let pred_foreign = foreign.predict(test.x())?;
        let (pred_a, pred_b) = if native_is_a {
            (&pred_native, &pred_foreign)
        } else {
            (&pred_foreign, &pred_native)
        };
        let gold = match opts.gold {
            Gold::Native => &pred_native,
            Gold::A => pred_a,
            Gold::B => pred_b,
        };
        let name = Some(pop.name.as_str());

        let eps_theta = equiv::ipe_threshold(&gold.theta, levels.delta_theta())?;
        let (ipe, _) = equiv::individual_predictive_equivalence(
            &pred_native.theta,
            &pred_foreign.theta,
            eps_theta,
            opts.alpha,
        )?;
        tests.push(TestRecord::equiv(
            &ipe,
            name,
            format!("IPE (δ_θ={}%)", opts.delta_theta * 100.0),
        ));
        let hl = baseline::hosmer_lemeshow(&pred_foreign.pi, y, opts.hl_groups, opts.alpha)?;
        tests.push(TestRecord::signif(&hl, name, "Hosmer-Lemeshow"));

        let pe = equiv::performance_equivalence(
            &pred_native.pi,
            &pred_foreign.pi,
            y,
            equiv::pe_threshold(levels.delta_b())?,
            opts.alpha,
            opts.pe_alpha_convention,
        )?;
        let pe_label = format!("PE (δ_B={})", opts.delta_b);
        pe_rows.push(TestRecord::equiv(&pe.lower, name, format!("{pe_label}, t_L")));
        pe_rows.push(TestRecord::equiv(&pe.upper, name, format!("{pe_label}, t_U")));
        pe_rows.push(TestRecord::equiv(&pe.combined, name, pe_label));
        let bt = baseline::brier_t_test(&pred_native.pi, &pred_foreign.pi, y, opts.alpha)?;
        pe_rows.push(TestRecord::signif(&bt, name, "Brier t-test"));

        for (model, pred) in [(&a.name, pred_a), (&b.name, pred_b)] {
            brier.push(BrierEntry {
                model: model.clone(),
                test_set: pop.name.clone(),
                score: glm::brier_score(&pred.pi, y)?.score,
            });
        }
    }
    tests.extend(pe_rows);

    let report = ComparisonReport {
        feature_names: m_a.feature_names.clone(),
        models: vec![summary(&a.name, &m_a), summary(&b.name, &m_b)],
        q_hat: q.iter().copied().collect(),
        brier,
        tests,
        metadata: Metadata {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            alpha: opts.alpha,
            delta_beta: levels.delta_beta().iter().copied().collect(),
            delta_theta: opts.delta_theta,
            delta_b: opts.delta_b,
            epsilon_beta_sq: eps_sq,
            pe_alpha_convention: opts.pe_alpha_convention,
            gold: opts.gold,
            hl_groups: opts.hl_groups,
            seed: opts.seed,
            inputs,
        },
    };
    report.check_finite()?;
    Ok(report)
}

fn delta_label(delta: &[f64]) -> String {
    if delta.len() == 1 {
        delta[0].to_string()
    } else {
        let parts: Vec<String> = delta.iter().map(f64::to_string).collect();
        format!("({})", parts.join(","))
    }
}

impl ComparisonReport {
    fn check_finite(&self) -> Result<()> {
        let mut values: Vec<(&str, f64)> = Vec::new();
        for m in &self.models {
            values.extend(m.beta.iter().chain(&m.std_errors).map(|&v| ("coefficient", v)));
        }
        values.extend(self.q_hat.iter().map(|&v| ("q_hat", v)));
        values.extend(self.brier.iter().map(|b| ("brier", b.score)));
        for t in &self.tests {
            values.extend([
                ("statistic", t.statistic),
                ("critical_value", t.critical_value),
                ("p_value", t.p_value),
            ]);
            values.extend(t.epsilon.map(|e| ("epsilon", e)));
        }
        match values.iter().find(|(_, v)| !v.is_finite()) {
            Some((what, v)) => Err(Error::NonFinite(format!("report {what} = {v}"))),
            None => Ok(()),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// The test summary in the conventional column layout. The combined
    /// PE record is left to the JSON output.
    pub fn render_table(&self) -> String {
        let header = [
            "Method", "Type", "Test Set", "ε", "C_α", "Test Stat.", "P-value", "Models Differ?",
        ];
        let mut rows: Vec<[String; 8]> = Vec::new();
        for t in self.tests.iter().filter(|t| t.method != "PE-combined") {
            let upper = t.method == "PE-upper";
            let show_eps = t.kind == "Equiv." && t.method != "DE" && !upper;
            rows.push([
                t.label.clone(),
                t.kind.clone(),
                if upper { String::new() } else { t.test_set.clone().unwrap_or_else(|| "-".into()) },
                match (show_eps, upper) {
                    (_, true) => String::new(),
                    (true, _) => format!("{:.3}", t.epsilon.unwrap_or(f64::NAN)),
                    _ => "-".into(),
                },
                format!("{:.3}", t.critical_value),
                format!("{:.3}", t.statistic),
                format!("{:.3}", t.p_value),
                if upper { String::new() } else { self.pe_differ(t) },
            ]);
        }
        let widths: Vec<usize> = (0..8)
            .map(|j| {
                rows.iter()
                    .map(|r| r[j].chars().count())
                    .chain([header[j].chars().count()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut out = String::new();
        let mut line = |cells: &[String]| {
            let padded: Vec<String> = cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
                .collect();
            let _ = writeln!(out, "{}", padded.join(" | ").trim_end());
        };
        line(&header.map(String::from));
        line(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>());
        for r in &rows {
            line(r);
        }
        out
    }

    /// Both PE halves share one verdict, taken from the combined record.
    fn pe_differ(&self, t: &TestRecord) -> String {
        if t.method == "PE-lower" {
            if let Some(c) = self
                .tests
                .iter()
                .find(|c| c.method == "PE-combined" && c.test_set == t.test_set)
            {
                return c.models_differ.clone();
            }
        }
        t.models_differ.clone()
    }

    pub fn render_coefficients(&self) -> String {
        let mut out = String::new();
        let w = self.feature_names.iter().map(|n| n.chars().count()).max().unwrap_or(0).max(8);
        let _ = write!(out, "{:w$}", "");
        for m in &self.models {
            let _ = write!(out, " | {:>20}", format!("β̂ {}", m.name));
        }
        let _ = writeln!(out, " | {:>10}", "q̂");
        for (j, name) in self.feature_names.iter().enumerate() {
            let _ = write!(out, "{name:w$}");
            for m in &self.models {
                let _ = write!(out, " | {:>9.3} ({:>8.3})", m.beta[j], m.std_errors[j]);
            }
            let _ = writeln!(out, " | {:>10.3}", self.q_hat[j]);
        }
        out
    }
}
