//! Scenario-grid files and sweep CSV output.
//!
//! A grid is TOML with an optional `[defaults]` table and one or more
//! `[[scenario]]` tables. Keys mirror [`ScenarioConfig`] in kebab-case. In a
//! scenario, `n`, `effect`, `k` and `alpha` may be scalars or lists and are
//! expanded as a Cartesian product (effect, then k, then n, then alpha,
//! innermost last); `delta-beta`, `delta-theta` and `delta-b` are level
//! lists evaluated on the same replicates.
//!
//! ```toml
//! [defaults]
//! replicates = 1000
//! seed = 20240101
//!
//! [[scenario]]
//! effect = "logodds-multiplicative"
//! k = [1.01, 1.25]
//! n = [100, 1000]
//! delta-beta = [0.1, 0.5]
//! delta-theta = 0.05
//! delta-b = 1.1
//! ```

use std::io::Write;
use std::path::Path;

use serde::Deserialize;

use super::{Effect, LevelLists, PeLevelMode, ScenarioConfig, ScenarioResult};
use crate::equiv::PeAlphaConvention;
use crate::error::{Error, Result};

pub const SWEEP_CSV_HEADER: [&str; 8] =
    ["n", "effect", "k", "method", "level", "rate", "replicates", "failures"];

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct CellSpec {
    n: Option<OneOrMany<usize>>,
    effect: Option<OneOrMany<Effect>>,
    k: Option<OneOrMany<f64>>,
    alpha: Option<OneOrMany<f64>>,
    p: Option<usize>,
    k_sd: Option<f64>,
    replicates: Option<usize>,
    seed: Option<u64>,
    delta_beta: Option<OneOrMany<f64>>,
    delta_theta: Option<OneOrMany<f64>>,
    delta_b: Option<OneOrMany<f64>>,
    pe_level_mode: Option<PeLevelMode>,
    pe_alpha: Option<PeAlphaConvention>,
    hl_groups: Option<usize>,
}

impl CellSpec {
    /// Fills unset keys from `defaults`.
    fn merged(&self, d: &CellSpec) -> CellSpec {
        macro_rules! pick {
            ($($f:ident),*) => { CellSpec { $($f: self.$f.clone().or_else(|| d.$f.clone())),* } };
        }
        pick!(
            n, effect, k, alpha, p, k_sd, replicates, seed, delta_beta, delta_theta, delta_b,
            pe_level_mode, pe_alpha, hl_groups
        )
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    #[serde(default)]
    defaults: CellSpec,
    #[serde(default)]
    scenario: Vec<CellSpec>,
}

/// A parsed grid: the expanded cells in deterministic order.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFile {
    pub cells: Vec<ScenarioConfig>,
}

impl GridFile {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let raw: RawGrid = toml::from_str(text).map_err(|e| Error::Config {
            path: origin.to_string(),
            line: e.span().map_or(0, |s| line_of(text, s.start)),
            message: e.message().to_string(),
        })?;
        if raw.scenario.is_empty() {
            return Err(Error::Config {
                path: origin.to_string(),
                line: 1,
                message: "grid has no [[scenario]] tables".into(),
            });
        }
        let mut cells = Vec::new();
        for (i, spec) in raw.scenario.iter().enumerate() {
            let line = nth_scenario_line(text, i);
            let fail = |message: String| Error::Config {
                path: origin.to_string(),
                line,
                message,
            };
            let spec = spec.merged(&raw.defaults);
            let expanded = expand(&spec).map_err(|e| fail(e.to_string()))?;
            for cfg in &expanded {
                cfg.validate().map_err(|e| fail(e.to_string()))?;
            }
            cells.extend(expanded);
        }
        Ok(Self { cells })
    }

    /// Applies command-line overrides to every cell.
    pub fn override_all(&mut self, replicates: Option<usize>, seed: Option<u64>) {
        for c in &mut self.cells {
            if let Some(r) = replicates {
                c.replicates = r;
            }
            if let Some(s) = seed {
                c.seed = s;
            }
        }
    }
}

fn line_of(text: &str, byte: usize) -> usize {
    text[..byte.min(text.len())].matches('\n').count() + 1
}

fn nth_scenario_line(text: &str, i: usize) -> usize {
    text.lines()
        .enumerate()
        .filter(|(_, l)| l.trim_start().starts_with("[[scenario]]"))
        .nth(i)
        .map_or(0, |(no, _)| no + 1)
}

fn expand(spec: &CellSpec) -> Result<Vec<ScenarioConfig>> {
    let missing = |key: &str| Error::InvalidArgument(format!("missing key `{key}`"));
    let ns = spec.n.as_ref().ok_or_else(|| missing("n"))?.to_vec();
    let effects = spec.effect.as_ref().ok_or_else(|| missing("effect"))?.to_vec();
    let alphas = spec.alpha.as_ref().map_or(vec![0.05], OneOrMany::to_vec);
    let levels = LevelLists {
        delta_beta: spec.delta_beta.as_ref().ok_or_else(|| missing("delta-beta"))?.to_vec(),
        delta_theta: spec.delta_theta.as_ref().ok_or_else(|| missing("delta-theta"))?.to_vec(),
        delta_b: spec.delta_b.as_ref().ok_or_else(|| missing("delta-b"))?.to_vec(),
    };
    if ns.is_empty() || effects.is_empty() || alphas.is_empty() {
        return Err(Error::InvalidArgument("n, effect and alpha lists must be nonempty".into()));
    }

    let mut out = Vec::new();
    for &effect in &effects {
        let ks = match (&spec.k, effect) {
            (Some(k), _) => k.to_vec(),
            (None, Effect::None) => vec![1.0],
            (None, _) => return Err(missing("k")),
        };
        for &k in &ks {
            for &n in &ns {
                for &alpha in &alphas {
                    let mut cfg = ScenarioConfig::new(n, effect, k, levels.clone());
                    cfg.alpha = alpha;
                    if let Some(v) = spec.p {
                        cfg.p = v;
                    }
                    if let Some(v) = spec.k_sd {
                        cfg.k_sd = v;
                    }
                    if let Some(v) = spec.replicates {
                        cfg.replicates = v;
                    }
                    if let Some(v) = spec.seed {
                        cfg.seed = v;
                    }
                    if let Some(v) = spec.pe_level_mode {
                        cfg.pe_level_mode = v;
                    }
                    if let Some(v) = spec.pe_alpha {
                        cfg.pe_alpha = v;
                    }
                    if let Some(v) = spec.hl_groups {
                        cfg.hl_groups = v;
                    }
                    out.push(cfg);
                }
            }
        }
    }
    Ok(out)
}

pub fn read_grid(path: &Path) -> Result<GridFile> {
    let text = std::fs::read_to_string(path)?;
    GridFile::parse(&text, &path.display().to_string())
}

// PE uses squared δ_B with each one-sided test at α/2. The other three PE
// readings miss the equal-models n = 1000 rate by a wide margin.
const ERROR_RATES: &str = r#"
[defaults]
replicates = 1000
seed = 1
delta-beta = 0.2
delta-theta = 0.05
delta-b = 1.005
pe-level-mode = "squared"
pe-alpha = "table-halved"
alpha = [0.05, 0.1]
n = [100, 1000, 10000]

[[scenario]]
effect = "none"

[[scenario]]
effect = "logodds-multiplicative"
k = 1.5
"#;

const SIM_LEVELS: &str = r#"
[defaults]
replicates = 1000
seed = 1
n = [100, 200, 300, 400, 500, 600, 700, 800, 900, 1000, 1500, 2000, 2500, 5000, 7500, 10000]
delta-beta = [0.1, 0.25, 0.5, 1.0]
delta-theta = [0.025, 0.05, 0.1, 0.2]
delta-b = [1.01, 1.05, 1.1, 1.2]
"#;

/// Built-in grids: `error-rates` plus one grid per effect type.
pub fn preset(name: &str) -> Option<String> {
    let body = match name {
        "error-rates" => return Some(ERROR_RATES.trim_start().to_string()),
        "logodds-multiplicative" => {
            "[[scenario]]\neffect = \"logodds-multiplicative\"\nk = [1.01, 1.05, 1.1, 1.25]\n"
        }
        "logodds-additive" => "[[scenario]]\neffect = \"logodds-additive\"\nk = [0.05, 0.1, 0.25, 0.5]\n",
        "probability-multiplicative" => {
            "[[scenario]]\neffect = \"probability-multiplicative\"\nk = [1.01, 1.1, 1.25, 1.5]\n"
        }
        _ => return None,
    };
    Some(format!("{}\n{body}", SIM_LEVELS.trim_start()))
}

pub fn preset_names() -> &'static [&'static str] {
    &[
        "error-rates",
        "logodds-multiplicative",
        "logodds-additive",
        "probability-multiplicative",
    ]
}

/// One row per (cell, method, level), in cell order.
pub fn write_sweep_csv<W: Write>(out: W, results: &[ScenarioResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_CSV_HEADER)?;
    for res in results {
        let c = &res.config;
        for r in &res.rates {
            w.write_record([
                c.n.to_string(),
                c.effect.to_string(),
                c.k.to_string(),
                r.method.as_str().to_string(),
                r.level.map_or_else(String::new, |l| l.to_string()),
                r.rate.to_string(),
                res.replicates.to_string(),
                res.failures.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
