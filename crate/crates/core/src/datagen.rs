//! Synthetic score regeneration through a Gaussian copula with gamma
//! marginals.
//!
//! Each score column is reflected about its maximum, `z = C − x`, so the
//! (typically left-skewed) scores become right-skewed and nonnegative. The
//! reflected columns get method-of-moments gamma marginals and their joint
//! dependence is carried by a multivariate normal with the empirical mean
//! and covariance. Regeneration reverses the steps.
//!
//! A [`CopulaSpec`] describes one subgroup: a population (e.g. a gender)
//! together with a fixed combination of binary labels. Regenerated rows
//! inherit the subgroup's labels.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{gamma_quantile, normal_cdf, sample_moments, sample_mvnormal, RngStream, SpdMatrix};

/// Eigenvalue floor applied when the reflected-score covariance is not SPD.
pub const EIGEN_FLOOR: f64 = 1e-10;
/// Uniforms are kept this far from 0 and 1 before the gamma quantile.
const P_CLAMP: f64 = 1e-15;
/// Split shuffles use streams above this offset, clear of the per-spec ones.
const SPLIT_STREAM_BASE: u64 = 1 << 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Marginal {
    pub name: String,
    pub shape: f64,
    pub rate: f64,
    /// `C = max(x)` of the source column.
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CopulaSpec {
    /// Subgroup id, unique within a spec file.
    pub group: String,
    pub population: String,
    #[serde(default)]
    pub labels: BTreeMap<String, u8>,
    pub n_target: usize,
    pub variables: Vec<Marginal>,
    pub mu: Vec<f64>,
    pub sigma: SpdMatrix,
}

impl CopulaSpec {
    pub fn dim(&self) -> usize {
        self.variables.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if d == 0 {
            return Err(Error::InvalidArgument(format!("spec `{}` has no variables", self.group)));
        }
        if self.mu.len() != d || self.sigma.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: if self.mu.len() != d { self.mu.len() } else { self.sigma.dim() },
            });
        }
        for v in &self.variables {
            if !(v.shape > 0.0 && v.rate > 0.0 && v.shape.is_finite() && v.rate.is_finite())
                || !v.offset.is_finite()
            {
                return Err(Error::InvalidArgument(format!(
                    "variable `{}` of `{}` needs positive shape and rate",
                    v.name, self.group
                )));
            }
        }
        if self.labels.values().any(|&l| l > 1) {
            return Err(Error::InvalidArgument(format!("labels of `{}` must be 0 or 1", self.group)));
        }
        Ok(())
    }
}

/// The spec file: every subgroup needed to rebuild a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecFile {
    pub specs: Vec<CopulaSpec>,
}

impl SpecFile {
    pub fn get(&self, group: &str) -> Option<&CopulaSpec> {
        self.specs.iter().find(|s| s.group == group)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut text = String::new();
        std::fs::File::open(path)?.read_to_string(&mut text)?;
        let file: SpecFile = serde_json::from_str(&text)?;
        for s in &file.specs {
            s.validate()?;
        }
        Ok(file)
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut out, self)?;
        writeln!(out)?;
        Ok(())
    }
}

/// Gamma parameters by the method of moments: `α = μ²/σ²`, `β = μ/σ²`.
pub fn gamma_moments(mean: f64, var: f64) -> Result<(f64, f64)> {
    if !(var > 0.0) || !(mean > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "gamma moments need positive mean and variance (mean {mean}, variance {var})"
        )));
    }
    Ok((mean * mean / var, mean / var))
}

/// Fits a subgroup spec from its raw scores (`rows × variables`).
pub fn estimate_copula(
    data: &DMatrix<f64>,
    names: &[String],
    group: &str,
    population: &str,
    labels: BTreeMap<String, u8>,
) -> Result<CopulaSpec> {
    let (n, d) = data.shape();
    if names.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: names.len(),
        });
    }
    if n < 2 {
        return Err(Error::InvalidArgument(format!("subgroup `{group}` has fewer than 2 rows")));
    }
    let offsets: Vec<f64> = data.column_iter().map(|c| c.max()).collect();
    let z = DMatrix::from_fn(n, d, |i, j| offsets[j] - data[(i, j)]);
    let (mu, cov) = sample_moments(&z)?;

    let mut variables = Vec::with_capacity(d);
    for j in 0..d {
        let var = cov[(j, j)];
        if !(var > 0.0) {
            return Err(Error::ZeroVariance(format!("column `{}` of `{group}`", names[j])));
        }
        let (shape, rate) = gamma_moments(mu[j], var)?;
        variables.push(Marginal {
            name: names[j].clone(),
            shape,
            rate,
            offset: offsets[j],
        });
    }
    let sigma = match SpdMatrix::new(cov.clone()) {
        Ok(s) => s,
        Err(_) => {
            log::warn!("covariance of `{group}` is not positive definite; flooring eigenvalues at {EIGEN_FLOOR}");
            floor_eigenvalues(cov)?
        }
    };
    Ok(CopulaSpec {
        group: group.to_string(),
        population: population.to_string(),
        labels,
        n_target: n,
        variables,
        mu: mu.iter().copied().collect(),
        sigma,
    })
}

fn floor_eigenvalues(cov: DMatrix<f64>) -> Result<SpdMatrix> {
    let eig = SymmetricEigen::new(cov);
    let floored = eig.eigenvalues.map(|l| l.max(EIGEN_FLOOR));
    let rebuilt = &eig.eigenvectors * DMatrix::from_diagonal(&floored) * eig.eigenvectors.transpose();
    SpdMatrix::new(rebuilt)
}

/// Draws `n` score rows from `spec`.
pub fn regenerate(spec: &CopulaSpec, n: usize, rng: &mut RngStream) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let mu = DVector::from_column_slice(&spec.mu);
    let y = sample_mvnormal(&mu, &spec.sigma, n, rng)?;
    let sd = spec.sigma.diagonal().map(f64::sqrt);
    let mut out = DMatrix::zeros(n, spec.dim());
    for (j, var) in spec.variables.iter().enumerate() {
        for i in 0..n {
            let u = normal_cdf((y[(i, j)] - mu[j]) / sd[j]).clamp(P_CLAMP, 1.0 - P_CLAMP);
            out[(i, j)] = var.offset - gamma_quantile(u, var.shape, var.rate)?;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct PlanEntry {
    pub group: String,
    /// Rows to regenerate; defaults to the spec's `n_target`.
    pub n: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct RegenPlan {
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(rename = "group")]
    pub groups: Vec<PlanEntry>,
}

fn default_train_fraction() -> f64 {
    0.75
}

impl RegenPlan {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let plan: RegenPlan = toml::from_str(text).map_err(|e| Error::Config {
            path: origin.to_string(),
            line: e.span().map_or(0, |s| text[..s.start.min(text.len())].matches('\n').count() + 1),
            message: e.message().to_string(),
        })?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<()> {
        if self.groups.is_empty() {
            return Err(Error::InvalidArgument("plan lists no groups".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "train fraction {} outside (0, 1]",
                self.train_fraction
            )));
        }
        if let Some(e) = self.groups.iter().find(|e| e.n == Some(0)) {
            return Err(Error::InvalidArgument(format!("group `{}` has target 0", e.group)));
        }
        Ok(())
    }
}

/// A named numeric table (scores followed by label columns).
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub columns: Vec<String>,
    pub rows: DMatrix<f64>,
}

impl ScoreTable {
    pub fn n_rows(&self) -> usize {
        self.rows.nrows()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.columns)?;
        for row in self.rows.row_iter() {
            w.write_record(row.iter().map(|v| format_value(*v)))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Shortest decimal that parses back to the same `f64`.
pub fn format_value(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{v:.0}")
    } else {
        format!("{v}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: ScoreTable,
    pub test: ScoreTable,
}

/// Regenerates every plan group, pools groups by population, shuffles
/// and splits each population by the plan's train fraction.
///
/// Plan entry `i` draws from stream `i`; the split of the `j`-th population
/// (in name order) uses its own stream, so output does not depend on
/// thread scheduling.
pub fn build_splits(plan: &RegenPlan, specs: &SpecFile, seed: u64) -> Result<BTreeMap<String, Split>> {
    plan.validate()?;
    let chosen: Vec<(&CopulaSpec, usize)> = plan
        .groups
        .iter()
        .map(|e| {
            let spec = specs.get(&e.group).ok_or_else(|| {
                Error::InvalidArgument(format!("plan group `{}` has no spec", e.group))
            })?;
            Ok((spec, e.n.unwrap_or(spec.n_target)))
        })
        .collect::<Result<_>>()?;

    let score_names: Vec<String> = chosen[0].0.variables.iter().map(|v| v.name.clone()).collect();
    let label_names: Vec<String> = chosen[0].0.labels.keys().cloned().collect();
    for (spec, _) in &chosen {
        let names: Vec<&String> = spec.variables.iter().map(|v| &v.name).collect();
        let labels: Vec<&String> = spec.labels.keys().collect();
        if names != score_names.iter().collect::<Vec<_>>() || labels != label_names.iter().collect::<Vec<_>>() {
            return Err(Error::InvalidArgument(format!(
                "spec `{}` has different variables or labels from `{}`",
                spec.group, chosen[0].0.group
            )));
        }
    }

    let blocks: Vec<DMatrix<f64>> = chosen
        .par_iter()
        .enumerate()
        .map(|(i, (spec, n))| {
            let mut rng = RngStream::new(seed, i as u64);
            let scores = regenerate(spec, *n, &mut rng)?;
            let d = scores.ncols();
            let mut block = scores.resize_horizontally(d + label_names.len(), 0.0);
            for (l, name) in label_names.iter().enumerate() {
                block.column_mut(d + l).fill(f64::from(spec.labels[name]));
            }
            Ok(block)
        })
        .collect::<Result<_>>()?;

    let mut by_population: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, (spec, _)) in chosen.iter().enumerate() {
        by_population.entry(spec.population.clone()).or_default().push(i);
    }
    let columns: Vec<String> = score_names.into_iter().chain(label_names).collect();

    let mut out = BTreeMap::new();
    for (j, (population, members)) in by_population.into_iter().enumerate() {
        let total: usize = members.iter().map(|&i| blocks[i].nrows()).sum();
        let mut pooled = DMatrix::zeros(total, columns.len());
        let mut at = 0;
        for &i in &members {
            let b = &blocks[i];
            pooled.rows_mut(at, b.nrows()).copy_from(b);
            at += b.nrows();
        }
        let mut order: Vec<usize> = (0..total).collect();
        RngStream::new(seed, SPLIT_STREAM_BASE + j as u64).shuffle(&mut order);
        let n_train = (plan.train_fraction * total as f64).round() as usize;
        if n_train == 0 || n_train >= total {
            return Err(Error::InvalidArgument(format!(
                "population `{population}`: a {} split of {total} rows leaves an empty train or test set",
                plan.train_fraction
            )));
        }
        let pick = |idx: &[usize]| ScoreTable {
            columns: columns.clone(),
            rows: pooled.select_rows(idx),
        };
        out.insert(
            population,
            Split {
                train: pick(&order[..n_train]),
                test: pick(&order[n_train..]),
            },
        );
    }
    Ok(out)
}
