use std::collections::BTreeMap;

use lrequiv::datagen::{estimate_copula, regenerate, CopulaSpec, Marginal};
use lrequiv::numeric::{normal_cdf, sample_mvnormal, RngStream, SpdMatrix};
use nalgebra::{DMatrix, DVector};

const N: usize = 100_000;

fn spec() -> CopulaSpec {
    let sd = [1.5, 0.8, 2.0];
    let mu = [4.0, 2.0, 6.0];
    let corr = [[1.0, 0.5, -0.3], [0.5, 1.0, 0.2], [-0.3, 0.2, 1.0]];
    let sigma = DMatrix::from_fn(3, 3, |i, j| corr[i][j] * sd[i] * sd[j]);
    let variables = (0..3)
        .map(|j| Marginal {
            name: format!("s{j}"),
            shape: mu[j] * mu[j] / (sd[j] * sd[j]),
            rate: mu[j] / (sd[j] * sd[j]),
            offset: 10.0 + j as f64,
        })
        .collect();
    CopulaSpec {
        group: "g".into(),
        population: "p".into(),
        labels: BTreeMap::new(),
        n_target: 500,
        variables,
        mu: mu.to_vec(),
        sigma: SpdMatrix::new(sigma).unwrap(),
    }
}

/// Asymptotic Kolmogorov p-value with the usual small-sample correction.
fn ks_uniform_p(mut u: Vec<f64>) -> f64 {
    u.sort_by(f64::total_cmp);
    let n = u.len() as f64;
    let d = u
        .iter()
        .enumerate()
        .map(|(i, &x)| ((i as f64 + 1.0) / n - x).max(x - i as f64 / n))
        .fold(0.0, f64::max);
    let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    let q: f64 = (1..100)
        .map(|k| {
            let k = k as f64;
            2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp()
        })
        .sum();
    q.clamp(0.0, 1.0)
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    for (rank, &i) in idx.iter().enumerate() {
        r[i] = rank as f64;
    }
    r
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn standardized_normal_columns_are_uniform() {
    let s = spec();
    let mu = DVector::from_column_slice(&s.mu);
    let y = sample_mvnormal(&mu, &s.sigma, N, &mut RngStream::new(5, 0)).unwrap();
    for j in 0..3 {
        let sd = s.sigma.matrix()[(j, j)].sqrt();
        let u: Vec<f64> = y.column(j).iter().map(|v| normal_cdf((v - s.mu[j]) / sd)).collect();
        let p = ks_uniform_p(u);
        assert!(p > 0.01, "column {j}: KS p = {p}");
    }
}

#[test]
fn regenerated_marginals_match_the_gammas() {
    let s = spec();
    let x = regenerate(&s, N, &mut RngStream::new(6, 0)).unwrap();
    for (j, v) in s.variables.iter().enumerate() {
        let col = x.column(j);
        assert!(col.iter().all(|&xi| xi <= v.offset));
        let z: Vec<f64> = col.iter().map(|xi| v.offset - xi).collect();
        let n = N as f64;
        let mean = z.iter().sum::<f64>() / n;
        let var = z.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let (gm, gv) = (v.shape / v.rate, v.shape / (v.rate * v.rate));
        // Gamma fourth central moment: 3α(α+2)/β⁴.
        let m4 = 3.0 * v.shape * (v.shape + 2.0) / v.rate.powi(4);
        let se_mean = (gv / n).sqrt();
        let se_var = ((m4 - gv * gv) / n).sqrt();
        assert!((mean - gm).abs() < 3.0 * se_mean, "{}: mean {mean} vs {gm}", v.name);
        assert!((var - gv).abs() < 3.0 * se_var, "{}: var {var} vs {gv}", v.name);
    }
}

#[test]
fn estimate_regenerate_estimate_is_a_fixed_point() {
    let s = spec();
    let x = regenerate(&s, N, &mut RngStream::new(7, 0)).unwrap();
    let names: Vec<String> = s.variables.iter().map(|v| v.name.clone()).collect();
    let again = estimate_copula(&x, &names, "g", "p", BTreeMap::new()).unwrap();
    for (a, b) in s.variables.iter().zip(&again.variables) {
        // The re-estimated offset is the sample max, just below the true one,
        // so compare moments of z measured from the original offset.
        let shift = a.offset - b.offset;
        let mean = b.shape / b.rate + shift;
        let var = b.shape / (b.rate * b.rate);
        let (shape, rate) = (mean * mean / var, mean / var);
        assert!((shape / a.shape - 1.0).abs() < 0.05, "{}: shape {shape} vs {}", a.name, a.shape);
        assert!((rate / a.rate - 1.0).abs() < 0.05, "{}: rate {rate} vs {}", a.name, a.rate);
    }
}

#[test]
fn identity_correlation_gives_independent_scores() {
    let mut s = spec();
    let var: Vec<f64> = s.variables.iter().map(|v| v.shape / (v.rate * v.rate)).collect();
    s.sigma = SpdMatrix::from_diagonal(&var).unwrap();
    let x = regenerate(&s, N, &mut RngStream::new(8, 0)).unwrap();
    let r: Vec<Vec<f64>> = (0..3).map(|j| ranks(x.column(j).as_slice())).collect();
    for (i, j) in [(0, 1), (0, 2), (1, 2)] {
        let rho = pearson(&r[i], &r[j]);
        assert!(rho.abs() < 0.02, "({i},{j}): {rho}");
    }
}
