//! Shared oracles for the integration targets.
#![allow(dead_code)]

use lrequiv::glm::{self, Dataset};
use lrequiv::numeric::RngStream;
use nalgebra::{DMatrix, DVector};

/// Three overlapping-class datasets of growing size and width.
pub fn fixtures() -> Vec<Dataset> {
    let spec = [(20usize, 1usize, 3u64), (60, 2, 5), (150, 3, 8)];
    spec.iter()
        .map(|&(n, p, seed)| {
            let mut rng = RngStream::new(seed, 0);
            let x = DMatrix::from_fn(n, p, |_, _| rng.standard_normal());
            let y = (0..n)
                .map(|i| {
                    let t = 0.4 - 0.7 * x[(i, 0)] + x.row(i).iter().skip(1).sum::<f64>() * 0.5;
                    f64::from(u8::from(rng.uniform() < 1.0 / (1.0 + (-t).exp())))
                })
                .collect();
            let names = (1..=p).map(|j| format!("x{j}")).collect();
            Dataset::from_covariates(&x, y, names).unwrap()
        })
        .collect()
}

pub fn loglik(beta: &DVector<f64>, x: &DMatrix<f64>, y: &[f64]) -> f64 {
    (0..x.nrows())
        .map(|i| {
            let t = x.row(i).transpose().dot(beta);
            y[i] * t - (1.0 + t.exp()).ln()
        })
        .sum()
}

pub fn gradient(beta: &DVector<f64>, x: &DMatrix<f64>, y: &[f64]) -> DVector<f64> {
    let mut g = DVector::zeros(beta.len());
    for i in 0..x.nrows() {
        let t = x.row(i).transpose().dot(beta);
        let r = y[i] - 1.0 / (1.0 + (-t).exp());
        g += x.row(i).transpose() * r;
    }
    g
}

/// Plain gradient ascent with step halving, no curvature information.
pub fn slow_oracle(data: &Dataset) -> DVector<f64> {
    let (x, y) = (data.x(), data.y());
    let mut beta = DVector::zeros(data.p());
    let mut step = 1.0;
    let mut ll = loglik(&beta, x, y);
    for _ in 0..100_000 {
        let g = gradient(&beta, x, y);
        if g.amax() < 1e-11 {
            break;
        }
        loop {
            let cand = &beta + &g * step;
            let l = loglik(&cand, x, y);
            if l >= ll {
                beta = cand;
                ll = l;
                step *= 1.5;
                break;
            }
            step *= 0.5;
        }
    }
    beta
}

/// Largest coordinate gap between the Newton fit and the slow oracle.
pub fn newton_oracle_gap() -> f64 {
    fixtures()
        .iter()
        .map(|d| {
            let fit = glm::fit(d).unwrap();
            assert!(fit.converged);
            (&fit.beta - slow_oracle(d)).amax()
        })
        .fold(0.0, f64::max)
}

/// Largest relative error of the analytic score against central
/// differences, at 5 random points per fixture.
pub fn score_fd_error() -> f64 {
    let mut rng = RngStream::new(99, 1);
    let mut worst: f64 = 0.0;
    for data in fixtures() {
        let (x, y) = (data.x(), data.y());
        for _ in 0..5 {
            let beta = DVector::from_fn(data.p(), |_, _| rng.normal(0.0, 0.8));
            let analytic = glm::score(&beta, x, y).unwrap();
            for j in 0..data.p() {
                let h = 1e-5 * (1.0 + beta[j].abs());
                let mut up = beta.clone();
                let mut dn = beta.clone();
                up[j] += h;
                dn[j] -= h;
                let fd = (glm::log_likelihood(&up, x, y).unwrap() - glm::log_likelihood(&dn, x, y).unwrap())
                    / (2.0 * h);
                worst = worst.max((fd - analytic[j]).abs() / analytic[j].abs().max(1e-3));
            }
        }
    }
    worst
}
