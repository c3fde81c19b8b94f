use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::linalg::SpdMatrix;
use crate::error::{Error, Result};

/// A seeded random stream. The pair `(seed, stream_id)` fully determines the
/// draw sequence; streams with different ids are independent ChaCha streams
/// under the same key.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    pub fn normal(&mut self, mean: f64, sd: f64) -> f64 {
        mean + sd * self.standard_normal()
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.index(i + 1);
            items.swap(i, j);
        }
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }
}

/// `n` i.i.d. rows from `N(mu, sigma)`, as `L z + mu` with `L` the Cholesky
/// factor of `sigma`.
pub fn sample_mvnormal(
    mu: &DVector<f64>,
    sigma: &SpdMatrix,
    n: usize,
    rng: &mut RngStream,
) -> Result<DMatrix<f64>> {
    let dim = sigma.dim();
    if mu.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: mu.len(),
        });
    }
    if n == 0 {
        return Err(Error::InvalidArgument("sample size must be >= 1".into()));
    }
    let l = sigma.cholesky_factor();
    let mut out = DMatrix::zeros(n, dim);
    let mut z = DVector::zeros(dim);
    for i in 0..n {
        for v in z.iter_mut() {
            *v = rng.standard_normal();
        }
        let row = &l * &z + mu;
        out.row_mut(i).copy_from(&row.transpose());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::linalg::sample_moments;

    #[test]
    fn same_stream_reproduces() {
        let mut a = RngStream::new(7, 3);
        let mut b = RngStream::new(7, 3);
        let xs: Vec<u64> = (0..32).map(|_| a.next_u64()).collect();
        let ys: Vec<u64> = (0..32).map(|_| b.next_u64()).collect();
        assert_eq!(xs, ys);
    }

    #[test]
    fn distinct_streams_differ() {
        let mut a = RngStream::new(7, 3);
        let mut b = RngStream::new(7, 4);
        let xs: Vec<u64> = (0..8).map(|_| a.next_u64()).collect();
        let ys: Vec<u64> = (0..8).map(|_| b.next_u64()).collect();
        assert_ne!(xs, ys);
    }

    #[test]
    fn distinct_streams_uncorrelated() {
        let n = 100_000;
        let mut a = RngStream::new(11, 0);
        let mut b = RngStream::new(11, 1);
        let pairs: Vec<(f64, f64)> = (0..n)
            .map(|_| (a.standard_normal(), b.standard_normal()))
            .collect();
        let r: f64 = pairs.iter().map(|(x, y)| x * y).sum::<f64>() / n as f64;
        // 4 standard errors of a correlation estimate.
        assert!(r.abs() < 4.0 / (n as f64).sqrt(), "r = {r}");
    }

    #[test]
    fn mvnormal_identity_covariance() {
        let mut rng = RngStream::new(42, 0);
        let mu = DVector::from_vec(vec![0.0, 0.0]);
        let x = sample_mvnormal(&mu, &SpdMatrix::identity(2), 100_000, &mut rng).unwrap();
        let (mean, cov) = sample_moments(&x).unwrap();
        for i in 0..2 {
            assert!(mean[i].abs() < 0.02);
            for j in 0..2 {
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((cov[(i, j)] - target).abs() < 0.02, "cov[{i},{j}] = {}", cov[(i, j)]);
            }
        }
    }

    #[test]
    fn mvnormal_correlated() {
        let mut rng = RngStream::new(5, 9);
        let mu = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let sigma =
            SpdMatrix::from_row_slice(3, &[2.0, 0.6, -0.3, 0.6, 1.0, 0.2, -0.3, 0.2, 0.5]).unwrap();
        let x = sample_mvnormal(&mu, &sigma, 200_000, &mut rng).unwrap();
        let (mean, cov) = sample_moments(&x).unwrap();
        for i in 0..3 {
            assert!((mean[i] - mu[i]).abs() < 0.02);
            for j in 0..3 {
                assert!((cov[(i, j)] - sigma.matrix()[(i, j)]).abs() < 0.03);
            }
        }
    }
}
