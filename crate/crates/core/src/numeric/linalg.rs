use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-10;
const EIGEN_MAX_ITER: usize = 10_000;

/// A symmetric positive definite matrix together with its Cholesky factor.
///
/// Construction symmetrizes the input as `(S + Sᵀ)/2`; asymmetry larger than
/// `1e-10` relative to the largest entry is rejected instead.
#[derive(Debug, Clone)]
pub struct SpdMatrix {
    matrix: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl SpdMatrix {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                found: matrix.ncols(),
            });
        }
        if matrix.nrows() == 0 {
            return Err(Error::InvalidArgument("empty matrix".into()));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix entry".into()));
        }
        let scale = matrix.amax().max(f64::MIN_POSITIVE);
        let asym = (&matrix - matrix.transpose()).amax() / scale;
        if asym > SYMMETRY_TOL {
            return Err(Error::NotSymmetric(asym));
        }
        let sym = (&matrix + matrix.transpose()) * 0.5;
        let chol = Cholesky::new(sym.clone()).ok_or(Error::NotPositiveDefinite)?;
        // Cholesky can succeed on a matrix that is singular to working precision.
        let min_pivot = chol.l_dirty().diagonal().min();
        if !(min_pivot > 0.0) || min_pivot * min_pivot < scale * f64::EPSILON * 1e-6 {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(Self { matrix: sym, chol })
    }

    pub fn from_row_slice(dim: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                found: entries.len(),
            });
        }
        Self::new(DMatrix::from_row_slice(dim, dim, entries))
    }

    pub fn identity(dim: usize) -> Self {
        Self::new(DMatrix::identity(dim, dim)).expect("identity is SPD")
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Lower-triangular factor `L` with `L Lᵀ = S`.
    pub fn cholesky_factor(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    pub fn solve(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_len(v.len())?;
        Ok(self.chol.solve(v))
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }

    pub fn diagonal(&self) -> DVector<f64> {
        self.matrix.diagonal()
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }

    /// Sum of two SPD matrices (e.g. `V̂ᴬ + V̂ᴮ`).
    pub fn sum(&self, other: &SpdMatrix) -> Result<SpdMatrix> {
        self.check_len(other.dim())?;
        SpdMatrix::new(&self.matrix + &other.matrix)
    }

    /// `A S Aᵀ` for a square invertible `A`.
    pub fn congruence(&self, a: &DMatrix<f64>) -> Result<SpdMatrix> {
        self.check_len(a.ncols())?;
        SpdMatrix::new(a * &self.matrix * a.transpose())
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: len,
            });
        }
        Ok(())
    }
}

impl PartialEq for SpdMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.matrix == other.matrix
    }
}

impl Serialize for SpdMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = self
            .matrix
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect();
        rows.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SpdMatrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(deserializer)?;
        let dim = rows.len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(serde::de::Error::custom("covariance matrix must be square"));
        }
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        SpdMatrix::from_row_slice(dim, &flat).map_err(serde::de::Error::custom)
    }
}

/// Squared Mahalanobis norm `vᵀ S⁻¹ v`, computed by a triangular solve
/// against the Cholesky factor.
pub fn mahalanobis_sq(v: &DVector<f64>, s: &SpdMatrix) -> Result<f64> {
    s.check_len(v.len())?;
    let mut z = v.clone();
    if !s.chol.l_dirty().solve_lower_triangular_mut(&mut z) {
        return Err(Error::NotPositiveDefinite);
    }
    Ok(z.norm_squared())
}

/// Largest eigenvalue of `S`.
pub fn max_eigenvalue(s: &SpdMatrix) -> Result<f64> {
    let eig = s
        .matrix
        .clone()
        .try_symmetric_eigen(f64::EPSILON, EIGEN_MAX_ITER)
        .ok_or_else(|| Error::NonConvergence("symmetric eigendecomposition".into()))?;
    Ok(eig.eigenvalues.max())
}

/// Sample mean vector and covariance (denominator `n − 1`) of the rows of `data`.
pub fn sample_moments(data: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = data.nrows();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 rows for a covariance, got {n}"
        )));
    }
    let mean = data.row_mean().transpose();
    let mut centered = data.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    Ok((mean, cov))
}
