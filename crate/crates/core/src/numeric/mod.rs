//! Numerical substrate: distribution functions, SPD linear algebra and
//! seeded random streams.

pub mod dist;
pub mod linalg;
pub mod rng;

pub use dist::{
    chisq_cdf, chisq_quantile, gamma_cdf, gamma_quantile, noncentral_chisq_cdf,
    noncentral_chisq_quantile, normal_cdf, student_t_cdf, student_t_quantile,
};
pub use linalg::{mahalanobis_sq, max_eigenvalue, sample_moments, SpdMatrix};
pub use rng::{sample_mvnormal, RngStream};
