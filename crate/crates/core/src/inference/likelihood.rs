//! Gaussian process negative log-likelihood.

use nalgebra::DVector;

use crate::error::Result;
use crate::kernel::CovarianceModel;
use crate::sites::FieldSample;
use crate::synthesis::{factorize_model, Factorization};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `0.5 * [(x - mean)' K^-1 (x - mean) + log det K + n log 2 pi]`.
///
/// `K` goes through the same jitter escalation as field sampling.
pub fn negative_log_likelihood(model: &CovarianceModel, sample: &FieldSample, mean: f64) -> Result<f64> {
    let factor = factorize_model(model, sample.sites())?;
    let r = DVector::from_iterator(sample.len(), sample.values().iter().map(|v| v - mean));
    let y = solve_lower(&factor, r);
    Ok(0.5 * (y.norm_squared() + factor.log_determinant() + sample.len() as f64 * LN_2PI))
}

/// Likelihood with the constant mean profiled out by generalized least squares.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileLikelihood {
    pub nll: f64,
    pub mean: f64,
    /// Diagonal jitter that the factorization needed.
    pub jitter: f64,
}

/// Negative log-likelihood at the GLS mean `(1' K^-1 x) / (1' K^-1 1)`.
pub fn profile_negative_log_likelihood(model: &CovarianceModel, sample: &FieldSample) -> Result<ProfileLikelihood> {
    let factor = factorize_model(model, sample.sites())?;
    let n = sample.len();
    let a = solve_lower(&factor, DVector::from_element(n, 1.0));
    let b = solve_lower(&factor, DVector::from_column_slice(sample.values()));
    let mean = a.dot(&b) / a.dot(&a);
    let quad = (b - a * mean).norm_squared();
    Ok(ProfileLikelihood {
        nll: 0.5 * (quad + factor.log_determinant() + n as f64 * LN_2PI),
        mean,
        jitter: factor.jitter,
    })
}

fn solve_lower(factor: &Factorization, mut rhs: DVector<f64>) -> DVector<f64> {
    factor.cholesky.l_dirty().solve_lower_triangular_mut(&mut rhs);
    rhs
}
