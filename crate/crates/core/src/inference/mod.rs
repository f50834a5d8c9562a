//! Parameter estimation: directional variograms and maximum likelihood.

pub mod fit;
pub mod likelihood;
pub mod optimize;
pub mod variogram;

pub use fit::{fit, FitOptions, FitResult, Param, StretchMode};
pub use likelihood::{negative_log_likelihood, profile_negative_log_likelihood, ProfileLikelihood};
pub use variogram::{empirical_variogram, grid_lag_correlation, model_variogram, VariogramEstimate, VariogramRow};
