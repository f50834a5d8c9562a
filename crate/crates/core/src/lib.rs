//! Wind-deformed anisotropic covariance for planar geostatistics.
//!
//! The plane is stretched along and across a constant wind direction, and an
//! isotropic kernel is applied in the stretched space. The crate covers the
//! deformation geometry, kernel evaluation, Gaussian random field synthesis,
//! a particle transport simulator, empirical variograms and maximum
//! likelihood fitting.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod contour;
pub mod error;
pub mod geometry;
pub mod inference;
pub mod io;
pub mod kernel;
pub mod sites;
pub mod synthesis;
pub mod transport;

pub use error::{Error, Result};
pub use geometry::{Angle, DeformationParams, Mat2, Point, Separation};
pub use kernel::{CovarianceModel, KernelFamily, ModelConfig};
pub use sites::{FieldSample, GridMeta, ModelTag, SiteSet};
