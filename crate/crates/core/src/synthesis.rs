//! Covariance matrices over site sets and Gaussian random field draws.
//!
//! Draws use ChaCha8 seeded from a `u64` and standard normals from
//! `rand_distr::StandardNormal` (ziggurat). Streams are stable for a fixed
//! seed within this crate version.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::kernel::CovarianceModel;
use crate::sites::{FieldSample, ModelTag, SiteSet};

/// First jitter tried after a plain factorization fails, relative to `sigma2`.
pub const JITTER_START: f64 = 1e-10;
/// Largest jitter tried before giving up, relative to `sigma2`.
pub const JITTER_MAX: f64 = 1e-6;

/// `K[i][j] = C(s_i, s_j)`.
pub fn covariance_matrix(model: &CovarianceModel, sites: &SiteSet) -> DMatrix<f64> {
    let pts = sites.points();
    let n = pts.len();
    let eval = model.evaluator();
    let mut k = DMatrix::zeros(n, n);
    if n == 0 {
        return k;
    }
    // column-major storage: fill the lower part of each column in parallel
    k.as_mut_slice().par_chunks_mut(n).enumerate().for_each(|(j, col)| {
        let sj = pts[j];
        for (i, v) in col.iter_mut().enumerate().skip(j) {
            *v = eval.covariance(pts[i], sj);
        }
    });
    for j in 0..n {
        for i in (j + 1)..n {
            k[(j, i)] = k[(i, j)];
        }
    }
    k
}

/// A Cholesky factor together with the diagonal jitter that was needed.
pub struct Factorization {
    pub cholesky: Cholesky<f64, Dyn>,
    /// Absolute jitter added to the diagonal (0 when none was needed).
    pub jitter: f64,
}

impl Factorization {
    pub fn l(&self) -> DMatrix<f64> {
        self.cholesky.l()
    }

    /// `log det (K + jitter I)`.
    pub fn log_determinant(&self) -> f64 {
        2.0 * self.cholesky.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }
}

/// Cholesky with bounded jitter escalation: plain first, then
/// `1e-10 * scale` multiplied by 10 per attempt up to `1e-6 * scale`.
pub fn factorize(k: DMatrix<f64>, scale: f64) -> Result<Factorization> {
    if let Some(cholesky) = k.clone().cholesky() {
        return Ok(Factorization { cholesky, jitter: 0.0 });
    }
    let mut rel = JITTER_START;
    while rel <= JITTER_MAX * (1.0 + 1e-9) {
        let jitter = rel * scale;
        let mut kj = k.clone();
        for i in 0..kj.nrows() {
            kj[(i, i)] += jitter;
        }
        if let Some(cholesky) = kj.cholesky() {
            return Ok(Factorization { cholesky, jitter });
        }
        rel *= 10.0;
    }
    Err(Error::FactorizationFailed { jitter: JITTER_MAX * scale })
}

/// Builds and factorizes the covariance matrix of `model` over `sites`.
pub fn factorize_model(model: &CovarianceModel, sites: &SiteSet) -> Result<Factorization> {
    factorize(covariance_matrix(model, sites), model.sigma2())
}

/// Seeded standard normal vector.
pub fn standard_normals(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// Draws `mean + L z` for a factor that can be reused across seeds.
pub fn sample_with_factor(factor: &Factorization, sites: &SiteSet, model: &CovarianceModel, seed: u64, mean: f64) -> Result<FieldSample> {
    let n = sites.len();
    let z = DVector::from_vec(standard_normals(n, seed));
    let x = factor.cholesky.l_dirty().lower_triangle() * z;
    let values = x.iter().map(|v| v + mean).collect();
    FieldSample::new(sites.clone(), values, seed, ModelTag::Model(*model))
}

/// One Gaussian random field realization with constant mean.
pub fn sample_field(model: &CovarianceModel, sites: &SiteSet, seed: u64, mean: f64) -> Result<FieldSample> {
    let factor = factorize_model(model, sites)?;
    sample_with_factor(&factor, sites, model, seed, mean)
}

/// One row of an exported surface or field table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceRow {
    pub x: f64,
    pub y: f64,
    pub value: f64,
}

/// `C((0, 0), (x, y))` at every grid node, row-major.
pub fn export_covariance_surface(model: &CovarianceModel, grid: &SiteSet) -> Result<Vec<SurfaceRow>> {
    if grid.grid_meta().is_none() {
        return Err(Error::MissingGridMetadata);
    }
    let eval = model.evaluator();
    let origin = Point::new(0.0, 0.0);
    Ok(grid
        .points()
        .iter()
        .map(|&p| SurfaceRow { x: p.x, y: p.y, value: eval.covariance(origin, p) })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Angle;
    use crate::kernel::{covariance, KernelFamily};
    use crate::sites::GridMeta;
    use std::f64::consts::PI;

    fn grid(n: usize) -> SiteSet {
        SiteSet::grid(GridMeta { nx: n, ny: n, spacing: 1.0, origin: Point::new(0.0, 0.0) }).unwrap()
    }

    #[test]
    fn single_site_matrix() {
        let m = CovarianceModel::new(KernelFamily::Exponential, 2.0, 1.0, 0.25, 1.0, Angle::from_radians(0.0)).unwrap();
        let s = SiteSet::new(vec![Point::new(3.0, 4.0)]).unwrap();
        let k = covariance_matrix(&m, &s);
        assert_eq!(k.shape(), (1, 1));
        assert_eq!(k[(0, 0)], 2.25);
    }

    #[test]
    fn matrix_matches_pairwise_covariance() {
        let m = CovarianceModel::new(KernelFamily::Matern32, 1.5, 2.0, 0.1, 3.0, Angle::from_radians(0.7)).unwrap();
        let s = grid(4);
        let k = covariance_matrix(&m, &s);
        for i in 0..s.len() {
            assert_eq!(k[(i, i)], 1.6);
            for j in 0..s.len() {
                assert_eq!(k[(i, j)], covariance(&m, s.points()[i], s.points()[j]));
                assert_eq!(k[(i, j)], k[(j, i)]);
            }
        }
    }

    #[test]
    fn demo_parameters_factorize_with_small_jitter() {
        let m = CovarianceModel::new(KernelFamily::Gaussian, 1.0, 2.0, 0.0, 4.5, Angle::from_radians(PI / 12.0)).unwrap();
        let f = factorize_model(&m, &grid(10)).unwrap();
        assert!(f.jitter <= 1e-8);
    }

    #[test]
    fn factorization_fails_on_indefinite_matrix() {
        let k = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(factorize(k, 1.0), Err(Error::FactorizationFailed { .. })));
    }

    #[test]
    fn jitter_escalates() {
        // rank-one matrix needs jitter
        let k = DMatrix::from_element(3, 3, 1.0);
        let f = factorize(k, 1.0).unwrap();
        assert!(f.jitter >= JITTER_START && f.jitter <= JITTER_MAX);
    }

    #[test]
    fn sampling_is_deterministic() {
        let m = CovarianceModel::new(KernelFamily::Exponential, 1.0, 3.0, 0.0, 2.0, Angle::from_radians(0.3)).unwrap();
        let s = grid(6);
        let a = sample_field(&m, &s, 42, 1.5).unwrap();
        let b = sample_field(&m, &s, 42, 1.5).unwrap();
        let c = sample_field(&m, &s, 43, 1.5).unwrap();
        assert_eq!(a.values(), b.values());
        assert_ne!(a.values(), c.values());
        assert_eq!(a.seed(), 42);
    }

    #[test]
    fn surface_requires_grid() {
        let m = CovarianceModel::isotropic(KernelFamily::Gaussian, 1.0, 1.0, 0.0).unwrap();
        let s = SiteSet::new(vec![Point::new(0.0, 0.0)]).unwrap();
        assert!(matches!(export_covariance_surface(&m, &s), Err(Error::MissingGridMetadata)));
    }

    #[test]
    fn isotropic_surface_is_radially_symmetric() {
        let m = CovarianceModel::new(KernelFamily::Exponential, 1.0, 1.0, 0.2, 1.0, Angle::from_radians(0.9)).unwrap();
        let meta = GridMeta::centered(11, 0.5);
        let g = SiteSet::grid(meta).unwrap();
        let rows = export_covariance_surface(&m, &g).unwrap();
        let at = |ix: usize, iy: usize| rows[meta.index(ix, iy)].value;
        assert_eq!(at(5, 5), 1.2);
        for ix in 0..11 {
            for iy in 0..11 {
                assert_eq!(at(ix, iy), at(iy, ix));
                assert_eq!(at(ix, iy), at(10 - ix, iy));
            }
        }
    }
}
