//! Directional empirical variograms.
//!
//! Pair directions are taken modulo `pi`. Direction bin `k` is centred on
//! `k * pi / n` so that the axis directions of a grid fall in the middle of a
//! bin. Lag bins are `(0, e0], (e0, e1], ...` for the given upper edges.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{Point, Separation};
use crate::kernel::CovarianceModel;
use crate::sites::{FieldSample, GridMeta, SiteSet};

/// Binned semivariance by direction and lag.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariogramEstimate {
    /// `(low, high)` angle intervals in radians; the first wraps below zero.
    pub direction_bins: Vec<(f64, f64)>,
    /// `(low, high]` distance intervals.
    pub lag_bins: Vec<(f64, f64)>,
    /// `[direction][lag]`, absent where the bin holds no pairs.
    pub semivariance: Vec<Vec<Option<f64>>>,
    pub pair_counts: Vec<Vec<u64>>,
}

/// One CSV row of a variogram export.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct VariogramRow {
    pub direction_bin_center: f64,
    pub lag_bin_center: f64,
    pub semivariance: Option<f64>,
    pub pair_count: u64,
}

impl VariogramEstimate {
    pub fn direction_centers(&self) -> Vec<f64> {
        self.direction_bins.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect()
    }

    pub fn lag_centers(&self) -> Vec<f64> {
        self.lag_bins.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect()
    }

    /// Flattened rows, direction-major.
    pub fn rows(&self) -> Vec<VariogramRow> {
        let dirs = self.direction_centers();
        let lags = self.lag_centers();
        let mut rows = Vec::with_capacity(dirs.len() * lags.len());
        for (d, &dc) in dirs.iter().enumerate() {
            for (l, &lc) in lags.iter().enumerate() {
                rows.push(VariogramRow {
                    direction_bin_center: dc,
                    lag_bin_center: lc,
                    semivariance: self.semivariance[d][l],
                    pair_count: self.pair_counts[d][l],
                });
            }
        }
        rows
    }
}

/// Direction and lag binning shared by the empirical and model variograms.
#[derive(Debug, Clone)]
struct Binning {
    n_directions: usize,
    width: f64,
    lag_bins: Vec<(f64, f64)>,
}

impl Binning {
    fn new(n_directions: usize, lag_edges: &[f64]) -> Result<Self> {
        if n_directions == 0 {
            return Err(Error::InvalidParameter {
                name: "n_direction_bins",
                reason: "at least one direction bin is required".into(),
            });
        }
        if lag_edges.is_empty() || !(lag_edges[0] > 0.0) || lag_edges.windows(2).any(|w| !(w[1] > w[0])) || lag_edges.iter().any(|e| !e.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "lag_edges",
                reason: "lag edges must be finite, positive and strictly increasing".into(),
            });
        }
        let mut lag_bins = Vec::with_capacity(lag_edges.len());
        let mut lo = 0.0;
        for &hi in lag_edges {
            lag_bins.push((lo, hi));
            lo = hi;
        }
        Ok(Binning { n_directions, width: PI / n_directions as f64, lag_bins })
    }

    fn direction_bins(&self) -> Vec<(f64, f64)> {
        (0..self.n_directions)
            .map(|k| {
                let c = k as f64 * self.width;
                (c - 0.5 * self.width, c + 0.5 * self.width)
            })
            .collect()
    }

    fn locate(&self, h: Separation) -> Option<(usize, usize)> {
        let d = h.norm_sq().sqrt();
        let lag = self.lag_bins.iter().position(|&(lo, hi)| d > lo && d <= hi)?;
        let angle = h.hy.atan2(h.hx).rem_euclid(PI);
        let dir = ((angle + 0.5 * self.width) / self.width).floor() as usize % self.n_directions;
        Some((dir, lag))
    }

    fn accumulate(&self, pts: &[Point], mut pair_value: impl FnMut(usize, usize) -> f64) -> VariogramEstimate {
        let nd = self.n_directions;
        let nl = self.lag_bins.len();
        let mut sums = vec![vec![0.0; nl]; nd];
        let mut counts = vec![vec![0u64; nl]; nd];
        for i in 0..pts.len() {
            for j in (i + 1)..pts.len() {
                if let Some((d, l)) = self.locate(pts[j] - pts[i]) {
                    sums[d][l] += pair_value(i, j);
                    counts[d][l] += 1;
                }
            }
        }
        let semivariance = sums
            .iter()
            .zip(&counts)
            .map(|(s, c)| s.iter().zip(c).map(|(&s, &c)| (c > 0).then(|| s / c as f64)).collect())
            .collect();
        VariogramEstimate {
            direction_bins: self.direction_bins(),
            lag_bins: self.lag_bins.clone(),
            semivariance,
            pair_counts: counts,
        }
    }
}

/// Mean of `(x_i - x_j)^2 / 2` over site pairs in each (direction, lag) bin.
pub fn empirical_variogram(sample: &FieldSample, n_direction_bins: usize, lag_edges: &[f64]) -> Result<VariogramEstimate> {
    if sample.len() < 2 {
        return Err(Error::InsufficientSites { required: 2, got: sample.len() });
    }
    let binning = Binning::new(n_direction_bins, lag_edges)?;
    let x = sample.values();
    Ok(binning.accumulate(sample.sites().points(), |i, j| {
        let d = x[i] - x[j];
        0.5 * d * d
    }))
}

/// Theoretical semivariance of `model`, averaged over the same pairs and
/// bins that [`empirical_variogram`] would use on `sites`.
pub fn model_variogram(model: &CovarianceModel, sites: &SiteSet, n_direction_bins: usize, lag_edges: &[f64]) -> Result<VariogramEstimate> {
    if sites.len() < 2 {
        return Err(Error::InsufficientSites { required: 2, got: sites.len() });
    }
    let binning = Binning::new(n_direction_bins, lag_edges)?;
    let pts = sites.points();
    Ok(binning.accumulate(pts, |i, j| model.semivariance_at(pts[j] - pts[i])))
}

/// Pearson correlation of all value pairs `(x(s), x(s + offset))` on a grid,
/// pooled over the given fields. `offset` is in grid steps.
pub fn grid_lag_correlation(fields: &[&[f64]], grid: &GridMeta, offset: (isize, isize)) -> Option<f64> {
    let (dx, dy) = offset;
    let mut a = Vec::new();
    let mut b = Vec::new();
    for field in fields {
        if field.len() != grid.len() {
            return None;
        }
        for iy in 0..grid.ny as isize {
            for ix in 0..grid.nx as isize {
                let (jx, jy) = (ix + dx, iy + dy);
                if jx < 0 || jy < 0 || jx >= grid.nx as isize || jy >= grid.ny as isize {
                    continue;
                }
                a.push(field[grid.index(ix as usize, iy as usize)]);
                b.push(field[grid.index(jx as usize, jy as usize)]);
            }
        }
    }
    pearson(&a, &b)
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    if a.len() < 2 {
        return None;
    }
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (u, v) = (x - ma, y - mb);
        sab += u * v;
        saa += u * u;
        sbb += v * v;
    }
    if saa > 0.0 && sbb > 0.0 {
        Some(sab / (saa * sbb).sqrt())
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Angle;
    use crate::kernel::KernelFamily;
    use crate::sites::ModelTag;

    fn grid_sample(n: usize, values: Vec<f64>) -> FieldSample {
        let sites = SiteSet::grid(GridMeta { nx: n, ny: n, spacing: 1.0, origin: Point::new(0.0, 0.0) }).unwrap();
        FieldSample::new(sites, values, 0, ModelTag::transport()).unwrap()
    }

    #[test]
    fn constant_field_has_zero_semivariance() {
        let s = grid_sample(4, vec![3.5; 16]);
        let v = empirical_variogram(&s, 4, &[1.0, 2.0, 3.0]).unwrap();
        for row in v.rows() {
            if row.pair_count > 0 {
                assert_eq!(row.semivariance, Some(0.0));
            } else {
                assert_eq!(row.semivariance, None);
            }
        }
    }

    #[test]
    fn two_sites_fill_one_bin() {
        let sites = SiteSet::new(vec![Point::new(0.0, 0.0), Point::new(1.0, 1.0)]).unwrap();
        let s = FieldSample::new(sites, vec![1.0, 4.0], 0, ModelTag::transport()).unwrap();
        let v = empirical_variogram(&s, 4, &[1.0, 2.0]).unwrap();
        let populated: Vec<_> = v.rows().into_iter().filter(|r| r.pair_count > 0).collect();
        assert_eq!(populated.len(), 1);
        assert_eq!(populated[0].semivariance, Some(4.5));
        assert_eq!(populated[0].direction_bin_center, PI / 4.0);
        assert_eq!(populated[0].lag_bin_center, 1.5);
    }

    #[test]
    fn errors() {
        let sites = SiteSet::new(vec![Point::new(0.0, 0.0)]).unwrap();
        let s = FieldSample::new(sites, vec![1.0], 0, ModelTag::transport()).unwrap();
        assert!(matches!(empirical_variogram(&s, 4, &[1.0]), Err(Error::InsufficientSites { .. })));
        let s = grid_sample(2, vec![0.0; 4]);
        assert!(empirical_variogram(&s, 4, &[2.0, 1.0]).is_err());
        assert!(empirical_variogram(&s, 4, &[0.0, 1.0]).is_err());
        assert!(empirical_variogram(&s, 0, &[1.0]).is_err());
    }

    #[test]
    fn directions_fold_modulo_pi() {
        let binning = Binning::new(4, &[10.0]).unwrap();
        for (h, expected) in [
            (Separation::new(1.0, 0.0), 0),
            (Separation::new(-1.0, 0.0), 0),
            (Separation::new(1.0, 1.0), 1),
            (Separation::new(-1.0, -1.0), 1),
            (Separation::new(0.0, -2.0), 2),
            (Separation::new(-1.0, 1.0), 3),
            (Separation::new(1.0, -0.01), 0),
        ] {
            assert_eq!(binning.locate(h).unwrap().0, expected, "{h:?}");
        }
    }

    #[test]
    fn pair_counts_cover_all_pairs_in_range() {
        let s = grid_sample(5, (0..25).map(|v| v as f64).collect());
        let v = empirical_variogram(&s, 6, &[10.0]).unwrap();
        let total: u64 = v.pair_counts.iter().flatten().sum();
        assert_eq!(total, 25 * 24 / 2);
    }

    #[test]
    fn model_variogram_is_anisotropic() {
        let m = CovarianceModel::new(KernelFamily::Gaussian, 1.0, 4.0, 0.0, 4.0, Angle::from_radians(0.0)).unwrap();
        let sites = SiteSet::grid(GridMeta::centered(6, 1.0)).unwrap();
        let v = model_variogram(&m, &sites, 2, &[1.5, 2.5]).unwrap();
        for l in 0..2 {
            assert!(v.semivariance[0][l].unwrap() < v.semivariance[1][l].unwrap());
        }
    }

    #[test]
    fn lag_correlation_detects_stripes() {
        let meta = GridMeta { nx: 6, ny: 6, spacing: 1.0, origin: Point::new(0.0, 0.0) };
        // constant along x, alternating along y
        let field: Vec<f64> = (0..36).map(|i| if (i / 6) % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let fields = [field.as_slice()];
        assert_eq!(grid_lag_correlation(&fields, &meta, (0, 1)), Some(-1.0));
        assert_eq!(grid_lag_correlation(&fields, &meta, (1, 0)), Some(1.0));
    }
}
