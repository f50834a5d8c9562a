//! Site sets and field samples.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::kernel::CovarianceModel;

/// Two sites closer than this are treated as duplicates.
pub const DUPLICATE_TOLERANCE: f64 = 1e-9;

/// Regular grid layout. Sites are stored row-major: `x` varies fastest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridMeta {
    pub nx: usize,
    pub ny: usize,
    pub spacing: f64,
    pub origin: Point,
}

impl GridMeta {
    /// Square grid of `n x n` points with the given spacing, centred on `(0, 0)`.
    pub fn centered(n: usize, spacing: f64) -> Self {
        let half = 0.5 * (n.saturating_sub(1)) as f64 * spacing;
        GridMeta { nx: n, ny: n, spacing, origin: Point::new(-half, -half) }
    }

    pub fn point(&self, ix: usize, iy: usize) -> Point {
        Point::new(
            self.origin.x + ix as f64 * self.spacing,
            self.origin.y + iy as f64 * self.spacing,
        )
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }
}

/// Ordered list of distinct sites, optionally carrying grid metadata.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SiteSet {
    sites: Vec<Point>,
    #[serde(skip_serializing_if = "Option::is_none")]
    grid: Option<GridMeta>,
}

impl SiteSet {
    pub fn new(sites: Vec<Point>) -> Result<Self> {
        check_distinct(&sites)?;
        Ok(SiteSet { sites, grid: None })
    }

    pub fn grid(meta: GridMeta) -> Result<Self> {
        if !(meta.spacing > 0.0 && meta.spacing.is_finite()) {
            return Err(Error::InconsistentGrid(format!("spacing must be positive, got {}", meta.spacing)));
        }
        if !(meta.origin.x.is_finite() && meta.origin.y.is_finite()) {
            return Err(Error::InconsistentGrid("origin must be finite".into()));
        }
        let sites = (0..meta.ny)
            .flat_map(|iy| (0..meta.nx).map(move |ix| meta.point(ix, iy)))
            .collect();
        Ok(SiteSet { sites, grid: Some(meta) })
    }

    /// Attach grid metadata to an existing point list after checking consistency.
    pub fn with_grid(sites: Vec<Point>, meta: GridMeta) -> Result<Self> {
        if sites.len() != meta.len() {
            return Err(Error::InconsistentGrid(format!(
                "nx * ny = {} but {} sites were given",
                meta.len(),
                sites.len()
            )));
        }
        let tol = 1e-9 * meta.spacing.max(1.0);
        for iy in 0..meta.ny {
            for ix in 0..meta.nx {
                let expected = meta.point(ix, iy);
                let got = sites[meta.index(ix, iy)];
                if (expected.x - got.x).abs() > tol || (expected.y - got.y).abs() > tol {
                    return Err(Error::InconsistentGrid(format!(
                        "site {} is ({}, {}), grid expects ({}, {})",
                        meta.index(ix, iy),
                        got.x,
                        got.y,
                        expected.x,
                        expected.y
                    )));
                }
            }
        }
        let mut set = SiteSet::new(sites)?;
        set.grid = Some(meta);
        Ok(set)
    }

    pub fn points(&self) -> &[Point] {
        &self.sites
    }

    pub fn grid_meta(&self) -> Option<&GridMeta> {
        self.grid.as_ref()
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    /// All coordinates multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let sites: Vec<Point> = self.sites.iter().map(|p| Point::new(p.x * factor, p.y * factor)).collect();
        match self.grid {
            Some(g) => {
                let meta = GridMeta {
                    spacing: g.spacing * factor,
                    origin: Point::new(g.origin.x * factor, g.origin.y * factor),
                    ..g
                };
                let mut set = SiteSet::new(sites)?;
                set.grid = Some(meta);
                Ok(set)
            }
            None => SiteSet::new(sites),
        }
    }

    /// Sites reordered by `perm`, where `perm[k]` is the old index of new site `k`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.len() {
            return Err(Error::LengthMismatch("permutation length".into()));
        }
        SiteSet::new(perm.iter().map(|&i| self.sites[i]).collect())
    }
}

impl<'de> Deserialize<'de> for SiteSet {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            sites: Vec<Point>,
            #[serde(default)]
            grid: Option<GridMeta>,
        }
        let raw = Raw::deserialize(deserializer)?;
        match raw.grid {
            Some(g) => SiteSet::with_grid(raw.sites, g),
            None => SiteSet::new(raw.sites),
        }
        .map_err(serde::de::Error::custom)
    }
}

fn check_distinct(sites: &[Point]) -> Result<()> {
    if let Some((i, p)) = sites.iter().enumerate().find(|(_, p)| !(p.x.is_finite() && p.y.is_finite())) {
        return Err(Error::InvalidParameter {
            name: "sites",
            reason: format!("site {i} has non-finite coordinates ({}, {})", p.x, p.y),
        });
    }
    let mut order: Vec<usize> = (0..sites.len()).collect();
    order.sort_by(|&a, &b| sites[a].x.partial_cmp(&sites[b].x).unwrap_or(Ordering::Equal));
    for (k, &i) in order.iter().enumerate() {
        for &j in &order[k + 1..] {
            if sites[j].x - sites[i].x > DUPLICATE_TOLERANCE {
                break;
            }
            if (sites[j] - sites[i]).norm_sq() <= DUPLICATE_TOLERANCE * DUPLICATE_TOLERANCE {
                return Err(Error::DuplicateSites(i.min(j), i.max(j)));
            }
        }
    }
    Ok(())
}

/// Where the values of a [`FieldSample`] came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelTag {
    Model(CovarianceModel),
    Tag(String),
}

impl ModelTag {
    pub fn transport() -> Self {
        ModelTag::Tag("transport-sim".into())
    }

    pub fn as_model(&self) -> Option<&CovarianceModel> {
        match self {
            ModelTag::Model(m) => Some(m),
            ModelTag::Tag(_) => None,
        }
    }
}

/// Values observed or simulated at a set of sites.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldSample {
    sites: SiteSet,
    values: Vec<f64>,
    seed: u64,
    model: ModelTag,
}

impl FieldSample {
    pub fn new(sites: SiteSet, values: Vec<f64>, seed: u64, model: ModelTag) -> Result<Self> {
        if values.len() != sites.len() {
            return Err(Error::LengthMismatch(format!("{} values for {} sites", values.len(), sites.len())));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "values",
                reason: format!("value {i} is not finite"),
            });
        }
        Ok(FieldSample { sites, values, seed, model })
    }

    pub fn sites(&self) -> &SiteSet {
        &self.sites
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn model_used(&self) -> &ModelTag {
        &self.model
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Same values on sites scaled by `factor`.
    pub fn with_scaled_sites(&self, factor: f64) -> Result<Self> {
        FieldSample::new(self.sites.scaled(factor)?, self.values.clone(), self.seed, self.model.clone())
    }

    /// Same sites with every value shifted by `c`.
    pub fn shifted(&self, c: f64) -> Result<Self> {
        let values = self.values.iter().map(|v| v + c).collect();
        FieldSample::new(self.sites.clone(), values, self.seed, self.model.clone())
    }
}

impl<'de> Deserialize<'de> for FieldSample {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            sites: SiteSet,
            values: Vec<f64>,
            seed: u64,
            model: ModelTag,
        }
        let raw = Raw::deserialize(deserializer)?;
        FieldSample::new(raw.sites, raw.values, raw.seed, raw.model).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Angle;
    use crate::kernel::KernelFamily;

    #[test]
    fn grid_is_row_major() {
        let meta = GridMeta { nx: 3, ny: 2, spacing: 0.5, origin: Point::new(1.0, -1.0) };
        let g = SiteSet::grid(meta).unwrap();
        assert_eq!(g.len(), 6);
        assert_eq!(g.points()[1], Point::new(1.5, -1.0));
        assert_eq!(g.points()[3], Point::new(1.0, -0.5));
        assert!(SiteSet::with_grid(g.points().to_vec(), meta).is_ok());
        let mut swapped = g.points().to_vec();
        swapped.swap(0, 1);
        assert!(matches!(SiteSet::with_grid(swapped, meta), Err(Error::InconsistentGrid(_))));
        assert!(matches!(SiteSet::with_grid(vec![Point::new(0.0, 0.0)], meta), Err(Error::InconsistentGrid(_))));
    }

    #[test]
    fn centered_grid_is_symmetric() {
        let g = GridMeta::centered(5, 0.25);
        assert_eq!(g.point(0, 0), Point::new(-0.5, -0.5));
        assert_eq!(g.point(2, 2), Point::new(0.0, 0.0));
        assert_eq!(g.point(4, 4), Point::new(0.5, 0.5));
    }

    #[test]
    fn duplicates_rejected() {
        let pts = vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(5e-10, 3e-10)];
        assert!(matches!(SiteSet::new(pts), Err(Error::DuplicateSites(0, 2))));
        let pts = vec![Point::new(0.0, 0.0), Point::new(0.0, 2e-9)];
        assert!(SiteSet::new(pts).is_ok());
        assert!(SiteSet::new(vec![Point::new(f64::NAN, 0.0)]).is_err());
    }

    #[test]
    fn sample_validation() {
        let sites = SiteSet::new(vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0)]).unwrap();
        assert!(FieldSample::new(sites.clone(), vec![1.0], 0, ModelTag::transport()).is_err());
        assert!(FieldSample::new(sites.clone(), vec![1.0, f64::NAN], 0, ModelTag::transport()).is_err());
        let model = CovarianceModel::new(KernelFamily::Gaussian, 1.0, 2.0, 0.0, 3.0, Angle::from_radians(0.5)).unwrap();
        let s = FieldSample::new(sites, vec![1.0, -2.5], 7, ModelTag::Model(model)).unwrap();
        let json = serde_json::to_string(&s).unwrap();
        assert!(json.starts_with(r#"{"sites":{"sites":[{"x":0.0,"y":0.0}"#));
        let back: FieldSample = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
        let tagged = FieldSample::new(s.sites().clone(), vec![0.0, 0.0], 1, ModelTag::transport()).unwrap();
        let back: FieldSample = serde_json::from_str(&serde_json::to_string(&tagged).unwrap()).unwrap();
        assert_eq!(back.model_used(), &ModelTag::transport());
    }
}
