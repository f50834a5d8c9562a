//! Level sets of gridded surfaces and ellipse fitting.
//!
//! Used to check exported covariance surfaces and deformation images against
//! their closed-form ellipses.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{Mat2, Point};
use crate::sites::GridMeta;

/// A centered ellipse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Ellipse {
    pub semi_major: f64,
    pub semi_minor: f64,
    /// Direction of the major axis in `[0, pi)`.
    pub major_angle: f64,
}

impl Ellipse {
    pub fn axis_ratio(&self) -> f64 {
        self.semi_major / self.semi_minor
    }

    /// Direction of the minor axis in `[0, pi)`.
    pub fn minor_angle(&self) -> f64 {
        (self.major_angle + PI / 2.0).rem_euclid(PI)
    }

    /// Points `R(angle) (semi_major cos t, semi_minor sin t)` for `n`
    /// equally spaced `t`, with the first point repeated to close the curve.
    pub fn polyline(&self, n: usize) -> Vec<Point> {
        let (s, c) = self.major_angle.sin_cos();
        (0..=n)
            .map(|k| {
                let t = 2.0 * PI * (k % n.max(1)) as f64 / n.max(1) as f64;
                let (u, v) = (self.semi_major * t.cos(), self.semi_minor * t.sin());
                Point::new(c * u - s * v, s * u + c * v)
            })
            .collect()
    }

    /// Ellipse `{x : x' Q x = 1}` for a symmetric positive definite `Q`.
    pub fn from_quadratic_form(q: &Mat2) -> Result<Ellipse> {
        let (small, large, small_angle) = q.symmetric_eigen();
        if !(small > 0.0 && large.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "quadratic form",
                reason: format!("not positive definite (eigenvalues {small}, {large})"),
            });
        }
        Ok(Ellipse { semi_major: 1.0 / small.sqrt(), semi_minor: 1.0 / large.sqrt(), major_angle: small_angle })
    }

    /// Image of the unit circle under `m`.
    pub fn image_of_unit_circle(m: &Mat2) -> Result<Ellipse> {
        // {m u : |u| = 1} = {y : y' (m m')^-1 y = 1}; its axes are the
        // eigenvectors of m m' with semi-axes the singular values of m
        let mmt = *m * m.transpose();
        let (small, large, small_angle) = mmt.symmetric_eigen();
        if !(small > 0.0) {
            return Err(Error::InvalidParameter { name: "transform", reason: "singular".into() });
        }
        Ok(Ellipse { semi_major: large.sqrt(), semi_minor: small.sqrt(), major_angle: (small_angle + PI / 2.0).rem_euclid(PI) })
    }
}

/// Points where the bilinear surface through `values` (row-major over
/// `grid`) crosses `level`, one per crossed cell edge, by linear
/// interpolation along the edge.
pub fn level_set_points(values: &[f64], grid: &GridMeta, level: f64) -> Result<Vec<Point>> {
    if values.len() != grid.len() {
        return Err(Error::LengthMismatch(format!("{} values for a {}x{} grid", values.len(), grid.nx, grid.ny)));
    }
    let at = |ix: usize, iy: usize| values[grid.index(ix, iy)];
    let mut out = Vec::new();
    let mut edge = |(ax, ay): (usize, usize), (bx, by): (usize, usize)| {
        let (va, vb) = (at(ax, ay) - level, at(bx, by) - level);
        if va == 0.0 {
            out.push(grid.point(ax, ay));
        } else if va * vb < 0.0 {
            let t = va / (va - vb);
            let (pa, pb) = (grid.point(ax, ay), grid.point(bx, by));
            out.push(Point::new(pa.x + t * (pb.x - pa.x), pa.y + t * (pb.y - pa.y)));
        }
    };
    for iy in 0..grid.ny {
        for ix in 0..grid.nx {
            if ix + 1 < grid.nx {
                edge((ix, iy), (ix + 1, iy));
            }
            if iy + 1 < grid.ny {
                edge((ix, iy), (ix, iy + 1));
            }
        }
    }
    Ok(out)
}

/// Least-squares fit of the centered conic `a x^2 + b x y + c y^2 = 1`.
pub fn fit_centered_ellipse(points: &[Point]) -> Result<Ellipse> {
    if points.len() < 3 {
        return Err(Error::InsufficientSites { required: 3, got: points.len() });
    }
    let design = DMatrix::from_fn(points.len(), 3, |i, j| {
        let p = points[i];
        match j {
            0 => p.x * p.x,
            1 => p.x * p.y,
            _ => p.y * p.y,
        }
    });
    let rhs = DVector::from_element(points.len(), 1.0);
    let coef = design
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .map_err(|e| Error::InvalidParameter { name: "points", reason: e.to_string() })?;
    let q = Mat2::new(coef[0], 0.5 * coef[1], 0.5 * coef[1], coef[2]);
    Ellipse::from_quadratic_form(&q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{anisotropy_matrix, rotation, stretch, Angle};

    #[test]
    fn fit_recovers_exact_ellipse() {
        let e = Ellipse { semi_major: 3.0, semi_minor: 1.0, major_angle: 0.4 };
        let f = fit_centered_ellipse(&e.polyline(50)).unwrap();
        assert!((f.semi_major - 3.0).abs() < 1e-10);
        assert!((f.semi_minor - 1.0).abs() < 1e-10);
        assert!((f.major_angle - 0.4).abs() < 1e-10);
    }

    #[test]
    fn polyline_is_closed() {
        let p = Ellipse { semi_major: 2.0, semi_minor: 1.0, major_angle: 0.0 }.polyline(8);
        assert_eq!(p.len(), 9);
        assert_eq!(p[0], p[8]);
        assert_eq!(p[0], Point::new(2.0, 0.0));
    }

    #[test]
    fn unit_circle_image_of_stretch() {
        let theta = Angle::from_radians(PI / 12.0);
        let r = rotation(theta);
        let m = r * stretch(3.0, 2.0 / 3.0).unwrap() * r.transpose();
        let e = Ellipse::image_of_unit_circle(&m).unwrap();
        assert!((e.semi_major - 1.5).abs() < 1e-12);
        assert!((e.semi_minor - 1.0 / 3.0).abs() < 1e-12);
        assert!((e.minor_angle() - PI / 12.0).abs() < 1e-12);
    }

    #[test]
    fn level_set_of_quadratic_surface() {
        // f(h) = h' A[gamma^2] h has elliptical level sets with ratio gamma
        let a2 = anisotropy_matrix(9.0, Angle::from_radians(0.3)).unwrap();
        let grid = GridMeta::centered(101, 0.1);
        let values: Vec<f64> = (0..grid.len())
            .map(|i| {
                let p = grid.point(i % grid.nx, i / grid.nx);
                a2.quadratic_form(crate::geometry::Separation::new(p.x, p.y))
            })
            .collect();
        let pts = level_set_points(&values, &grid, 1.0).unwrap();
        let e = fit_centered_ellipse(&pts).unwrap();
        assert!((e.axis_ratio() - 3.0).abs() < 0.02, "{e:?}");
        assert!((e.major_angle - 0.3).abs() < 0.01, "{e:?}");
    }

    #[test]
    fn level_set_checks_length() {
        let grid = GridMeta::centered(3, 1.0);
        assert!(level_set_points(&[0.0; 8], &grid, 0.5).is_err());
    }
}
