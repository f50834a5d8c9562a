//! Planar geometry of the wind deformation.
//!
//! The plane is rotated into wind coordinates, stretched by `1/a` along the
//! wind and `1/b` across it, then rotated back. Only the relative stretch
//! `gamma = a/b` survives in a covariance model because the overall scale `1/b`
//! is absorbed by the range parameter. The canonical primitive is therefore
//! the squared deformed distance `h' A[gamma^2] h` where
//! `A[g] = R(theta) diag(1/g, 1) R(theta)'`.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest relative stretch accepted by any constructor.
pub const GAMMA_MIN: f64 = 1e-4;
/// Largest relative stretch accepted by any constructor.
pub const GAMMA_MAX: f64 = 1e4;

/// An angle in radians, counter-clockwise from the x-axis.
///
/// The raw value is kept as given. [`Angle::normalized`] folds it into
/// `[0, pi)`, which is the identifiable part for a deformation since
/// `A[gamma]` is unchanged by `theta -> theta + pi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Angle(f64);

impl Angle {
    pub const fn from_radians(radians: f64) -> Self {
        Angle(radians)
    }

    pub fn from_degrees(degrees: f64) -> Self {
        Angle(degrees.to_radians())
    }

    pub fn radians(self) -> f64 {
        self.0
    }

    /// The angle folded into `[0, pi)`.
    pub fn normalized(self) -> f64 {
        let r = self.0.rem_euclid(PI);
        // rem_euclid can round up to exactly pi for tiny negative inputs
        if r >= PI {
            0.0
        } else {
            r
        }
    }

    /// Unit vector pointing along the axis, computed from the normalized angle.
    pub fn axis(self) -> (f64, f64) {
        let t = self.normalized();
        (t.cos(), t.sin())
    }
}

/// Signed distance between two axis angles modulo `pi`, in `[-pi/2, pi/2)`.
pub fn axial_difference(a: f64, b: f64) -> f64 {
    (a - b + PI / 2.0).rem_euclid(PI) - PI / 2.0
}

/// A location in the plane.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }
}

impl Sub for Point {
    type Output = Separation;

    fn sub(self, rhs: Point) -> Separation {
        Separation::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Add<Separation> for Point {
    type Output = Point;

    fn add(self, rhs: Separation) -> Point {
        Point::new(self.x + rhs.hx, self.y + rhs.hy)
    }
}

/// Separation vector `h = s - s'` between two sites.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Separation {
    pub hx: f64,
    pub hy: f64,
}

impl Separation {
    pub const fn new(hx: f64, hy: f64) -> Self {
        Separation { hx, hy }
    }

    /// Squared Euclidean length `h'h`.
    pub fn norm_sq(self) -> f64 {
        self.hx * self.hx + self.hy * self.hy
    }

    pub fn scaled(self, factor: f64) -> Self {
        Separation::new(self.hx * factor, self.hy * factor)
    }
}

/// Row-major 2x2 matrix `[[m00, m01], [m10, m11]]`.
///
/// Serializes as the 4-tuple `[m00, m01, m10, m11]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Mat2(pub [f64; 4]);

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2([1.0, 0.0, 0.0, 1.0]);

    pub const fn new(m00: f64, m01: f64, m10: f64, m11: f64) -> Self {
        Mat2([m00, m01, m10, m11])
    }

    pub const fn diag(d0: f64, d1: f64) -> Self {
        Mat2([d0, 0.0, 0.0, d1])
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.0[2 * row + col]
    }

    pub fn transpose(&self) -> Self {
        let [a, b, c, d] = self.0;
        Mat2([a, c, b, d])
    }

    pub fn determinant(&self) -> f64 {
        let [a, b, c, d] = self.0;
        a * d - b * c
    }

    pub fn trace(&self) -> f64 {
        self.0[0] + self.0[3]
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// `|m01 - m10| <= 1e-12 * max|mij|`.
    pub fn is_symmetric(&self) -> bool {
        (self.0[1] - self.0[2]).abs() <= 1e-12 * self.max_abs()
    }

    pub fn apply(&self, h: Separation) -> Separation {
        let [a, b, c, d] = self.0;
        Separation::new(a * h.hx + b * h.hy, c * h.hx + d * h.hy)
    }

    pub fn apply_point(&self, p: Point) -> Point {
        let h = self.apply(Separation::new(p.x, p.y));
        Point::new(h.hx, h.hy)
    }

    /// Quadratic form `h' M h`.
    pub fn quadratic_form(&self, h: Separation) -> f64 {
        let mh = self.apply(h);
        h.hx * mh.hx + h.hy * mh.hy
    }

    /// Eigen-decomposition of a symmetric matrix.
    ///
    /// Returns `(lambda_small, lambda_large, angle_of_small)` where the angle is
    /// the direction (mod pi) of the eigenvector belonging to the smaller
    /// eigenvalue. Only the symmetric part of `self` is used.
    pub fn symmetric_eigen(&self) -> (f64, f64, f64) {
        let a = self.0[0];
        let d = self.0[3];
        let b = 0.5 * (self.0[1] + self.0[2]);
        let mean = 0.5 * (a + d);
        let half_diff = 0.5 * (a - d);
        let radius = half_diff.hypot(b);
        // major axis of the symmetric matrix sits at 0.5*atan2(2b, a-d)
        let large_angle = 0.5 * (2.0 * b).atan2(a - d);
        let small_angle = (large_angle + PI / 2.0).rem_euclid(PI);
        (mean - radius, mean + radius, small_angle)
    }

    /// Singular values in ascending order.
    pub fn singular_values(&self) -> (f64, f64) {
        let (lo, hi, _) = (self.transpose() * *self).symmetric_eigen();
        (lo.max(0.0).sqrt(), hi.max(0.0).sqrt())
    }
}

impl Mul for Mat2 {
    type Output = Mat2;

    fn mul(self, rhs: Mat2) -> Mat2 {
        let [a, b, c, d] = self.0;
        let [e, f, g, h] = rhs.0;
        Mat2([a * e + b * g, a * f + b * h, c * e + d * g, c * f + d * h])
    }
}

/// Counter-clockwise rotation by `theta`.
pub fn rotation(theta: Angle) -> Mat2 {
    let (s, c) = theta.radians().sin_cos();
    Mat2::new(c, -s, s, c)
}

/// `diag(1/a, 1/b)`.
pub fn stretch(a: f64, b: f64) -> Result<Mat2> {
    check_positive(a)?;
    check_positive(b)?;
    Ok(Mat2::diag(1.0 / a, 1.0 / b))
}

fn check_positive(v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveStretch(v))
    }
}

/// Rejects relative stretches that are non-positive or outside
/// `[GAMMA_MIN, GAMMA_MAX]`.
pub fn check_gamma(gamma: f64) -> Result<()> {
    check_positive(gamma)?;
    if (GAMMA_MIN..=GAMMA_MAX).contains(&gamma) {
        Ok(())
    } else {
        Err(Error::DegenerateStretch(gamma))
    }
}

/// Along-wind and cross-wind stretch magnitudes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeformationParams {
    a: f64,
    b: f64,
    gamma: f64,
}

impl DeformationParams {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        check_positive(a)?;
        check_positive(b)?;
        let gamma = a / b;
        check_gamma(gamma)?;
        Ok(DeformationParams { a, b, gamma })
    }

    /// Normalized form with `b = 1`.
    pub fn from_gamma(gamma: f64) -> Result<Self> {
        check_gamma(gamma)?;
        Ok(DeformationParams { a: gamma, b: 1.0, gamma })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Full transformation `R(theta) S(a, b) R(theta)'`, evaluated as `(1/b) A[gamma]`.
    pub fn transform(&self, theta: Angle) -> Mat2 {
        let (c, s) = theta.axis();
        let k = 1.0 / self.gamma - 1.0;
        let off = k * c * s / self.b;
        Mat2([(1.0 + k * c * c) / self.b, off, off, (1.0 + k * s * s) / self.b])
    }
}

/// `A[gamma] = R(theta) diag(1/gamma, 1) R(theta)'`.
///
/// Evaluated as `I + (1/gamma - 1) u u'` with `u` the unit wind axis, which
/// is exactly symmetric and exactly the identity at `gamma = 1`.
pub fn anisotropy_matrix(gamma: f64, theta: Angle) -> Result<Mat2> {
    check_gamma(gamma)?;
    let (c, s) = theta.axis();
    let k = 1.0 / gamma - 1.0;
    let off = k * c * s;
    Ok(Mat2::new(1.0 + k * c * c, off, off, 1.0 + k * s * s))
}

/// Squared deformed distance `h' A[gamma^2] h = |A[gamma] h|^2`.
pub fn deformed_sq_distance(h: Separation, gamma: f64, theta: Angle) -> Result<f64> {
    check_gamma(gamma)?;
    Ok(deformed_sq_distance_unchecked(h, gamma, theta.axis()))
}

/// Hot-path variant for callers that already validated `gamma` and computed the axis.
#[inline]
pub(crate) fn deformed_sq_distance_unchecked(h: Separation, gamma: f64, axis: (f64, f64)) -> f64 {
    let along = axis.0 * h.hx + axis.1 * h.hy;
    // the correction term vanishes identically at gamma = 1
    h.norm_sq() + (1.0 / (gamma * gamma) - 1.0) * along * along
}

/// Relative stretch tied to wind speed, `gamma = exp(v * gamma_prime)`.
///
/// `speed` must be nonnegative. `gamma_prime > 0` stretches across the wind,
/// `gamma_prime < 0` along it.
pub fn wind_link_gamma(speed: f64, gamma_prime: f64) -> f64 {
    debug_assert!(speed >= 0.0, "wind speed must be nonnegative");
    (speed * gamma_prime).exp()
}
