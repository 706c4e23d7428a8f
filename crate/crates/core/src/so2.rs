//! SO(2) matrix Lie group: rotations of the plane.
//!
//! Elements are stored as full 2x2 matrices so that products of many
//! rotations (as in a long-running filter) behave exactly like the group
//! they model; [`Rot2::renormalize`] removes accumulated round-off.

use std::f64::consts::PI;
use std::ops::Mul;

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `mᵀm = I` and `det m = 1`.
pub const ORTHO_TOL: f64 = 1e-9;

/// Wraps an angle into the principal interval (−π, π].
pub fn wrap_angle(theta: f64) -> f64 {
    let mut t = theta.rem_euclid(2.0 * PI);
    if t > PI {
        t -= 2.0 * PI;
    }
    t
}

/// A heading angle in radians. Constructed values are always canonical.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Angle(f64);

impl Angle {
    pub fn new(theta: f64) -> Self {
        Angle(wrap_angle(theta))
    }

    pub fn radians(self) -> f64 {
        self.0
    }

    pub fn degrees(self) -> f64 {
        self.0.to_degrees()
    }
}

impl From<Angle> for f64 {
    fn from(a: Angle) -> f64 {
        a.0
    }
}

/// Element of the Lie algebra so(2): `[[0, −θ], [θ, 0]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkewMat2(Matrix2<f64>);

impl SkewMat2 {
    /// Accepts a raw matrix if its symmetric part vanishes to [`ORTHO_TOL`].
    pub fn from_matrix(m: Matrix2<f64>) -> Result<Self> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("skew matrix"));
        }
        let sym = (m + m.transpose()) * 0.5;
        let err = sym.abs().max();
        if err > ORTHO_TOL {
            return Err(Error::NotSkew(err));
        }
        Ok(SkewMat2(m))
    }

    pub fn matrix(&self) -> &Matrix2<f64> {
        &self.0
    }
}

/// Maps an angle to its so(2) matrix.
pub fn wedge(theta: f64) -> Result<SkewMat2> {
    if !theta.is_finite() {
        return Err(Error::NonFinite("wedge angle"));
    }
    Ok(SkewMat2(Matrix2::new(0.0, -theta, theta, 0.0)))
}

/// Inverse of [`wedge`]; reads the (2,1) entry.
pub fn vee(s: &SkewMat2) -> f64 {
    s.0[(1, 0)]
}

/// Unchecked vee for matrices produced inside linearizations, where only the
/// skew part is meaningful.
pub(crate) fn vee_raw(m: &Matrix2<f64>) -> f64 {
    m[(1, 0)]
}

/// Planar rotation matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rot2 {
    m: Matrix2<f64>,
}

impl Default for Rot2 {
    fn default() -> Self {
        Rot2::identity()
    }
}

impl Rot2 {
    pub fn identity() -> Self {
        Rot2 {
            m: Matrix2::identity(),
        }
    }

    /// Validates orthonormality and orientation.
    pub fn from_matrix(m: Matrix2<f64>) -> Result<Self> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("rotation matrix"));
        }
        let orth = (m.transpose() * m - Matrix2::identity()).abs().max();
        let det = m.determinant();
        if orth > ORTHO_TOL || (det - 1.0).abs() > ORTHO_TOL {
            return Err(Error::NotRotation { orth, det });
        }
        Ok(Rot2 { m })
    }

    /// Builds `[[c, −s], [s, c]]` from a unit (cos, sin) pair.
    pub(crate) fn from_cos_sin(c: f64, s: f64) -> Self {
        Rot2 {
            m: Matrix2::new(c, -s, s, c),
        }
    }

    pub fn matrix(&self) -> &Matrix2<f64> {
        &self.m
    }

    pub fn exp(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Rot2::from_cos_sin(c, s)
    }

    /// Principal logarithm, in (−π, π].
    pub fn log(&self) -> f64 {
        let t = self.m[(1, 0)].atan2(self.m[(0, 0)]);
        // atan2 returns −π for (−0, −1); fold onto the closed end.
        if t <= -PI {
            t + 2.0 * PI
        } else {
            t
        }
    }

    pub fn angle(&self) -> Angle {
        Angle(self.log())
    }

    pub fn compose(&self, other: &Rot2) -> Rot2 {
        Rot2 {
            m: self.m * other.m,
        }
    }

    pub fn inverse(&self) -> Rot2 {
        Rot2 {
            m: self.m.transpose(),
        }
    }

    /// Orthonormality error `max |mᵀm − I|`.
    pub fn orthonormality_error(&self) -> f64 {
        (self.m.transpose() * self.m - Matrix2::identity())
            .abs()
            .max()
    }

    /// Normalizes the first column and rebuilds the second as its 90° rotation.
    pub fn renormalize(&self) -> Rot2 {
        let (c, s) = (self.m[(0, 0)], self.m[(1, 0)]);
        let n = c.hypot(s);
        Rot2::from_cos_sin(c / n, s / n)
    }

    /// Renormalizes only once drift exceeds [`ORTHO_TOL`].
    pub fn renormalized_if_drifted(&self) -> Rot2 {
        if self.orthonormality_error() > ORTHO_TOL * 0.1 {
            self.renormalize()
        } else {
            *self
        }
    }
}

impl Mul for Rot2 {
    type Output = Rot2;

    fn mul(self, rhs: Rot2) -> Rot2 {
        self.compose(&rhs)
    }
}

/// Exponential map with input checking.
pub fn exp_so2(theta: f64) -> Result<Rot2> {
    if !theta.is_finite() {
        return Err(Error::NonFinite("exp angle"));
    }
    Ok(Rot2::exp(theta))
}

/// Logarithm map of a validated matrix.
pub fn log_so2(m: &Matrix2<f64>) -> Result<Angle> {
    Ok(Rot2::from_matrix(*m)?.angle())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn wedge_examples() {
        assert_eq!(*wedge(0.0).unwrap().matrix(), Matrix2::zeros());
        let w = wedge(FRAC_PI_2).unwrap();
        assert_eq!(*w.matrix(), Matrix2::new(0.0, -FRAC_PI_2, FRAC_PI_2, 0.0));
        assert_eq!(vee(&wedge(0.3).unwrap()), 0.3);
        assert_eq!(vee(&wedge(-2.2).unwrap()), -2.2);
        assert!(wedge(f64::NAN).is_err());
        assert!(wedge(f64::INFINITY).is_err());
    }

    #[test]
    fn vee_checks_skewness() {
        let unit = SkewMat2::from_matrix(Matrix2::new(0.0, -1.0, 1.0, 0.0)).unwrap();
        assert_eq!(vee(&unit), 1.0);
        assert_eq!(vee(&SkewMat2::from_matrix(Matrix2::zeros()).unwrap()), 0.0);
        assert!(matches!(
            SkewMat2::from_matrix(Matrix2::new(0.0, 1.0, 1.0, 0.0)),
            Err(Error::NotSkew(_))
        ));
        assert!(SkewMat2::from_matrix(Matrix2::new(1e-6, -1.0, 1.0, 0.0)).is_err());
    }

    #[test]
    fn exp_and_log_examples() {
        assert_eq!(exp_so2(0.0).unwrap(), Rot2::identity());
        let r = exp_so2(FRAC_PI_2).unwrap();
        let expected = Matrix2::new(0.0, -1.0, 1.0, 0.0);
        assert!((r.matrix() - expected).abs().max() < 1e-15);
        let ab = Rot2::exp(0.4) * Rot2::exp(1.1);
        assert!((ab.matrix() - Rot2::exp(1.5).matrix()).abs().max() < 1e-15);

        assert_eq!(Rot2::identity().log(), 0.0);
        assert_abs_diff_eq!(Rot2::exp(2.9).log(), 2.9, epsilon = 1e-14);
        assert_abs_diff_eq!(Rot2::exp(3.5).log(), 3.5 - 2.0 * PI, epsilon = 1e-14);
        assert!(exp_so2(f64::NAN).is_err());
    }

    #[test]
    fn log_rejects_non_rotations() {
        assert!(log_so2(&Matrix2::new(2.0, 0.0, 0.0, 2.0)).is_err());
        // reflection: orthonormal but det = −1
        assert!(log_so2(&Matrix2::new(1.0, 0.0, 0.0, -1.0)).is_err());
        assert_abs_diff_eq!(
            log_so2(Rot2::exp(-1.0).matrix()).unwrap().radians(),
            -1.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn log_branch_is_half_open() {
        assert_eq!(Rot2::from_cos_sin(-1.0, 0.0).log(), PI);
        assert_eq!(Rot2::from_cos_sin(-1.0, -0.0).log(), PI);
        assert_eq!(Angle::new(-PI).radians(), PI);
        assert_eq!(Angle::new(PI).radians(), PI);
    }

    #[test]
    fn compose_inverse_examples() {
        let a = Rot2::exp(0.7);
        let e = a * a.inverse();
        assert!((e.matrix() - Matrix2::identity()).abs().max() < 1e-15);
        assert!(
            (Rot2::exp(1.2).inverse().matrix() - Rot2::exp(-1.2).matrix())
                .abs()
                .max()
                < 1e-15
        );
        let w = Rot2::exp(3.0) * Rot2::exp(3.0);
        assert_abs_diff_eq!(w.log(), 6.0 - 2.0 * PI, epsilon = 1e-14);
    }

    #[test]
    fn renormalize_repairs_drift() {
        let m = Rot2::exp(0.9).matrix() * (1.0 + 1e-6);
        let drifted = Rot2 { m };
        assert!(drifted.orthonormality_error() > ORTHO_TOL);
        let fixed = drifted.renormalized_if_drifted();
        assert!(fixed.orthonormality_error() < 1e-15);
        assert_abs_diff_eq!(fixed.log(), 0.9, epsilon = 1e-15);
    }

    proptest! {
        #[test]
        fn wrap_is_canonical(theta in -100.0f64..100.0) {
            let w = wrap_angle(theta);
            prop_assert!(w > -PI && w <= PI);
            let k = ((theta - w) / (2.0 * PI)).round();
            prop_assert!((theta - w - k * 2.0 * PI).abs() < 1e-12);
        }

        #[test]
        fn group_axioms(a in -10.0f64..10.0, b in -10.0f64..10.0, c in -10.0f64..10.0) {
            let (ra, rb, rc) = (Rot2::exp(a), Rot2::exp(b), Rot2::exp(c));
            let lhs = (ra * rb) * rc;
            let rhs = ra * (rb * rc);
            prop_assert!((lhs.matrix() - rhs.matrix()).abs().max() < 1e-12);
            prop_assert!(((ra * Rot2::identity()).matrix() - ra.matrix()).abs().max() < 1e-12);
            prop_assert!(((ra * ra.inverse()).matrix() - Matrix2::identity()).abs().max() < 1e-12);
            prop_assert!(Rot2::from_matrix(*lhs.matrix()).is_ok());
        }
    }
}
