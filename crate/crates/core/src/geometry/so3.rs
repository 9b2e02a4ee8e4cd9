//! Axis-angle parameterization of SO(3).
//!
//! Rotations are stored as a 3-vector `ω` whose direction is the rotation axis
//! and whose norm is the angle in radians. The optimizer works directly on `ω`,
//! so the forward map and its derivative must be smooth everywhere, including
//! at the identity where every camera starts.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::GeometryError;

/// Below this angle the Rodrigues coefficients switch to their Taylor series.
pub const SMALL_ANGLE: f64 = 1e-8;

/// Below this angle the derivative coefficients switch to their Taylor series.
const SMALL_ANGLE_DERIVATIVE: f64 = 1e-2;

/// Rotation as an axis-angle vector. The zero vector is the identity.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct AxisAngle(pub Vector3<f64>);

impl AxisAngle {
    pub fn identity() -> Self {
        Self(Vector3::zeros())
    }

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self(Vector3::new(x, y, z))
    }

    pub fn from_axis(axis: &Vector3<f64>, angle: f64) -> Self {
        Self(axis.normalize() * angle)
    }

    pub fn angle(&self) -> f64 {
        self.0.norm()
    }

    pub fn to_matrix(&self) -> Matrix3<f64> {
        axis_angle_to_matrix(&self.0)
    }

    pub fn from_matrix(r: &Matrix3<f64>) -> Result<Self, GeometryError> {
        matrix_to_axis_angle(r).map(Self)
    }

    /// Equivalent vector with angle in `[0, π]`.
    ///
    /// Only used for reporting; the optimizer never wraps its parameters.
    pub fn canonical(&self) -> Self {
        let theta = self.angle();
        if theta <= PI {
            return *self;
        }
        let axis = self.0 / theta;
        let wrapped = theta.rem_euclid(2.0 * PI);
        if wrapped <= PI {
            Self(axis * wrapped)
        } else {
            Self(-axis * (2.0 * PI - wrapped))
        }
    }
}

/// Cross-product matrix `[v]×` such that `[v]× u = v × u`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of [`skew`] applied to the antisymmetric part of `m`, times two.
fn vee_antisym(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)])
}

/// `(sin θ / θ, (1 - cos θ) / θ²)` for `θ = |ω|`.
fn rodrigues_coefficients(theta: f64) -> (f64, f64) {
    if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        (1.0 - t2 / 6.0, 0.5 - t2 / 24.0)
    } else {
        let half = 0.5 * theta;
        let s = half.sin() / half;
        (theta.sin() / theta, 0.5 * s * s)
    }
}

/// Rodrigues' formula: `R = I + a [ω]× + b [ω]×²`.
pub fn axis_angle_to_matrix(omega: &Vector3<f64>) -> Matrix3<f64> {
    let theta = omega.norm();
    let (a, b) = rodrigues_coefficients(theta);
    let k = skew(omega);
    Matrix3::identity() + k * a + k * k * b
}

/// Partial derivatives `∂R/∂ω_k` for `k = 0, 1, 2`.
pub fn axis_angle_jacobian(omega: &Vector3<f64>) -> [Matrix3<f64>; 3] {
    let theta = omega.norm();
    let (a, b) = rodrigues_coefficients(theta);
    // c = a'(θ)/θ, d = b'(θ)/θ
    let (c, d) = if theta < SMALL_ANGLE_DERIVATIVE {
        let t2 = theta * theta;
        (
            -1.0 / 3.0 + t2 / 30.0 - t2 * t2 / 840.0,
            -1.0 / 12.0 + t2 / 180.0 - t2 * t2 / 6720.0,
        )
    } else {
        let (s, co) = theta.sin_cos();
        let t2 = theta * theta;
        ((theta * co - s) / (t2 * theta), (theta * s - 2.0 * (1.0 - co)) / (t2 * t2))
    };
    let k = skew(omega);
    let k2 = k * k;
    let mut out = [Matrix3::zeros(); 3];
    for (i, slot) in out.iter_mut().enumerate() {
        let e = skew(&Vector3::ith(i, 1.0));
        *slot = e * a + (e * k + k * e) * b + k * (c * omega[i]) + k2 * (d * omega[i]);
    }
    out
}

/// Logarithm map. Returns `ω` with `|ω| ∈ [0, π]`.
pub fn matrix_to_axis_angle(r: &Matrix3<f64>) -> Result<Vector3<f64>, GeometryError> {
    let ortho = (r.transpose() * r - Matrix3::identity()).norm();
    let det = r.determinant();
    if !(ortho <= 1e-6) || !(det > 0.0) {
        return Err(GeometryError::NotARotation { orthogonality: ortho, determinant: det });
    }
    let v = vee_antisym(r);
    let s = 0.5 * v.norm();
    let c = 0.5 * (r.trace() - 1.0);
    let theta = s.atan2(c);
    if theta < 1e-12 {
        return Ok(0.5 * v);
    }
    if s > 1e-4 {
        return Ok(v * (theta / (2.0 * s)));
    }
    // Near π the antisymmetric part vanishes; take the axis from the symmetric part,
    // which equals (1 - cos θ) n nᵀ after removing cos θ · I.
    let sym = (r + r.transpose()) * 0.5 - Matrix3::identity() * c;
    let mut best = 0;
    for i in 1..3 {
        if sym[(i, i)] > sym[(best, best)] {
            best = i;
        }
    }
    let mut axis: Vector3<f64> = sym.column(best).into_owned();
    axis /= axis.norm();
    if axis.dot(&v) < 0.0 {
        axis = -axis;
    }
    Ok(axis * theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn expm_series(omega: &Vector3<f64>) -> Matrix3<f64> {
        let k = skew(omega);
        let mut term = Matrix3::identity();
        let mut sum = Matrix3::identity();
        for n in 1..30 {
            term = term * k / n as f64;
            sum += term;
        }
        sum
    }

    #[test]
    fn zero_is_identity() {
        assert_eq!(axis_angle_to_matrix(&Vector3::zeros()), Matrix3::identity());
    }

    #[test]
    fn quarter_turn_about_z() {
        let r = axis_angle_to_matrix(&Vector3::new(0.0, 0.0, PI / 2.0));
        let expected = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert_relative_eq!(r, expected, epsilon = 1e-15);
        let back = matrix_to_axis_angle(&expected).unwrap();
        assert_relative_eq!(back, Vector3::new(0.0, 0.0, PI / 2.0), epsilon = 1e-15);
    }

    #[test]
    fn matches_matrix_exponential() {
        let omega = Vector3::new(0.3, -0.8, 0.5).normalize() * 1.3;
        let r = axis_angle_to_matrix(&omega);
        assert!((r - expm_series(&omega)).amax() < 1e-10);
        assert!((r.determinant() - 1.0).abs() < 1e-12);
        assert!((r.transpose() * r - Matrix3::identity()).amax() < 1e-12);
    }

    #[test]
    fn identity_logs_to_zero() {
        assert_eq!(matrix_to_axis_angle(&Matrix3::identity()).unwrap(), Vector3::zeros());
    }

    #[test]
    fn rejects_non_rotation() {
        let m = Matrix3::new(1.0, 0.2, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(matches!(matrix_to_axis_angle(&m), Err(GeometryError::NotARotation { .. })));
        let reflect = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(matrix_to_axis_angle(&reflect).is_err());
    }

    #[test]
    fn log_near_pi() {
        for theta in [PI - 1e-3, PI - 1e-7, PI] {
            let omega = Vector3::new(1.0, 2.0, -0.5).normalize() * theta;
            let r = axis_angle_to_matrix(&omega);
            let back = matrix_to_axis_angle(&r).unwrap();
            assert!((axis_angle_to_matrix(&back) - r).norm() < 1e-9, "theta {theta}");
            assert!(back.norm() <= PI + 1e-12);
        }
    }

    #[test]
    fn small_angle_branch_is_continuous() {
        let axis = Vector3::new(0.2, 0.3, -0.9).normalize();
        let below = axis_angle_to_matrix(&(axis * (SMALL_ANGLE * 0.999)));
        let above = axis_angle_to_matrix(&(axis * (SMALL_ANGLE * 1.001)));
        // The two angles differ by 2e-11 rad; anything beyond that is a jump.
        assert!((below - above).amax() < 3e-11);
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let h = 1e-6;
        for omega in [
            Vector3::zeros(),
            Vector3::new(1e-5, -2e-5, 3e-6),
            Vector3::new(0.004, 0.003, -0.002),
            Vector3::new(0.4, -1.1, 0.7),
            Vector3::new(2.0, 1.5, -1.0),
        ] {
            let jac = axis_angle_jacobian(&omega);
            for (k, analytic) in jac.iter().enumerate() {
                let e = Vector3::ith(k, h);
                let fd = (axis_angle_to_matrix(&(omega + e)) - axis_angle_to_matrix(&(omega - e)))
                    / (2.0 * h);
                assert!((fd - analytic).amax() < 1e-8, "omega {omega:?} k {k}");
            }
        }
    }

    #[test]
    fn canonical_wraps_long_vectors() {
        let axis = Vector3::new(0.0, 1.0, 0.0);
        let long = AxisAngle(axis * (1.5 * PI));
        let c = long.canonical();
        assert!(c.angle() <= PI);
        assert!((c.to_matrix() - long.to_matrix()).amax() < 1e-12);
    }
}
