use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::so3::AxisAngle;
use super::GeometryError;

/// Camera-to-world pose: `x_w = R(rotation) · x_c + translation`.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct CameraPose {
    pub rotation: AxisAngle,
    pub translation: Vector3<f64>,
}

impl CameraPose {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn new(rotation: AxisAngle, translation: Vector3<f64>) -> Self {
        Self { rotation, translation }
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.rotation.to_matrix()
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        self.translation
    }

    pub fn camera_to_world(&self, x_c: &Vector3<f64>) -> Vector3<f64> {
        self.rotation_matrix() * x_c + self.translation
    }

    pub fn is_finite(&self) -> bool {
        self.rotation.0.iter().chain(self.translation.iter()).all(|v| v.is_finite())
    }

    /// Flat `[ωx, ωy, ωz, tx, ty, tz]`.
    pub fn to_array(&self) -> [f64; 6] {
        let w = self.rotation.0;
        let t = self.translation;
        [w.x, w.y, w.z, t.x, t.y, t.z]
    }

    pub fn from_array(v: &[f64; 6]) -> Self {
        Self {
            rotation: AxisAngle::new(v[0], v[1], v[2]),
            translation: Vector3::new(v[3], v[4], v[5]),
        }
    }
}

/// Pinhole intrinsics shared by every image. The principal point sits at the
/// image center and there is no distortion.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub focal: f64,
    pub width: usize,
    pub height: usize,
}

impl Intrinsics {
    pub fn new(focal: f64, width: usize, height: usize) -> Self {
        Self { focal, width, height }
    }

    pub fn principal_point(&self) -> (f64, f64) {
        (self.width as f64 * 0.5, self.height as f64 * 0.5)
    }

    /// Same camera at a different resolution; focal scales with the width ratio.
    pub fn rescaled(&self, width: usize, height: usize) -> Self {
        Self { focal: self.focal * width as f64 / self.width as f64, width, height }
    }
}

/// Ray `r(t) = origin + direction · t`. The direction keeps `z = 1` in camera
/// coordinates, so `t` is camera depth.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray {
    pub origin: Vector3<f64>,
    pub direction: Vector3<f64>,
}

impl Ray {
    pub fn at(&self, t: f64) -> Vector3<f64> {
        self.origin + self.direction * t
    }
}

/// Focal length in pixels for a horizontal field of view in degrees.
pub fn focal_from_fov(fov_deg: f64, width: f64) -> Result<f64, GeometryError> {
    if !(fov_deg > 0.0 && fov_deg < 180.0) {
        return Err(GeometryError::Domain(format!("field of view {fov_deg} outside (0, 180)")));
    }
    Ok(0.5 * width / (fov_deg.to_radians() * 0.5).tan())
}

/// Camera-frame direction `K⁻¹ p̃` for continuous pixel coordinates.
pub fn camera_direction(intrinsics: &Intrinsics, u: f64, v: f64) -> Vector3<f64> {
    let (cx, cy) = intrinsics.principal_point();
    Vector3::new((u - cx) / intrinsics.focal, (v - cy) / intrinsics.focal, 1.0)
}

/// World ray through continuous pixel coordinates `(u, v)`.
pub fn pixel_ray(pose: &CameraPose, intrinsics: &Intrinsics, u: f64, v: f64) -> Ray {
    Ray {
        origin: pose.translation,
        direction: pose.rotation_matrix() * camera_direction(intrinsics, u, v),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn fov_closed_form() {
        assert_relative_eq!(focal_from_fov(90.0, 2.0).unwrap(), 1.0, epsilon = 1e-15);
        // 240 / tan(26.5°), evaluated independently with mpmath at 30 digits.
        let f = focal_from_fov(53.0, 480.0).unwrap();
        assert_relative_eq!(f, 481.365_529_982_164_76, max_relative = 1e-13);
        assert_eq!(focal_from_fov(53.0, 240.0).unwrap(), f * 0.5);
        assert!(focal_from_fov(0.0, 10.0).is_err());
        assert!(focal_from_fov(180.0, 10.0).is_err());
    }

    #[test]
    fn principal_ray_is_optical_axis() {
        let k = Intrinsics::new(20.0, 32, 24);
        let ray = pixel_ray(&CameraPose::identity(), &k, 16.0, 12.0);
        assert_eq!(ray.direction, Vector3::new(0.0, 0.0, 1.0));
        let ray = pixel_ray(&CameraPose::identity(), &k, 16.0 + 20.0, 12.0);
        assert_eq!(ray.direction, Vector3::new(1.0, 0.0, 1.0));
    }

    #[test]
    fn z_rotation_keeps_principal_ray() {
        let k = Intrinsics::new(20.0, 32, 24);
        let pose = CameraPose::new(AxisAngle::new(0.0, 0.0, PI / 2.0), Vector3::new(1.0, 2.0, 3.0));
        let ray = pixel_ray(&pose, &k, 16.0, 12.0);
        assert_relative_eq!(ray.direction, Vector3::new(0.0, 0.0, 1.0), epsilon = 1e-15);
        assert_eq!(ray.origin, Vector3::new(1.0, 2.0, 3.0));
        assert_relative_eq!(ray.at(2.0), Vector3::new(1.0, 2.0, 5.0), epsilon = 1e-15);
    }

    #[test]
    fn direction_is_linear_in_pixel_offset() {
        let k = Intrinsics::new(17.0, 32, 32);
        let pose = CameraPose::new(AxisAngle::new(0.1, -0.4, 0.2), Vector3::zeros());
        let base = pixel_ray(&pose, &k, 16.0, 16.0).direction;
        let a = pixel_ray(&pose, &k, 19.0, 14.0).direction - base;
        let b = pixel_ray(&pose, &k, 22.0, 12.0).direction - base;
        assert_relative_eq!(b, a * 2.0, epsilon = 1e-14);
    }
}
