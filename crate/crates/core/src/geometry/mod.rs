//! Camera model, rotation parameterization, ray generation and image pyramids.

mod camera;
mod pyramid;
mod so3;

pub use camera::{camera_direction, focal_from_fov, pixel_ray, CameraPose, Intrinsics, Ray};
pub use pyramid::{
    build_pyramid, downsample, pixel_center_offset, ImagePyramid, BINOMIAL_KERNEL,
};
pub use so3::{
    axis_angle_jacobian, axis_angle_to_matrix, matrix_to_axis_angle, skew, AxisAngle, SMALL_ANGLE,
};

#[derive(Debug, thiserror::Error)]
pub enum GeometryError {
    #[error("matrix is not a rotation (|RᵀR - I| = {orthogonality:e}, det = {determinant})")]
    NotARotation { orthogonality: f64, determinant: f64 },
    #[error("{0}")]
    Domain(String),
    #[error("image {width}x{height} too small for a pyramid of depth {depth}")]
    TooSmall { width: usize, height: usize, depth: usize },
}
