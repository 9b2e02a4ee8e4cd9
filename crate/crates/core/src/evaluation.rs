//! Trajectory alignment and quality metrics.
//!
//! Estimated and reference trajectories live in different gauges, so they are
//! compared after a least-squares similarity alignment. Each camera
//! contributes its center and one point on its optical axis, which keeps the
//! alignment well posed when all centers are collinear.

use nalgebra::{Matrix3, Vector3, SVD};
use serde::{Deserialize, Serialize};

use crate::geometry::CameraPose;
use crate::image::Image;

#[derive(Debug, thiserror::Error)]
pub enum EvaluationError {
    #[error("degenerate point configuration: {0}")]
    Degenerate(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// `x ↦ s·R·x + t`
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sim3 {
    pub scale: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Sim3 {
    pub fn identity() -> Self {
        Self { scale: 1.0, rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p * self.scale + self.translation
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self { scale: 1.0 / self.scale, rotation: rt, translation: -(rt * self.translation) / self.scale }
    }

    /// Pose seen through the transform: rotation composed on the left, center mapped.
    pub fn apply_pose(&self, rotation: &Matrix3<f64>, center: &Vector3<f64>) -> (Matrix3<f64>, Vector3<f64>) {
        (self.rotation * rotation, self.apply(center))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageError {
    pub rotation_deg: f64,
    pub translation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMetrics {
    /// Mean geodesic rotation error, degrees.
    pub delta_r: f64,
    /// Mean center distance after alignment, reference units.
    pub delta_t: f64,
    pub per_image: Vec<ImageError>,
    pub scale: f64,
}

/// Camera center and the world image of camera-frame `(0, 0, depth)` per pose.
pub fn augment_virtual_points_at(poses: &[CameraPose], depth: f64) -> Vec<Vector3<f64>> {
    augment_along(poses, depth, &[Vector3::z()])
}

/// Camera center plus the world images of `depth · axis` for each axis.
fn augment_along(poses: &[CameraPose], depth: f64, axes: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
    let mut out = Vec::with_capacity((1 + axes.len()) * poses.len());
    for pose in poses {
        let r = pose.rotation_matrix();
        out.push(pose.translation);
        out.extend(axes.iter().map(|a| r * a * depth + pose.translation));
    }
    out
}

pub fn augment_virtual_points(poses: &[CameraPose]) -> Vec<Vector3<f64>> {
    augment_virtual_points_at(poses, 1.0)
}

/// Least-squares similarity mapping `estimated` onto `reference` (Umeyama).
pub fn align_sim3(estimated: &[Vector3<f64>], reference: &[Vector3<f64>]) -> Result<Sim3, EvaluationError> {
    if estimated.len() != reference.len() {
        return Err(EvaluationError::DimensionMismatch(format!(
            "{} estimated vs {} reference points",
            estimated.len(),
            reference.len()
        )));
    }
    let n = estimated.len();
    if n < 3 {
        return Err(EvaluationError::Degenerate(format!("need at least 3 points, got {n}")));
    }
    let inv_n = 1.0 / n as f64;
    let mu_p = estimated.iter().sum::<Vector3<f64>>() * inv_n;
    let mu_q = reference.iter().sum::<Vector3<f64>>() * inv_n;
    let mut cov = Matrix3::zeros();
    let mut var_p = 0.0;
    for (p, q) in estimated.iter().zip(reference) {
        let (dp, dq) = (p - mu_p, q - mu_q);
        cov += dq * dp.transpose();
        var_p += dp.norm_squared();
    }
    cov *= inv_n;
    var_p *= inv_n;
    if var_p <= f64::EPSILON * (1.0 + mu_p.norm_squared()) {
        return Err(EvaluationError::Degenerate("estimated points coincide".into()));
    }
    let svd = SVD::new(cov, true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut sv = svd.singular_values;
    // Sort descending so the sign fix lands on the smallest singular value.
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| sv[b].partial_cmp(&sv[a]).unwrap());
    let u = Matrix3::from_columns(&[u.column(order[0]), u.column(order[1]), u.column(order[2])]);
    let v_t = Matrix3::from_rows(&[v_t.row(order[0]), v_t.row(order[1]), v_t.row(order[2])]);
    sv = Vector3::new(sv[order[0]], sv[order[1]], sv[order[2]]);
    if sv[1] <= 1e-12 * sv[0].max(1e-300) {
        return Err(EvaluationError::Degenerate("covariance has rank < 2".into()));
    }
    let mut s = Matrix3::identity();
    if (u.determinant() * v_t.determinant()) < 0.0 {
        s[(2, 2)] = -1.0;
    }
    let rotation = u * s * v_t;
    let trace_ds = sv[0] * s[(0, 0)] + sv[1] * s[(1, 1)] + sv[2] * s[(2, 2)];
    let scale = trace_ds / var_p;
    if !(scale > 0.0) {
        return Err(EvaluationError::Degenerate(format!("non-positive scale {scale}")));
    }
    let translation = mu_q - rotation * mu_p * scale;
    Ok(Sim3 { scale, rotation, translation })
}

/// Spread of the camera centers: RMS distance to their centroid, or 1 when
/// the centers coincide.
pub fn trajectory_extent(poses: &[CameraPose]) -> f64 {
    if poses.is_empty() {
        return 1.0;
    }
    let n = poses.len() as f64;
    let mu = poses.iter().map(|p| p.translation).sum::<Vector3<f64>>() / n;
    let rms = (poses.iter().map(|p| (p.translation - mu).norm_squared()).sum::<f64>() / n).sqrt();
    if rms > 1e-12 {
        rms
    } else {
        1.0
    }
}

/// Aligns estimated poses to reference poses using centers plus optical-axis
/// points.
///
/// Reference axis points sit at depth `L`, the reference extent. Estimated
/// axis points sit at depth `L/s`, where `s` is the current scale estimate, so
/// both land the same distance from their center after alignment. Starting
/// from `s = 1` this is iterated to a fixed point. An exact similarity image
/// of the reference is recovered exactly, and scaling the reference scales the
/// result.
///
/// When centers and axis points are all collinear (cameras translating along
/// their shared optical axis) the roll about that line is unconstrained, so
/// the camera x and y axes are added as well.
pub fn align_trajectories(estimated: &[CameraPose], reference: &[CameraPose]) -> Result<Sim3, EvaluationError> {
    if estimated.len() != reference.len() {
        return Err(EvaluationError::DimensionMismatch(format!(
            "{} estimated vs {} reference poses",
            estimated.len(),
            reference.len()
        )));
    }
    match align_with_axes(estimated, reference, &[Vector3::z()]) {
        Err(EvaluationError::Degenerate(_)) => align_with_axes(estimated, reference, &[Vector3::x(), Vector3::y(), Vector3::z()]),
        result => result,
    }
}

fn align_with_axes(estimated: &[CameraPose], reference: &[CameraPose], axes: &[Vector3<f64>]) -> Result<Sim3, EvaluationError> {
    let depth = trajectory_extent(reference);
    let target = augment_along(reference, depth, axes);
    let mut sim = align_sim3(&augment_along(estimated, depth, axes), &target)?;
    for _ in 0..500 {
        let next = align_sim3(&augment_along(estimated, depth / sim.scale, axes), &target)?;
        let converged = ((next.scale - sim.scale) / sim.scale).abs() < 1e-15;
        sim = next;
        if converged {
            break;
        }
    }
    Ok(sim)
}

/// Geodesic angle between two rotations, degrees.
///
/// Equal to `acos((tr(R_estᵀ R_gt) - 1) / 2)`, evaluated through `atan2` of
/// the sine and cosine parts, which stays accurate near zero where `acos`
/// loses half the digits.
pub fn rotation_error(r_est: &Matrix3<f64>, r_gt: &Matrix3<f64>) -> f64 {
    let m = r_est.transpose() * r_gt;
    let c = ((m.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let s = 0.5
        * Vector3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]).norm();
    s.atan2(c).to_degrees()
}

pub fn translation_error(t_est: &Vector3<f64>, t_gt: &Vector3<f64>) -> f64 {
    (t_est - t_gt).norm()
}

/// Aligns, then averages per-image rotation and translation errors.
pub fn evaluate_trajectory(estimated: &[CameraPose], reference: &[CameraPose]) -> Result<TrajectoryMetrics, EvaluationError> {
    let sim = align_trajectories(estimated, reference)?;
    let per_image: Vec<ImageError> = estimated
        .iter()
        .zip(reference)
        .map(|(e, g)| {
            let (r, c) = sim.apply_pose(&e.rotation_matrix(), &e.translation);
            ImageError {
                rotation_deg: rotation_error(&r, &g.rotation_matrix()),
                translation: translation_error(&c, &g.translation),
            }
        })
        .collect();
    let n = per_image.len() as f64;
    Ok(TrajectoryMetrics {
        delta_r: per_image.iter().map(|e| e.rotation_deg).sum::<f64>() / n,
        delta_t: per_image.iter().map(|e| e.translation).sum::<f64>() / n,
        per_image,
        scale: sim.scale,
    })
}

/// `10·log10(1/MSE)` over all channels; `+∞` for identical images.
pub fn psnr(a: &Image, b: &Image) -> Result<f64, EvaluationError> {
    if a.width != b.width || a.height != b.height {
        return Err(EvaluationError::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    psnr_values(&a.data, &b.data)
}

/// PSNR over two equally long value lists in `[0, 1]`.
pub fn psnr_values(a: &[f32], b: &[f32]) -> Result<f64, EvaluationError> {
    if a.len() != b.len() || a.is_empty() {
        return Err(EvaluationError::DimensionMismatch(format!("{} vs {} values", a.len(), b.len())));
    }
    let mse = a.iter().zip(b).map(|(x, y)| (*x as f64 - *y as f64).powi(2)).sum::<f64>() / a.len() as f64;
    Ok(psnr_from_mse(mse))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (1.0 / mse).log10()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{axis_angle_to_matrix, AxisAngle};
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn virtual_points() {
        let pts = augment_virtual_points(&[CameraPose::identity()]);
        assert_eq!(pts, vec![Vector3::zeros(), Vector3::new(0.0, 0.0, 1.0)]);
        let pose = CameraPose::new(AxisAngle::new(FRAC_PI_2, 0.0, 0.0), Vector3::zeros());
        let pts = augment_virtual_points(&[pose, pose, pose]);
        assert_eq!(pts.len(), 6);
        assert!((pts[1] - Vector3::new(0.0, -1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn identity_alignment() {
        let pts: Vec<_> = (0..5).map(|i| Vector3::new(i as f64, (i * i) as f64 * 0.3, (i as f64).sin())).collect();
        let sim = align_sim3(&pts, &pts).unwrap();
        assert!((sim.scale - 1.0).abs() < 1e-12);
        assert!((sim.rotation - Matrix3::identity()).amax() < 1e-12);
        assert!(sim.translation.norm() < 1e-12);
    }

    #[test]
    fn recovers_a_known_similarity() {
        let reference: Vec<_> =
            (0..8).map(|i| Vector3::new((i as f64 * 0.7).cos(), (i as f64 * 1.3).sin(), i as f64 * 0.2)).collect();
        let truth = Sim3 {
            scale: 2.5,
            rotation: axis_angle_to_matrix(&Vector3::new(0.4, -1.1, 0.3)),
            translation: Vector3::new(1.0, 2.0, 3.0),
        };
        let estimated: Vec<_> = reference.iter().map(|p| truth.apply(p)).collect();
        let sim = align_sim3(&estimated, &reference).unwrap();
        let inv = truth.inverse();
        assert!((sim.scale - inv.scale).abs() < 1e-12);
        for (e, r) in estimated.iter().zip(&reference) {
            assert!((sim.apply(e) - r).norm() < 1e-9);
        }
    }

    #[test]
    fn degenerate_inputs() {
        let p = vec![Vector3::new(1.0, 1.0, 1.0); 4];
        assert!(matches!(align_sim3(&p, &p), Err(EvaluationError::Degenerate(_))));
        let line: Vec<_> = (0..4).map(|i| Vector3::new(i as f64, 0.0, 0.0)).collect();
        assert!(matches!(align_sim3(&line, &line), Err(EvaluationError::Degenerate(_))));
        assert!(align_sim3(&line[..2], &line[..2]).is_err());
        assert!(matches!(align_sim3(&line, &line[..3]), Err(EvaluationError::DimensionMismatch(_))));
    }

    #[test]
    fn rotation_error_values() {
        let a = axis_angle_to_matrix(&Vector3::new(0.1, 0.2, 0.3));
        assert!(rotation_error(&a, &a) < 1e-6);
        let b = a * axis_angle_to_matrix(&Vector3::new(0.0, FRAC_PI_2, 0.0));
        assert!((rotation_error(&a, &b) - 90.0).abs() < 1e-9);
        assert!((rotation_error(&b, &a) - 90.0).abs() < 1e-9);
    }

    #[test]
    fn translation_error_values() {
        assert_eq!(translation_error(&Vector3::new(1.0, 1.0, 1.0), &Vector3::new(1.0, 1.0, 1.0)), 0.0);
        assert_eq!(translation_error(&Vector3::new(3.0, 4.0, 0.0), &Vector3::zeros()), 5.0);
    }

    #[test]
    fn psnr_values_match_closed_form() {
        let a = Image::filled(4, 4, [0.5; 3]);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        assert!((psnr_from_mse(0.01) - 20.0).abs() < 1e-12);
        assert!((psnr_from_mse(0.0001) - 40.0).abs() < 1e-12);
        let b = Image::filled(4, 4, [0.6; 3]);
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-5);
        assert!(matches!(psnr(&a, &Image::filled(4, 5, [0.5; 3])), Err(EvaluationError::DimensionMismatch(_))));
    }

    #[test]
    fn pure_forward_motion_aligns_exactly() {
        let reference: Vec<_> =
            (0..6).map(|i| CameraPose::new(AxisAngle::identity(), Vector3::new(0.0, 0.0, 0.1 * i as f64))).collect();
        let truth = Sim3 {
            scale: 0.3,
            rotation: axis_angle_to_matrix(&Vector3::new(0.2, 0.9, -0.4)),
            translation: Vector3::new(-1.0, 0.5, 2.0),
        };
        let estimated: Vec<_> = reference
            .iter()
            .map(|p| {
                let (r, c) = truth.apply_pose(&p.rotation_matrix(), &p.translation);
                CameraPose::new(AxisAngle::from_matrix(&r).unwrap(), c)
            })
            .collect();
        let m = evaluate_trajectory(&estimated, &reference).unwrap();
        assert!(m.delta_r < 1e-6 && m.delta_t < 1e-9, "{m:?}");
    }

    #[test]
    fn scaling_the_reference_scales_delta_t_only() {
        let gt: Vec<_> = (0..6)
            .map(|i| CameraPose::new(AxisAngle::new(0.0, 0.2 * i as f64, 0.0), Vector3::new(i as f64, 0.1 * i as f64, 0.0)))
            .collect();
        let est: Vec<_> = gt
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let mut q = *p;
                q.translation += Vector3::new(0.05 * (i as f64).sin(), 0.02, -0.03 * i as f64);
                q.rotation.0 += Vector3::new(0.01, -0.02 * (i % 2) as f64, 0.0);
                q
            })
            .collect();
        let base = evaluate_trajectory(&est, &gt).unwrap();
        let s = 3.7;
        let scaled: Vec<_> = gt.iter().map(|p| CameraPose::new(p.rotation, p.translation * s)).collect();
        let m = evaluate_trajectory(&est, &scaled).unwrap();
        assert!((m.delta_r - base.delta_r).abs() < 1e-9);
        assert!((m.delta_t - s * base.delta_t).abs() < 1e-9);
    }
}
