//! Volume rendering: ray sampling, the compositing quadrature, and the
//! differentiable render graph used for training.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::tape::composite_trace;
use crate::autodiff::{Tape, Tensor, Var};
use crate::field::{FieldVars, RadianceField};
use crate::geometry::{pixel_ray, CameraPose, Intrinsics};
use crate::image::Image;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub t_near: f64,
    pub t_far: f64,
    pub samples_per_ray: usize,
    pub stratified: bool,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self { t_near: 0.1, t_far: 6.0, samples_per_ray: 64, stratified: true }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.t_near >= 0.0 && self.t_near < self.t_far) {
            return Err(format!("need 0 <= t_near < t_far, got [{}, {}]", self.t_near, self.t_far));
        }
        if self.samples_per_ray < 2 {
            return Err("samples_per_ray must be >= 2".into());
        }
        Ok(())
    }

    pub fn deterministic(self) -> Self {
        Self { stratified: false, ..self }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenderOutput {
    pub color: Vector3<f64>,
    pub weights: Vec<f64>,
    pub residual_transmittance: f64,
    /// Transmittance before each sample.
    pub transmittance: Vec<f64>,
}

/// Anything that can be volume rendered: batched `(positions, unit
/// directions) → (colors n×3, densities n×1)`.
pub trait RadianceSource: Sync {
    fn query(&self, positions: &Tensor, directions: &Tensor) -> (Tensor, Tensor);
}

impl RadianceSource for RadianceField {
    fn query(&self, positions: &Tensor, directions: &Tensor) -> (Tensor, Tensor) {
        self.eval_batch(positions, directions)
    }
}

/// Sample depths in `[t_near, t_far]`: bin midpoints, or one uniform draw per
/// bin when stratified.
pub fn sample_ray<R: Rng + ?Sized>(config: &SamplingConfig, rng: &mut R) -> Vec<f64> {
    let n = config.samples_per_ray;
    let width = (config.t_far - config.t_near) / n as f64;
    (0..n)
        .map(|i| {
            let lo = config.t_near + width * i as f64;
            let u = if config.stratified { rng.random::<f64>() } else { 0.5 };
            lo + width * u
        })
        .collect()
}

/// Discrete quadrature of the rendering integral over one ray, black background.
pub fn composite(t: &[f64], densities: &[f64], colors: &[Vector3<f64>], t_far: f64) -> RenderOutput {
    assert_eq!(t.len(), densities.len());
    assert_eq!(t.len(), colors.len());
    let trace = composite_trace(t, t_far, |i| densities[i]);
    let weights: Vec<f64> = (0..t.len()).map(|i| trace.transmittance[i] * trace.alphas[i]).collect();
    let color = weights.iter().zip(colors).fold(Vector3::zeros(), |acc, (w, c)| acc + c * *w);
    let residual_transmittance = trace.transmittance[t.len()];
    let mut transmittance = trace.transmittance;
    transmittance.pop();
    RenderOutput { color, weights, residual_transmittance, transmittance }
}

fn sample_inputs(origin: &Vector3<f64>, direction: &Vector3<f64>, t: &[f64]) -> (Tensor, Tensor) {
    let unit = direction.normalize();
    let mut pos = Vec::with_capacity(3 * t.len());
    let mut dirs = Vec::with_capacity(3 * t.len());
    for &tv in t {
        let p = origin + direction * tv;
        pos.extend_from_slice(&[p.x, p.y, p.z]);
        dirs.extend_from_slice(&[unit.x, unit.y, unit.z]);
    }
    (Tensor::from_vec(t.len(), 3, pos), Tensor::from_vec(t.len(), 3, dirs))
}

/// Renders continuous pixel coordinates `pixel` of a camera.
pub fn render_pixel<F: RadianceSource + ?Sized, R: Rng + ?Sized>(
    field: &F,
    pose: &CameraPose,
    intrinsics: &Intrinsics,
    pixel: [f64; 2],
    sampling: &SamplingConfig,
    rng: &mut R,
) -> RenderOutput {
    let ray = pixel_ray(pose, intrinsics, pixel[0], pixel[1]);
    let t = sample_ray(sampling, rng);
    let (pos, dirs) = sample_inputs(&ray.origin, &ray.direction, &t);
    let (colors, densities) = field.query(&pos, &dirs);
    let colors: Vec<Vector3<f64>> = (0..t.len()).map(|i| Vector3::from_row_slice(colors.row(i))).collect();
    composite(&t, &densities.data, &colors, sampling.t_far)
}

/// Renders a full image with deterministic midpoint sampling. Pixel `(x, y)`
/// is rendered at `(x + center_offset, y + center_offset)`.
pub fn render_image<F: RadianceSource + ?Sized>(
    field: &F,
    pose: &CameraPose,
    intrinsics: &Intrinsics,
    sampling: &SamplingConfig,
    center_offset: f64,
) -> Image {
    let sampling = sampling.deterministic();
    let t = sample_ray(&sampling, &mut ChaCha8Rng::seed_from_u64(0));
    let (w, h) = (intrinsics.width, intrinsics.height);
    // One row of pixels per batch keeps the query tensors small.
    let rows: Vec<Vec<[f32; 3]>> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut pos = Vec::with_capacity(w * t.len() * 3);
            let mut dirs = Vec::with_capacity(w * t.len() * 3);
            for x in 0..w {
                let ray = pixel_ray(pose, intrinsics, x as f64 + center_offset, y as f64 + center_offset);
                let (p, d) = sample_inputs(&ray.origin, &ray.direction, &t);
                pos.extend_from_slice(&p.data);
                dirs.extend_from_slice(&d.data);
            }
            let n = w * t.len();
            let (colors, densities) = field.query(&Tensor::from_vec(n, 3, pos), &Tensor::from_vec(n, 3, dirs));
            (0..w)
                .map(|x| {
                    let base = x * t.len();
                    let cs: Vec<Vector3<f64>> =
                        (0..t.len()).map(|i| Vector3::from_row_slice(colors.row(base + i))).collect();
                    let out = composite(&t, &densities.data[base..base + t.len()], &cs, sampling.t_far);
                    [out.color.x as f32, out.color.y as f32, out.color.z as f32]
                })
                .collect()
        })
        .collect();
    let mut img = Image::new(w, h);
    for (y, row) in rows.into_iter().enumerate() {
        for (x, rgb) in row.into_iter().enumerate() {
            img.set(x, y, rgb);
        }
    }
    img
}

/// A set of training rays with their sample depths.
#[derive(Clone, Debug, Default)]
pub struct RayBatch {
    /// Pose index of each ray.
    pub image: Vec<usize>,
    /// Continuous pixel coordinates.
    pub pixels: Vec<[f64; 2]>,
    pub targets: Vec<[f64; 3]>,
    /// Sample depths, `rays × samples`.
    pub t: Vec<Vec<f64>>,
}

impl RayBatch {
    pub fn len(&self) -> usize {
        self.image.len()
    }

    pub fn is_empty(&self) -> bool {
        self.image.is_empty()
    }

    pub fn push(&mut self, image: usize, pixel: [f64; 2], target: [f64; 3], t: Vec<f64>) {
        self.image.push(image);
        self.pixels.push(pixel);
        self.targets.push(target);
        self.t.push(t);
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> RayBatch {
        RayBatch {
            image: self.image[range.clone()].to_vec(),
            pixels: self.pixels[range.clone()].to_vec(),
            targets: self.targets[range.clone()].to_vec(),
            t: self.t[range].to_vec(),
        }
    }

    pub fn target_tensor(&self) -> Tensor {
        Tensor::from_vec(self.len(), 3, self.targets.iter().flatten().copied().collect())
    }

    fn depth_tensor(&self) -> Tensor {
        let s = self.t.first().map_or(0, Vec::len);
        Tensor::from_vec(self.len(), s, self.t.iter().flatten().copied().collect())
    }
}

/// Tape handles for the camera parameters: `poses × 3` rotations and
/// translations, and a `1×1` focal length.
#[derive(Clone, Copy, Debug)]
pub struct CameraVars {
    pub rotations: Var,
    pub translations: Var,
    pub focal: Var,
}

/// Records the differentiable render of `batch` and returns its `rays × 3`
/// colors.
pub fn record_render(
    tape: &mut Tape,
    field: &RadianceField,
    field_vars: &FieldVars,
    cameras: &CameraVars,
    width: usize,
    height: usize,
    t_far: f64,
    batch: &RayBatch,
) -> Var {
    let (cx, cy) = (width as f64 * 0.5, height as f64 * 0.5);
    let offsets = Tensor::from_vec(
        batch.len(),
        2,
        batch.pixels.iter().flat_map(|p| [p[0] - cx, p[1] - cy]).collect(),
    );
    let samples = batch.t.first().map_or(0, Vec::len);
    let rot = tape.rodrigues(cameras.rotations);
    let rot = tape.gather_rows(rot, batch.image.clone());
    let origin = tape.gather_rows(cameras.translations, batch.image.clone());
    let cam_dirs = tape.camera_directions(cameras.focal, offsets);
    let dirs = tape.rotate_vectors(rot, cam_dirs);
    let unit = tape.normalize(dirs);
    let view = tape.repeat_rows(unit, samples);
    let t = batch.depth_tensor();
    let points = tape.ray_points(origin, dirs, t.clone());
    let (density, color) = field.forward_on_tape(tape, field_vars, points, view);
    tape.composite(density, color, t, t_far)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn midpoints_when_not_stratified() {
        let cfg = SamplingConfig { t_near: 0.0, t_far: 1.0, samples_per_ray: 4, stratified: false };
        let t = sample_ray(&cfg, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(t, vec![0.125, 0.375, 0.625, 0.875]);
    }

    #[test]
    fn stratified_samples_stay_in_bins() {
        let cfg = SamplingConfig { t_near: 0.5, t_far: 4.5, samples_per_ray: 16, stratified: true };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let t = sample_ray(&cfg, &mut rng);
            for (i, v) in t.iter().enumerate() {
                let lo = 0.5 + 0.25 * i as f64;
                assert!(*v >= lo && *v < lo + 0.25);
            }
            assert!(t.windows(2).all(|w| w[0] < w[1]));
        }
        let a = sample_ray(&cfg, &mut ChaCha8Rng::seed_from_u64(42));
        let b = sample_ray(&cfg, &mut ChaCha8Rng::seed_from_u64(42));
        assert_eq!(a, b);
    }

    #[test]
    fn empty_space_is_black() {
        let t = [0.5, 1.0, 1.5];
        let out = composite(&t, &[0.0; 3], &[Vector3::new(1.0, 1.0, 1.0); 3], 2.0);
        assert_eq!(out.color, Vector3::zeros());
        assert_eq!(out.residual_transmittance, 1.0);
    }

    #[test]
    fn opaque_front_sample_wins() {
        let t = [0.5, 1.0, 1.5];
        let colors = [Vector3::new(1.0, 0.0, 0.0), Vector3::new(0.0, 1.0, 0.0), Vector3::new(0.0, 0.0, 1.0)];
        let out = composite(&t, &[1e6, 3.0, 3.0], &colors, 2.0);
        assert!((out.color - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-6);
        assert!(out.residual_transmittance < 1e-12);
    }

    /// Smooth closed-form σ(t), c(t).
    fn analytic(t: f64) -> (f64, Vector3<f64>) {
        let sigma = 1.5 * (-(t - 2.0).powi(2) / 0.3).exp() + 0.2 * (1.0 + (3.0 * t).sin());
        let c = Vector3::new(0.5 + 0.4 * t.sin(), 0.5 + 0.4 * (2.0 * t).cos(), 0.3 + 0.1 * t);
        (sigma, c)
    }

    fn quadrature(n: usize) -> Vector3<f64> {
        let cfg = SamplingConfig { t_near: 0.1, t_far: 4.0, samples_per_ray: n, stratified: false };
        let t = sample_ray(&cfg, &mut ChaCha8Rng::seed_from_u64(0));
        let (s, c): (Vec<f64>, Vec<Vector3<f64>>) = t.iter().map(|&v| analytic(v)).unzip();
        composite(&t, &s, &c, cfg.t_far).color
    }

    #[test]
    fn quadrature_converges() {
        let reference = quadrature(16384);
        assert!((quadrature(256) - reference).amax() < 1e-3);
        let mut prev = f64::INFINITY;
        for n in [16, 32, 64, 128, 256] {
            let err = (quadrature(n) - reference).norm();
            assert!(err < prev, "n={n} err={err}");
            prev = err;
        }
    }

    #[test]
    fn weights_and_residual_sum_to_one() {
        let t: Vec<f64> = (0..32).map(|i| 0.1 + 0.1 * i as f64).collect();
        let d: Vec<f64> = t.iter().map(|v| (v * 3.0).sin().abs() * 4.0).collect();
        let out = composite(&t, &d, &vec![Vector3::new(0.3, 0.3, 0.3); 32], 3.5);
        let total: f64 = out.weights.iter().sum::<f64>() + out.residual_transmittance;
        assert!((total - 1.0).abs() < 1e-12);
        assert!(out.transmittance.windows(2).all(|w| w[1] <= w[0]));
    }
}
