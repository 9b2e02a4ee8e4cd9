//! Synthetic ground truth: Gaussian-blob scenes rendered from known cameras.

mod io;

pub use io::{
    import_ppm_dir, load_dataset, read_camera_file, read_poses, read_ppm, save_dataset, write_camera_file,
    write_poses, write_ppm, CameraFile,
};

use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::geometry::{focal_from_fov, AxisAngle, CameraPose, Intrinsics};
use crate::image::Image;
use crate::rendering::{render_image, RadianceSource, SamplingConfig};

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("format error in {field}: {message}")]
    Format { field: String, message: String },
    #[error("{0}")]
    Domain(String),
}

impl DatasetError {
    pub(crate) fn format(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Format { field: field.into(), message: message.into() }
    }
}

/// Isotropic Gaussian density blob with a constant color.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Blob {
    pub center: Vector3<f64>,
    pub radius: f64,
    pub peak_density: f64,
    pub color: Vector3<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AnalyticScene {
    pub blobs: Vec<Blob>,
}

impl AnalyticScene {
    pub fn new(blobs: Vec<Blob>) -> Result<Self, DatasetError> {
        for (i, b) in blobs.iter().enumerate() {
            if !(b.peak_density >= 0.0) || !(b.radius > 0.0) || b.color.iter().any(|c| !(0.0..=1.0).contains(c)) {
                return Err(DatasetError::Domain(format!("blob {i} is invalid: {b:?}")));
            }
        }
        Ok(Self { blobs })
    }

    /// `count` blobs scattered in a ball of radius `spread` around `center`.
    pub fn random(seed: u64, count: usize, center: Vector3<f64>, spread: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let blobs = (0..count)
            .map(|_| {
                let offset = loop {
                    let v = Vector3::new(
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                    );
                    if v.norm() <= 1.0 {
                        break v;
                    }
                };
                Blob {
                    center: center + offset * spread,
                    radius: spread * rng.random_range(0.25..0.5),
                    peak_density: rng.random_range(8.0..20.0),
                    color: Vector3::new(rng.random_range(0.1..1.0), rng.random_range(0.1..1.0), rng.random_range(0.1..1.0)),
                }
            })
            .collect();
        Self { blobs }
    }
}

/// Closed-form field: summed Gaussian densities, density-weighted color.
pub fn analytic_field(scene: &AnalyticScene, position: &Vector3<f64>, _direction: &Vector3<f64>) -> (Vector3<f64>, f64) {
    let mut density = 0.0;
    let mut weighted = Vector3::zeros();
    for b in &scene.blobs {
        let d = b.peak_density * (-(position - b.center).norm_squared() / (2.0 * b.radius * b.radius)).exp();
        density += d;
        weighted += b.color * d;
    }
    if density < 1e-12 {
        (Vector3::new(0.5, 0.5, 0.5), density)
    } else {
        (weighted / density, density)
    }
}

impl RadianceSource for AnalyticScene {
    fn query(&self, positions: &Tensor, directions: &Tensor) -> (Tensor, Tensor) {
        let n = positions.rows;
        let mut colors = Vec::with_capacity(3 * n);
        let mut densities = Vec::with_capacity(n);
        for i in 0..n {
            let p = Vector3::from_row_slice(positions.row(i));
            let d = Vector3::from_row_slice(directions.row(i));
            let (c, s) = analytic_field(self, &p, &d);
            colors.extend_from_slice(&[c.x, c.y, c.z]);
            densities.push(s);
        }
        (Tensor::from_vec(n, 3, colors), Tensor::from_vec(n, 1, densities))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrajectoryKind {
    /// Translation along +z, no rotation.
    Forward,
    /// Circle around the origin, each camera looking at the origin.
    Arc,
}

impl fmt::Display for TrajectoryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Forward => "forward",
            Self::Arc => "arc",
        })
    }
}

impl FromStr for TrajectoryKind {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "forward" => Ok(Self::Forward),
            "arc" => Ok(Self::Arc),
            other => Err(DatasetError::Domain(format!("unknown trajectory kind '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryParams {
    /// Forward: translation per camera. Arc: yaw per camera in degrees.
    pub step: f64,
    /// Arc radius; ignored for forward sequences.
    pub radius: f64,
    pub fov_deg: f64,
    pub width: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub kind: TrajectoryKind,
    pub poses: Vec<CameraPose>,
    pub focal: f64,
}

pub fn generate_trajectory(kind: TrajectoryKind, count: usize, params: &TrajectoryParams) -> Result<Trajectory, DatasetError> {
    if count < 2 {
        return Err(DatasetError::Domain(format!("need at least 2 cameras, got {count}")));
    }
    if !params.step.is_finite() || (kind == TrajectoryKind::Arc && !(params.radius > 0.0)) {
        return Err(DatasetError::Domain(format!("invalid trajectory parameters {params:?}")));
    }
    let focal = focal_from_fov(params.fov_deg, params.width as f64).map_err(|e| DatasetError::Domain(e.to_string()))?;
    let poses = (0..count)
        .map(|k| match kind {
            TrajectoryKind::Forward => CameraPose::new(AxisAngle::identity(), Vector3::new(0.0, 0.0, params.step * k as f64)),
            TrajectoryKind::Arc => {
                let rotation = AxisAngle::new(0.0, (params.step * k as f64).to_radians(), 0.0);
                let translation = rotation.to_matrix() * Vector3::new(0.0, 0.0, -params.radius);
                CameraPose::new(rotation, translation)
            }
        })
        .collect();
    Ok(Trajectory { kind, poses, focal })
}

/// Poses and focal the images were rendered with.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub poses: Vec<CameraPose>,
    pub focal: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneDataset {
    pub images: Vec<Image>,
    pub width: usize,
    pub height: usize,
    pub ground_truth: Option<GroundTruth>,
    pub trajectory_kind: String,
}

impl SceneDataset {
    pub fn new(images: Vec<Image>, ground_truth: Option<GroundTruth>, trajectory_kind: impl Into<String>) -> Result<Self, DatasetError> {
        let first = images.first().ok_or_else(|| DatasetError::Domain("dataset has no images".into()))?;
        let (width, height) = (first.width, first.height);
        if let Some(i) = images.iter().position(|im| im.width != width || im.height != height) {
            return Err(DatasetError::Domain(format!("image {i} differs in size from image 0")));
        }
        if let Some(gt) = &ground_truth {
            if gt.poses.len() != images.len() {
                return Err(DatasetError::Domain(format!(
                    "{} ground-truth poses for {} images",
                    gt.poses.len(),
                    images.len()
                )));
            }
        }
        Ok(Self { images, width, height, ground_truth, trajectory_kind: trajectory_kind.into() })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

/// Renders every pose with midpoint quadrature at `oversample` samples per ray.
pub fn render_dataset(
    scene: &AnalyticScene,
    poses: &[CameraPose],
    intrinsics: &Intrinsics,
    bounds: &SamplingConfig,
    oversample: usize,
    trajectory_kind: &str,
) -> Result<SceneDataset, DatasetError> {
    let sampling = SamplingConfig { samples_per_ray: oversample, stratified: false, ..*bounds };
    sampling.validate().map_err(DatasetError::Domain)?;
    let images: Vec<Image> = poses
        .par_iter()
        .map(|pose| render_image(scene, pose, intrinsics, &sampling, 0.5))
        .collect();
    SceneDataset::new(
        images,
        Some(GroundTruth { poses: poses.to_vec(), focal: intrinsics.focal }),
        trajectory_kind,
    )
}

/// Everything needed to synthesize one dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub kind: TrajectoryKind,
    pub count: usize,
    pub params: TrajectoryParams,
    pub height: usize,
    pub blobs: usize,
    /// Distance from the first camera to the scene center (forward sequences;
    /// arcs orbit the scene at `params.radius`).
    pub scene_distance: f64,
    /// Blob placement radius around the scene center.
    pub scene_spread: f64,
    pub seed: u64,
    pub oversample: usize,
    pub t_near: f64,
    pub t_far: f64,
}

impl SynthSpec {
    /// Desk-scale defaults for a trajectory kind.
    pub fn desk(kind: TrajectoryKind, count: usize) -> Self {
        let step = match kind {
            TrajectoryKind::Forward => 0.1,
            TrajectoryKind::Arc => 15.0,
        };
        Self {
            kind,
            count,
            params: TrajectoryParams { step, radius: 2.5, fov_deg: 53.0, width: 32 },
            height: 32,
            blobs: 5,
            scene_distance: 3.0,
            scene_spread: 0.8,
            seed: 0,
            oversample: 1024,
            t_near: 0.1,
            t_far: 6.0,
        }
    }

    /// Scene placement: around the origin for arcs, ahead of the cameras for
    /// forward sequences.
    pub fn scene(&self) -> AnalyticScene {
        let center = match self.kind {
            TrajectoryKind::Arc => Vector3::zeros(),
            TrajectoryKind::Forward => Vector3::new(0.0, 0.0, self.scene_distance),
        };
        AnalyticScene::random(self.seed, self.blobs, center, self.scene_spread)
    }

    pub fn generate(&self) -> Result<SceneDataset, DatasetError> {
        let trajectory = generate_trajectory(self.kind, self.count, &self.params)?;
        let intrinsics = Intrinsics::new(trajectory.focal, self.params.width, self.height);
        let bounds = SamplingConfig { t_near: self.t_near, t_far: self.t_far, samples_per_ray: 2, stratified: false };
        render_dataset(&self.scene(), &trajectory.poses, &intrinsics, &bounds, self.oversample, &self.kind.to_string())
    }
}
