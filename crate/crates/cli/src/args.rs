use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use posefree_core::autodiff::LrSchedule;
use posefree_core::field::FieldConfig;
use posefree_core::rendering::SamplingConfig;
use posefree_core::scheduler::{ScheduleConfig, TrainConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "posefree", version, about = "Radiance field training without camera parameters")]
pub struct Cli {
    /// Worker threads (1 gives bitwise-reproducible timing-independent runs;
    /// results are deterministic for any count).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic dataset with ground-truth cameras.
    Synth(SynthArgs),
    /// Recover the field, poses and focal from a dataset.
    Train(TrainArgs),
    /// Compare a recovered trajectory with ground truth.
    Eval(EvalArgs),
    /// Render views from a checkpoint and a poses file.
    Render(RenderArgs),
    /// Train a grid of schedule settings and tabulate the results.
    Ablate(AblateArgs),
    /// Summarize a training run's phase log.
    Report(ReportArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Forward,
    Arc,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "arc")]
    pub kind: Kind,
    #[arg(long, default_value_t = 12)]
    pub count: usize,
    /// Yaw per camera in degrees (arc) or translation per camera (forward).
    #[arg(long, alias = "step-deg")]
    pub step: Option<f64>,
    /// Image width and height in pixels.
    #[arg(long, default_value_t = 32)]
    pub size: usize,
    #[arg(long, default_value_t = 2.5)]
    pub radius: f64,
    #[arg(long, default_value_t = 53.0)]
    pub fov: f64,
    #[arg(long, default_value_t = 5)]
    pub blobs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Quadrature samples per ray for the reference images.
    #[arg(long, default_value_t = 1024)]
    pub oversample: usize,
    /// Also write 8-bit PPM copies of the images.
    #[arg(long)]
    pub ppm: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Incremental,
    Joint,
}

/// Every training knob. Unset flags keep the defaults of the selected preset.
#[derive(Clone, Debug, Args)]
pub struct TrainFlags {
    /// Small field and sampling budget for 32×32 scenes (schedule unchanged).
    #[arg(long)]
    pub desk: bool,
    #[arg(long)]
    pub n_init: Option<usize>,
    #[arg(long)]
    pub n_part: Option<usize>,
    /// Global optimization every N registrations (a comma list for ablate).
    #[arg(long, alias = "nglob", value_delimiter = ',')]
    pub n_glob: Vec<usize>,
    #[arg(long)]
    pub xi_init: Option<usize>,
    /// Steps per localization/partial/global phase (a comma list for ablate).
    #[arg(long, value_delimiter = ',')]
    pub xi: Vec<usize>,
    #[arg(long)]
    pub pyramid_depth: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub omega0: Option<f64>,
    #[arg(long)]
    pub t_near: Option<f64>,
    #[arg(long)]
    pub t_far: Option<f64>,
    #[arg(long)]
    pub samples: Option<usize>,
    /// Use bin midpoints instead of jittered depth samples.
    #[arg(long)]
    pub no_stratified: bool,
    #[arg(long)]
    pub rays: Option<usize>,
    #[arg(long)]
    pub chunk: Option<usize>,
    #[arg(long)]
    pub eval_rays: Option<usize>,
    #[arg(long)]
    pub lr_field: Option<f64>,
    #[arg(long)]
    pub lr_field_decay: Option<f64>,
    #[arg(long)]
    pub lr_field_every: Option<u64>,
    #[arg(long)]
    pub lr_camera: Option<f64>,
    #[arg(long)]
    pub lr_camera_decay: Option<f64>,
    #[arg(long)]
    pub lr_camera_every: Option<u64>,
    /// Initial focal in pixels (default: image width).
    #[arg(long)]
    pub initial_focal: Option<f64>,
    #[arg(long)]
    pub holdout_stride: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl TrainFlags {
    pub fn resolve(&self) -> TrainConfig {
        let mut c = if self.desk { TrainConfig::desk() } else { TrainConfig::default() };
        let ScheduleConfig { n_init, n_part, n_glob, xi_init, xi, pyramid_depth } = &mut c.schedule;
        set(n_init, self.n_init);
        set(n_part, self.n_part);
        set(n_glob, self.n_glob.first().copied());
        set(xi_init, self.xi_init);
        set(xi, self.xi.first().copied());
        set(pyramid_depth, self.pyramid_depth);
        let FieldConfig { layers, hidden_dim, first_layer_frequency } = &mut c.field;
        set(layers, self.layers);
        set(hidden_dim, self.hidden);
        set(first_layer_frequency, self.omega0);
        let SamplingConfig { t_near, t_far, samples_per_ray, stratified } = &mut c.sampling;
        set(t_near, self.t_near);
        set(t_far, self.t_far);
        set(samples_per_ray, self.samples);
        if self.no_stratified {
            *stratified = false;
        }
        set(&mut c.rays_per_batch, self.rays);
        set(&mut c.chunk_rays, self.chunk);
        set(&mut c.eval_rays_per_image, self.eval_rays);
        let LrSchedule { base, decay, every } = &mut c.field_lr;
        set(base, self.lr_field);
        set(decay, self.lr_field_decay);
        set(every, self.lr_field_every);
        let LrSchedule { base, decay, every } = &mut c.camera_lr;
        set(base, self.lr_camera);
        set(decay, self.lr_camera_decay);
        set(every, self.lr_camera_every);
        if self.initial_focal.is_some() {
            c.initial_focal = self.initial_focal;
        }
        set(&mut c.holdout_stride, self.holdout_stride);
        set(&mut c.seed, self.seed);
        c
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory (synthetic format or a PPM directory).
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "incremental")]
    pub mode: Mode,
    /// Focal for PPM datasets whose ground truth lacks camera.txt.
    #[arg(long)]
    pub gt_focal: Option<f64>,
    #[arg(long)]
    pub quiet: bool,
    #[command(flatten)]
    pub flags: TrainFlags,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Training output directory (poses.txt, camera.txt, field.ckpt).
    #[arg(long, required_unless_present = "poses")]
    pub run: Option<PathBuf>,
    /// Recovered poses file; overrides the run directory's.
    #[arg(long)]
    pub poses: Option<PathBuf>,
    /// Field checkpoint for PSNR; defaults to the run directory's.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Recovered focal for PSNR rendering; defaults to the run's camera.txt.
    #[arg(long)]
    pub focal: Option<f64>,
    /// Also report PSNR of re-rendered images.
    #[arg(long)]
    pub psnr: bool,
    /// PSNR over pixels with index ≡ 0 (mod stride); 0 uses every pixel.
    #[arg(long, default_value_t = 0)]
    pub holdout_stride: usize,
    #[arg(long, default_value_t = 256)]
    pub samples: usize,
    #[arg(long)]
    pub t_near: Option<f64>,
    #[arg(long)]
    pub t_far: Option<f64>,
    #[arg(long)]
    pub gt_focal: Option<f64>,
    /// Write metrics as JSON here.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub poses: PathBuf,
    #[arg(long)]
    pub focal: f64,
    #[arg(long, default_value_t = 32)]
    pub width: usize,
    #[arg(long, default_value_t = 32)]
    pub height: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 128)]
    pub samples: usize,
    #[arg(long, default_value_t = 0.1)]
    pub t_near: f64,
    #[arg(long, default_value_t = 6.0)]
    pub t_far: f64,
}

/// Sweeps the cross product of `--xi` (default 600,900) and `--nglob`
/// (default 5,10), reporting coarse and fine results for each.
#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub quiet: bool,
    #[command(flatten)]
    pub flags: TrainFlags,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Training output directory.
    #[arg(long)]
    pub run: PathBuf,
}

/// Everything needed to reproduce a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub mode: Mode,
    pub dataset: PathBuf,
    pub out: PathBuf,
    pub train: TrainConfig,
}
