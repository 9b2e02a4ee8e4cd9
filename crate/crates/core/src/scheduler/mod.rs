//! Incremental training: initialization on the first few images, then per
//! image localization, windowed partial refinement and periodic global
//! refinement, run on the coarsest pyramid level and refined globally at each
//! finer level.

mod config;
mod data;
mod log;

pub use config::{ScheduleConfig, TrainConfig};
pub use data::{is_held_out, LevelData, TrainingSet};
pub use log::{read_log, write_log, Phase, PhaseRecord};

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{loss, loss_and_gradient, AdamState, AutodiffError, Learnable, Objective, ParameterStore};
use crate::field::{FieldError, RadianceField};
use crate::geometry::{CameraPose, GeometryError};
use crate::rendering::{sample_ray, RayBatch};
use crate::synthdata::SceneDataset;

#[derive(Debug, thiserror::Error)]
pub enum SchedulerError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{phase} diverged at level {level}{}", image.map(|i| format!(" on image {i}")).unwrap_or_default())]
    Diverged { phase: Phase, image: Option<usize>, level: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Poses and focal at the end of one pyramid level.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelSnapshot {
    pub level: usize,
    pub poses: Vec<CameraPose>,
    /// Focal at the finest resolution.
    pub focal: f64,
}

pub type PhaseObserver = Box<dyn FnMut(&PhaseRecord)>;

/// Everything the scheduler mutates.
pub struct TrainState {
    /// Registered images, always a prefix of the sequence.
    pub registered: Vec<usize>,
    pub store: ParameterStore,
    pub field_optimizer: AdamState,
    pub rotation_optimizers: Vec<AdamState>,
    pub translation_optimizers: Vec<AdamState>,
    pub focal_optimizer: AdamState,
    /// Current pyramid level, 0 = coarsest.
    pub level: usize,
    pub log: Vec<PhaseRecord>,
    pub total_epochs: u64,
    pub snapshots: Vec<LevelSnapshot>,
    rng: ChaCha8Rng,
    observer: Option<PhaseObserver>,
}

impl std::fmt::Debug for TrainState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TrainState")
            .field("registered", &self.registered)
            .field("level", &self.level)
            .field("total_epochs", &self.total_epochs)
            .field("focal", &self.store.focal)
            .finish_non_exhaustive()
    }
}

impl TrainState {
    /// Fresh state: identity poses, initial focal scaled to `level`.
    pub fn new(config: &TrainConfig, set: &TrainingSet) -> Result<Self, SchedulerError> {
        config.validate()?;
        let field = RadianceField::init(config.field, config.seed)?;
        let n = set.image_count();
        let finest_focal = config.initial_focal.unwrap_or(set.finest().width as f64);
        let focal = finest_focal / set.scale_to_finest(0);
        Ok(Self {
            registered: Vec::new(),
            field_optimizer: AdamState::new(field.parameter_count()),
            store: ParameterStore { field, poses: vec![CameraPose::identity(); n], focal },
            rotation_optimizers: vec![AdamState::new(3); n],
            translation_optimizers: vec![AdamState::new(3); n],
            focal_optimizer: AdamState::new(1),
            level: 0,
            log: Vec::new(),
            total_epochs: 0,
            snapshots: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_ba7c_4000_0001),
            observer: None,
        })
    }

    /// Called with every phase record as soon as the phase ends.
    pub fn set_observer(&mut self, observer: PhaseObserver) {
        self.observer = Some(observer);
    }

    /// Focal in pixels of the finest level.
    pub fn finest_focal(&self, set: &TrainingSet) -> f64 {
        self.store.focal * set.scale_to_finest(self.level)
    }

    fn snapshot(&mut self, set: &TrainingSet) {
        let snapshot = LevelSnapshot { level: self.level, poses: self.store.poses.clone(), focal: self.finest_focal(set) };
        self.snapshots.push(snapshot);
    }
}

struct PhaseSpec {
    phase: Phase,
    image: Option<usize>,
    active: Vec<usize>,
    learnable: Learnable,
    epochs: usize,
}

/// Fixed, noise-free rays over `active` used for phase start/end losses.
fn evaluation_batch(data: &LevelData, active: &[usize], config: &TrainConfig) -> RayBatch {
    let sampling = config.sampling.deterministic();
    let t = sample_ray(&sampling, &mut ChaCha8Rng::seed_from_u64(0));
    let pixels = data.width * data.height;
    let stride = pixels.div_ceil(config.eval_rays_per_image.max(1)).max(1);
    let mut batch = RayBatch::default();
    for &i in active {
        for p in (0..pixels).step_by(stride) {
            batch.push(i, data.pixel_coords(p), data.target(i, p), t.clone());
        }
    }
    batch
}

/// Training rays: every trainable pixel of the active set when it fits in one
/// batch, otherwise a uniform draw with replacement.
fn training_batch(data: &LevelData, active: &[usize], config: &TrainConfig, rng: &mut ChaCha8Rng) -> RayBatch {
    let pixels = data.trainable_pixels(config.holdout_stride);
    let total = pixels.len() * active.len();
    let mut batch = RayBatch::default();
    let mut push = |k: usize, rng: &mut ChaCha8Rng| {
        let (i, p) = (active[k / pixels.len()], pixels[k % pixels.len()]);
        batch.push(i, data.pixel_coords(p), data.target(i, p), sample_ray(&config.sampling, rng));
    };
    if total <= config.rays_per_batch {
        for k in 0..total {
            push(k, rng);
        }
    } else {
        for _ in 0..config.rays_per_batch {
            let k = rng.random_range(0..total);
            push(k, rng);
        }
    }
    batch
}

fn objective(data: &LevelData, config: &TrainConfig) -> Objective {
    let mut o = Objective::new(data.width, data.height, config.sampling.t_far);
    o.chunk_rays = config.chunk_rays;
    o
}

fn run_phase(state: &mut TrainState, set: &TrainingSet, config: &TrainConfig, spec: PhaseSpec) -> Result<(), SchedulerError> {
    let data = set.level(state.level);
    let obj = objective(data, config);
    let diverged = || SchedulerError::Diverged { phase: spec.phase, image: spec.image, level: state.level };
    let eval = evaluation_batch(data, &spec.active, config);
    let clock = Instant::now();
    let start_loss = loss(&state.store, &eval, &obj).map_err(|_| diverged())?;
    if !start_loss.is_finite() {
        return Err(diverged());
    }
    for epoch in 0..spec.epochs as u64 {
        let batch = training_batch(data, &spec.active, config, &mut state.rng);
        let (value, grad) = match loss_and_gradient(&state.store, &spec.learnable, &batch, &obj) {
            Ok(r) => r,
            Err(AutodiffError::NonFiniteGradient | AutodiffError::Domain(_)) => return Err(diverged()),
        };
        if !value.is_finite() {
            return Err(diverged());
        }
        let field_lr = config.field_lr.lr_at(epoch);
        let camera_lr = config.camera_lr.lr_at(epoch);
        if let Some(g) = &grad.theta {
            state.field_optimizer.step(&mut state.store.field.params, g, field_lr);
        }
        for &(i, g) in &grad.rotations {
            state.rotation_optimizers[i].step(state.store.poses[i].rotation.0.as_mut_slice(), &g, camera_lr);
        }
        for &(i, g) in &grad.translations {
            state.translation_optimizers[i].step(state.store.poses[i].translation.as_mut_slice(), &g, camera_lr);
        }
        if let Some(g) = grad.focal {
            let mut f = [state.store.focal];
            state.focal_optimizer.step(&mut f, &[g], camera_lr);
            state.store.focal = f[0];
        }
        state.total_epochs += 1;
    }
    let end_loss = loss(&state.store, &eval, &obj).map_err(|_| diverged())?;
    if !end_loss.is_finite() || !state.store.field.all_finite() || !state.store.focal.is_finite() {
        return Err(diverged());
    }
    let record = PhaseRecord {
        phase: spec.phase,
        image: spec.image,
        level: state.level,
        epochs: spec.epochs,
        registered: state.registered.len(),
        start_loss,
        end_loss,
        wall_seconds: clock.elapsed().as_secs_f64(),
    };
    if let Some(observer) = state.observer.as_mut() {
        observer(&record);
    }
    state.log.push(record);
    Ok(())
}

/// Fits the field, translations of the first `n_init` images and the focal;
/// rotations stay at identity. Keeps image 0 and discards the other poses.
pub fn initialize(state: &mut TrainState, set: &TrainingSet, config: &TrainConfig) -> Result<(), SchedulerError> {
    let n = config.schedule.n_init.min(set.image_count());
    if !state.registered.is_empty() {
        return Err(SchedulerError::Config("initialize needs an empty registered set".into()));
    }
    let window: Vec<usize> = (0..n).collect();
    run_phase(
        state,
        set,
        config,
        PhaseSpec {
            phase: Phase::Init,
            image: None,
            active: window.clone(),
            learnable: Learnable::new(true, vec![], window, true),
            epochs: config.schedule.xi_init,
        },
    )?;
    for i in 1..n {
        state.store.poses[i] = CameraPose::identity();
        state.rotation_optimizers[i].reset();
        state.translation_optimizers[i].reset();
    }
    state.registered.push(0);
    Ok(())
}

/// Registers the next image: copies the previous pose, then fits only that
/// pose against the frozen field and focal.
pub fn localize(state: &mut TrainState, set: &TrainingSet, config: &TrainConfig) -> Result<usize, SchedulerError> {
    let n = state.registered.len();
    if n == 0 || n >= set.image_count() {
        return Err(SchedulerError::Config(format!("cannot localize image {n}")));
    }
    state.store.poses[n] = state.store.poses[n - 1];
    state.rotation_optimizers[n].reset();
    state.translation_optimizers[n].reset();
    state.registered.push(n);
    run_phase(
        state,
        set,
        config,
        PhaseSpec {
            phase: Phase::Localize,
            image: Some(n),
            active: vec![n],
            learnable: Learnable::new(false, vec![n], vec![n], false),
            epochs: config.schedule.xi,
        },
    )?;
    Ok(n)
}

/// The last `n_part` registered images (fewer at the start of the sequence).
pub fn partial_window(registered: &[usize], n_part: usize) -> Vec<usize> {
    registered[registered.len().saturating_sub(n_part)..].to_vec()
}

/// Refines the field with the poses of the most recent window; focal frozen.
pub fn partial_optimize(state: &mut TrainState, set: &TrainingSet, config: &TrainConfig) -> Result<(), SchedulerError> {
    let window = partial_window(&state.registered, config.schedule.n_part);
    let image = state.registered.last().copied();
    run_phase(
        state,
        set,
        config,
        PhaseSpec {
            phase: Phase::Partial,
            image,
            active: window.clone(),
            learnable: Learnable::new(true, window.clone(), window, false),
            epochs: config.schedule.xi,
        },
    )
}

/// Refines the field, every registered pose and the focal.
pub fn global_optimize(state: &mut TrainState, set: &TrainingSet, config: &TrainConfig) -> Result<(), SchedulerError> {
    let all = state.registered.clone();
    let image = all.last().copied();
    run_phase(
        state,
        set,
        config,
        PhaseSpec {
            phase: Phase::Global,
            image,
            active: all.clone(),
            learnable: Learnable::new(true, all.clone(), all, true),
            epochs: config.schedule.xi,
        },
    )
}

/// Registers every remaining image at the current level, triggering global
/// refinement whenever the registered count is a multiple of `n_glob`.
pub fn run_incremental(state: &mut TrainState, set: &TrainingSet, config: &TrainConfig) -> Result<(), SchedulerError> {
    if state.registered.is_empty() {
        initialize(state, set, config)?;
    }
    while state.registered.len() < set.image_count() {
        localize(state, set, config)?;
        partial_optimize(state, set, config)?;
        if state.registered.len() % config.schedule.n_glob == 0 {
            global_optimize(state, set, config)?;
        }
    }
    Ok(())
}

fn advance_level(state: &mut TrainState, set: &TrainingSet) {
    let before = set.scale_to_finest(state.level);
    state.level += 1;
    state.store.focal *= before / set.scale_to_finest(state.level);
}

/// Incremental pipeline on the coarsest level, then one global refinement per
/// finer level. A snapshot is recorded at the end of every level.
pub fn coarse_to_fine(set: &TrainingSet, config: &TrainConfig) -> Result<TrainState, SchedulerError> {
    let mut state = TrainState::new(config, set)?;
    coarse_to_fine_with(&mut state, set, config)?;
    Ok(state)
}

/// As [`coarse_to_fine`] on a caller-provided fresh state (e.g. with an
/// observer attached).
pub fn coarse_to_fine_with(state: &mut TrainState, set: &TrainingSet, config: &TrainConfig) -> Result<(), SchedulerError> {
    run_incremental(state, set, config)?;
    state.snapshot(set);
    while state.level + 1 < set.depth() {
        advance_level(state, set);
        global_optimize(state, set, config)?;
        state.snapshot(set);
    }
    Ok(())
}

/// All-at-once baseline: every pose (from identity), the focal and the field
/// are optimized together on the coarsest level for the incremental
/// pipeline's coarse-level budget, followed by the same per-level global
/// refinements, so the total epoch count matches exactly.
pub fn joint_baseline(set: &TrainingSet, config: &TrainConfig) -> Result<TrainState, SchedulerError> {
    let mut state = TrainState::new(config, set)?;
    joint_baseline_with(&mut state, set, config)?;
    Ok(state)
}

pub fn joint_baseline_with(state: &mut TrainState, set: &TrainingSet, config: &TrainConfig) -> Result<(), SchedulerError> {
    let n = set.image_count();
    let all: Vec<usize> = (0..n).collect();
    state.registered = all.clone();
    let coarse_budget = config.schedule.coarse_budget(n);
    run_phase(
        state,
        set,
        config,
        PhaseSpec {
            phase: Phase::Joint,
            image: None,
            active: all.clone(),
            learnable: Learnable::new(true, all.clone(), all, true),
            epochs: coarse_budget as usize,
        },
    )?;
    state.snapshot(set);
    while state.level + 1 < set.depth() {
        advance_level(state, set);
        global_optimize(state, set, config)?;
        state.snapshot(set);
    }
    Ok(())
}

/// Builds the pyramid and runs the incremental pipeline in one call.
pub fn train(dataset: &SceneDataset, config: &TrainConfig) -> Result<TrainState, SchedulerError> {
    let set = TrainingSet::new(dataset, config.schedule.pyramid_depth)?;
    coarse_to_fine(&set, config)
}
