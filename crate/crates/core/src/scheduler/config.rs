use serde::{Deserialize, Serialize};

use super::SchedulerError;
use crate::autodiff::LrSchedule;
use crate::field::FieldConfig;
use crate::rendering::SamplingConfig;

/// Image counts and per-phase epoch budgets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    /// Images used by initialization.
    pub n_init: usize,
    /// Partial-refinement window.
    pub n_part: usize,
    /// Global refinement runs whenever the registered count is a multiple of this.
    pub n_glob: usize,
    pub xi_init: usize,
    /// Epochs of every localization, partial, global and per-level phase.
    pub xi: usize,
    /// Pyramid levels; 1 trains at full resolution only.
    pub pyramid_depth: usize,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self { n_init: 3, n_part: 3, n_glob: 5, xi_init: 3000, xi: 900, pyramid_depth: 3 }
    }
}

impl ScheduleConfig {
    pub fn validate(&self) -> Result<(), SchedulerError> {
        let bad = |m: &str| Err(SchedulerError::Config(m.into()));
        if self.n_init < 2 {
            return bad("n_init must be >= 2");
        }
        if self.n_part < 1 || self.n_glob < 1 {
            return bad("n_part and n_glob must be >= 1");
        }
        if self.xi_init < 1 || self.xi < 1 {
            return bad("epoch budgets must be >= 1");
        }
        if self.pyramid_depth < 1 {
            return bad("pyramid_depth must be >= 1");
        }
        Ok(())
    }

    /// Number of global refinements the incremental loop triggers for `images`.
    pub fn global_triggers(&self, images: usize) -> usize {
        (2..=images).filter(|k| k % self.n_glob == 0).count()
    }

    /// Epochs spent on the coarsest level for `images` images.
    pub fn coarse_budget(&self, images: usize) -> u64 {
        let registrations = images.saturating_sub(1);
        (self.xi_init + 2 * self.xi * registrations + self.xi * self.global_triggers(images)) as u64
    }

    /// Total epochs of the coarse-to-fine pipeline.
    pub fn total_budget(&self, images: usize) -> u64 {
        self.coarse_budget(images) + (self.xi * (self.pyramid_depth - 1)) as u64
    }
}

/// Complete training configuration; serialized verbatim next to every run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub schedule: ScheduleConfig,
    pub field: FieldConfig,
    pub sampling: SamplingConfig,
    /// Rays per optimizer step.
    pub rays_per_batch: usize,
    /// Rays per differentiation chunk; affects speed only.
    pub chunk_rays: usize,
    /// Fixed rays per image for phase start/end losses.
    pub eval_rays_per_image: usize,
    pub field_lr: LrSchedule,
    pub camera_lr: LrSchedule,
    /// Initial focal in finest-level pixels; defaults to the image width.
    pub initial_focal: Option<f64>,
    /// Every pixel whose flat index is a multiple of this is excluded from
    /// training (0 disables the hold-out).
    pub holdout_stride: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            schedule: ScheduleConfig::default(),
            field: FieldConfig::default(),
            sampling: SamplingConfig::default(),
            rays_per_batch: 1024,
            chunk_rays: 256,
            eval_rays_per_image: 256,
            field_lr: LrSchedule::FIELD,
            camera_lr: LrSchedule::CAMERA,
            initial_focal: None,
            holdout_stride: 0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Small field and sampling budget for 32×32 synthetic scenes; schedule
    /// and optimizer constants are unchanged.
    pub fn desk() -> Self {
        Self {
            field: FieldConfig { layers: 4, hidden_dim: 32, first_layer_frequency: 30.0 },
            sampling: SamplingConfig { t_near: 0.5, t_far: 4.5, samples_per_ray: 24, stratified: true },
            rays_per_batch: 128,
            chunk_rays: 64,
            eval_rays_per_image: 64,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SchedulerError> {
        self.schedule.validate()?;
        self.field.validate()?;
        self.sampling.validate().map_err(SchedulerError::Config)?;
        if self.rays_per_batch == 0 || self.chunk_rays == 0 {
            return Err(SchedulerError::Config("ray counts must be positive".into()));
        }
        for s in [&self.field_lr, &self.camera_lr] {
            if !(s.base > 0.0 && s.decay > 0.0 && s.every > 0) {
                return Err(SchedulerError::Config(format!("invalid learning-rate schedule {s:?}")));
            }
        }
        if let Some(f) = self.initial_focal {
            if !(f > 0.0 && f.is_finite()) {
                return Err(SchedulerError::Config(format!("initial focal must be positive, got {f}")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_budget_formula() {
        let s = ScheduleConfig::default();
        assert_eq!(s.global_triggers(10), 2);
        assert_eq!(s.global_triggers(4), 0);
        // 3000 + 9·1800 + 2·900 + 2·900
        assert_eq!(s.total_budget(10), 22_800);
        let every = ScheduleConfig { n_glob: 1, ..s };
        assert_eq!(every.global_triggers(3), 2);
    }

    #[test]
    fn invalid_configs() {
        let s = ScheduleConfig::default();
        assert!(ScheduleConfig { n_init: 1, ..s }.validate().is_err());
        assert!(ScheduleConfig { xi: 0, ..s }.validate().is_err());
        assert!(ScheduleConfig { pyramid_depth: 0, ..s }.validate().is_err());
        assert!(TrainConfig { initial_focal: Some(-1.0), ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig::desk().validate().is_ok());
    }
}
