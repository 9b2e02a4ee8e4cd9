//! Camera-parameter-free radiance field training.
//!
//! Images are registered one at a time: a new image is first localized against
//! the frozen field, then refined together with its neighbours, and every few
//! registrations everything is refined jointly. Training runs coarse to fine
//! over an image pyramid. Poses and a shared focal length are recovered along
//! with the field, and are evaluated after a similarity alignment to ground
//! truth.

pub mod autodiff;
pub mod evaluation;
pub mod field;
pub mod geometry;
pub mod image;
pub mod rendering;
pub mod scheduler;
pub mod synthdata;

pub use autodiff::{AdamState, Learnable, LrSchedule, ParameterStore};
pub use evaluation::{evaluate_trajectory, psnr, Sim3, TrajectoryMetrics};
pub use field::{FieldConfig, RadianceField};
pub use geometry::{AxisAngle, CameraPose, ImagePyramid, Intrinsics};
pub use image::Image;
pub use rendering::{RadianceSource, SamplingConfig};
pub use scheduler::{ScheduleConfig, TrainConfig, TrainState};
pub use synthdata::{SceneDataset, SynthSpec, TrajectoryKind};
