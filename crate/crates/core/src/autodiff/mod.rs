//! Reverse-mode differentiation, the Smooth-L1 photometric objective and the
//! Adam optimizer with step-decay schedules.

pub mod adam;
pub mod fastmath;
pub mod objective;
pub mod store;
pub mod tape;
pub mod tensor;

pub use adam::{lr_at, AdamState, LrSchedule};
pub use objective::{loss, loss_and_gradient, Objective};
pub use store::{Learnable, ParameterStore, StoreGradient};
pub use tape::{smooth_l1_derivative, smooth_l1_value, Gradients, Tape, Var};
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum AutodiffError {
    #[error("non-finite gradient")]
    NonFiniteGradient,
    #[error("{0}")]
    Domain(String),
}

/// Smooth-L1 loss of one scalar prediction.
pub fn smooth_l1(predicted: f64, target: f64, beta: f64) -> Result<f64, AutodiffError> {
    if !(beta > 0.0) {
        return Err(AutodiffError::Domain(format!("smooth-L1 beta must be positive, got {beta}")));
    }
    Ok(smooth_l1_value(target - predicted, beta))
}
