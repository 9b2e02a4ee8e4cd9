//! Photometric Smooth-L1 objective over a ray batch, with gradients.
//!
//! The batch is split into fixed-size chunks. Each chunk gets its own tape and
//! chunks may run on any thread, but partial results are summed in chunk
//! order, so the result does not depend on the thread count.

use rayon::prelude::*;

use super::store::{Learnable, ParameterStore, StoreGradient};
use super::tensor::Tensor;
use super::{AutodiffError, Tape};
use crate::rendering::{record_render, CameraVars, RayBatch};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Objective {
    pub width: usize,
    pub height: usize,
    pub t_far: f64,
    /// Smooth-L1 transition point.
    pub beta: f64,
    /// Rays per tape.
    pub chunk_rays: usize,
}

impl Objective {
    pub fn new(width: usize, height: usize, t_far: f64) -> Self {
        Self { width, height, t_far, beta: 1.0, chunk_rays: 256 }
    }
}

fn camera_tensors(store: &ParameterStore) -> (Tensor, Tensor) {
    let n = store.poses.len();
    let rot = store.poses.iter().flat_map(|p| p.rotation.0.iter().copied().collect::<Vec<_>>()).collect();
    let trans = store.poses.iter().flat_map(|p| p.translation.iter().copied().collect::<Vec<_>>()).collect();
    (Tensor::from_vec(n, 3, rot), Tensor::from_vec(n, 3, trans))
}

fn chunk_pass(
    store: &ParameterStore,
    learnable: &Learnable,
    batch: &RayBatch,
    objective: &Objective,
    scale: f64,
    with_gradient: bool,
) -> Result<(f64, Option<StoreGradient>), AutodiffError> {
    let mut tape = Tape::new();
    let field_vars = store.field.register(&mut tape, with_gradient && learnable.theta);
    let (rot, trans) = camera_tensors(store);
    let rotations = if with_gradient && !learnable.rotations.is_empty() { tape.param(rot) } else { tape.constant(rot) };
    let translations =
        if with_gradient && !learnable.translations.is_empty() { tape.param(trans) } else { tape.constant(trans) };
    let focal = if with_gradient && learnable.focal {
        tape.param(Tensor::scalar(store.focal))
    } else {
        tape.constant(Tensor::scalar(store.focal))
    };
    let cameras = CameraVars { rotations, translations, focal };
    let rgb = record_render(
        &mut tape,
        &store.field,
        &field_vars,
        &cameras,
        objective.width,
        objective.height,
        objective.t_far,
        batch,
    );
    let loss = tape.smooth_l1(rgb, batch.target_tensor(), objective.beta, scale)?;
    let value = tape.value(loss).item();
    if !with_gradient {
        return Ok((value, None));
    }
    let grads = tape.backward(loss)?;
    let theta = learnable.theta.then(|| {
        let mut flat = Vec::with_capacity(store.field.parameter_count());
        for &(w, b) in &field_vars.layers {
            flat.extend_from_slice(&grads.wrt(w).data);
            flat.extend_from_slice(&grads.wrt(b).data);
        }
        flat
    });
    let grot = grads.wrt(rotations);
    let gtrans = grads.wrt(translations);
    let row = |t: &Tensor, i: usize| -> [f64; 3] { [t.get(i, 0), t.get(i, 1), t.get(i, 2)] };
    let gradient = StoreGradient {
        theta,
        rotations: learnable.rotations.iter().map(|&i| (i, row(&grot, i))).collect(),
        translations: learnable.translations.iter().map(|&i| (i, row(&gtrans, i))).collect(),
        focal: learnable.focal.then(|| grads.wrt(focal).item()),
    };
    Ok((value, Some(gradient)))
}

fn chunks(batch: &RayBatch, chunk_rays: usize) -> Vec<RayBatch> {
    let step = chunk_rays.max(1);
    (0..batch.len()).step_by(step).map(|s| batch.slice(s..(s + step).min(batch.len()))).collect()
}

/// Mean per-ray loss (channels summed) and its gradient over `learnable`.
pub fn loss_and_gradient(
    store: &ParameterStore,
    learnable: &Learnable,
    batch: &RayBatch,
    objective: &Objective,
) -> Result<(f64, StoreGradient), AutodiffError> {
    if batch.is_empty() {
        return Ok((0.0, StoreGradient::zeros(store, learnable)));
    }
    let scale = 1.0 / batch.len() as f64;
    let parts: Vec<_> = chunks(batch, objective.chunk_rays)
        .par_iter()
        .map(|c| chunk_pass(store, learnable, c, objective, scale, true))
        .collect();
    let mut total = 0.0;
    let mut gradient = StoreGradient::zeros(store, learnable);
    for part in parts {
        let (l, g) = part?;
        total += l;
        gradient.add_assign(&g.expect("gradient requested"));
    }
    if !total.is_finite() || !gradient.all_finite() {
        return Err(AutodiffError::NonFiniteGradient);
    }
    Ok((total, gradient))
}

/// Mean per-ray loss without building adjoints.
pub fn loss(store: &ParameterStore, batch: &RayBatch, objective: &Objective) -> Result<f64, AutodiffError> {
    if batch.is_empty() {
        return Ok(0.0);
    }
    let scale = 1.0 / batch.len() as f64;
    let frozen = Learnable::frozen();
    let parts: Vec<_> = chunks(batch, objective.chunk_rays)
        .par_iter()
        .map(|c| chunk_pass(store, &frozen, c, objective, scale, false))
        .collect();
    let mut total = 0.0;
    for part in parts {
        total += part?.0;
    }
    Ok(total)
}
