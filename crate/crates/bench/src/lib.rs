//! Criterion benchmarks for the training hot paths; see `benches/`.

use posefree_core::autodiff::objective::Objective;
use posefree_core::rendering::RayBatch;
use posefree_core::{CameraPose, FieldConfig, ParameterStore, RadianceField};

/// Bin midpoints between `near` and `far`.
pub fn midpoints(near: f64, far: f64, samples: usize) -> Vec<f64> {
    let step = (far - near) / samples as f64;
    (0..samples).map(|i| near + step * (i as f64 + 0.5)).collect()
}

/// A desk-sized store and a batch of `rays` rays spread over two images.
pub fn training_fixture(rays: usize, samples: usize) -> (ParameterStore, RayBatch, Objective) {
    let config = FieldConfig { layers: 4, hidden_dim: 32, first_layer_frequency: 30.0 };
    let field = RadianceField::init(config, 7).expect("valid config");
    let poses = vec![CameraPose::identity(); 2];
    let store = ParameterStore { field, poses, focal: 16.0 };
    let t = midpoints(0.5, 4.5, samples);
    let mut batch = RayBatch::default();
    for r in 0..rays {
        let p = r % 256;
        batch.push(r % 2, [(p % 16) as f64 + 0.5, (p / 16) as f64 + 0.5], [0.5, 0.4, 0.3], t.clone());
    }
    let mut objective = Objective::new(16, 16, 4.5);
    objective.chunk_rays = 32;
    (store, batch, objective)
}
