use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use posefree_core::autodiff::fastmath::sin_cos_scaled;
use posefree_core::evaluation::evaluate_trajectory;
use posefree_core::synthdata::{generate_trajectory, TrajectoryKind, TrajectoryParams};
use posefree_core::{AxisAngle, CameraPose};

fn sin_cos(c: &mut Criterion) {
    let x: Vec<f64> = (0..4096).map(|i| (i as f64 - 2048.0) * 1e-3).collect();
    c.bench_function("sin_cos_scaled/4096", |b| b.iter(|| sin_cos_scaled(black_box(&x), 30.0)));
    c.bench_function("std_sin_cos/4096", |b| {
        b.iter(|| black_box(&x).iter().map(|v| (30.0 * v).sin_cos()).collect::<Vec<_>>())
    });
}

fn alignment(c: &mut Criterion) {
    let params = TrajectoryParams { step: 15.0, radius: 2.5, fov_deg: 53.0, width: 32 };
    let reference = generate_trajectory(TrajectoryKind::Arc, 12, &params).expect("valid").poses;
    let estimated: Vec<CameraPose> = reference
        .iter()
        .map(|p| {
            let r = AxisAngle(p.rotation.0 * 0.9);
            CameraPose { rotation: r, translation: p.translation * 0.3 }
        })
        .collect();
    c.bench_function("evaluate_trajectory/12", |b| b.iter(|| evaluate_trajectory(black_box(&estimated), &reference)));
}

criterion_group!(benches, sin_cos, alignment);
criterion_main!(benches);
