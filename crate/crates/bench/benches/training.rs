use criterion::{criterion_group, criterion_main, Criterion};
use posefree_bench::training_fixture;
use posefree_core::autodiff::objective::{loss, loss_and_gradient};
use posefree_core::rendering::render_image;
use posefree_core::{Intrinsics, Learnable, SamplingConfig};

fn objective(c: &mut Criterion) {
    let (store, batch, objective) = training_fixture(128, 24);
    let all = Learnable::new(true, vec![0, 1], vec![0, 1], true);
    let cameras = Learnable::new(false, vec![1], vec![1], false);
    c.bench_function("loss_and_gradient/128x24/all", |b| b.iter(|| loss_and_gradient(&store, &all, &batch, &objective)));
    c.bench_function("loss_and_gradient/128x24/one_pose", |b| {
        b.iter(|| loss_and_gradient(&store, &cameras, &batch, &objective))
    });
    c.bench_function("loss/128x24", |b| b.iter(|| loss(&store, &batch, &objective)));
}

fn rendering(c: &mut Criterion) {
    let (store, _, _) = training_fixture(1, 1);
    let sampling = SamplingConfig { t_near: 0.5, t_far: 4.5, samples_per_ray: 32, stratified: false };
    let intrinsics = Intrinsics::new(16.0, 16, 16);
    c.bench_function("render_image/16x16x32", |b| {
        b.iter(|| render_image(&store.field, &store.poses[0], &intrinsics, &sampling, 0.5))
    });
}

criterion_group!(benches, objective, rendering);
criterion_main!(benches);
