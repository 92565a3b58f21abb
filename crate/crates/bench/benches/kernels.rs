use criterion::{black_box, criterion_group, criterion_main, Criterion};
use kahler_bench::{conj_curve, product_conj, torus_mesh};
use kahler_core::angles::angle_data;
use kahler_core::flow::volume_and_gradient;
use kahler_core::identities::{find_check, run_check};
use kahler_core::tensor::{polar_decompose_skew, two_form_to_operator};
use kahler_core::MetricTensor;
use nalgebra::DMatrix;

fn pointwise(c: &mut Criterion) {
    let (curve, p) = conj_curve();
    c.bench_function("angle_data/conj-curve", |b| b.iter(|| angle_data(black_box(&curve), black_box(&p)).unwrap()));

    let form = DMatrix::from_fn(6, 6, |i, j| ((i as f64) - (j as f64)) * 0.1 + if i < j { 0.05 } else { -0.05 } * ((i + j) % 3) as f64);
    let form = (&form - form.transpose()) * 0.5;
    let g = MetricTensor::identity(6);
    c.bench_function("polar_decompose/6x6", |b| {
        b.iter(|| {
            let op = two_form_to_operator(black_box(&form), &g).unwrap();
            polar_decompose_skew(&op).unwrap()
        })
    });

    let weitz = find_check("weitzenbock").unwrap();
    c.bench_function("check/weitzenbock/conj-curve", |b| b.iter(|| run_check(weitz, &curve, &p, 0, None)));

    let (prod, q) = product_conj();
    let general = find_check("delta-kappa-general").unwrap();
    let mut group = c.benchmark_group("slow");
    group.sample_size(10);
    group.bench_function("check/delta-kappa-general/product-conj", |b| b.iter(|| run_check(general, &prod, &q, 0, None)));
    group.finish();
}

fn flow(c: &mut Criterion) {
    let mesh = torus_mesh(32);
    c.bench_function("volume_and_gradient/32x32", |b| b.iter(|| volume_and_gradient(black_box(&mesh)).unwrap()));
}

criterion_group!(kernels, pointwise, flow);
criterion_main!(kernels);
