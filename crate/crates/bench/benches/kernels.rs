use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use sta_core::flows::{FlowConfig, FlowFieldBank, Needs};
use sta_core::rng::seeded;
use sta_core::{grad, Tensor};

fn filled(shape: &[usize], salt: f64) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|i| ((i as f64 + salt) * 0.618).sin()).collect();
    Tensor::from_vec(data, shape).unwrap()
}

fn matmul(c: &mut Criterion) {
    let mut g = c.benchmark_group("matmul");
    for &(m, k, n) in &[(64, 64, 64), (288, 128, 3072), (256, 6144, 128)] {
        let a = filled(&[m, k], 0.0);
        let b = filled(&[k, n], 1.0);
        g.bench_with_input(BenchmarkId::from_parameter(format!("{m}x{k}x{n}")), &(a, b), |bench, (a, b)| {
            bench.iter(|| black_box(a.matmul(b).unwrap()))
        });
    }
    g.finish();
}

fn matmul_backward(c: &mut Criterion) {
    let a = filled(&[288, 128], 0.0).requiring_grad();
    let b = filled(&[128, 3072], 1.0).requiring_grad();
    c.bench_function("matmul_backward/288x128x3072", |bench| {
        bench.iter(|| {
            let loss = a.matmul(&b).unwrap().sum().unwrap();
            black_box(grad(&loss, &[a.clone(), b.clone()], false).unwrap())
        })
    });
}

fn jets(c: &mut Criterion) {
    let mut g = c.benchmark_group("field_jets");
    for &(d, hidden) in &[(8, 64), (8, 128)] {
        let mut cfg = FlowConfig::new(d, 2);
        cfg.hidden = hidden;
        let bank = FlowFieldBank::new(&cfg, &mut seeded(1)).unwrap();
        let z = filled(&[32, d], 2.0);
        g.bench_with_input(BenchmarkId::from_parameter(format!("d{d}_h{hidden}_b32")), &z, |bench, z| {
            bench.iter(|| black_box(bank.evaluate_all(z, 3.0, Needs::ALL).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, matmul, matmul_backward, jets);
criterion_main!(benches);
