use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use sta_core::model::{elbo_graph, ElboNoise, FrameBatch, StaConfig, StaModel, Stage};
use sta_core::nn::{Adam, AdamConfig};
use sta_core::rng::seeded;
use sta_core::transforms::{default_spec, generate_dataset, DatasetConfig, TransformKind};
use sta_core::{grad, Tensor};

fn train_step(c: &mut Criterion) {
    let mut cfg = StaConfig::new(8, 2, 8);
    cfg.hidden = 64;
    cfg.flow_hidden = 64;
    let kinds = [TransformKind::TranslateX, TransformKind::Scale];
    let data = generate_dataset(&DatasetConfig::new(kinds.iter().map(|&k| default_spec(k)).collect(), 32, 8, 1)).unwrap();
    let batch = FrameBatch::from_sequences(&data, &(0..32).collect::<Vec<_>>()).unwrap();
    let mut model = StaModel::new(cfg, &mut seeded(2)).unwrap();
    let mut adam = Adam::new(AdamConfig::default());
    let mut rng = seeded(3);

    let mut g = c.benchmark_group("train_step");
    g.sample_size(10);
    for (name, stage) in [("stage1", Stage::One), ("stage2", Stage::Two)] {
        g.bench_function(format!("{name}_b32_t8_h64"), |bench| {
            bench.iter(|| {
                let noise = ElboNoise::sample(&model, batch.batch, batch.steps, &mut rng);
                let graph = elbo_graph(&model, &batch, &noise, stage).unwrap();
                let inputs: Vec<Tensor> = model.parameters().iter().map(|p| p.tensor.clone()).collect();
                let grads = grad(&graph.loss, &inputs, false).unwrap();
                adam.update(&mut model.parameters_mut(), &grads).unwrap();
                black_box(graph.breakdown.total)
            })
        });
    }
    g.finish();
}

criterion_group!(benches, train_step);
criterion_main!(benches);
