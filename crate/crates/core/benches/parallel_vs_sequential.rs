use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use iqahead::activations::ActivationKind;
use iqahead::data::gen_synthetic;
use iqahead::head::{HeadConfig, HeadModel};
use iqahead::parallel::Execution;
use iqahead::trainer::{train_sweep, TrainConfig};

const MODES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn bench_predict(c: &mut Criterion) {
    let ds = gen_synthetic(4096, 64, 8, 0.05).unwrap();
    let mut cfg = HeadConfig::new(64, ActivationKind::Gated, ActivationKind::Gated);
    cfg.init_seed = 8;
    let model = HeadModel::build(cfg).unwrap();
    let mut group = c.benchmark_group("predict_4096x64");
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| model.predict_with(&ds.features, exec).unwrap())
        });
    }
    group.finish();
}

fn bench_seed_sweep(c: &mut Criterion) {
    let ds = gen_synthetic(240, 32, 8, 0.05).unwrap();
    let config = TrainConfig {
        hidden_dim: 64,
        epochs: 3,
        telemetry: false,
        ..TrainConfig::gated()
    };
    let mut group = c.benchmark_group("seed_sweep_3x3_epochs");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| train_sweep(&config, &ds, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_predict, bench_seed_sweep);
criterion_main!(benches);
