use criterion::{criterion_group, criterion_main, Criterion};
use npl::parallel::Execution;
use npl::sim::{run_lr_null_experiment, run_table_experiment, ExperimentConfig};

fn table(c: &mut Criterion) {
    let config = ExperimentConfig::new(200, 16, 11);
    let mut group = c.benchmark_group("table_replicates");
    group.sample_size(10);
    group.bench_function("serial", |b| {
        b.iter(|| run_table_experiment(&config, Execution::Serial).unwrap())
    });
    group.bench_function("parallel", |b| {
        b.iter(|| run_table_experiment(&config, Execution::Parallel).unwrap())
    });
    group.finish();
}

fn lr_null(c: &mut Criterion) {
    let config = ExperimentConfig::new(200, 16, 12);
    let mut group = c.benchmark_group("lr_null_replicates");
    group.sample_size(10);
    group.bench_function("serial", |b| {
        b.iter(|| run_lr_null_experiment(&config, Execution::Serial).unwrap())
    });
    group.bench_function("parallel", |b| {
        b.iter(|| run_lr_null_experiment(&config, Execution::Parallel).unwrap())
    });
    group.finish();
}

criterion_group!(benches, table, lr_null);
criterion_main!(benches);
