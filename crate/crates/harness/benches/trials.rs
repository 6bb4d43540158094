use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use martsparse_harness::{run, Config, Execution};

fn corpus(trials: u64) -> Config {
    let mut cfg = Config::default();
    cfg.trials = trials;
    cfg.tree.depth = 8;
    cfg
}

fn sequential_vs_parallel(c: &mut Criterion) {
    let mut group = c.benchmark_group("verify");
    group.sample_size(10);
    for trials in [64u64, 256] {
        let cfg = corpus(trials);
        group.bench_with_input(BenchmarkId::new("sequential", trials), &cfg, |b, cfg| {
            b.iter(|| run(cfg, Execution::Sequential).expect("corpus runs"))
        });
        #[cfg(feature = "parallel")]
        group.bench_with_input(BenchmarkId::new("parallel", trials), &cfg, |b, cfg| {
            b.iter(|| run(cfg, Execution::Parallel).expect("corpus runs"))
        });
    }
    group.finish();
}

criterion_group!(benches, sequential_vs_parallel);
criterion_main!(benches);
