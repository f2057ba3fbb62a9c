use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use ifmr::sim::{self, Antennas, Scheme, SimConfig};

fn config(n: usize) -> SimConfig {
    SimConfig {
        k: 3,
        nt: Antennas::Same(n),
        nr: Antennas::Same(n),
        snr_grid_db: vec![0.0, 15.0, 30.0],
        trials: 16,
        seed: 5,
        schemes: vec![Scheme::Ifmr, Scheme::Iflr, Scheme::Mmse, Scheme::Zf],
        ..SimConfig::default()
    }
}

fn sweep(c: &mut Criterion) {
    let mut group = c.benchmark_group("rate_sweep");
    group.sample_size(10);
    for n in [1, 2] {
        let cfg = config(n);
        group.bench_with_input(BenchmarkId::new("sequential", n), &cfg, |b, cfg| {
            b.iter(|| sim::run_sequential(black_box(cfg)).unwrap())
        });
        #[cfg(feature = "parallel")]
        group.bench_with_input(BenchmarkId::new("parallel", n), &cfg, |b, cfg| {
            b.iter(|| sim::run_parallel(black_box(cfg)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, sweep);
criterion_main!(benches);
