use criterion::{criterion_group, criterion_main, Criterion};
use dpp_bench::unit_square;
use dpp_core::estimators::radius_grid;
use dpp_core::{pcf_hat_grid, sample_poisson, SmoothingKernel};
use std::hint::black_box;

fn bench_pcf(c: &mut Criterion) {
    let p = sample_poisson(1000.0, &unit_square(), 3).unwrap();
    let k = SmoothingKernel::default();
    let rs = radius_grid((0.01, 0.2), 50);
    c.bench_function("pcf_hat_grid_1000_points", |b| {
        b.iter(|| black_box(pcf_hat_grid(&p, &rs, 0.005, &k).unwrap().ghat[0]))
    });
}

criterion_group!(benches, bench_pcf);
criterion_main!(benches);
