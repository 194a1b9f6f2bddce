use criterion::{criterion_group, criterion_main, Criterion};
use dpp_bench::{bessel_2d, gaussian_2d, unit_square};
use dpp_core::{DppSampler, SamplerConfig};
use std::hint::black_box;

fn bench_sampler(c: &mut Criterion) {
    let w = unit_square();
    let mut group = c.benchmark_group("sampler");
    group.sample_size(10);
    for (name, model) in [("gaussian_unit_square", gaussian_2d()), ("bessel_unit_square", bessel_2d())] {
        let s = DppSampler::new(&model, &w, &SamplerConfig::default()).unwrap();
        let mut seed = 0u64;
        group.bench_function(name, |b| {
            b.iter(|| {
                seed += 1;
                black_box(s.sample_seeded(seed).len())
            })
        });
    }
    group.finish();
}

criterion_group!(benches, bench_sampler);
criterion_main!(benches);
