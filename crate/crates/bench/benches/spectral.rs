use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dpp_core::spectral::build_operator;
use dpp_core::KernelModel;
use std::hint::black_box;

fn bench_nystrom(c: &mut Criterion) {
    let model = KernelModel::gaussian(1, 1.0, 0.3).unwrap();
    let mut group = c.benchmark_group("nystrom_d1");
    group.sample_size(10);
    for n in [48usize, 96, 192] {
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, &n| {
            b.iter(|| black_box(build_operator(&model, 2.0, n).unwrap().trace()))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_nystrom);
criterion_main!(benches);
