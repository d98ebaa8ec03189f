use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use proboost::nn::{build_dense_stack, LearnerMode};
use proboost::numerics::{PrngStream, Tensor};
use proboost::parallel::{map_range, map_range_sequential};

fn mc_forward(c: &mut Criterion) {
    let mut s = PrngStream::new(1, 0);
    let x = Tensor::new(
        vec![512, 784],
        (0..512 * 784).map(|_| s.uniform()).collect(),
    )
    .unwrap();
    let mut group = c.benchmark_group("mc_forward_50");
    group.sample_size(10);
    for (name, mode) in [
        ("mcd", LearnerMode::mcd()),
        ("vi", LearnerMode::Variational),
    ] {
        let net = build_dense_stack(784, &[32], 10, mode, &mut PrngStream::new(2, 0)).unwrap();
        let stream = PrngStream::new(3, 0);
        group.bench_function(BenchmarkId::new("parallel", name), |b| {
            b.iter(|| {
                map_range(50, |t| {
                    net.forward(&x, true, &stream.fork(t as u64)).unwrap()
                })
            })
        });
        group.bench_function(BenchmarkId::new("sequential", name), |b| {
            b.iter(|| {
                map_range_sequential(50, |t| {
                    net.forward(&x, true, &stream.fork(t as u64)).unwrap()
                })
            })
        });
    }
    group.finish();
}

criterion_group!(benches, mc_forward);
criterion_main!(benches);
