use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use earlyexit::ctc::{ctc_loss, greedy_decode_scores};
use earlyexit::numerics::kernels::{log_softmax_rows, matmul};
use earlyexit_bench::{random_tensor, Rng};
use std::hint::black_box;

fn matmuls(c: &mut Criterion) {
    let mut rng = Rng::new(1);
    let mut group = c.benchmark_group("matmul");
    for n in [32, 64, 128] {
        let a = random_tensor(&mut rng, n, n);
        let b = random_tensor(&mut rng, n, n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |bench, _| {
            bench.iter(|| black_box(matmul(&a, &b).unwrap()))
        });
    }
    group.finish();
}

fn ctc(c: &mut Criterion) {
    let mut rng = Rng::new(2);
    let mut group = c.benchmark_group("ctc");
    for frames in [50, 200] {
        let lp = log_softmax_rows(&random_tensor(&mut rng, frames, 10));
        let target: Vec<usize> = (0..frames / 5).map(|i| 1 + i % 9).collect();
        group.bench_with_input(BenchmarkId::new("loss", frames), &frames, |b, _| {
            b.iter(|| black_box(ctc_loss(&lp, &target).unwrap()))
        });
        group.bench_with_input(BenchmarkId::new("greedy_decode", frames), &frames, |b, _| {
            b.iter(|| black_box(greedy_decode_scores(&lp)))
        });
    }
    group.finish();
}

criterion_group!(benches, matmuls, ctc);
criterion_main!(benches);
