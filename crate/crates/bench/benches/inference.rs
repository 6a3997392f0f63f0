use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use earlyexit_bench::{baseline_infer, desk_fixture, early_exit_infer, forced_exit_infer, ExitCriterion};
use std::hint::black_box;

fn inference(c: &mut Criterion) {
    let (model, utts) = desk_fixture(8);
    let mut group = c.benchmark_group("inference");

    group.bench_function("baseline", |b| {
        b.iter(|| {
            for u in &utts {
                black_box(baseline_infer(&model, &u.features).unwrap());
            }
        })
    });

    // threshold 0 fires at the first branch, 1.0 never fires
    for tau in [0.0, 1.0] {
        let criterion = ExitCriterion::confidence(tau).unwrap();
        group.bench_with_input(BenchmarkId::new("early_exit_confidence", tau), &criterion, |b, crit| {
            b.iter(|| {
                for u in &utts {
                    black_box(early_exit_infer(&model, &u.features, crit).unwrap());
                }
            })
        });
    }

    for branch in 0..model.branches().len() {
        group.bench_with_input(BenchmarkId::new("forced_exit", branch + 1), &branch, |b, &i| {
            b.iter(|| {
                for u in &utts {
                    black_box(forced_exit_infer(&model, &u.features, Some(i)).unwrap());
                }
            })
        });
    }
    group.finish();
}

criterion_group!(benches, inference);
criterion_main!(benches);
