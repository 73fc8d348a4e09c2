use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use multicrf::{nll_and_grad, viterbi, Scorer};
use multicrf_bench::{fixture, BENCH_FAMILIES};

const LEN: usize = 30;

fn score(c: &mut Criterion) {
    let mut group = c.benchmark_group("score");
    for family in BENCH_FAMILIES {
        let (params, reps) = fixture(family, LEN, 1);
        let scorer = Scorer::new(&params).unwrap();
        group.bench_function(BenchmarkId::from_parameter(family), |b| {
            b.iter(|| scorer.score(black_box(&reps[0])).unwrap())
        });
    }
    group.finish();
}

fn backprop(c: &mut Criterion) {
    let mut group = c.benchmark_group("backprop");
    for family in BENCH_FAMILIES {
        let (params, reps) = fixture(family, LEN, 1);
        let scorer = Scorer::new(&params).unwrap();
        let lat = scorer.score(&reps[0]).unwrap();
        let gold = vec![0; LEN];
        let (_, grad) = nll_and_grad(&lat, &gold).unwrap();
        group.bench_function(BenchmarkId::from_parameter(family), |b| {
            b.iter(|| {
                let mut acc = scorer.accumulator();
                scorer
                    .accumulate(&reps[0], black_box(&grad), &mut acc)
                    .unwrap();
                scorer.finish(acc)
            })
        });
    }
    group.finish();
}

fn inference(c: &mut Criterion) {
    let (params, reps) = fixture(multicrf::FamilyTag::VanillaCrf, LEN, 1);
    let lat = Scorer::new(&params).unwrap().score(&reps[0]).unwrap();
    let gold = vec![0; LEN];
    c.bench_function("viterbi", |b| b.iter(|| viterbi(black_box(&lat))));
    c.bench_function("nll_and_grad", |b| {
        b.iter(|| nll_and_grad(black_box(&lat), &gold).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = score, backprop, inference
}
criterion_main!(benches);
