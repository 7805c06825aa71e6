use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use soundscribe::{decode, decode_greedy, demo};
use soundscribe_bench::toy_experiment;

fn single_clip(c: &mut Criterion) {
    let exp = toy_experiment();
    let cfg = demo::config();
    let (matcher, lm) = (exp.backends.matcher.as_ref(), exp.backends.lm.as_ref());
    let clip = "a dog is barking";
    let mut group = c.benchmark_group("decode");
    for l in [0, 1, 2] {
        group.bench_with_input(BenchmarkId::new("guided", l), &l, |b, &l| {
            b.iter(|| decode(black_box(clip), matcher, lm, &exp.keywords, &exp.template, &cfg, l).unwrap())
        });
    }
    group.bench_function("greedy", |b| {
        b.iter(|| decode_greedy(black_box(clip), lm, &exp.template, &cfg).unwrap())
    });
    group.finish();
}

fn batch(c: &mut Criterion) {
    let exp = toy_experiment();
    let cfg = demo::config();
    let mut group = c.benchmark_group("batch");
    group.sample_size(10);
    group.bench_function("20_clips_l1", |b| b.iter(|| exp.run_batch(&cfg, 1).unwrap()));
    group.finish();
}

criterion_group!(benches, single_clip, batch);
criterion_main!(benches);
