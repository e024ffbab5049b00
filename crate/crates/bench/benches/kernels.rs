use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use momentreg::events::detect_events;
use momentreg::losses::{l_pos, PositionEmbeddings};
use momentreg::matching::hungarian;
use momentreg::metrics::{map_thresholds, mean_average_precision, recall_at_1, R1_THRESHOLDS};
use momentreg::temporal::{giou, giou_with_grad};
use momentreg::DetectorConfig;
use momentreg_bench as fx;

fn bench_hungarian(c: &mut Criterion) {
    let mut g = c.benchmark_group("hungarian");
    for (r, k) in [(10, 3), (10, 10), (100, 100), (300, 300)] {
        let m = fx::cost_matrix(r, k, 1);
        g.bench_with_input(BenchmarkId::from_parameter(format!("{r}x{k}")), &m, |b, m| {
            b.iter(|| hungarian(black_box(m)).unwrap())
        });
    }
    g.finish();
}

fn bench_giou(c: &mut Criterion) {
    let pairs = fx::span_pairs(10_000, 2);
    c.bench_function("giou/10k pairs", |b| {
        b.iter(|| pairs.iter().map(|(a, p)| giou(a, p)).fold(0.0, |s, x| s + x))
    });
    c.bench_function("giou_with_grad/10k pairs", |b| {
        b.iter(|| pairs.iter().map(|(a, p)| giou_with_grad(a, p).1[0]).fold(0.0, |s, x| s + x))
    });
}

fn bench_metrics(c: &mut Criterion) {
    let (preds, gts) = fx::retrieval_set(1000, 10, 3);
    let thr = map_thresholds();
    c.bench_function("metrics/mAP 1000 videos", |b| {
        b.iter(|| mean_average_precision(black_box(&preds), &gts, &thr).unwrap())
    });
    c.bench_function("metrics/R@1 1000 videos", |b| {
        b.iter(|| recall_at_1(black_box(&preds), &gts, &R1_THRESHOLDS).unwrap())
    });
}

fn bench_events(c: &mut Criterion) {
    let mut g = c.benchmark_group("detect_events");
    let cfg = DetectorConfig::default();
    for frames in [75, 150, 600] {
        let f = fx::block_features(frames, 6, 256, 4);
        g.bench_with_input(BenchmarkId::from_parameter(frames), &f, |b, f| {
            b.iter(|| detect_events(black_box(f), &cfg).unwrap())
        });
    }
    g.finish();
}

fn bench_l_pos(c: &mut Criterion) {
    let pos = PositionEmbeddings::new(fx::position_table(150, 256, 5), 1.0).unwrap();
    let events = fx::even_events(8, 150.0);
    c.bench_function("l_pos/150x256 8 events", |b| b.iter(|| l_pos(black_box(&pos), &events).unwrap()));
}

criterion_group!(benches, bench_hungarian, bench_giou, bench_metrics, bench_events, bench_l_pos);
criterion_main!(benches);
