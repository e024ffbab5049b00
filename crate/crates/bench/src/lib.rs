//! Deterministic inputs for the kernel benchmarks.

use momentreg::events::FrameFeatures;
use momentreg::metrics::{GroundTruth, MomentPrediction};
use momentreg::{seed, EventSet, Matrix, Span};
use rand::Rng;

pub fn cost_matrix(rows: usize, cols: usize, seed_value: u64) -> Matrix {
    let mut rng = seed::rng(seed_value);
    let data = (0..rows * cols).map(|_| rng.random::<f64>()).collect();
    Matrix::from_vec(rows, cols, data).expect("shape")
}

pub fn span_pairs(n: usize, seed_value: u64) -> Vec<(Span, Span)> {
    let mut rng = seed::rng(seed_value);
    let mut span = || Span::new(rng.random_range(0.0..1.0), rng.random_range(0.01..0.5)).expect("span");
    (0..n).map(|_| (span(), span())).collect()
}

/// `videos` videos with `per_video` scored predictions and one to three
/// ground-truth moments each.
pub fn retrieval_set(videos: usize, per_video: usize, seed_value: u64) -> (Vec<MomentPrediction>, Vec<GroundTruth>) {
    let mut rng = seed::rng(seed_value);
    let mut preds = Vec::with_capacity(videos);
    let mut gts = Vec::with_capacity(videos);
    for v in 0..videos {
        let video_id = format!("v{v}");
        let n_gt = rng.random_range(1..=3);
        let mut draw = || {
            let c = rng.random_range(0.0..150.0);
            Span::new(c, rng.random_range(2.0..40.0)).expect("span")
        };
        let gt: Vec<Span> = (0..n_gt).map(|_| draw()).collect();
        let spans: Vec<Span> = (0..per_video).map(|_| draw()).collect();
        let scores = (0..per_video).map(|_| rng.random::<f64>()).collect();
        gts.push(GroundTruth { video_id: video_id.clone(), spans: gt });
        preds.push(MomentPrediction { video_id, spans, scores });
    }
    (preds, gts)
}

/// Frames drawn around `blocks` random directions with Gaussian-like noise.
pub fn block_features(frames: usize, blocks: usize, dim: usize, seed_value: u64) -> FrameFeatures {
    let mut rng = seed::rng(seed_value);
    let dirs: Vec<Vec<f64>> = (0..blocks).map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let mut data = Vec::with_capacity(frames * dim);
    for t in 0..frames {
        let b = t * blocks / frames;
        data.extend(dirs[b].iter().map(|x| x + 0.1 * rng.random_range(-1.0..1.0)));
    }
    FrameFeatures::new("bench", Matrix::from_vec(frames, dim, data).expect("shape"), 1.0).expect("features")
}

pub fn even_events(n: usize, horizon: f64) -> EventSet {
    let cuts = (0..=n).map(|i| horizon * i as f64 / n as f64).collect();
    EventSet::from_cuts(cuts).expect("events")
}

pub fn position_table(frames: usize, dim: usize, seed_value: u64) -> Matrix {
    cost_matrix(frames, dim, seed_value)
}
