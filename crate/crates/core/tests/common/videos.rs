//! Piecewise-constant synthetic videos with known boundaries.
#![allow(dead_code)]

use momentreg::events::FrameFeatures;
use momentreg::matrix::Matrix;
use momentreg::seed;
use rand::Rng;
use rand_distr::StandardNormal;

/// `blocks` constant segments of random unit direction plus Gaussian noise.
/// Returns the features and the true boundary frames (first frame of each
/// block after the first).
pub fn block_video(
    frames: usize,
    blocks: usize,
    dim: usize,
    sigma: f64,
    min_len: usize,
    seed_value: u64,
) -> (FrameFeatures, Vec<usize>) {
    let mut rng = seed::rng(seed_value);
    let slack = frames - blocks * min_len;
    let mut extra: Vec<usize> = (0..blocks - 1).map(|_| rng.random_range(0..=slack)).collect();
    extra.sort_unstable();
    let cuts: Vec<usize> = extra.iter().enumerate().map(|(i, e)| (i + 1) * min_len + e).collect();
    let dirs: Vec<Vec<f64>> = (0..blocks)
        .map(|_| {
            let v: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / n).collect()
        })
        .collect();
    let mut data = Vec::with_capacity(frames * dim);
    for t in 0..frames {
        let b = cuts.iter().filter(|&&c| c <= t).count();
        for d in 0..dim {
            data.push(dirs[b][d] + sigma * rng.sample::<f64, _>(StandardNormal));
        }
    }
    let m = Matrix::from_vec(frames, dim, data).unwrap();
    (FrameFeatures::new(format!("block{seed_value}"), m, 1.0).unwrap(), cuts)
}

/// Every frame carries the same vector.
pub fn constant_video(frames: usize, dim: usize, seed_value: u64) -> FrameFeatures {
    let mut rng = seed::rng(seed_value);
    let row: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let data: Vec<f64> = (0..frames).flat_map(|_| row.clone()).collect();
    FrameFeatures::new("const", Matrix::from_vec(frames, dim, data).unwrap(), 1.0).unwrap()
}
