//! Brute-force reference implementations shared by integration tests.
#![allow(dead_code)]

use momentreg::matrix::Matrix;
use momentreg::metrics::{GroundTruth, HighlightAnnotation, MomentPrediction};
use momentreg::temporal::Span;
use rand::Rng;

/// Minimum assignment cost over every injective map of the smaller side
/// into the larger one.
pub fn brute_assignment_cost(cost: &Matrix) -> f64 {
    let (n, m) = (cost.rows(), cost.cols());
    let get = |small: usize, large: usize| if n <= m { cost.get(small, large) } else { cost.get(large, small) };
    let (small, large) = (n.min(m), n.max(m));
    fn rec(i: usize, small: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64, get: &dyn Fn(usize, usize) -> f64) {
        if i == small {
            *best = best.min(acc);
            return;
        }
        for j in 0..used.len() {
            if !used[j] {
                used[j] = true;
                rec(i + 1, small, used, acc + get(i, j), best, get);
                used[j] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    rec(0, small, &mut vec![false; large], 0.0, &mut best, &get);
    if small == 0 {
        0.0
    } else {
        best
    }
}

/// Every maximum-size matching as a row-sorted pair list; among those of
/// minimum cost, the lexicographically smallest list.
pub fn brute_lexmin_pairs(cost: &Matrix) -> Vec<(usize, usize)> {
    let (n, m) = (cost.rows(), cost.cols());
    let size = n.min(m);
    let mut best: Option<(f64, Vec<(usize, usize)>)> = None;
    fn rec(
        i: usize,
        cost: &Matrix,
        size: usize,
        used: &mut Vec<bool>,
        pairs: &mut Vec<(usize, usize)>,
        best: &mut Option<(f64, Vec<(usize, usize)>)>,
    ) {
        if pairs.len() == size {
            let total = pairs.iter().fold(0.0, |a, &(r, c)| a + cost.get(r, c));
            let better = match best {
                None => true,
                Some((b, bp)) => total < *b || (total == *b && *pairs < *bp),
            };
            if better {
                *best = Some((total, pairs.clone()));
            }
            return;
        }
        if i == cost.rows() {
            return;
        }
        for j in 0..used.len() {
            if !used[j] {
                used[j] = true;
                pairs.push((i, j));
                rec(i + 1, cost, size, used, pairs, best);
                pairs.pop();
                used[j] = false;
            }
        }
        if cost.rows() - i > size - pairs.len() {
            rec(i + 1, cost, size, used, pairs, best);
        }
    }
    rec(0, cost, size, &mut vec![false; m], &mut Vec::new(), &mut best);
    best.map(|b| b.1).unwrap_or_default()
}

/// Overlap of two closed intervals divided by their union, from endpoints.
pub fn oracle_iou(a: &Span, b: &Span) -> f64 {
    let (a0, a1) = (a.center - a.width / 2.0, a.center + a.width / 2.0);
    let (b0, b1) = (b.center - b.width / 2.0, b.center + b.width / 2.0);
    let inter = (a1.min(b1) - a0.max(b0)).max(0.0);
    let union = a1.max(b1) - a0.min(b0) - (a0.max(b0) - a1.min(b1)).max(0.0);
    if union <= 0.0 {
        return 0.0;
    }
    inter / union
}

/// Positions sorted by descending score; among equal scores the earlier
/// position comes first. Insertion sort, independent of the library sort.
pub fn stable_desc(scores: &[f64]) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::new();
    for i in 0..scores.len() {
        let at = out.iter().position(|&j| scores[j] < scores[i]).unwrap_or(out.len());
        out.insert(at, i);
    }
    out
}

/// AP from first principles: precision at every rank, interpolated as the
/// maximum precision at any equal or deeper rank, averaged over positives.
pub fn oracle_ap(hits: &[bool], n_pos: usize) -> f64 {
    if n_pos == 0 {
        return 0.0;
    }
    let prec: Vec<f64> = (0..hits.len())
        .map(|k| hits[..=k].iter().filter(|h| **h).count() as f64 / (k + 1) as f64)
        .collect();
    let mut sum = 0.0;
    for k in 0..hits.len() {
        if hits[k] {
            sum += prec[k..].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        }
    }
    sum / n_pos as f64
}

fn oracle_hits(preds: &[Span], scores: &[f64], gts: &[Span], thr: f64) -> Vec<bool> {
    let mut free: Vec<bool> = vec![true; gts.len()];
    let mut out = Vec::new();
    for i in stable_desc(scores) {
        let cands: Vec<(usize, f64)> = (0..gts.len())
            .filter(|&j| free[j])
            .map(|j| (j, oracle_iou(&preds[i], &gts[j])))
            .filter(|&(_, v)| v >= thr)
            .collect();
        // Highest IoU; the earliest ground truth among equals.
        let best = cands.iter().fold(None::<(usize, f64)>, |b, &(j, v)| match b {
            Some((_, bv)) if bv >= v => b,
            _ => Some((j, v)),
        });
        match best {
            Some((j, _)) => {
                free[j] = false;
                out.push(true);
            }
            None => out.push(false),
        }
    }
    out
}

pub struct OracleMoments {
    pub r1: Vec<f64>,
    pub ap_per_threshold: Vec<f64>,
    pub map: f64,
}

pub fn oracle_moments(preds: &[MomentPrediction], gts: &[GroundTruth], r1_thr: &[f64], map_thr: &[f64]) -> OracleMoments {
    let find = |id: &str| preds.iter().rev().find(|p| p.video_id == id);
    let n = gts.len() as f64;
    let r1 = r1_thr
        .iter()
        .map(|&t| {
            gts.iter()
                .filter(|g| {
                    find(&g.video_id).is_some_and(|p| {
                        let order = stable_desc(&p.scores);
                        !order.is_empty() && g.spans.iter().any(|s| oracle_iou(&p.spans[order[0]], s) >= t)
                    })
                })
                .count() as f64
                / n
        })
        .collect();
    let ap_per_threshold: Vec<f64> = map_thr
        .iter()
        .map(|&t| {
            gts.iter()
                .map(|g| match find(&g.video_id) {
                    Some(p) => oracle_ap(&oracle_hits(&p.spans, &p.scores, &g.spans, t), g.spans.len()),
                    None => 0.0,
                })
                .sum::<f64>()
                / n
        })
        .collect();
    let map = ap_per_threshold.iter().sum::<f64>() / ap_per_threshold.len() as f64;
    OracleMoments { r1, ap_per_threshold, map }
}

/// `(hd_map, hit_at_1)` over videos with at least one label-4 clip.
pub fn oracle_highlights(ann: &[HighlightAnnotation]) -> Option<(f64, f64)> {
    let mut aps = Vec::new();
    let mut hits = 0usize;
    for a in ann {
        let n_pos = a.labels.iter().filter(|&&l| l == 4).count();
        if n_pos == 0 {
            continue;
        }
        let order = stable_desc(&a.scores);
        let ranked: Vec<bool> = order.iter().map(|&i| a.labels[i] == 4).collect();
        aps.push(oracle_ap(&ranked, n_pos));
        hits += usize::from(ranked[0]);
    }
    if aps.is_empty() {
        return None;
    }
    let n = aps.len() as f64;
    Some((aps.iter().sum::<f64>() / n, hits as f64 / n))
}

/// Random evaluation fixture with ≤ 5 videos and ≤ 8 predictions each.
/// Spans and scores sit on coarse grids so IoU and score ties occur.
pub fn random_fixture<R: Rng>(rng: &mut R) -> (Vec<MomentPrediction>, Vec<GroundTruth>, Vec<HighlightAnnotation>) {
    let n_videos = rng.random_range(1..=5);
    let span = |rng: &mut R| {
        let s = rng.random_range(0..10) as f64;
        let len = rng.random_range(1..=6) as f64;
        Span::from_interval(s, s + len).unwrap()
    };
    let mut preds = Vec::new();
    let mut gts = Vec::new();
    let mut ann = Vec::new();
    for v in 0..n_videos {
        let id = format!("v{v}");
        let n_gt = rng.random_range(1..=3);
        gts.push(GroundTruth { video_id: id.clone(), spans: (0..n_gt).map(|_| span(rng)).collect() });
        // Some videos get no prediction record at all.
        if rng.random_range(0..6) > 0 {
            let n_pred = rng.random_range(1..=8);
            preds.push(MomentPrediction {
                video_id: id.clone(),
                spans: (0..n_pred).map(|_| span(rng)).collect(),
                scores: (0..n_pred).map(|_| rng.random_range(0..5) as f64 / 4.0).collect(),
            });
        }
        let clips = rng.random_range(1..=8);
        ann.push(HighlightAnnotation {
            video_id: id,
            labels: (0..clips).map(|_| rng.random_range(0..=4)).collect(),
            scores: (0..clips).map(|_| rng.random_range(0..4) as f64).collect(),
        });
    }
    (preds, gts, ann)
}
