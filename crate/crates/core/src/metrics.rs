//! Moment-retrieval and highlight-detection metrics.
//!
//! * Recall@1 at IoU thresholds.
//! * Average precision per IoU threshold with greedy one-to-one matching
//!   and all-point interpolation, averaged over `0.5:0.05:0.95`.
//! * Highlight mAP and HIT@1 with "Very Good" (label 4) clips as positives.
//!
//! Predictions are ranked by descending score; ties keep input order.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::temporal::{iou, Span};

/// Saliency label counted as positive.
pub const VERY_GOOD: u8 = 4;

/// Thresholds reported for Recall@1.
pub const R1_THRESHOLDS: [f64; 2] = [0.5, 0.7];

/// `0.5, 0.55, …, 0.95`.
pub fn map_thresholds() -> Vec<f64> {
    (0..10).map(|i| f64::from(50 + 5 * i) / 100.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentPrediction {
    pub video_id: String,
    pub spans: Vec<Span>,
    pub scores: Vec<f64>,
}

impl MomentPrediction {
    pub fn validate(&self) -> Result<()> {
        if self.spans.len() != self.scores.len() {
            return Err(Error::Shape(format!(
                "video {:?}: {} spans but {} scores",
                self.video_id,
                self.spans.len(),
                self.scores.len()
            )));
        }
        if self.scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "video {:?}: non-finite score",
                self.video_id
            )));
        }
        Ok(())
    }

    /// Spans in descending score order.
    pub fn ranked(&self) -> Vec<Span> {
        rank_desc(&self.scores).into_iter().map(|i| self.spans[i]).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub video_id: String,
    pub spans: Vec<Span>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HighlightAnnotation {
    pub video_id: String,
    pub labels: Vec<u8>,
    pub scores: Vec<f64>,
}

/// Indices sorted by descending score, stable.
pub fn rank_desc(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    idx
}

/// All-point interpolated average precision of a ranked hit list.
pub fn interpolated_ap(hits: &[bool], n_positive: usize) -> f64 {
    if n_positive == 0 {
        return 0.0;
    }
    let mut precision = Vec::with_capacity(hits.len());
    let mut tp = 0usize;
    for (k, &h) in hits.iter().enumerate() {
        tp += usize::from(h);
        precision.push(tp as f64 / (k + 1) as f64);
    }
    for k in (0..precision.len().saturating_sub(1)).rev() {
        precision[k] = precision[k].max(precision[k + 1]);
    }
    // fold from +0.0: an empty float sum is −0.0
    let sum = hits
        .iter()
        .zip(&precision)
        .filter(|(h, _)| **h)
        .fold(0.0, |acc, (_, p)| acc + p);
    sum / n_positive as f64
}

/// Greedy one-to-one matching of ranked predictions: each prediction takes
/// the unmatched ground truth of highest IoU at or above `threshold`.
pub fn greedy_hits(ranked: &[Span], gts: &[Span], threshold: f64) -> Vec<bool> {
    let mut taken = vec![false; gts.len()];
    ranked
        .iter()
        .map(|p| {
            let mut best: Option<(usize, f64)> = None;
            for (j, g) in gts.iter().enumerate() {
                if taken[j] {
                    continue;
                }
                let v = iou(p, g);
                if v >= threshold && best.is_none_or(|(_, b)| v > b) {
                    best = Some((j, v));
                }
            }
            if let Some((j, _)) = best {
                taken[j] = true;
                true
            } else {
                false
            }
        })
        .collect()
}

struct Paired<'a> {
    video_id: &'a str,
    ranked: Vec<Span>,
    gts: &'a [Span],
}

fn pair_up<'a>(preds: &'a [MomentPrediction], gts: &'a [GroundTruth]) -> Result<Vec<Paired<'a>>> {
    let mut by_id: HashMap<&str, &MomentPrediction> = HashMap::with_capacity(preds.len());
    for p in preds {
        p.validate()?;
        by_id.insert(&p.video_id, p);
    }
    let known: HashMap<&str, ()> = gts.iter().map(|g| (g.video_id.as_str(), ())).collect();
    if let Some(p) = preds.iter().find(|p| !known.contains_key(p.video_id.as_str())) {
        return Err(Error::MissingGroundTruth(p.video_id.clone()));
    }
    gts.iter()
        .map(|g| {
            if g.spans.is_empty() {
                return Err(Error::EmptyGroundTruth);
            }
            Ok(Paired {
                video_id: &g.video_id,
                ranked: by_id.get(g.video_id.as_str()).map_or_else(Vec::new, |p| p.ranked()),
                gts: &g.spans,
            })
        })
        .collect()
}

fn top1_hit(ranked: &[Span], gts: &[Span], threshold: f64) -> bool {
    ranked
        .first()
        .is_some_and(|p| gts.iter().any(|g| iou(p, g) >= threshold))
}

/// Recall@1 per threshold, aligned with `thresholds`.
pub fn recall_at_1(
    preds: &[MomentPrediction],
    gts: &[GroundTruth],
    thresholds: &[f64],
) -> Result<Vec<f64>> {
    let videos = pair_up(preds, gts)?;
    let n = videos.len().max(1) as f64;
    Ok(thresholds
        .iter()
        .map(|&t| {
            videos
                .iter()
                .filter(|v| top1_hit(&v.ranked, v.gts, t))
                .count() as f64
                / n
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MapResult {
    /// Mean AP per threshold, aligned with the requested thresholds.
    pub per_threshold: Vec<f64>,
    pub average: f64,
    /// `per_video[v][t]`: AP of video `v` at threshold `t`.
    pub per_video: Vec<Vec<f64>>,
}

pub fn mean_average_precision(
    preds: &[MomentPrediction],
    gts: &[GroundTruth],
    thresholds: &[f64],
) -> Result<MapResult> {
    let videos = pair_up(preds, gts)?;
    let per_video: Vec<Vec<f64>> = videos
        .par_iter()
        .map(|v| {
            thresholds
                .iter()
                .map(|&t| interpolated_ap(&greedy_hits(&v.ranked, v.gts, t), v.gts.len()))
                .collect()
        })
        .collect();
    let n = per_video.len().max(1) as f64;
    let per_threshold: Vec<f64> = (0..thresholds.len())
        .map(|t| per_video.iter().map(|v| v[t]).fold(0.0, |a, b| a + b) / n)
        .collect();
    let average = per_threshold.iter().fold(0.0, |a, b| a + b) / per_threshold.len().max(1) as f64;
    Ok(MapResult {
        per_threshold,
        average,
        per_video,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HighlightResult {
    pub hd_map: f64,
    pub hit_at_1: f64,
    pub evaluated: usize,
    pub excluded_no_positive: usize,
    pub per_video_ap: Vec<Option<f64>>,
}

pub fn highlight_metrics(ann: &[HighlightAnnotation]) -> Result<HighlightResult> {
    let mut aps = Vec::new();
    let mut hits = Vec::new();
    let mut per_video_ap = Vec::with_capacity(ann.len());
    for a in ann {
        if a.labels.is_empty() {
            return Err(Error::InvalidArgument(format!("video {:?} has no clips", a.video_id)));
        }
        if a.labels.len() != a.scores.len() {
            return Err(Error::Shape(format!(
                "video {:?}: {} labels but {} scores",
                a.video_id,
                a.labels.len(),
                a.scores.len()
            )));
        }
        if let Some(l) = a.labels.iter().find(|&&l| l > VERY_GOOD) {
            return Err(Error::InvalidArgument(format!(
                "video {:?}: label {l} outside 0..=4",
                a.video_id
            )));
        }
        if a.scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidArgument(format!("video {:?}: non-finite score", a.video_id)));
        }
        let n_pos = a.labels.iter().filter(|&&l| l == VERY_GOOD).count();
        if n_pos == 0 {
            per_video_ap.push(None);
            continue;
        }
        let ranked: Vec<bool> = rank_desc(&a.scores)
            .into_iter()
            .map(|i| a.labels[i] == VERY_GOOD)
            .collect();
        let ap = interpolated_ap(&ranked, n_pos);
        aps.push(ap);
        hits.push(ranked[0]);
        per_video_ap.push(Some(ap));
    }
    if aps.is_empty() {
        return Err(Error::NoPositives);
    }
    let n = aps.len() as f64;
    Ok(HighlightResult {
        hd_map: aps.iter().fold(0.0, |a, b| a + b) / n,
        hit_at_1: hits.iter().filter(|&&h| h).count() as f64 / n,
        evaluated: aps.len(),
        excluded_no_positive: ann.len() - aps.len(),
        per_video_ap,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VideoDiagnostics {
    pub video_id: String,
    pub top1_iou: Option<f64>,
    pub ap: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub r1_at: BTreeMap<String, f64>,
    pub map_at: BTreeMap<String, f64>,
    pub map_avg: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hd_map: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hit_at_1: Option<f64>,
    pub per_video: Vec<VideoDiagnostics>,
}

fn key(t: f64) -> String {
    format!("{t}")
}

/// Full moment-retrieval report: R1@{0.5,0.7}, mAP per threshold, average mAP.
pub fn evaluate_moments(preds: &[MomentPrediction], gts: &[GroundTruth]) -> Result<MetricsReport> {
    let r1 = recall_at_1(preds, gts, &R1_THRESHOLDS)?;
    let thresholds = map_thresholds();
    let map = mean_average_precision(preds, gts, &thresholds)?;
    let videos = pair_up(preds, gts)?;
    let per_video = videos
        .iter()
        .zip(&map.per_video)
        .map(|(v, ap)| VideoDiagnostics {
            video_id: v.video_id.to_string(),
            top1_iou: v
                .ranked
                .first()
                .map(|p| v.gts.iter().map(|g| iou(p, g)).fold(0.0, f64::max)),
            ap: ap.clone(),
        })
        .collect();
    Ok(MetricsReport {
        r1_at: R1_THRESHOLDS.iter().zip(r1).map(|(&t, v)| (key(t), v)).collect(),
        map_at: thresholds.iter().zip(&map.per_threshold).map(|(&t, &v)| (key(t), v)).collect(),
        map_avg: map.average,
        hd_map: None,
        hit_at_1: None,
        per_video,
    })
}
