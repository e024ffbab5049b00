//! Pseudo-event detection from temporal self-similarity.
//!
//! A video's frame features are turned into a cosine self-similarity matrix
//! (TSM). Each candidate boundary between frames `t` and `t+1` is scored by a
//! contrastive kernel: the mean similarity inside the two diagonal blocks
//! flanking `t` minus the mean similarity of the off-diagonal block between
//! them. Segments are bisected recursively at their best admissible
//! boundary until the score falls to the threshold or the depth runs out.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{dot, norm, Matrix};
use crate::temporal::Span;

#[derive(Debug, Clone)]
pub struct FrameFeatures {
    pub video_id: String,
    pub features: Matrix,
    /// Seconds per frame.
    pub frame_period: f64,
}

impl FrameFeatures {
    pub fn new(video_id: impl Into<String>, features: Matrix, frame_period: f64) -> Result<Self> {
        if features.rows() == 0 {
            return Err(Error::InvalidArgument("video has no frames".into()));
        }
        if !(frame_period > 0.0) || !frame_period.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "frame period must be positive, got {frame_period}"
            )));
        }
        if let Some(p) = features.as_slice().iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: p / features.cols(),
                col: p % features.cols(),
            });
        }
        Ok(Self {
            video_id: video_id.into(),
            features,
            frame_period,
        })
    }

    pub fn frames(&self) -> usize {
        self.features.rows()
    }
}

/// Contiguous partition of `[0, horizon]` into ordered events.
///
/// Stored as the `n + 1` cut points, so contiguity holds by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct EventSet {
    cuts: Vec<f64>,
}

impl EventSet {
    /// Build from cut points `0 = b0 ≤ b1 ≤ … ≤ bn = horizon`.
    pub fn from_cuts(cuts: Vec<f64>) -> Result<Self> {
        if cuts.len() < 2 {
            return Err(Error::EmptyEvents);
        }
        if cuts[0] != 0.0 {
            return Err(Error::InvalidArgument(format!(
                "first event must start at 0, got {}",
                cuts[0]
            )));
        }
        if cuts.iter().any(|c| !c.is_finite()) || cuts.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidArgument("event cuts must be finite and sorted".into()));
        }
        Ok(Self { cuts })
    }

    pub fn single(horizon: f64) -> Result<Self> {
        Self::from_cuts(vec![0.0, horizon])
    }

    /// Events from frame-index cuts scaled by the frame period.
    pub fn from_frame_cuts(frame_cuts: &[usize], frame_period: f64) -> Result<Self> {
        Self::from_cuts(frame_cuts.iter().map(|&c| c as f64 * frame_period).collect())
    }

    /// Validate a list of `[start, end]` intervals as a partition.
    pub fn from_intervals(intervals: &[(f64, f64)]) -> Result<Self> {
        let Some(&(first, _)) = intervals.first() else {
            return Err(Error::EmptyEvents);
        };
        let horizon = intervals.last().map_or(0.0, |iv| iv.1);
        let tol = 1e-9 * horizon.abs().max(1.0);
        let mut cuts = vec![first];
        for (i, &(s, e)) in intervals.iter().enumerate() {
            if s > e {
                return Err(Error::InvalidInterval { start: s, end: e });
            }
            let prev = *cuts.last().expect("non-empty");
            if (s - prev).abs() > tol {
                return Err(Error::InvalidArgument(format!(
                    "event {i} starts at {s} but the previous event ends at {prev}"
                )));
            }
            cuts.push(e);
        }
        Self::from_cuts(cuts)
    }

    pub fn len(&self) -> usize {
        self.cuts.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn horizon(&self) -> f64 {
        *self.cuts.last().expect("at least two cuts")
    }

    pub fn cuts(&self) -> &[f64] {
        &self.cuts
    }

    /// Interior boundaries (cut points excluding 0 and the horizon).
    pub fn boundaries(&self) -> &[f64] {
        &self.cuts[1..self.cuts.len() - 1]
    }

    pub fn interval(&self, i: usize) -> (f64, f64) {
        (self.cuts[i], self.cuts[i + 1])
    }

    pub fn intervals(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.cuts.windows(2).map(|w| (w[0], w[1]))
    }

    pub fn span(&self, i: usize) -> Span {
        let (s, e) = self.interval(i);
        Span {
            center: 0.5 * (s + e),
            width: e - s,
        }
    }

    pub fn spans(&self) -> Vec<Span> {
        (0..self.len()).map(|i| self.span(i)).collect()
    }

    pub fn shifted(&self, by: f64) -> Vec<Span> {
        self.spans().iter().map(|s| s.shifted(by)).collect()
    }
}

impl Serialize for EventSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let v: Vec<[f64; 2]> = self.intervals().map(|(a, b)| [a, b]).collect();
        v.serialize(s)
    }
}

impl<'de> Deserialize<'de> for EventSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Vec::<[f64; 2]>::deserialize(d)?;
        let iv: Vec<(f64, f64)> = v.into_iter().map(|[a, b]| (a, b)).collect();
        EventSet::from_intervals(&iv).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    pub kernel_half: usize,
    pub min_event_len: usize,
    pub score_threshold: f64,
    pub max_depth: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            kernel_half: 4,
            min_event_len: 2,
            score_threshold: 0.05,
            max_depth: 8,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.kernel_half < 1 {
            return Err(Error::InvalidArgument("kernel_half must be at least 1".into()));
        }
        if self.min_event_len < 2 {
            return Err(Error::InvalidArgument("min_event_len must be at least 2".into()));
        }
        if self.max_depth < 1 {
            return Err(Error::InvalidArgument("max_depth must be at least 1".into()));
        }
        if self.score_threshold.is_nan() {
            return Err(Error::InvalidArgument("score_threshold is NaN".into()));
        }
        Ok(())
    }
}

/// Cosine self-similarity of frames.
pub fn tsm(f: &FrameFeatures) -> Result<Matrix> {
    let t = f.frames();
    let mut unit = f.features.clone();
    for i in 0..t {
        let n = norm(unit.row(i));
        if n == 0.0 {
            return Err(Error::ZeroVector {
                label: format!("{}:frame{i}", f.video_id),
            });
        }
        for v in unit.row_mut(i) {
            *v /= n;
        }
    }
    let mut out = Matrix::zeros(t, t);
    for i in 0..t {
        out.set(i, i, 1.0);
        for j in 0..i {
            let s = dot(unit.row(i), unit.row(j)).clamp(-1.0, 1.0);
            out.set(i, j, s);
            out.set(j, i, s);
        }
    }
    Ok(out)
}

fn block_sum(m: &Matrix, rows: (usize, usize), cols: (usize, usize)) -> f64 {
    (rows.0..rows.1)
        .map(|i| m.row(i)[cols.0..cols.1].iter().sum::<f64>())
        .sum()
}

/// Contrastive score of the boundary after frame `t`, with the window
/// `[t−h+1, t+h]` clipped to `[lo, hi)`.
fn score_at(m: &Matrix, t: usize, h: usize, lo: usize, hi: usize) -> f64 {
    let l = ((t + 1).saturating_sub(h).max(lo), t + 1);
    let r = (t + 1, (t + 1 + h).min(hi));
    let (nl, nr) = ((l.1 - l.0) as f64, (r.1 - r.0) as f64);
    let within = (block_sum(m, l, l) + block_sum(m, r, r)) / (nl * nl + nr * nr);
    let cross = block_sum(m, l, r) / (nl * nr);
    within - cross
}

/// Boundary score for every adjacent frame pair; entry `t` scores the cut
/// between frames `t` and `t+1`. Higher means a stronger boundary.
pub fn boundary_scores(tsm: &Matrix, kernel_half: usize) -> Vec<f64> {
    let t = tsm.rows();
    (0..t.saturating_sub(1))
        .map(|i| score_at(tsm, i, kernel_half.max(1), 0, t))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Detection {
    pub video_id: String,
    pub events: EventSet,
    /// Frame index at which each detected boundary starts a new event.
    pub boundary_frames: Vec<usize>,
    /// Score of each detected boundary, aligned with `boundary_frames`.
    pub scores: Vec<f64>,
}

/// Recursive bisection of the TSM into events.
pub fn detect_events(f: &FrameFeatures, cfg: &DetectorConfig) -> Result<Detection> {
    cfg.validate()?;
    let m = tsm(f)?;
    let t = f.frames();
    let mut found: Vec<(usize, f64)> = Vec::new();
    let mut stack = vec![(0usize, t, 0usize)];
    while let Some((lo, hi, depth)) = stack.pop() {
        if depth >= cfg.max_depth || hi - lo < 2 * cfg.min_event_len {
            continue;
        }
        // cut after frame k: left [lo, k], right [k+1, hi)
        let first = lo + cfg.min_event_len - 1;
        let last = hi - cfg.min_event_len - 1;
        let mut best: Option<(usize, f64)> = None;
        for k in first..=last {
            let s = score_at(&m, k, cfg.kernel_half, lo, hi);
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((k, s));
            }
        }
        let Some((k, s)) = best else { continue };
        if s > cfg.score_threshold {
            found.push((k + 1, s));
            stack.push((k + 1, hi, depth + 1));
            stack.push((lo, k + 1, depth + 1));
        }
    }
    found.sort_by_key(|&(b, _)| b);
    let mut cuts = Vec::with_capacity(found.len() + 2);
    cuts.push(0);
    cuts.extend(found.iter().map(|&(b, _)| b));
    cuts.push(t);
    Ok(Detection {
        video_id: f.video_id.clone(),
        events: EventSet::from_frame_cuts(&cuts, f.frame_period)?,
        boundary_frames: found.iter().map(|&(b, _)| b).collect(),
        scores: found.iter().map(|&(_, s)| s).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn blocks(lens: &[usize], dim: usize) -> FrameFeatures {
        let t: usize = lens.iter().sum();
        let mut m = Matrix::zeros(t, dim);
        let mut row = 0;
        for (b, &len) in lens.iter().enumerate() {
            for _ in 0..len {
                m.set(row, b % dim, 1.0);
                row += 1;
            }
        }
        FrameFeatures::new("v", m, 1.0).unwrap()
    }

    #[test]
    fn constant_features() {
        let f = FrameFeatures::new("c", Matrix::from_vec(5, 2, vec![1.0; 10]).unwrap(), 1.0).unwrap();
        let m = tsm(&f).unwrap();
        assert!(m.as_slice().iter().all(|&v| (v - 1.0).abs() < 1e-15));
        assert!(boundary_scores(&m, 2).iter().all(|&s| s.abs() < 1e-15));
        let d = detect_events(&f, &DetectorConfig::default()).unwrap();
        assert_eq!(d.events.len(), 1);
        assert_eq!(d.events.interval(0), (0.0, 5.0));
    }

    #[test]
    fn orthogonal_blocks_tsm() {
        let m = tsm(&blocks(&[3, 2], 2)).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let same = (i < 3) == (j < 3);
                assert_eq!(m.get(i, j), if same { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn two_blocks_argmax_at_true_boundary() {
        let m = tsm(&blocks(&[10, 10], 2)).unwrap();
        let s = boundary_scores(&m, 4);
        assert_eq!(s.len(), 19);
        let (arg, _) = s
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |a, (i, &v)| if v > a.1 { (i, v) } else { a });
        assert_eq!(arg, 9);
        assert!((s[9] - 1.0).abs() < 1e-15);
        // hand value one frame early: within 26/32, cross 4/16
        assert!((s[8] - (26.0 / 32.0 - 0.25)).abs() < 1e-15);
    }

    #[test]
    fn three_blocks_detected() {
        let d = detect_events(&blocks(&[10, 10, 10], 3), &DetectorConfig::default()).unwrap();
        assert_eq!(d.boundary_frames, vec![10, 20]);
        assert_eq!(d.events.cuts(), &[0.0, 10.0, 20.0, 30.0]);
    }

    #[test]
    fn infinite_threshold_gives_single_event() {
        let cfg = DetectorConfig {
            score_threshold: f64::INFINITY,
            ..Default::default()
        };
        let d = detect_events(&blocks(&[10, 10, 10], 3), &cfg).unwrap();
        assert_eq!(d.events.len(), 1);
    }

    #[test]
    fn short_video_is_one_event() {
        let d = detect_events(&blocks(&[2, 1], 2), &DetectorConfig::default()).unwrap();
        assert_eq!(d.events.len(), 1);
    }

    #[test]
    fn frame_period_scales_events() {
        let mut f = blocks(&[4, 4], 2);
        f.frame_period = 2.0;
        let d = detect_events(&f, &DetectorConfig::default()).unwrap();
        assert_eq!(d.events.cuts(), &[0.0, 8.0, 16.0]);
    }

    #[test]
    fn zero_frame_rejected() {
        let f = FrameFeatures::new("z", Matrix::zeros(3, 2), 1.0).unwrap();
        assert!(matches!(tsm(&f), Err(Error::ZeroVector { .. })));
    }

    #[test]
    fn event_set_json_and_validation() {
        let e: EventSet = serde_json::from_str("[[0,2],[2,5]]").unwrap();
        assert_eq!(e.len(), 2);
        assert_eq!(e.horizon(), 5.0);
        assert_eq!(serde_json::to_string(&e).unwrap(), "[[0.0,2.0],[2.0,5.0]]");
        assert!(serde_json::from_str::<EventSet>("[[0,2],[3,5]]").is_err());
        assert!(serde_json::from_str::<EventSet>("[[1,2]]").is_err());
        assert!(serde_json::from_str::<EventSet>("[]").is_err());
    }

    #[test]
    fn config_validation() {
        let bad = DetectorConfig {
            min_event_len: 1,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
