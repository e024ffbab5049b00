//! Pseudo-event regulation losses.
//!
//! * [`l_evt`] pulls predicted moments toward detected events with an L1
//!   term in center/width coordinates plus `1 − GIoU`.
//! * [`l_pos`] pulls the position embeddings of each event's member frames
//!   toward the embedding of the event's center frame.
//! * [`total_loss`] combines them with the set-matching moment loss.
//!
//! Every loss returns a [`LossReport`] carrying analytic gradients.

mod gradcheck;

pub use gradcheck::{
    check_gradients, run_gradcheck_suite, EvtTarget, GradCheckReport, GradTarget, MomentSetTarget,
    PosTarget, SuiteRow, TotalTarget, SUITE_EPS, SUITE_TOLERANCE,
};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::EventSet;
use crate::matching::span_cost;
use crate::matrix::Matrix;
use crate::temporal::{iou, Span};

/// Exponent ceiling for the position loss; `exp(710)` overflows `f64`.
pub const POS_EXPONENT_CLAMP: f64 = 50.0;

/// Loss value, analytic gradients, and free-form diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossReport {
    pub value: f64,
    /// d value / d [center, width] of each predicted moment.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub moment_grad: Option<Vec<[f64; 2]>>,
    /// d value / d position-embedding entries.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub position_grad: Option<Matrix>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub diagnostics: BTreeMap<String, serde_json::Value>,
}

impl LossReport {
    pub fn scalar(value: f64) -> Self {
        Self {
            value,
            moment_grad: None,
            position_grad: None,
            diagnostics: BTreeMap::new(),
        }
    }

    pub fn with_moments(value: f64, grad: Vec<[f64; 2]>) -> Self {
        Self {
            moment_grad: Some(grad),
            ..Self::scalar(value)
        }
    }

    pub fn with_positions(value: f64, grad: Matrix) -> Self {
        Self {
            position_grad: Some(grad),
            ..Self::scalar(value)
        }
    }

    pub fn diag(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).unwrap_or(serde_json::Value::Null);
        self.diagnostics.insert(key.to_string(), v);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegulationWeights {
    pub lambda_l1: f64,
    pub lambda_iou: f64,
    pub lambda_e: f64,
    pub lambda_p: f64,
}

impl Default for RegulationWeights {
    fn default() -> Self {
        Self {
            lambda_l1: 1.0,
            lambda_iou: 1.0,
            lambda_e: 0.1,
            lambda_p: 0.001,
        }
    }
}

impl RegulationWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.lambda_l1, self.lambda_iou, self.lambda_e, self.lambda_p];
        if all.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidArgument(
                "regulation weights must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// How predicted moments are paired with events.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvtMode {
    /// Each moment against the event it overlaps most.
    #[default]
    BestIou,
    /// Each moment against every event.
    AllEvents,
}

impl std::str::FromStr for EvtMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "best_iou" | "best-iou" => Ok(EvtMode::BestIou),
            "all_events" | "all-events" => Ok(EvtMode::AllEvents),
            other => Err(Error::InvalidArgument(format!("unknown mode {other:?}"))),
        }
    }
}

/// Index of the event with maximal IoU; ties go to the earlier event and an
/// all-zero row falls back to the nearest center.
pub fn best_event(pred: &Span, events: &[Span]) -> usize {
    let mut best = 0;
    let mut best_iou = f64::NEG_INFINITY;
    for (i, e) in events.iter().enumerate() {
        let v = iou(e, pred);
        if v > best_iou {
            best_iou = v;
            best = i;
        }
    }
    if best_iou > 0.0 {
        return best;
    }
    let mut nearest = 0;
    let mut dist = f64::INFINITY;
    for (i, e) in events.iter().enumerate() {
        let d = (e.center - pred.center).abs();
        if d < dist {
            dist = d;
            nearest = i;
        }
    }
    nearest
}

/// Events each prediction is pulled toward under `mode`.
pub fn evt_association(preds: &[Span], events: &EventSet, mode: EvtMode) -> Vec<Vec<usize>> {
    let spans = events.spans();
    preds
        .iter()
        .map(|p| match mode {
            EvtMode::BestIou => vec![best_event(p, &spans)],
            EvtMode::AllEvents => (0..spans.len()).collect(),
        })
        .collect()
}

/// Event-regulation loss with a fixed association.
pub fn l_evt_associated(
    preds: &[Span],
    events: &EventSet,
    w: &RegulationWeights,
    assoc: &[Vec<usize>],
) -> LossReport {
    let spans = events.spans();
    let mut grads = vec![[0.0; 2]; preds.len()];
    let mut terms = Vec::with_capacity(preds.len());
    let mut value = 0.0;
    for (k, (p, targets)) in preds.iter().zip(assoc).enumerate() {
        let mut term = 0.0;
        for &e in targets {
            let (c, g) = span_cost(&spans[e], p, w.lambda_l1, w.lambda_iou);
            term += c;
            grads[k][0] += g[0];
            grads[k][1] += g[1];
        }
        value += term;
        terms.push(term);
    }
    let mut report = LossReport::with_moments(value, grads);
    report.diag("per_moment", &terms);
    report.diag("association", assoc);
    report
}

/// Pseudo-event regulation loss over all predicted moments.
pub fn l_evt(
    preds: &[Span],
    events: &EventSet,
    w: &RegulationWeights,
    mode: EvtMode,
) -> Result<LossReport> {
    w.validate()?;
    if events.is_empty() {
        return Err(Error::EmptyEvents);
    }
    let assoc = evt_association(preds, events, mode);
    Ok(l_evt_associated(preds, events, w, &assoc))
}

/// Per-frame position embeddings of one video.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionEmbeddings {
    pub embeddings: Matrix,
    pub frame_period: f64,
}

impl PositionEmbeddings {
    pub fn new(embeddings: Matrix, frame_period: f64) -> Result<Self> {
        if !(frame_period > 0.0) {
            return Err(Error::InvalidArgument("frame period must be positive".into()));
        }
        if embeddings.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("position embeddings must be finite".into()));
        }
        Ok(Self {
            embeddings,
            frame_period,
        })
    }
}

/// Member-frame range `[first, end)` and center row of each event.
pub fn event_frames(events: &EventSet, frames: usize, frame_period: f64) -> Result<Vec<(usize, usize, usize)>> {
    let mut out = Vec::with_capacity(events.len());
    for (i, (s, e)) in events.intervals().enumerate() {
        let first = (s / frame_period).round();
        let end = (e / frame_period).round();
        if first < 0.0 || end > frames as f64 {
            return Err(Error::InvalidArgument(format!(
                "event {i} covers frames [{first}, {end}) outside [0, {frames})"
            )));
        }
        let (first, end) = (first as usize, end as usize);
        if end <= first {
            return Err(Error::ShortEvent { index: i });
        }
        out.push((first, end, (first + end - 1) / 2));
    }
    Ok(out)
}

/// Position regulation: per event `exp(mean |P_e − p_e|)`, summed.
pub fn l_pos(pos: &PositionEmbeddings, events: &EventSet) -> Result<LossReport> {
    l_pos_table(&pos.embeddings, pos.frame_period, events)
}

/// [`l_pos`] on a borrowed table; the caller guarantees finite entries.
pub fn l_pos_table(p: &Matrix, frame_period: f64, events: &EventSet) -> Result<LossReport> {
    let d = p.cols();
    let ranges = event_frames(events, p.rows(), frame_period)?;
    let mut grad = Matrix::zeros(p.rows(), d);
    let mut value = 0.0;
    let mut terms = Vec::with_capacity(ranges.len());
    let mut saturated = Vec::new();
    for (ei, &(first, end, center)) in ranges.iter().enumerate() {
        let n = ((end - first) * d) as f64;
        let c = p.row(center).to_vec();
        let mut total = 0.0;
        for r in first..end {
            total += p.row(r).iter().zip(&c).map(|(a, b)| (a - b).abs()).sum::<f64>();
        }
        let mean = if d == 0 { 0.0 } else { total / n };
        let sat = mean > POS_EXPONENT_CLAMP;
        let term = mean.min(POS_EXPONENT_CLAMP).exp();
        value += term;
        terms.push(term);
        if sat {
            saturated.push(ei);
            continue;
        }
        let scale = term / n;
        for r in first..end {
            if r == center {
                continue;
            }
            for k in 0..d {
                let diff = p.get(r, k) - c[k];
                let s = if diff > 0.0 {
                    scale
                } else if diff < 0.0 {
                    -scale
                } else {
                    0.0
                };
                grad.row_mut(r)[k] += s;
                grad.row_mut(center)[k] -= s;
            }
        }
    }
    let mut report = LossReport::with_positions(value, grad);
    report.diag("per_event", &terms);
    report.diag("saturated", !saturated.is_empty());
    if !saturated.is_empty() {
        report.diag("saturated_events", &saturated);
    }
    Ok(report)
}

fn add_block<T: Clone>(
    acc: &mut Option<T>,
    other: &Option<T>,
    scale: f64,
    axpy: impl Fn(&mut T, &T, f64) -> Result<()>,
    scaled: impl Fn(&T, f64) -> T,
) -> Result<()> {
    match (acc.as_mut(), other) {
        (_, None) => Ok(()),
        (None, Some(o)) => {
            *acc = Some(scaled(o, scale));
            Ok(())
        }
        (Some(a), Some(o)) => axpy(a, o, scale),
    }
}

fn add_moments(a: &mut Vec<[f64; 2]>, b: &Vec<[f64; 2]>, s: f64) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "moment gradients for {} and {} predictions",
            a.len(),
            b.len()
        )));
    }
    for (x, y) in a.iter_mut().zip(b) {
        x[0] += s * y[0];
        x[1] += s * y[1];
    }
    Ok(())
}

fn add_matrix(a: &mut Matrix, b: &Matrix, s: f64) -> Result<()> {
    if a.rows() != b.rows() || a.cols() != b.cols() {
        return Err(Error::Shape(format!(
            "position gradients {}x{} and {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    for (x, y) in a.as_mut_slice().iter_mut().zip(b.as_slice()) {
        *x += s * y;
    }
    Ok(())
}

fn scale_moments(a: &Vec<[f64; 2]>, s: f64) -> Vec<[f64; 2]> {
    a.iter().map(|g| [s * g[0], s * g[1]]).collect()
}

fn scale_matrix(a: &Matrix, s: f64) -> Matrix {
    let mut m = a.clone();
    m.as_mut_slice().iter_mut().for_each(|v| *v *= s);
    m
}

/// `l_mnt + λ_e·l_evt + λ_p·l_pos`, gradients combined block-wise.
pub fn total_loss(
    mnt: &LossReport,
    evt: &LossReport,
    pos: &LossReport,
    w: &RegulationWeights,
) -> Result<LossReport> {
    w.validate()?;
    let mut out = LossReport::scalar(mnt.value + w.lambda_e * evt.value + w.lambda_p * pos.value);
    for (part, scale) in [(mnt, 1.0), (evt, w.lambda_e), (pos, w.lambda_p)] {
        add_block(&mut out.moment_grad, &part.moment_grad, scale, add_moments, scale_moments)?;
        add_block(&mut out.position_grad, &part.position_grad, scale, add_matrix, scale_matrix)?;
    }
    out.diag("l_mnt", mnt.value);
    out.diag("l_evt", evt.value);
    out.diag("l_pos", pos.value);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iv(s: f64, e: f64) -> Span {
        Span::from_interval(s, e).unwrap()
    }

    #[test]
    fn pred_on_its_event_contributes_zero() {
        let ev = EventSet::from_cuts(vec![0.0, 4.0, 10.0]).unwrap();
        let r = l_evt(&[iv(4.0, 10.0)], &ev, &RegulationWeights::default(), EvtMode::BestIou).unwrap();
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn l1_only_hand_value() {
        let ev = EventSet::single(10.0).unwrap();
        let w = RegulationWeights {
            lambda_l1: 1.0,
            lambda_iou: 0.0,
            ..Default::default()
        };
        let r = l_evt(&[iv(2.0, 8.0)], &ev, &w, EvtMode::BestIou).unwrap();
        assert_eq!(r.value, 4.0);
        assert_eq!(r.moment_grad.unwrap(), vec![[0.0, -1.0]]);
    }

    #[test]
    fn association_rules() {
        let ev = [iv(0.0, 4.0), iv(4.0, 8.0), iv(8.0, 12.0)];
        // equal overlap with events 0 and 1 → earlier
        assert_eq!(best_event(&iv(3.0, 5.0), &ev), 0);
        assert_eq!(best_event(&iv(5.0, 12.0), &ev), 2);
        // no overlap anywhere → nearest center
        let far = [iv(0.0, 1.0), iv(1.0, 2.0)];
        assert_eq!(best_event(&iv(5.0, 6.0), &far), 1);
        assert_eq!(best_event(&iv(1.5, 1.5), &far), 1);
    }

    #[test]
    fn all_events_sums_everything() {
        let ev = EventSet::from_cuts(vec![0.0, 5.0, 10.0]).unwrap();
        let w = RegulationWeights::default();
        let p = [iv(1.0, 4.0)];
        let best = l_evt(&p, &ev, &w, EvtMode::BestIou).unwrap();
        let all = l_evt(&p, &ev, &w, EvtMode::AllEvents).unwrap();
        let other = span_cost(&iv(5.0, 10.0), &p[0], 1.0, 1.0).0;
        assert!((all.value - best.value - other).abs() < 1e-12);
    }

    #[test]
    fn l_pos_hand_values() {
        let ev = EventSet::single(3.0).unwrap();
        let flat = PositionEmbeddings::new(Matrix::from_vec(3, 2, vec![0.5; 6]).unwrap(), 1.0).unwrap();
        assert_eq!(l_pos(&flat, &ev).unwrap().value, 1.0);

        let two = EventSet::from_cuts(vec![0.0, 1.0, 3.0]).unwrap();
        assert_eq!(l_pos(&flat, &two).unwrap().value, 2.0);

        let ramp = PositionEmbeddings::new(Matrix::from_vec(3, 1, vec![0.0, 1.0, 2.0]).unwrap(), 1.0)
            .unwrap();
        let r = l_pos(&ramp, &ev).unwrap();
        assert!((r.value - (2.0f64 / 3.0).exp()).abs() < 1e-15);
        // member rows pull away from center; center row sees opposite signs
        let g = r.position_grad.unwrap();
        let s = (2.0f64 / 3.0).exp() / 3.0;
        assert!((g.get(0, 0) + s).abs() < 1e-15);
        assert_eq!(g.get(1, 0), 0.0);
        assert!((g.get(2, 0) - s).abs() < 1e-15);
    }

    #[test]
    fn l_pos_center_frame_is_floor_midpoint() {
        // four frames: center = floor((0+3)/2) = 1
        let p = PositionEmbeddings::new(Matrix::from_vec(4, 1, vec![0.0, 1.0, 1.0, 1.0]).unwrap(), 1.0)
            .unwrap();
        let r = l_pos(&p, &EventSet::single(4.0).unwrap()).unwrap();
        assert!((r.value - 0.25f64.exp()).abs() < 1e-15);
    }

    #[test]
    fn l_pos_saturates() {
        let p = PositionEmbeddings::new(Matrix::from_vec(2, 1, vec![0.0, 1e4]).unwrap(), 1.0).unwrap();
        let r = l_pos(&p, &EventSet::single(2.0).unwrap()).unwrap();
        assert_eq!(r.value, POS_EXPONENT_CLAMP.exp());
        assert_eq!(r.diagnostics["saturated"], serde_json::json!(true));
        assert!(r.position_grad.unwrap().as_slice().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn l_pos_rejects_short_events() {
        let p = PositionEmbeddings::new(Matrix::zeros(4, 1), 1.0).unwrap();
        let ev = EventSet::from_cuts(vec![0.0, 0.2, 4.0]).unwrap();
        assert!(matches!(l_pos(&p, &ev), Err(Error::ShortEvent { index: 0 })));
        let long = EventSet::single(6.0).unwrap();
        assert!(l_pos(&p, &long).is_err());
    }

    #[test]
    fn total_loss_weights() {
        let mnt = LossReport::with_moments(1.0, vec![[1.0, 2.0]]);
        let evt = LossReport::with_moments(2.0, vec![[10.0, 20.0]]);
        let pos = LossReport::with_positions(3.0, Matrix::from_vec(1, 1, vec![5.0]).unwrap());
        let w = RegulationWeights::default();
        let t = total_loss(&mnt, &evt, &pos, &w).unwrap();
        assert!((t.value - 1.203).abs() < 1e-15);
        assert_eq!(t.moment_grad.unwrap(), vec![[1.0 + 0.1 * 10.0, 2.0 + 0.1 * 20.0]]);
        assert_eq!(t.position_grad.unwrap().as_slice(), &[0.001 * 5.0]);

        let off = RegulationWeights {
            lambda_e: 0.0,
            lambda_p: 0.0,
            ..w
        };
        assert_eq!(total_loss(&mnt, &evt, &pos, &off).unwrap().value, 1.0);

        let bad = LossReport::with_moments(0.0, vec![[0.0, 0.0]; 2]);
        assert!(matches!(total_loss(&mnt, &bad, &pos, &w), Err(Error::Shape(_))));
    }
}
