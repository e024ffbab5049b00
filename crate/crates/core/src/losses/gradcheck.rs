//! Central-difference gradient verification.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use super::{
    evt_association, event_frames, l_evt, l_pos, total_loss, EvtMode, LossReport,
    PositionEmbeddings, RegulationWeights,
};
use crate::error::{Error, Result};
use crate::events::EventSet;
use crate::matching::{hungarian, cost_matrix, moment_set_loss, MatchWeights};
use crate::matrix::Matrix;
use crate::seed;
use crate::temporal::{giou_kink_distance, Span};

/// Denominator floor for relative errors, so vanishing gradients are
/// compared on an absolute scale.
pub const REL_ERR_FLOOR: f64 = 1e-3;

/// A differentiable scalar function with an analytic gradient.
pub trait GradTarget {
    fn value(&self, x: &[f64]) -> f64;

    fn gradient(&self, x: &[f64]) -> Vec<f64>;

    /// Whether a non-differentiable point lies within `guard` of `x` along
    /// coordinate `coord`. Such coordinates are skipped.
    fn near_kink(&self, _x: &[f64], _coord: usize, _guard: f64) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst_coord: Option<usize>,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
    pub skipped: usize,
}

/// Compare the analytic gradient at `point` with central differences
/// `(f(x+eps) − f(x−eps)) / 2eps`, skipping coordinates within `10·eps` of a
/// declared kink.
pub fn check_gradients<T: GradTarget + ?Sized>(
    target: &T,
    point: &[f64],
    eps: f64,
) -> Result<GradCheckReport> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    let analytic = target.gradient(point);
    if analytic.len() != point.len() {
        return Err(Error::Shape(format!(
            "gradient has {} entries for a {}-dimensional point",
            analytic.len(),
            point.len()
        )));
    }
    let guard = 10.0 * eps;
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst_coord: None,
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
        skipped: 0,
    };
    let mut x = point.to_vec();
    for i in 0..point.len() {
        if target.near_kink(point, i, guard) {
            report.skipped += 1;
            continue;
        }
        x[i] = point[i] + eps;
        let up = target.value(&x);
        x[i] = point[i] - eps;
        let down = target.value(&x);
        x[i] = point[i];
        let numeric = (up - down) / (2.0 * eps);
        let err = (analytic[i] - numeric).abs() / numeric.abs().max(REL_ERR_FLOOR);
        report.checked += 1;
        if err > report.max_rel_err || report.worst_coord.is_none() {
            report.max_rel_err = err;
            report.worst_coord = Some(i);
            report.analytic = analytic[i];
            report.numeric = numeric;
        }
    }
    Ok(report)
}

fn spans_of(x: &[f64]) -> Vec<Span> {
    x.chunks_exact(2)
        .map(|c| Span {
            center: c[0],
            width: c[1],
        })
        .collect()
}

fn flatten_moments(g: &Option<Vec<[f64; 2]>>, n: usize) -> Vec<f64> {
    match g {
        Some(g) => g.iter().flat_map(|v| [v[0], v[1]]).collect(),
        None => vec![0.0; 2 * n],
    }
}

fn l1_giou_near(target: &Span, pred: &Span, guard: f64) -> bool {
    (pred.center - target.center).abs() < guard
        || (pred.width - target.width).abs() < guard
        || giou_kink_distance(target, pred) < guard
}

fn probe<F: Fn(&[f64]) -> T, T: PartialEq>(x: &[f64], coord: usize, guard: f64, f: F) -> bool {
    let base = f(x);
    let mut y = x.to_vec();
    y[coord] = x[coord] + guard;
    let up = f(&y);
    y[coord] = x[coord] - guard;
    let down = f(&y);
    base != up || base != down
}

/// Set-matching moment loss as a function of flattened `[center, width]` pairs.
pub struct MomentSetTarget {
    pub gts: Vec<Span>,
    pub weights: MatchWeights,
}

impl MomentSetTarget {
    fn pairs(&self, x: &[f64]) -> Vec<(usize, usize)> {
        let cost = cost_matrix(&spans_of(x), &self.gts, &self.weights);
        hungarian(&cost).map(|a| a.pairs).unwrap_or_default()
    }

    fn near(&self, x: &[f64], coord: usize, guard: f64) -> bool {
        let preds = spans_of(x);
        let i = coord / 2;
        if preds[i].width < guard || probe(x, coord, guard, |y| self.pairs(y)) {
            return true;
        }
        self.pairs(x)
            .iter()
            .filter(|&&(p, _)| p == i)
            .any(|&(_, g)| l1_giou_near(&self.gts[g], &preds[i], guard))
    }
}

impl GradTarget for MomentSetTarget {
    fn value(&self, x: &[f64]) -> f64 {
        moment_set_loss(&spans_of(x), &self.gts, &self.weights)
            .map(|l| l.report.value)
            .unwrap_or(f64::NAN)
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len() / 2;
        moment_set_loss(&spans_of(x), &self.gts, &self.weights)
            .map(|l| flatten_moments(&l.report.moment_grad, n))
            .unwrap_or_else(|_| vec![f64::NAN; x.len()])
    }

    fn near_kink(&self, x: &[f64], coord: usize, guard: f64) -> bool {
        self.near(x, coord, guard)
    }
}

/// Event-regulation loss as a function of flattened `[center, width]` pairs.
pub struct EvtTarget {
    pub events: EventSet,
    pub weights: RegulationWeights,
    pub mode: EvtMode,
}

impl EvtTarget {
    fn near(&self, x: &[f64], coord: usize, guard: f64) -> bool {
        let preds = spans_of(x);
        let i = coord / 2;
        if preds[i].width < guard
            || probe(x, coord, guard, |y| evt_association(&spans_of(y), &self.events, self.mode))
        {
            return true;
        }
        let spans = self.events.spans();
        evt_association(&preds[i..=i], &self.events, self.mode)[0]
            .iter()
            .any(|&e| l1_giou_near(&spans[e], &preds[i], guard))
    }
}

impl GradTarget for EvtTarget {
    fn value(&self, x: &[f64]) -> f64 {
        l_evt(&spans_of(x), &self.events, &self.weights, self.mode)
            .map(|r| r.value)
            .unwrap_or(f64::NAN)
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len() / 2;
        l_evt(&spans_of(x), &self.events, &self.weights, self.mode)
            .map(|r| flatten_moments(&r.moment_grad, n))
            .unwrap_or_else(|_| vec![f64::NAN; x.len()])
    }

    fn near_kink(&self, x: &[f64], coord: usize, guard: f64) -> bool {
        self.near(x, coord, guard)
    }
}

/// Position loss as a function of the flattened `frames × dim` table.
pub struct PosTarget {
    pub events: EventSet,
    pub frames: usize,
    pub dim: usize,
    pub frame_period: f64,
}

impl PosTarget {
    fn report(&self, x: &[f64]) -> Result<LossReport> {
        let m = Matrix::from_vec(self.frames, self.dim, x.to_vec())?;
        l_pos(&PositionEmbeddings::new(m, self.frame_period)?, &self.events)
    }

    fn near(&self, x: &[f64], coord: usize, guard: f64) -> bool {
        let Ok(ranges) = event_frames(&self.events, self.frames, self.frame_period) else {
            return true;
        };
        let (r, k) = (coord / self.dim, coord % self.dim);
        let at = |row: usize| x[row * self.dim + k];
        let Some(&(first, end, center)) = ranges.iter().find(|(f, e, _)| (*f..*e).contains(&r))
        else {
            return false;
        };
        if r != center {
            return (at(r) - at(center)).abs() < guard;
        }
        (first..end)
            .filter(|&m| m != center)
            .any(|m| (at(m) - at(center)).abs() < guard)
    }
}

impl GradTarget for PosTarget {
    fn value(&self, x: &[f64]) -> f64 {
        self.report(x).map(|r| r.value).unwrap_or(f64::NAN)
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.report(x)
            .ok()
            .and_then(|r| r.position_grad)
            .map(Matrix::into_vec)
            .unwrap_or_else(|| vec![f64::NAN; x.len()])
    }

    fn near_kink(&self, x: &[f64], coord: usize, guard: f64) -> bool {
        self.near(x, coord, guard)
    }
}

/// Combined objective over predictions followed by the position table.
pub struct TotalTarget {
    pub moments: MomentSetTarget,
    pub evt: EvtTarget,
    pub pos: PosTarget,
    pub n_preds: usize,
}

impl TotalTarget {
    fn report(&self, x: &[f64]) -> Result<LossReport> {
        let (m, p) = x.split_at(2 * self.n_preds);
        let preds = spans_of(m);
        let mnt = moment_set_loss(&preds, &self.moments.gts, &self.moments.weights)?.report;
        let evt = l_evt(&preds, &self.evt.events, &self.evt.weights, self.evt.mode)?;
        let pos = self.pos.report(p)?;
        total_loss(&mnt, &evt, &pos, &self.evt.weights)
    }
}

impl GradTarget for TotalTarget {
    fn value(&self, x: &[f64]) -> f64 {
        self.report(x).map(|r| r.value).unwrap_or(f64::NAN)
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        match self.report(x) {
            Ok(r) => {
                let mut g = flatten_moments(&r.moment_grad, self.n_preds);
                g.extend(
                    r.position_grad
                        .map(Matrix::into_vec)
                        .unwrap_or_else(|| vec![0.0; x.len() - 2 * self.n_preds]),
                );
                g
            }
            Err(_) => vec![f64::NAN; x.len()],
        }
    }

    fn near_kink(&self, x: &[f64], coord: usize, guard: f64) -> bool {
        let split = 2 * self.n_preds;
        if coord < split {
            let m = &x[..split];
            self.moments.near(m, coord, guard) || self.evt.near(m, coord, guard)
        } else {
            self.pos.near(&x[split..], coord - split, guard)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteRow {
    pub loss: String,
    pub trials: usize,
    pub checked: usize,
    pub skipped: usize,
    pub max_rel_err: f64,
    pub passed: bool,
}

/// Pass threshold of the gradient suite.
pub const SUITE_TOLERANCE: f64 = 1e-4;
pub const SUITE_EPS: f64 = 1e-6;

struct Instance {
    preds: Vec<f64>,
    gts: Vec<Span>,
    events: EventSet,
    positions: Vec<f64>,
    frames: usize,
    dim: usize,
}

fn random_instance(seed: u64) -> Instance {
    let mut rng = seed::rng(seed);
    let frames = rng.random_range(6..=16usize);
    let horizon = frames as f64;
    let n_events = rng.random_range(1..=4usize).min(frames / 2);
    let mut cuts: Vec<usize> = (1..frames).collect();
    // choose n_events − 1 distinct interior cuts
    for i in 0..cuts.len() {
        let j = rng.random_range(i..cuts.len());
        cuts.swap(i, j);
    }
    let mut chosen: Vec<usize> = cuts[..n_events - 1].to_vec();
    chosen.sort_unstable();
    let mut frame_cuts = vec![0];
    frame_cuts.extend(chosen);
    frame_cuts.push(frames);
    let events = EventSet::from_frame_cuts(&frame_cuts, 1.0).expect("sorted cuts");

    let span = |rng: &mut rand_chacha::ChaCha8Rng| {
        let w = rng.random_range(0.3..horizon * 0.6);
        let c = rng.random_range(0.0..horizon);
        [c, w]
    };
    let n_preds = rng.random_range(1..=4usize);
    let preds: Vec<f64> = (0..n_preds).flat_map(|_| span(&mut rng)).collect();
    let n_gts = rng.random_range(1..=3usize);
    let gts = (0..n_gts)
        .map(|_| {
            let [c, w] = span(&mut rng);
            Span { center: c, width: w }
        })
        .collect();
    let dim = rng.random_range(1..=4usize);
    let positions = (0..frames * dim)
        .map(|_| StandardNormal.sample(&mut rng))
        .map(|v: f64| 0.5 * v)
        .collect();
    Instance {
        preds,
        gts,
        events,
        positions,
        frames,
        dim,
    }
}

/// Check every loss at `trials` random points each.
pub fn run_gradcheck_suite(seed: u64, trials: usize) -> Vec<SuiteRow> {
    let weights = RegulationWeights {
        lambda_l1: 1.0,
        lambda_iou: 2.0,
        lambda_e: 0.1,
        lambda_p: 0.001,
    };
    let mw = MatchWeights {
        lambda_l1: 1.0,
        lambda_iou: 1.0,
    };
    let names = [
        "moment_set_loss",
        "l_evt_best_iou",
        "l_evt_all_events",
        "l_pos",
        "total_loss",
    ];
    names
        .iter()
        .enumerate()
        .map(|(li, name)| {
            let per_trial: Vec<GradCheckReport> = (0..trials)
                .into_par_iter()
                .map(|t| {
                    let inst = random_instance(seed::derive_index(seed, t as u64));
                    let pos = PosTarget {
                        events: inst.events.clone(),
                        frames: inst.frames,
                        dim: inst.dim,
                        frame_period: 1.0,
                    };
                    let evt = |mode| EvtTarget {
                        events: inst.events.clone(),
                        weights,
                        mode,
                    };
                    let moments = MomentSetTarget {
                        gts: inst.gts.clone(),
                        weights: mw,
                    };
                    let r = match li {
                        0 => check_gradients(&moments, &inst.preds, SUITE_EPS),
                        1 => check_gradients(&evt(EvtMode::BestIou), &inst.preds, SUITE_EPS),
                        2 => check_gradients(&evt(EvtMode::AllEvents), &inst.preds, SUITE_EPS),
                        3 => check_gradients(&pos, &inst.positions, SUITE_EPS),
                        _ => {
                            let n_preds = inst.preds.len() / 2;
                            let mut x = inst.preds.clone();
                            x.extend_from_slice(&inst.positions);
                            let total = TotalTarget {
                                moments,
                                evt: evt(EvtMode::BestIou),
                                pos,
                                n_preds,
                            };
                            check_gradients(&total, &x, SUITE_EPS)
                        }
                    };
                    r.expect("positive eps")
                })
                .collect();
            let max_rel_err = per_trial.iter().map(|r| r.max_rel_err).fold(0.0, f64::max);
            let checked = per_trial.iter().map(|r| r.checked).sum();
            SuiteRow {
                loss: name.to_string(),
                trials,
                checked,
                skipped: per_trial.iter().map(|r| r.skipped).sum(),
                max_rel_err,
                passed: checked > 0 && max_rel_err < SUITE_TOLERANCE,
            }
        })
        .collect()
}
