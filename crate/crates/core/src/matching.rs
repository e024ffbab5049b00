//! Optimal one-to-one assignment and the set-matching moment loss.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::LossReport;
use crate::matrix::Matrix;
use crate::temporal::{giou_with_grad, Span};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    /// `(pred_index, gt_index)` sorted by prediction index.
    pub pairs: Vec<(usize, usize)>,
    pub total_cost: f64,
}

impl Assignment {
    pub fn gt_for(&self, pred: usize) -> Option<usize> {
        self.pairs.iter().find(|(p, _)| *p == pred).map(|&(_, g)| g)
    }
}

/// Shortest-augmenting-path Hungarian solver on a square matrix.
///
/// Returns the row→column assignment and the dual potentials `(u, v)` with
/// `cost[i][j] − u[i] − v[j] ≥ 0`, tight on assigned cells.
fn solve_square(cost: &Matrix) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    let n = cost.rows();
    debug_assert_eq!(n, cost.cols());
    // 1-based arrays; column 0 is the virtual root.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost.get(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0usize; n];
    for j in 1..=n {
        row_to_col[p[j] - 1] = j - 1;
    }
    (row_to_col, u[1..].to_vec(), v[1..].to_vec())
}

/// Move row `i` onto column `j` in the square assignment `current`, keeping
/// pinned rows where they are and touching only cells accepted by `tight`.
/// The row displaced from `j` follows an alternating path back to the
/// column `i` gave up. Returns the new assignment, or `None` if no path exists.
fn reroute(
    current: &[usize],
    pinned: &[bool],
    i: usize,
    j: usize,
    tight: impl Fn(usize, usize) -> bool,
) -> Option<Vec<usize>> {
    let s = current.len();
    let mut owner = vec![0usize; s];
    for (r, &c) in current.iter().enumerate() {
        owner[c] = r;
    }
    let target = current[i];
    let start = owner[j];
    // BFS over rows; `via[c]` is the row that reached column `c`.
    let mut via = vec![usize::MAX; s];
    let mut queue = std::collections::VecDeque::from([start]);
    let mut seen_row = vec![false; s];
    seen_row[start] = true;
    while let Some(r) = queue.pop_front() {
        for c in 0..s {
            if c == j || via[c] != usize::MAX || !tight(r, c) {
                continue;
            }
            via[c] = r;
            if c == target {
                let mut next = current.to_vec();
                next[i] = j;
                let mut col = c;
                loop {
                    let row = via[col];
                    let prev = next[row];
                    next[row] = col;
                    if row == start {
                        break;
                    }
                    col = prev;
                }
                return Some(next);
            }
            let r2 = owner[c];
            if r2 != i && !pinned[r2] && !seen_row[r2] {
                seen_row[r2] = true;
                queue.push_back(r2);
            }
        }
    }
    None
}

/// Minimum-cost one-to-one assignment of size `min(n, m)`.
///
/// Among optimal assignments the lexicographically smallest pair list
/// (sorted by prediction index) is returned.
pub fn hungarian(cost: &Matrix) -> Result<Assignment> {
    let (n, m) = (cost.rows(), cost.cols());
    if let Some(p) = cost.as_slice().iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            row: p / m.max(1),
            col: p % m.max(1),
        });
    }
    if n == 0 || m == 0 {
        return Ok(Assignment {
            pairs: Vec::new(),
            total_cost: 0.0,
        });
    }
    let s = n.max(m);
    let mut sq = Matrix::zeros(s, s);
    for i in 0..n {
        sq.row_mut(i)[..m].copy_from_slice(cost.row(i));
    }
    let (mut current, u, v) = solve_square(&sq);
    let opt = (0..s).map(|i| sq.get(i, current[i])).fold(0.0, |a, b| a + b);
    let max_abs = cost.as_slice().iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let tol = 1e-10 * (1.0 + max_abs * s as f64);

    // Walk rows in order, pinning each to the smallest column that still
    // admits an optimal completion. Every optimal assignment lies on
    // dual-tight cells, so completions are searched for among those.
    let tight = |r: usize, c: usize| sq.get(r, c) - u[r] - v[c] <= tol;
    let mut fixed: Vec<(usize, usize)> = Vec::with_capacity(n);
    let mut col_used = vec![false; s];
    let mut pinned = vec![false; s];
    for i in 0..n {
        let mut candidates: Vec<usize> = (0..m)
            .filter(|&j| !col_used[j])
            .filter(|&j| j == current[i] || tight(i, j))
            .collect();
        if let Some(d) = (m..s).find(|&j| !col_used[j] && (j == current[i] || tight(i, j))) {
            candidates.push(if current[i] >= m { current[i] } else { d });
        }
        let mut chosen = current[i];
        for j in candidates {
            if j == current[i] {
                break;
            }
            let Some(full) = reroute(&current, &pinned, i, j, |r, c| c == current[r] || tight(r, c)) else {
                continue;
            };
            let total = (0..s).map(|r| sq.get(r, full[r])).fold(0.0, |a, b| a + b);
            if (total - opt).abs() <= tol {
                chosen = j;
                current = full;
                break;
            }
        }
        fixed.push((i, chosen));
        col_used[chosen] = true;
        pinned[i] = true;
    }

    let pairs: Vec<(usize, usize)> = fixed.into_iter().filter(|&(_, j)| j < m).collect();
    let total_cost = pairs.iter().map(|&(i, j)| cost.get(i, j)).fold(0.0, |a, b| a + b);
    Ok(Assignment { pairs, total_cost })
}

/// Weights of the L1 and GIoU terms of the matching cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchWeights {
    pub lambda_l1: f64,
    pub lambda_iou: f64,
}

impl Default for MatchWeights {
    fn default() -> Self {
        Self {
            lambda_l1: 1.0,
            lambda_iou: 1.0,
        }
    }
}

impl MatchWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_l1 >= 0.0 && self.lambda_iou >= 0.0) {
            return Err(Error::InvalidArgument("loss weights must be non-negative".into()));
        }
        if self.lambda_l1 == 0.0 && self.lambda_iou == 0.0 {
            return Err(Error::InvalidArgument("loss weights cannot both be zero".into()));
        }
        Ok(())
    }
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// L1 (center/width) plus `1 − GIoU` between a target and a prediction,
/// with the gradient with respect to the prediction.
pub fn span_cost(target: &Span, pred: &Span, lambda_l1: f64, lambda_iou: f64) -> (f64, [f64; 2]) {
    let dc = pred.center - target.center;
    let dw = pred.width - target.width;
    let mut value = 0.0;
    let mut grad = [0.0; 2];
    if lambda_l1 != 0.0 {
        value += lambda_l1 * (dc.abs() + dw.abs());
        grad[0] += lambda_l1 * sign(dc);
        grad[1] += lambda_l1 * sign(dw);
    }
    if lambda_iou != 0.0 {
        let (g, dg) = giou_with_grad(target, pred);
        value += lambda_iou * (1.0 - g);
        grad[0] -= lambda_iou * dg[0];
        grad[1] -= lambda_iou * dg[1];
    }
    (value, grad)
}

pub fn cost_matrix(preds: &[Span], gts: &[Span], w: &MatchWeights) -> Matrix {
    let mut cost = Matrix::zeros(preds.len(), gts.len());
    for (i, p) in preds.iter().enumerate() {
        for (j, g) in gts.iter().enumerate() {
            cost.set(i, j, span_cost(g, p, w.lambda_l1, w.lambda_iou).0);
        }
    }
    cost
}

#[derive(Debug, Clone)]
pub struct MomentSetLoss {
    pub report: LossReport,
    pub assignment: Assignment,
    pub cost: Matrix,
}

/// Set-matching moment loss: Hungarian assignment over the pairwise span
/// cost, averaged over matched pairs. The gradient treats the assignment as
/// constant; unmatched predictions receive zero gradient.
pub fn moment_set_loss(preds: &[Span], gts: &[Span], w: &MatchWeights) -> Result<MomentSetLoss> {
    w.validate()?;
    if gts.is_empty() {
        return Err(Error::EmptyGroundTruth);
    }
    let cost = cost_matrix(preds, gts, w);
    let assignment = hungarian(&cost)?;
    let (value, grads) = matched_loss(preds, gts, w, &assignment.pairs);
    let mut report = LossReport::with_moments(value, grads);
    report.diag("matched_pairs", &assignment.pairs);
    Ok(MomentSetLoss {
        report,
        assignment,
        cost,
    })
}

/// Mean matched cost for a fixed set of pairs.
pub fn matched_loss(
    preds: &[Span],
    gts: &[Span],
    w: &MatchWeights,
    pairs: &[(usize, usize)],
) -> (f64, Vec<[f64; 2]>) {
    let mut grads = vec![[0.0; 2]; preds.len()];
    if pairs.is_empty() {
        return (0.0, grads);
    }
    let scale = 1.0 / pairs.len() as f64;
    let mut value = 0.0;
    for &(i, j) in pairs {
        let (c, g) = span_cost(&gts[j], &preds[i], w.lambda_l1, w.lambda_iou);
        value += c;
        grads[i][0] += scale * g[0];
        grads[i][1] += scale * g[1];
    }
    (value * scale, grads)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn two_by_two() {
        let a = hungarian(&m(&[&[1.0, 2.0], &[3.0, 1.0]])).unwrap();
        assert_eq!(a.pairs, vec![(0, 0), (1, 1)]);
        assert_eq!(a.total_cost, 2.0);
    }

    #[test]
    fn zero_diagonal() {
        let a = hungarian(&m(&[&[0.0, 5.0, 5.0], &[5.0, 0.0, 5.0], &[5.0, 5.0, 0.0]])).unwrap();
        assert_eq!(a.pairs, vec![(0, 0), (1, 1), (2, 2)]);
        assert_eq!(a.total_cost, 0.0);
    }

    #[test]
    fn empty_matrix() {
        let a = hungarian(&Matrix::zeros(0, 3)).unwrap();
        assert!(a.pairs.is_empty());
        assert_eq!(a.total_cost, 0.0);
    }

    #[test]
    fn ties_resolve_lexicographically() {
        let a = hungarian(&m(&[&[1.0, 1.0], &[1.0, 1.0]])).unwrap();
        assert_eq!(a.pairs, vec![(0, 0), (1, 1)]);
        // more predictions than ground truths: earliest predictions win ties
        let b = hungarian(&m(&[&[2.0], &[1.0], &[1.0]])).unwrap();
        assert_eq!(b.pairs, vec![(1, 0)]);
        let c = hungarian(&m(&[&[0.0, 0.0, 0.0]])).unwrap();
        assert_eq!(c.pairs, vec![(0, 0)]);
        let d = hungarian(&m(&[&[3.0, 1.0, 1.0], &[1.0, 3.0, 1.0]])).unwrap();
        assert_eq!(d.pairs, vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn rectangular() {
        let a = hungarian(&m(&[&[4.0, 1.0, 3.0], &[2.0, 0.0, 5.0]])).unwrap();
        assert_eq!(a.total_cost, 3.0);
        assert_eq!(a.pairs, vec![(0, 1), (1, 0)]);
        let b = hungarian(&m(&[&[4.0, 2.0], &[1.0, 0.0], &[3.0, 5.0]])).unwrap();
        assert_eq!(b.total_cost, 3.0);
        assert_eq!(b.pairs, vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn rejects_non_finite() {
        assert!(hungarian(&m(&[&[f64::NAN]])).is_err());
    }

    #[test]
    fn identical_sets_have_zero_loss() {
        let s = vec![Span::new(3.0, 2.0).unwrap(), Span::new(8.0, 4.0).unwrap()];
        let l = moment_set_loss(&s, &s, &MatchWeights::default()).unwrap();
        assert_eq!(l.report.value, 0.0);
    }

    #[test]
    fn disjoint_giou_only() {
        let p = [Span::from_interval(0.0, 2.0).unwrap()];
        let g = [Span::from_interval(8.0, 10.0).unwrap()];
        let w = MatchWeights {
            lambda_l1: 0.0,
            lambda_iou: 1.0,
        };
        let l = moment_set_loss(&p, &g, &w).unwrap();
        assert!((l.report.value - 1.6).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        let p = [Span::new(1.0, 1.0).unwrap()];
        assert!(matches!(
            moment_set_loss(&p, &[], &MatchWeights::default()),
            Err(Error::EmptyGroundTruth)
        ));
        let zero = MatchWeights {
            lambda_l1: 0.0,
            lambda_iou: 0.0,
        };
        assert!(moment_set_loss(&p, &p, &zero).is_err());
    }
}
