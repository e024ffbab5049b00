#[path = "common/oracles.rs"]
mod oracles;

use momentreg::matching::{cost_matrix, hungarian, moment_set_loss};
use momentreg::{MatchWeights, Matrix, Span};
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Matrix {
    Matrix::from_vec(rows, cols, data).unwrap()
}

fn cost_strategy() -> impl Strategy<Value = Matrix> {
    (0usize..=6, 0usize..=6).prop_flat_map(|(r, c)| {
        prop::collection::vec(prop_oneof![-50i32..50, 0i32..3], r * c)
            .prop_map(move |v| matrix(r, c, v.into_iter().map(f64::from).collect()))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    // Integer costs keep every partial sum exact, so equality is exact.
    #[test]
    fn cost_equals_brute_force(c in cost_strategy()) {
        let a = hungarian(&c).unwrap();
        prop_assert_eq!(a.total_cost, oracles::brute_assignment_cost(&c));
        prop_assert_eq!(a.pairs.len(), c.rows().min(c.cols()));
        let mut rows: Vec<usize> = a.pairs.iter().map(|p| p.0).collect();
        let mut cols: Vec<usize> = a.pairs.iter().map(|p| p.1).collect();
        rows.sort_unstable();
        cols.sort_unstable();
        rows.dedup();
        cols.dedup();
        prop_assert_eq!(rows.len(), a.pairs.len());
        prop_assert_eq!(cols.len(), a.pairs.len());
        let sum: f64 = a.pairs.iter().map(|&(i, j)| c.get(i, j)).sum();
        prop_assert_eq!(sum, a.total_cost);
    }

    #[test]
    fn ties_resolve_to_smallest_pair_list(c in cost_strategy()) {
        prop_assert_eq!(hungarian(&c).unwrap().pairs, oracles::brute_lexmin_pairs(&c));
    }

    #[test]
    fn real_costs_within_rounding(r in 1usize..=5, c in 1usize..=5, seed_value in any::<u64>()) {
        use rand::Rng;
        let mut rng = momentreg::seed::rng(seed_value);
        let m = matrix(r, c, (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect());
        let a = hungarian(&m).unwrap();
        prop_assert!((a.total_cost - oracles::brute_assignment_cost(&m)).abs() < 1e-12);
    }

    #[test]
    fn transposition_keeps_cost(c in cost_strategy()) {
        let t = matrix(c.cols(), c.rows(), (0..c.cols()).flat_map(|j| (0..c.rows()).map(move |i| (i, j))).map(|(i, j)| c.get(i, j)).collect());
        prop_assert_eq!(hungarian(&c).unwrap().total_cost, hungarian(&t).unwrap().total_cost);
    }
}

#[test]
fn non_finite_cost_is_rejected() {
    assert!(hungarian(&matrix(2, 2, vec![0.0, f64::NAN, 1.0, 2.0])).is_err());
}

#[test]
fn disjoint_single_pair_loss() {
    let w = MatchWeights { lambda_l1: 0.0, lambda_iou: 1.0 };
    let pred = [Span::from_interval(0.0, 2.0).unwrap()];
    let gt = [Span::from_interval(8.0, 10.0).unwrap()];
    let l = moment_set_loss(&pred, &gt, &w).unwrap();
    assert!((l.report.value - 1.6).abs() < 1e-12);
    assert_eq!(cost_matrix(&pred, &gt, &w).rows(), 1);
}
