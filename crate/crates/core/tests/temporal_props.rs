#[path = "common/oracles.rs"]
mod oracles;

use momentreg::temporal::{giou, iou};
use momentreg::Span;
use proptest::prelude::*;

fn span() -> impl Strategy<Value = Span> {
    (-100.0f64..100.0, 0.0f64..50.0).prop_map(|(c, w)| Span::new(c, w).unwrap())
}

// Widths bounded below so float error in endpoints stays under 1e-12 relative.
fn wide_span() -> impl Strategy<Value = Span> {
    (-100.0f64..100.0, 1.0f64..50.0).prop_map(|(c, w)| Span::new(c, w).unwrap())
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn giou_bounds_and_symmetry(a in span(), b in span()) {
        let (i, g) = (iou(&a, &b), giou(&a, &b));
        prop_assert!((0.0..=1.0).contains(&i));
        // Only two distinct point spans reach the −1 limit.
        let points = a.width == 0.0 && b.width == 0.0;
        prop_assert!(g <= 1.0 && (g > -1.0 || (points && g == -1.0)));
        prop_assert!(g <= i + 1e-15);
        prop_assert_eq!(i, iou(&b, &a));
        prop_assert_eq!(g, giou(&b, &a));
    }

    #[test]
    fn invariant_under_shift_and_scale(a in wide_span(), b in wide_span(), t in -100.0f64..100.0, k in 0.01f64..100.0) {
        let (i, g) = (iou(&a, &b), giou(&a, &b));
        prop_assert!(close(iou(&a.shifted(t), &b.shifted(t)), i));
        prop_assert!(close(giou(&a.shifted(t), &b.shifted(t)), g));
        prop_assert!(close(iou(&a.scaled(k), &b.scaled(k)), i));
        prop_assert!(close(giou(&a.scaled(k), &b.scaled(k)), g));
    }

    #[test]
    fn iou_matches_endpoint_oracle(a in span(), b in span()) {
        prop_assume!(a.width > 0.0 || b.width > 0.0);
        prop_assert!(close(iou(&a, &b), oracles::oracle_iou(&a, &b)));
    }

    #[test]
    fn interval_round_trip(a in span()) {
        let (s, e) = a.to_interval();
        let b = Span::from_interval(s, e).unwrap();
        prop_assert!(close(a.center, b.center) && (a.width - b.width).abs() <= 1e-12 * a.width.max(1.0));
    }

    // Overlapping or touching spans have hull == union.
    #[test]
    fn giou_equals_iou_when_union_is_an_interval(a in span(), off in 0.0f64..=1.0) {
        let b = Span::new(a.start() + off * a.width + 3.0 / 2.0, 3.0).unwrap();
        prop_assert!(close(giou(&a, &b), iou(&a, &b)));
    }
}

#[test]
fn hand_values() {
    let a = Span::from_interval(0.0, 10.0).unwrap();
    let b = Span::from_interval(5.0, 15.0).unwrap();
    assert_eq!(iou(&a, &a), 1.0);
    assert_eq!(giou(&a, &a), 1.0);
    assert!((iou(&a, &b) - 1.0 / 3.0).abs() < 1e-15);
    assert!((giou(&a, &b) - 1.0 / 3.0).abs() < 1e-15);
    let c = Span::from_interval(0.0, 2.0).unwrap();
    let d = Span::from_interval(8.0, 10.0).unwrap();
    assert_eq!(iou(&c, &d), 0.0);
    assert!((giou(&c, &d) + 0.6).abs() < 1e-15);
    let p = Span::from_interval(2.0, 2.0).unwrap();
    assert_eq!(iou(&p, &p), 1.0);
    assert_eq!(giou(&p, &p), 1.0);
    assert_eq!(iou(&p, &Span::from_interval(3.0, 3.0).unwrap()), 0.0);
}
