use momentreg::losses::{run_gradcheck_suite, SUITE_TOLERANCE};

#[test]
fn every_loss_passes_at_random_points() {
    for row in run_gradcheck_suite(11, 100) {
        assert!(row.passed, "{row:?}");
        assert!(row.max_rel_err < SUITE_TOLERANCE);
        assert!(row.checked > 0);
    }
}

#[test]
fn suite_is_deterministic() {
    assert_eq!(run_gradcheck_suite(3, 20), run_gradcheck_suite(3, 20));
}
