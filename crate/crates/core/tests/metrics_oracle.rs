#[path = "common/oracles.rs"]
mod oracles;

use momentreg::metrics::{
    highlight_metrics, map_thresholds, mean_average_precision, recall_at_1, GroundTruth,
    HighlightAnnotation, MomentPrediction,
};
use momentreg::seed;
use momentreg::Span;
use proptest::prelude::*;

fn span(s: f64, e: f64) -> Span {
    Span::from_interval(s, e).unwrap()
}

#[test]
fn random_fixtures_match_brute_force() {
    for i in 0..200u64 {
        let mut rng = seed::rng(seed::derive_index(77, i));
        let (preds, gts, ann) = oracles::random_fixture(&mut rng);
        let r1_thr = [0.3, 0.5, 0.7];
        let thr = map_thresholds();
        let o = oracles::oracle_moments(&preds, &gts, &r1_thr, &thr);
        assert_eq!(recall_at_1(&preds, &gts, &r1_thr).unwrap(), o.r1, "fixture {i}");
        let m = mean_average_precision(&preds, &gts, &thr).unwrap();
        assert_eq!(m.per_threshold, o.ap_per_threshold, "fixture {i}");
        assert_eq!(m.average, o.map, "fixture {i}");
        match (highlight_metrics(&ann), oracles::oracle_highlights(&ann)) {
            (Ok(h), Some((hd, hit))) => {
                assert_eq!(h.hd_map, hd, "fixture {i}");
                assert_eq!(h.hit_at_1, hit, "fixture {i}");
            }
            (Err(_), None) => {}
            (got, want) => panic!("fixture {i}: {got:?} vs {want:?}"),
        }
    }
}

#[test]
fn four_video_recall() {
    // Top-1 IoU with the single gt (0,10): 0.8, 0.6, 0.4, 0.9.
    let tops = [span(0.0, 8.0), span(0.0, 6.0), span(0.0, 4.0), span(0.0, 9.0)];
    let mut preds = Vec::new();
    let mut gts = Vec::new();
    for (i, t) in tops.iter().enumerate() {
        let id = format!("v{i}");
        preds.push(MomentPrediction {
            video_id: id.clone(),
            spans: vec![*t, span(20.0, 30.0)],
            scores: vec![0.9, 0.1],
        });
        gts.push(GroundTruth { video_id: id, spans: vec![span(0.0, 10.0)] });
    }
    let r = recall_at_1(&preds, &gts, &[0.5, 0.7]).unwrap();
    assert_eq!(r, vec![0.75, 0.5]);
}

#[test]
fn lower_scored_hit_gives_half_ap() {
    let preds = vec![MomentPrediction {
        video_id: "a".into(),
        spans: vec![span(20.0, 30.0), span(0.0, 10.0)],
        scores: vec![0.9, 0.2],
    }];
    let gts = vec![GroundTruth { video_id: "a".into(), spans: vec![span(0.0, 10.0)] }];
    let m = mean_average_precision(&preds, &gts, &[0.5]).unwrap();
    assert_eq!(m.per_threshold, vec![0.5]);
}

#[test]
fn missing_prediction_counts_as_miss() {
    let gts = vec![
        GroundTruth { video_id: "a".into(), spans: vec![span(0.0, 10.0)] },
        GroundTruth { video_id: "b".into(), spans: vec![span(0.0, 10.0)] },
    ];
    let preds = vec![MomentPrediction {
        video_id: "a".into(),
        spans: vec![span(0.0, 10.0)],
        scores: vec![1.0],
    }];
    assert_eq!(recall_at_1(&preds, &gts, &[0.5]).unwrap(), vec![0.5]);
    assert_eq!(mean_average_precision(&preds, &gts, &[0.5]).unwrap().average, 0.5);
}

#[test]
fn highlight_hand_values() {
    let ann = vec![
        HighlightAnnotation { video_id: "a".into(), labels: vec![1, 4, 2], scores: vec![3.0, 2.0, 1.0] },
        HighlightAnnotation { video_id: "b".into(), labels: vec![4, 0], scores: vec![5.0, 1.0] },
        HighlightAnnotation { video_id: "c".into(), labels: vec![0, 1], scores: vec![1.0, 2.0] },
    ];
    let h = highlight_metrics(&ann).unwrap();
    assert_eq!(h.hd_map, 0.75);
    assert_eq!(h.hit_at_1, 0.5);
    assert_eq!(h.excluded_no_positive, 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn metrics_are_fractions(seed_value in any::<u64>()) {
        let mut rng = seed::rng(seed_value);
        let (preds, gts, _) = oracles::random_fixture(&mut rng);
        let m = mean_average_precision(&preds, &gts, &map_thresholds()).unwrap();
        for v in &m.per_threshold {
            prop_assert!((0.0..=1.0).contains(v));
        }
        // Raising the threshold can only remove matches.
        for w in m.per_threshold.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12);
        }
        let r = recall_at_1(&preds, &gts, &[0.1, 0.5, 0.9]).unwrap();
        prop_assert!(r[0] >= r[1] && r[1] >= r[2]);
    }

    #[test]
    fn perfect_predictions_score_one(starts in prop::collection::vec((0u8..50, 1u8..20), 1..5)) {
        let mut preds = Vec::new();
        let mut gts = Vec::new();
        for (i, (s, l)) in starts.iter().enumerate() {
            let sp = span(*s as f64, (*s + *l) as f64);
            preds.push(MomentPrediction { video_id: format!("{i}"), spans: vec![sp], scores: vec![1.0] });
            gts.push(GroundTruth { video_id: format!("{i}"), spans: vec![sp] });
        }
        prop_assert_eq!(mean_average_precision(&preds, &gts, &map_thresholds()).unwrap().average, 1.0);
        prop_assert_eq!(recall_at_1(&preds, &gts, &[0.5, 0.7]).unwrap(), vec![1.0, 1.0]);
    }
}

#[test]
fn zero_scores_are_positive_zero() {
    let preds = vec![MomentPrediction { video_id: "a".into(), spans: vec![span(20.0, 30.0)], scores: vec![1.0] }];
    let gts = vec![GroundTruth { video_id: "a".into(), spans: vec![span(0.0, 10.0)] }];
    let m = mean_average_precision(&preds, &gts, &[0.5]).unwrap();
    assert!(m.average == 0.0 && m.average.is_sign_positive());
    assert!(m.per_threshold[0].is_sign_positive());
}
