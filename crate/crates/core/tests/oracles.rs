//! The library against the brute-force references in `common::oracles`.

mod common;

use common::fixtures::{bx, library_ap, random_ap_fixture};
use common::oracles::{self, Stream};
use panotrack_core::metrics::{compute_mot_metrics, MotConfig};
use panotrack_core::formats::MotRecord;
use panotrack_core::tracker::kalman::box_to_measurement;
use panotrack_core::tracker::{hungarian_solve, iou_distance_wrapped, CostMatrix, KalmanFilter};
use panotrack_core::{BoxXYXY, Category};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

proptest! {
    #[test]
    fn hungarian_total_is_minimal(
        (r, c, vals) in (1usize..=6, 1usize..=6).prop_flat_map(|(r, c)| {
            (Just(r), Just(c), proptest::collection::vec(0u32..50, r * c))
        })
    ) {
        let rows: Vec<Vec<f64>> = vals.chunks(c).map(|row| row.iter().map(|&v| v as f64).collect()).collect();
        let m = CostMatrix::from_row_slice(r, c, &vals.iter().map(|&v| v as f64).collect::<Vec<_>>());
        let a = hungarian_solve(&m, f64::MAX);
        prop_assert_eq!(a.matches.len(), r.min(c));
        let total: f64 = a.matches.iter().map(|&p| m[p]).sum();
        prop_assert_eq!(total, oracles::assignment_min(&rows));
    }

    #[test]
    fn wrapped_iou_matches_interval_arithmetic(
        x0 in 0.0f64..1000.0, w0 in 1.0f64..80.0,
        x1 in 0.0f64..1000.0, w1 in 1.0f64..80.0,
        y0 in 0.0f64..50.0, y1 in 0.0f64..50.0,
    ) {
        let a = [x0, y0, x0 + w0, y0 + 20.0];
        let b = [x1, y1, x1 + w1, y1 + 30.0];
        let d = iou_distance_wrapped(&bx(&a), &bx(&b), Some(1000.0));
        prop_assert!((d - (1.0 - oracles::wrapped_rect_iou(&a, &b, 1000.0))).abs() < 1e-12);
    }
}

#[test]
fn oracle_declared_values() {
    assert_eq!(oracles::assignment_min(&[vec![1.0, 2.0], vec![2.0, 4.0]]), 4.0);
    let iou = oracles::wrapped_rect_iou(&[985.0, 0.0, 1005.0, 10.0], &[0.0, 0.0, 20.0, 10.0], 1000.0);
    assert!((iou - 5.0 / 35.0).abs() < 1e-15);
}

#[test]
fn seam_iou_fixture() {
    let d = iou_distance_wrapped(
        &BoxXYXY::new(985.0, 0.0, 1005.0, 10.0).unwrap(),
        &BoxXYXY::new(0.0, 0.0, 20.0, 10.0).unwrap(),
        Some(1000.0),
    );
    assert!((d - (1.0 - 5.0 / 35.0)).abs() < 1e-12);
}

#[test]
fn kalman_covariance_follows_scalar_recursion() {
    let kf = KalmanFilter::default();
    let z = box_to_measurement(&BoxXYXY::new(100.0, 50.0, 140.0, 130.0).unwrap());
    let h = z[3];
    let (p, v): (f64, f64) = (1.0 / 20.0, 1.0 / 160.0);
    let reference = oracles::cv_kalman_1d(
        ((2.0 * p * h).powi(2), 0.0, (10.0 * v * h).powi(2)),
        p * h,
        v * h,
        p * h,
        300,
    );
    let mut s = kf.initiate(&z);
    for (k, &(a, b, c)) in reference.iter().enumerate() {
        s = kf.update(&kf.predict(&s), &z).unwrap();
        let cov = &s.covariance;
        for (got, want) in [(cov[(0, 0)], a), (cov[(0, 4)], b), (cov[(4, 4)], c)] {
            assert!((got - want).abs() <= 1e-9 * want.abs().max(1e-12), "step {k}: {got} vs {want}");
        }
    }
    // Settled: the last two rounds agree to rounding.
    let (a1, _, _) = reference[reference.len() - 2];
    let (a2, _, _) = reference[reference.len() - 1];
    assert!((a1 - a2).abs() < 1e-9 * a2);
}

#[test]
fn scalar_recursion_reaches_closed_form() {
    let (q, r) = (0.3f64, 2.0f64);
    let post = oracles::cv_kalman_1d((5.0, 0.0, 0.0), q.sqrt(), 0.0, r.sqrt(), 200);
    let predicted = post.last().unwrap().0 + q;
    assert!((predicted - oracles::random_walk_steady_state(q, r)).abs() < 1e-12);
}

#[test]
fn ap_matches_pr_integration() {
    let thresholds: Vec<f64> = (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect();
    for seed in 0..200 {
        let (dets, gts) = random_ap_fixture(seed);
        let want = oracles::mean_ap(&dets, &gts, &thresholds);
        let got = library_ap(&dets, &gts, &thresholds);
        match (got, want) {
            (Some(g), Some(w)) => assert!((g - w).abs() < 1e-9, "seed {seed}: {g} vs {w}"),
            (g, w) => assert_eq!(g, w, "seed {seed}"),
        }
    }
}

fn to_records(s: &Stream) -> Vec<MotRecord> {
    s.iter().map(|&(f, id, r)| MotRecord::new(f, id, bx(&r), Category::Car)).collect()
}

#[test]
fn idf1_matches_exhaustive_assignment() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for case in 0..100 {
        let n_gt = rng.random_range(1..=5);
        let mut truth: Stream = Vec::new();
        let mut pred: Stream = Vec::new();
        for g in 0..n_gt {
            let lane = 100.0 * g as f64;
            for f in 1..=12u32 {
                if rng.random_bool(0.85) {
                    truth.push((f, g as u64 + 1, [lane, 0.0, lane + 40.0, 40.0]));
                }
                if rng.random_bool(0.8) {
                    // Predictions drift between a few ids and sometimes lanes.
                    let id = rng.random_range(1..=5u64);
                    let l = if rng.random_bool(0.9) { lane } else { 100.0 * rng.random_range(0..n_gt) as f64 };
                    let dx = rng.random_range(-8.0..8.0);
                    if !pred.iter().any(|p| p.0 == f && p.1 == id) {
                        pred.push((f, id, [l + dx, 0.0, l + dx + 40.0, 40.0]));
                    }
                }
            }
        }
        let r = compute_mot_metrics(&to_records(&pred), &to_records(&truth), &MotConfig::default()).unwrap();
        let want = oracles::idf1_exhaustive(&pred, &truth, 0.5);
        assert!((r.idf1 - want).abs() < 1e-12, "case {case}: {} vs {want}", r.idf1);
    }
}
