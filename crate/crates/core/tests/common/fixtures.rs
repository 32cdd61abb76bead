//! Fixtures shared by the oracle and acceptance tests.

use panotrack_core::metrics::{average_precision, GroundTruthBox, PredictedBox};
use panotrack_core::{BoxXYXY, Category};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::oracles::{DetBox, GtBox, Rect};

pub fn bx(r: &Rect) -> BoxXYXY {
    BoxXYXY::new(r[0], r[1], r[2], r[3]).unwrap()
}

/// Three images of jittered, sometimes missing or misclassified boxes plus
/// some clutter.
pub fn random_ap_fixture(seed: u64) -> (Vec<DetBox>, Vec<GtBox>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gts = Vec::new();
    let mut dets = Vec::new();
    for image in 1..=3u64 {
        for _ in 0..rng.random_range(1..6) {
            let class = rng.random_range(1..=2u32);
            let (x, y) = (rng.random_range(0.0..400.0), rng.random_range(0.0..400.0));
            let (w, h) = (rng.random_range(10.0..120.0), rng.random_range(10.0..120.0));
            let rect = [x, y, x + w, y + h];
            gts.push(GtBox { image, class, rect });
            // A perturbed detection of it, sometimes of the wrong class.
            if rng.random_bool(0.8) {
                let j = |v: f64, rng: &mut ChaCha8Rng| v + rng.random_range(-0.3..0.3) * w.min(h);
                let r = [j(rect[0], &mut rng), j(rect[1], &mut rng), 0.0, 0.0];
                let r = [r[0], r[1], r[0] + w * rng.random_range(0.7..1.3), r[1] + h * rng.random_range(0.7..1.3)];
                let class = if rng.random_bool(0.1) { 3 - class } else { class };
                dets.push(DetBox { image, class, rect: r, score: rng.random_range(0.0..1.0) });
            }
        }
        for _ in 0..rng.random_range(0..4) {
            let (x, y) = (rng.random_range(0.0..400.0), rng.random_range(0.0..400.0));
            dets.push(DetBox {
                image,
                class: rng.random_range(1..=2u32),
                rect: [x, y, x + 40.0, y + 40.0],
                score: rng.random_range(0.0..1.0),
            });
        }
    }
    (dets, gts)
}

fn category(class: u32) -> Category {
    if class == 1 {
        Category::Car
    } else {
        Category::Person
    }
}

pub fn library_ap(dets: &[DetBox], gts: &[GtBox], thresholds: &[f64]) -> Option<f64> {
    let preds: Vec<PredictedBox> = dets
        .iter()
        .map(|d| PredictedBox {
            image_id: d.image,
            category: category(d.class),
            bbox: bx(&d.rect),
            score: d.score,
        })
        .collect();
    let truth: Vec<GroundTruthBox> = gts
        .iter()
        .map(|g| GroundTruthBox {
            image_id: g.image,
            category: category(g.class),
            bbox: bx(&g.rect),
            iscrowd: false,
        })
        .collect();
    average_precision(&preds, &truth, thresholds, None, 100)
}

