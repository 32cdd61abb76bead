//! Association costs, with optional wrap-around at the panorama seam.

use crate::category::Category;
use crate::detection::Detection;
use crate::error::{Error, Result};
use crate::geometry::{wrapped_candidates, BoxXYXY};

use super::assignment::{CostMatrix, MASK_COST};
use super::kalman::{box_to_measurement, KalmanFilter, KalmanState};

/// Smallest `1 - cos` between `f` and any gallery vector.
pub fn cosine_distance(gallery: &[Vec<f32>], f: &[f32]) -> Result<f64> {
    if gallery.is_empty() {
        return Err(Error::invalid("empty appearance gallery"));
    }
    let norm = |v: &[f32]| v.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt();
    let nf = norm(f);
    if nf == 0.0 {
        return Err(Error::invalid("zero-norm appearance feature"));
    }
    let mut best = f64::INFINITY;
    for g in gallery {
        if g.len() != f.len() {
            return Err(Error::invalid(format!(
                "feature dimension {} differs from gallery dimension {}",
                f.len(),
                g.len()
            )));
        }
        let ng = norm(g);
        if ng == 0.0 {
            return Err(Error::invalid("zero-norm gallery feature"));
        }
        let dot: f64 = g.iter().zip(f).map(|(&a, &b)| a as f64 * b as f64).sum();
        best = best.min(1.0 - dot / (ng * nf));
    }
    Ok(best.clamp(0.0, 2.0))
}

/// `1 - IoU`, taking the best horizontal copy of the detection when a
/// panorama width is given.
pub fn iou_distance_wrapped(track_box: &BoxXYXY, det_box: &BoxXYXY, pano_width: Option<f64>) -> f64 {
    let iou = match pano_width {
        Some(w) => wrapped_candidates(det_box, w)
            .iter()
            .map(|c| track_box.iou(c))
            .fold(0.0, f64::max),
        None => track_box.iou(det_box),
    };
    1.0 - iou
}

/// Squared Mahalanobis distance in measurement space, minimised over the
/// horizontal copies of the detection when a panorama width is given.
pub fn mahalanobis_distance_wrapped(
    kf: &KalmanFilter,
    state: &KalmanState,
    det_box: &BoxXYXY,
    pano_width: Option<f64>,
) -> Result<f64> {
    match pano_width {
        Some(w) => {
            let mut best = f64::INFINITY;
            for c in wrapped_candidates(det_box, w) {
                best = best.min(kf.gating_distance(state, &box_to_measurement(&c))?);
            }
            Ok(best)
        }
        None => kf.gating_distance(state, &box_to_measurement(det_box)),
    }
}

/// Copy of `det_box` shifted by `-w`, `0` or `+w`, whichever centre is
/// closest to `x`.
pub fn nearest_candidate(det_box: &BoxXYXY, x: f64, pano_width: Option<f64>) -> BoxXYXY {
    match pano_width {
        Some(w) => wrapped_candidates(det_box, w)
            .into_iter()
            .min_by(|a, b| (a.center().0 - x).abs().total_cmp(&(b.center().0 - x).abs()))
            .expect("three candidates"),
        None => *det_box,
    }
}

/// Masks every pair whose categories differ.
pub fn apply_category_filter(costs: &mut CostMatrix, tracks: &[Category], dets: &[Category]) -> Result<()> {
    if costs.shape() != (tracks.len(), dets.len()) {
        return Err(Error::invalid(format!(
            "cost matrix {:?} does not match {} tracks x {} detections",
            costs.shape(),
            tracks.len(),
            dets.len()
        )));
    }
    for (i, tc) in tracks.iter().enumerate() {
        for (j, dc) in dets.iter().enumerate() {
            if tc != dc {
                costs[(i, j)] = MASK_COST;
            }
        }
    }
    Ok(())
}

/// Joins left-edge and right-edge seam fragments of the same object. The
/// left fragment is moved right by the panorama width, so the merged box
/// runs past `pano_width`.
pub fn merge_seam_detections(dets: Vec<Detection>, pano_width: f64, min_vertical_iou: f64) -> Vec<Detection> {
    const EDGE_TOL: f64 = 1.0;
    let at_left = |d: &Detection| d.wraps_seam && d.bbox.x_min <= EDGE_TOL;
    let at_right = |d: &Detection| d.wraps_seam && d.bbox.x_max >= pano_width - EDGE_TOL;

    let mut pairs = Vec::new();
    for (l, dl) in dets.iter().enumerate() {
        if !at_left(dl) {
            continue;
        }
        for (r, dr) in dets.iter().enumerate() {
            if l == r || !at_right(dr) || dl.category != dr.category {
                continue;
            }
            let viou = dl.bbox.vertical_iou(&dr.bbox);
            if viou >= min_vertical_iou {
                let dh = (dl.bbox.height() - dr.bbox.height()).abs();
                pairs.push((viou, dh, l, r));
            }
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.total_cmp(&b.1)).then((a.2, a.3).cmp(&(b.2, b.3))));

    let mut taken = vec![false; dets.len()];
    let mut merged = Vec::new();
    for (_, _, l, r) in pairs {
        if taken[l] || taken[r] {
            continue;
        }
        taken[l] = true;
        taken[r] = true;
        let (dl, dr) = (&dets[l], &dets[r]);
        let bbox = dr.bbox.union(&dl.bbox.shifted_x(pano_width));
        let (al, ar) = (dl.bbox.area(), dr.bbox.area());
        let score = if al + ar > 0.0 {
            (al * dl.score + ar * dr.score) / (al + ar)
        } else {
            (dl.score + dr.score) / 2.0
        };
        merged.push(Detection {
            bbox,
            score,
            feature: if al > ar { dl.feature.clone() } else { dr.feature.clone() },
            wraps_seam: true,
            ..dr.clone()
        });
    }
    let mut out: Vec<Detection> = dets
        .into_iter()
        .zip(taken)
        .filter_map(|(d, t)| (!t).then_some(d))
        .collect();
    out.extend(merged);
    out
}
