//! CLEAR-MOT and identity metrics between predicted and true track files.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::formats::mot::{mot_to_tracks, MotRecord};
use crate::geometry::wrapped_iou;
use crate::tracker::{hungarian_solve, linear_assignment, CostMatrix, TrackOutput, MASK_COST};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotConfig {
    pub iou_threshold: f64,
    /// Enables seam-aware IoU and joining of same-id seam pieces.
    pub pano_width: Option<f64>,
    /// Only same-category pairs may match.
    pub class_aware: bool,
}

impl Default for MotConfig {
    fn default() -> Self {
        MotConfig {
            iou_threshold: 0.5,
            pano_width: None,
            class_aware: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotReport {
    pub idf1: f64,
    pub idp: f64,
    pub idr: f64,
    pub mota: f64,
    /// Mean `1 - IoU` over matches; 0 without matches.
    pub motp: f64,
    pub mostly_tracked: usize,
    pub partially_tracked: usize,
    pub mostly_lost: usize,
    pub false_positives: usize,
    pub misses: usize,
    pub id_switches: usize,
    /// Matches whose predicted id was last matched to another truth id.
    pub id_transfers: usize,
    pub fragmentations: usize,
    pub matches: usize,
    /// Ground-truth boxes.
    pub gt_count: usize,
    pub gt_tracks: usize,
    pub predicted_count: usize,
}

struct Frames {
    frames: BTreeMap<u32, Vec<TrackOutput>>,
    count: usize,
}

fn by_frame(records: &[MotRecord], pano_width: Option<f64>) -> Result<Frames> {
    let tracks = mot_to_tracks(records, pano_width)?;
    let count = tracks.len();
    let mut frames: BTreeMap<u32, Vec<TrackOutput>> = BTreeMap::new();
    for t in tracks {
        frames.entry(t.frame).or_default().push(t);
    }
    Ok(Frames { frames, count })
}

/// IoU of a truth and a predicted box, or `None` if they may not match.
fn similarity(gt: &TrackOutput, hyp: &TrackOutput, cfg: &MotConfig) -> Option<f64> {
    if cfg.class_aware && gt.category != hyp.category {
        return None;
    }
    let iou = match cfg.pano_width {
        Some(w) => wrapped_iou(&gt.bbox, &hyp.bbox, w),
        None => gt.bbox.iou(&hyp.bbox),
    };
    (iou >= cfg.iou_threshold).then_some(iou)
}

pub fn compute_mot_metrics(pred: &[MotRecord], truth: &[MotRecord], cfg: &MotConfig) -> Result<MotReport> {
    let gt = by_frame(truth, cfg.pano_width)?;
    let hy = by_frame(pred, cfg.pano_width)?;
    let frames: BTreeSet<u32> = gt.frames.keys().chain(hy.frames.keys()).copied().collect();
    let empty = Vec::new();

    let mut mapping: BTreeMap<u64, u64> = BTreeMap::new();
    let mut last_truth: BTreeMap<u64, u64> = BTreeMap::new();
    let mut transfers = 0;
    // Per truth id, whether it was matched in each frame it appears in.
    let mut history: BTreeMap<u64, Vec<bool>> = BTreeMap::new();
    let mut pair_counts: BTreeMap<(u64, u64), usize> = BTreeMap::new();
    let (mut fp, mut misses, mut switches, mut matches) = (0, 0, 0, 0);
    let mut dist_sum = 0.0;

    for f in frames {
        let gts = gt.frames.get(&f).unwrap_or(&empty);
        let hyps = hy.frames.get(&f).unwrap_or(&empty);
        let sim: Vec<Vec<Option<f64>>> = gts
            .iter()
            .map(|g| hyps.iter().map(|h| similarity(g, h, cfg)).collect())
            .collect();
        for (i, g) in gts.iter().enumerate() {
            for (j, h) in hyps.iter().enumerate() {
                if sim[i][j].is_some() {
                    *pair_counts.entry((g.id, h.id)).or_default() += 1;
                }
            }
        }

        let mut g_used = vec![false; gts.len()];
        let mut h_used = vec![false; hyps.len()];
        let mut frame_matches = Vec::new();
        // Keep last frame's correspondences while they remain valid.
        for (i, g) in gts.iter().enumerate() {
            let Some(&h_id) = mapping.get(&g.id) else { continue };
            if let Some(j) = hyps.iter().position(|h| h.id == h_id) {
                if !h_used[j] && sim[i][j].is_some() {
                    g_used[i] = true;
                    h_used[j] = true;
                    frame_matches.push((i, j));
                }
            }
        }
        let gi: Vec<usize> = (0..gts.len()).filter(|&i| !g_used[i]).collect();
        let hj: Vec<usize> = (0..hyps.len()).filter(|&j| !h_used[j]).collect();
        let mut costs = CostMatrix::from_element(gi.len(), hj.len(), MASK_COST);
        for (r, &i) in gi.iter().enumerate() {
            for (c, &j) in hj.iter().enumerate() {
                if let Some(iou) = sim[i][j] {
                    costs[(r, c)] = 1.0 - iou;
                }
            }
        }
        for (r, c) in hungarian_solve(&costs, 1.0).matches {
            let (i, j) = (gi[r], hj[c]);
            if let Some(&prev) = mapping.get(&gts[i].id) {
                if prev != hyps[j].id {
                    switches += 1;
                }
            }
            g_used[i] = true;
            h_used[j] = true;
            frame_matches.push((i, j));
        }

        for &(i, j) in &frame_matches {
            mapping.insert(gts[i].id, hyps[j].id);
            if last_truth.insert(hyps[j].id, gts[i].id).is_some_and(|g| g != gts[i].id) {
                transfers += 1;
            }
            dist_sum += 1.0 - sim[i][j].unwrap_or(0.0);
        }
        matches += frame_matches.len();
        misses += g_used.iter().filter(|u| !**u).count();
        fp += h_used.iter().filter(|u| !**u).count();
        for (i, g) in gts.iter().enumerate() {
            history.entry(g.id).or_default().push(g_used[i]);
        }
    }

    let (mut mt, mut pt, mut ml, mut frag) = (0, 0, 0, 0);
    for h in history.values() {
        let ratio = h.iter().filter(|m| **m).count() as f64 / h.len() as f64;
        if ratio >= 0.8 {
            mt += 1;
        } else if ratio <= 0.2 {
            ml += 1;
        } else {
            pt += 1;
        }
        // Miss runs between the first and last match.
        if let (Some(a), Some(b)) = (h.iter().position(|m| *m), h.iter().rposition(|m| *m)) {
            frag += h[a..=b].windows(2).filter(|w| w[0] && !w[1]).count();
        }
    }

    let idtp = identity_true_positives(&pair_counts);
    let (n_gt, n_hyp) = (gt.count, hy.count);
    let ratio = |num: usize, den: usize| if den == 0 { 1.0 } else { num as f64 / den as f64 };
    Ok(MotReport {
        idf1: ratio(2 * idtp, n_gt + n_hyp),
        idp: ratio(idtp, n_hyp),
        idr: ratio(idtp, n_gt),
        mota: 1.0 - (fp + misses + switches) as f64 / n_gt.max(1) as f64,
        motp: if matches == 0 { 0.0 } else { dist_sum / matches as f64 },
        mostly_tracked: mt,
        partially_tracked: pt,
        mostly_lost: ml,
        false_positives: fp,
        misses,
        id_switches: switches,
        id_transfers: transfers,
        fragmentations: frag,
        matches,
        gt_count: n_gt,
        gt_tracks: history.len(),
        predicted_count: n_hyp,
    })
}

/// Largest total co-occurrence over one-to-one truth/prediction id pairings.
fn identity_true_positives(pair_counts: &BTreeMap<(u64, u64), usize>) -> usize {
    let gids: Vec<u64> = pair_counts.keys().map(|k| k.0).collect::<BTreeSet<_>>().into_iter().collect();
    let hids: Vec<u64> = pair_counts.keys().map(|k| k.1).collect::<BTreeSet<_>>().into_iter().collect();
    if gids.is_empty() {
        return 0;
    }
    let max = *pair_counts.values().max().unwrap_or(&0) as f64;
    let mut costs = CostMatrix::from_element(gids.len(), hids.len(), max);
    for (&(g, h), &n) in pair_counts {
        let r = gids.binary_search(&g).expect("known id");
        let c = hids.binary_search(&h).expect("known id");
        costs[(r, c)] = max - n as f64;
    }
    linear_assignment(&costs)
        .into_iter()
        .map(|(r, c)| pair_counts.get(&(gids[r], hids[c])).copied().unwrap_or(0))
        .sum()
}
