//! Brute-force reference implementations. Nothing here calls into the
//! library's own algorithms; boxes are plain `[x0, y0, x1, y1]` arrays.

use std::collections::{BTreeMap, BTreeSet};

pub type Rect = [f64; 4];

/// Length of the overlap of two closed intervals.
pub fn overlap(a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    (a1.min(b1) - a0.max(b0)).max(0.0)
}

pub fn rect_iou(a: &Rect, b: &Rect) -> f64 {
    let inter = overlap(a[0], a[2], b[0], b[2]) * overlap(a[1], a[3], b[1], b[3]);
    let area = |r: &Rect| (r[2] - r[0]) * (r[3] - r[1]);
    let union = area(a) + area(b) - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Best IoU over the three horizontal copies of `b` on a circle of the
/// given width.
pub fn wrapped_rect_iou(a: &Rect, b: &Rect, width: f64) -> f64 {
    [-width, 0.0, width]
        .iter()
        .map(|&dx| rect_iou(a, &[b[0] + dx, b[1], b[2] + dx, b[3]]))
        .fold(0.0, f64::max)
}

fn permutations(items: &[usize], k: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if prefix.len() == k {
        out.push(prefix.clone());
        return;
    }
    for &x in items {
        if !prefix.contains(&x) {
            prefix.push(x);
            permutations(items, k, prefix, out);
            prefix.pop();
        }
    }
}

/// Minimum total cost of matching `min(rows, cols)` pairs, by trying
/// every injective map from the smaller side into the larger.
pub fn assignment_min(cost: &[Vec<f64>]) -> f64 {
    let rows = cost.len();
    let cols = cost.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return 0.0;
    }
    let k = rows.min(cols);
    let mut perms = Vec::new();
    permutations(&(0..rows.max(cols)).collect::<Vec<_>>(), k, &mut Vec::new(), &mut perms);
    perms
        .iter()
        .map(|p| {
            p.iter()
                .enumerate()
                .map(|(i, &j)| if rows <= cols { cost[i][j] } else { cost[j][i] })
                .sum::<f64>()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Posterior variances of one coordinate of a constant-velocity filter
/// fed a constant measurement: `(var_pos, cov_pos_vel, var_vel)` after each
/// of `steps` predict/update rounds. `q_pos`, `q_vel` and `r` are the
/// process and measurement standard deviations.
pub fn cv_kalman_1d(p0: (f64, f64, f64), q_pos: f64, q_vel: f64, r: f64, steps: usize) -> Vec<(f64, f64, f64)> {
    let (mut a, mut b, mut c) = p0;
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        // Predict with F = [[1, 1], [0, 1]].
        let pa = a + 2.0 * b + c + q_pos * q_pos;
        let pb = b + c;
        let pc = c + q_vel * q_vel;
        // Update with H = [1, 0].
        let s = pa + r * r;
        let (k0, k1) = (pa / s, pb / s);
        a = pa - k0 * pa;
        b = pb - k0 * pb;
        c = pc - k1 * pb;
        out.push((a, b, c));
    }
    out
}

/// Steady-state predicted variance of the scalar random walk
/// `x' = x + w`, `z = x + v` (variances `q`, `r`).
pub fn random_walk_steady_state(q: f64, r: f64) -> f64 {
    (q + (q * q + 4.0 * q * r).sqrt()) / 2.0
}

#[derive(Debug, Clone)]
pub struct GtBox {
    pub image: u64,
    pub class: u32,
    pub rect: Rect,
}

#[derive(Debug, Clone)]
pub struct DetBox {
    pub image: u64,
    pub class: u32,
    pub rect: Rect,
    pub score: f64,
}

/// True-positive flags of the detections kept at a score cutoff: within each
/// image, detections in descending score order take the unmatched truth
/// box of highest IoU at or above `thr`.
fn matches_at_cutoff(dets: &[&DetBox], gts: &[&GtBox], thr: f64) -> (usize, usize) {
    let mut images: BTreeSet<u64> = dets.iter().map(|d| d.image).collect();
    images.extend(gts.iter().map(|g| g.image));
    let (mut tp, mut fp) = (0, 0);
    for img in images {
        let mut ds: Vec<&&DetBox> = dets.iter().filter(|d| d.image == img).collect();
        ds.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap());
        let gs: Vec<&&GtBox> = gts.iter().filter(|g| g.image == img).collect();
        let mut used = vec![false; gs.len()];
        for d in ds {
            let mut best: Option<(f64, usize)> = None;
            for (k, g) in gs.iter().enumerate() {
                let iou = rect_iou(&d.rect, &g.rect);
                if !used[k] && iou >= thr && best.is_none_or(|(b, _)| iou > b) {
                    best = Some((iou, k));
                }
            }
            match best {
                Some((_, k)) => {
                    used[k] = true;
                    tp += 1;
                }
                None => fp += 1,
            }
        }
    }
    (tp, fp)
}

/// AP of one class at one threshold: the precision envelope, sampled at
/// recall levels 0, 0.01, ..., 1, is built by re-matching from scratch at
/// every score cutoff. Recall levels are compared as exact fractions.
pub fn class_ap(dets: &[DetBox], gts: &[GtBox], class: u32, thr: f64) -> Option<f64> {
    let d: Vec<&DetBox> = dets.iter().filter(|x| x.class == class).collect();
    let g: Vec<&GtBox> = gts.iter().filter(|x| x.class == class).collect();
    if g.is_empty() {
        return None;
    }
    let mut cutoffs: Vec<f64> = d.iter().map(|x| x.score).collect();
    cutoffs.sort_by(|a, b| b.partial_cmp(a).unwrap());
    cutoffs.dedup();
    let points: Vec<(usize, f64)> = cutoffs
        .iter()
        .map(|&s| {
            let kept: Vec<&DetBox> = d.iter().copied().filter(|x| x.score >= s).collect();
            let (tp, fp) = matches_at_cutoff(&kept, &g, thr);
            (tp, tp as f64 / (tp + fp) as f64)
        })
        .collect();
    let n = g.len();
    let total: f64 = (0..=100)
        .map(|k| {
            points
                .iter()
                .filter(|(tp, _)| tp * 100 >= k * n)
                .map(|(_, p)| *p)
                .fold(0.0, f64::max)
        })
        .sum();
    Some(total / 101.0)
}

/// Mean of [`class_ap`] over classes with truth and over thresholds.
pub fn mean_ap(dets: &[DetBox], gts: &[GtBox], thresholds: &[f64]) -> Option<f64> {
    let classes: BTreeSet<u32> = gts.iter().map(|g| g.class).collect();
    let vals: Vec<f64> = thresholds
        .iter()
        .flat_map(|&t| classes.iter().filter_map(move |&c| class_ap(dets, gts, c, t)))
        .collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

/// `(frame, id, rect)` observations of one stream.
pub type Stream = Vec<(u32, u64, Rect)>;

/// IDF1 by enumerating every one-to-one pairing of truth ids with
/// predicted ids (or with nothing). A pair scores the frames in which both
/// are present with IoU at or above `thr`.
pub fn idf1_exhaustive(pred: &Stream, truth: &Stream, thr: f64) -> f64 {
    let gids: Vec<u64> = truth.iter().map(|t| t.1).collect::<BTreeSet<_>>().into_iter().collect();
    let hids: Vec<u64> = pred.iter().map(|t| t.1).collect::<BTreeSet<_>>().into_iter().collect();
    let mut score: BTreeMap<(u64, u64), usize> = BTreeMap::new();
    for g in truth {
        for h in pred {
            if g.0 == h.0 && rect_iou(&g.2, &h.2) >= thr {
                *score.entry((g.1, h.1)).or_default() += 1;
            }
        }
    }
    fn best(i: usize, gids: &[u64], hids: &[u64], taken: &mut Vec<bool>, score: &BTreeMap<(u64, u64), usize>) -> usize {
        if i == gids.len() {
            return 0;
        }
        let mut top = best(i + 1, gids, hids, taken, score);
        for (j, &h) in hids.iter().enumerate() {
            if !taken[j] {
                taken[j] = true;
                let v = score.get(&(gids[i], h)).copied().unwrap_or(0) + best(i + 1, gids, hids, taken, score);
                taken[j] = false;
                top = top.max(v);
            }
        }
        top
    }
    let idtp = best(0, &gids, &hids, &mut vec![false; hids.len()], &score);
    let denom = truth.len() + pred.len();
    if denom == 0 {
        1.0
    } else {
        2.0 * idtp as f64 / denom as f64
    }
}
