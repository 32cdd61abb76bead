//! COCO-style average precision with the 128² / 384² size partition.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::category::Category;
use crate::error::Result;
use crate::formats::coco::{CocoFile, CocoResult};
use crate::geometry::BoxXYXY;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SizeClass {
    Small,
    Medium,
    Large,
}

impl SizeClass {
    pub const SMALL_MAX: f64 = 128.0 * 128.0;
    pub const MEDIUM_MAX: f64 = 384.0 * 384.0;

    pub fn of_area(area: f64) -> SizeClass {
        if area < Self::SMALL_MAX {
            SizeClass::Small
        } else if area < Self::MEDIUM_MAX {
            SizeClass::Medium
        } else {
            SizeClass::Large
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthBox {
    pub image_id: u64,
    pub category: Category,
    pub bbox: BoxXYXY,
    pub iscrowd: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictedBox {
    pub image_id: u64,
    pub category: Category,
    pub bbox: BoxXYXY,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ApConfig {
    pub iou_thresholds: Vec<f64>,
    pub max_detections: usize,
}

impl Default for ApConfig {
    fn default() -> Self {
        ApConfig {
            iou_thresholds: (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect(),
            max_detections: 100,
        }
    }
}

/// `None` where no ground truth exists for the slice.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ApReport {
    pub ap: Option<f64>,
    pub ap50: Option<f64>,
    pub ap75: Option<f64>,
    pub ap_small: Option<f64>,
    pub ap_medium: Option<f64>,
    pub ap_large: Option<f64>,
}

fn crowd_iou(det: &BoxXYXY, gt: &BoxXYXY) -> f64 {
    let a = det.area();
    if a <= 0.0 {
        0.0
    } else {
        det.intersection_area(gt) / a
    }
}

/// Per-image matching result at one IoU threshold: for each kept
/// detection, its score, whether it matched and whether it is ignored;
/// then the number of non-ignored truth boxes.
type ImageResult = (Vec<(f64, bool, bool)>, usize);

fn evaluate_image(
    dets: &[&PredictedBox],
    gts: &[&GroundTruthBox],
    size: Option<SizeClass>,
    thr: f64,
) -> ImageResult {
    let out_of_range = |area: f64| size.is_some_and(|s| SizeClass::of_area(area) != s);
    // Non-ignored ground truth first.
    let mut g: Vec<(&GroundTruthBox, bool)> = gts.iter().map(|g| (*g, g.iscrowd || out_of_range(g.bbox.area()))).collect();
    g.sort_by_key(|(_, ig)| *ig);
    let npig = g.iter().filter(|(_, ig)| !ig).count();
    let mut gt_matched = vec![false; g.len()];
    let mut res = Vec::with_capacity(dets.len());
    for d in dets {
        let mut best = thr.min(1.0 - 1e-10);
        let mut m: Option<usize> = None;
        for (k, (gt, ig)) in g.iter().enumerate() {
            if gt_matched[k] && !gt.iscrowd {
                continue;
            }
            if let Some(mk) = m {
                if !g[mk].1 && *ig {
                    break;
                }
            }
            let iou = if gt.iscrowd { crowd_iou(&d.bbox, &gt.bbox) } else { d.bbox.iou(&gt.bbox) };
            if iou < best {
                continue;
            }
            best = iou;
            m = Some(k);
        }
        match m {
            Some(k) => {
                gt_matched[k] = true;
                res.push((d.score, true, g[k].1));
            }
            None => res.push((d.score, false, out_of_range(d.bbox.area()))),
        }
    }
    (res, npig)
}

/// 101-point interpolated precision for one category at one threshold,
/// `None` without ground truth.
fn category_ap(per_image: Vec<ImageResult>) -> Option<f64> {
    let npig: usize = per_image.iter().map(|(_, n)| n).sum();
    if npig == 0 {
        return None;
    }
    let mut dets: Vec<(f64, bool, bool)> = per_image.into_iter().flat_map(|(d, _)| d).collect();
    // Stable, so equal scores keep image order.
    dets.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (mut tp, mut fp) = (0.0, 0.0);
    let mut rc = Vec::new();
    let mut pr = Vec::new();
    for (_, matched, ignored) in dets {
        if ignored {
            continue;
        }
        if matched {
            tp += 1.0;
        } else {
            fp += 1.0;
        }
        rc.push(tp / npig as f64);
        pr.push(tp / (tp + fp));
    }
    for i in (1..pr.len()).rev() {
        if pr[i] > pr[i - 1] {
            pr[i - 1] = pr[i];
        }
    }
    let mut sum = 0.0;
    for k in 0..=100 {
        let r = k as f64 / 100.0;
        let idx = rc.partition_point(|&x| x < r);
        if idx < pr.len() {
            sum += pr[idx];
        }
    }
    Some(sum / 101.0)
}

/// Mean over categories and the given thresholds of 101-point AP.
pub fn average_precision(
    preds: &[PredictedBox],
    truth: &[GroundTruthBox],
    thresholds: &[f64],
    size: Option<SizeClass>,
    max_detections: usize,
) -> Option<f64> {
    let mut pmap: BTreeMap<(Category, u64), Vec<&PredictedBox>> = BTreeMap::new();
    let mut gmap: BTreeMap<(Category, u64), Vec<&GroundTruthBox>> = BTreeMap::new();
    for p in preds {
        pmap.entry((p.category, p.image_id)).or_default().push(p);
    }
    for g in truth {
        gmap.entry((g.category, g.image_id)).or_default().push(g);
    }
    for v in pmap.values_mut() {
        v.sort_by(|a, b| b.score.total_cmp(&a.score));
        v.truncate(max_detections);
    }
    let keys: BTreeSet<(Category, u64)> = pmap.keys().chain(gmap.keys()).copied().collect();
    let cats: BTreeSet<Category> = keys.iter().map(|k| k.0).collect();
    let mut values = Vec::new();
    for &thr in thresholds {
        for &c in &cats {
            let per_image = keys
                .iter()
                .filter(|k| k.0 == c)
                .map(|k| {
                    let d = pmap.get(k).map_or(&[][..], Vec::as_slice);
                    let g = gmap.get(k).map_or(&[][..], Vec::as_slice);
                    evaluate_image(d, g, size, thr)
                })
                .collect();
            if let Some(ap) = category_ap(per_image) {
                values.push(ap);
            }
        }
    }
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

pub fn compute_ap(preds: &[PredictedBox], truth: &[GroundTruthBox], cfg: &ApConfig) -> ApReport {
    let at = |thr: &[f64], size| average_precision(preds, truth, thr, size, cfg.max_detections);
    ApReport {
        ap: at(&cfg.iou_thresholds, None),
        ap50: at(&[0.5], None),
        ap75: at(&[0.75], None),
        ap_small: at(&cfg.iou_thresholds, Some(SizeClass::Small)),
        ap_medium: at(&cfg.iou_thresholds, Some(SizeClass::Medium)),
        ap_large: at(&cfg.iou_thresholds, Some(SizeClass::Large)),
    }
}

/// Ground truth from a COCO annotation file.
pub fn coco_truth(file: &CocoFile) -> Result<Vec<GroundTruthBox>> {
    let cats = file.category_map("annotations")?;
    file.annotations
        .iter()
        .map(|a| {
            Ok(GroundTruthBox {
                image_id: a.image_id,
                category: cats[&a.category_id],
                bbox: a.xyxy()?,
                iscrowd: a.iscrowd != 0,
            })
        })
        .collect()
}

/// Predictions from a COCO results list, resolving category ids through
/// the ground-truth file's category table.
pub fn coco_predictions(results: &[CocoResult], file: &CocoFile) -> Result<Vec<PredictedBox>> {
    let cats = file.category_map("annotations")?;
    results
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let category = *cats.get(&r.category_id).ok_or_else(|| crate::error::Error::Schema {
                context: format!("results[{i}].category_id"),
                message: format!("category id {} is not declared", r.category_id),
            })?;
            let [x, y, w, h] = r.bbox;
            Ok(PredictedBox {
                image_id: r.image_id,
                category,
                bbox: BoxXYXY::new(x, y, x + w, y + h)?,
                score: r.score,
            })
        })
        .collect()
}
