//! Sub-view layout, reprojection of sub-view detections onto the panorama,
//! edge filtering and merging of fragments cut by view boundaries.

use std::sync::OnceLock;

use image::RgbImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detection::{Detection, FrameSpace, Tangency};
use crate::detector::{DetectorPort, ViewRequest};
use crate::error::{Error, Result};
use crate::geometry::{wrap_signed, wrapped_iou, BoxXYXY};
use crate::projection::{
    build_projection_maps, direction_to_perspective, normalize_lon,
    perspective_to_direction, resample_view, PanoramaGeometry, ProjectionMaps, SphericalDirection,
    ViewSpec,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    /// Field of view of every sub-view, degrees.
    pub fov: f64,
    /// View latitude, degrees; negative looks below the horizon.
    pub phi: f64,
    /// View longitudes, degrees.
    pub thetas: Vec<f64>,
    /// Angular band next to each vertical view edge whose detections are
    /// left to the neighbouring view.
    pub edge_margin: f64,
    pub sub_view_size: u32,
    /// Sub-view pixels within which a box side counts as on the view edge.
    pub tangency_tolerance: f64,
    /// Extra degrees a view may keep past its own sector, so that boxes
    /// near a sector border are never dropped by both views.
    pub sector_slack: f64,
    pub merge_vertical_iou: f64,
    pub nms_iou: f64,
    /// Fraction of the neighbour's width by which a tangent fragment may
    /// poke out of the neighbour view and still be considered covered.
    pub containment_tolerance: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            fov: 120.0,
            phi: -10.0,
            thetas: vec![0.0, 90.0, 180.0, -90.0],
            edge_margin: 15.0,
            sub_view_size: 1280,
            tangency_tolerance: 1.0,
            sector_slack: 2.0,
            merge_vertical_iou: 0.3,
            nms_iou: 0.65,
            containment_tolerance: 0.02,
        }
    }
}

impl FusionConfig {
    /// Smallest angular overlap between circularly adjacent views.
    pub fn min_overlap(&self) -> f64 {
        let mut t: Vec<f64> = self.thetas.iter().map(|&x| normalize_lon(x)).collect();
        t.sort_by(f64::total_cmp);
        let max_gap = if t.len() < 2 {
            360.0
        } else {
            t.windows(2)
                .map(|w| w[1] - w[0])
                .chain(std::iter::once(t[0] + 360.0 - t[t.len() - 1]))
                .fold(0.0, f64::max)
        };
        self.fov - max_gap
    }

    pub fn validate(&self) -> Result<()> {
        if self.thetas.is_empty() {
            return Err(Error::Config("at least one view longitude is required".into()));
        }
        if !(self.fov > 0.0 && self.fov < 180.0) {
            return Err(Error::Config(format!("fov {} must lie in (0, 180)", self.fov)));
        }
        let overlap = self.min_overlap();
        if overlap <= 0.0 {
            return Err(Error::Config(format!(
                "views leave gaps: adjacent overlap is {overlap} degrees"
            )));
        }
        if !(0.0..=overlap / 2.0).contains(&self.edge_margin) {
            return Err(Error::Config(format!(
                "edge margin {} must lie in [0, {}] for an overlap of {overlap} degrees",
                self.edge_margin,
                overlap / 2.0
            )));
        }
        if self.sub_view_size < 2 {
            return Err(Error::Config("sub_view_size must be at least 2".into()));
        }
        for (name, v) in [("merge_vertical_iou", self.merge_vertical_iou), ("nms_iou", self.nms_iou)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} {v} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

pub fn make_views(cfg: &FusionConfig) -> Result<Vec<ViewSpec>> {
    cfg.validate()?;
    cfg.thetas
        .iter()
        .map(|&t| ViewSpec::new(cfg.fov, t, cfg.phi, cfg.sub_view_size, cfg.sub_view_size))
        .collect()
}

/// Circular neighbours of each view ordered by longitude: `(left, right)`.
fn neighbours(views: &[ViewSpec]) -> Vec<(usize, usize)> {
    let mut order: Vec<usize> = (0..views.len()).collect();
    order.sort_by(|&a, &b| views[a].theta_c().total_cmp(&views[b].theta_c()));
    let n = order.len();
    let mut out = vec![(0, 0); n];
    for (k, &i) in order.iter().enumerate() {
        out[i] = (order[(k + n - 1) % n], order[(k + 1) % n]);
    }
    out
}

fn tangency_of(b: &BoxXYXY, view: &ViewSpec, tol: f64) -> Tangency {
    Tangency {
        left: b.x_min <= tol,
        right: b.x_max >= view.out_width() as f64 - tol,
    }
}

/// Drops detections that belong to a neighbouring view and flags boxes
/// cut by the left or right view edge. Cut boxes are always kept; they are
/// resolved by [`merge_boxes`].
///
/// A whole box is kept by the view whose longitude is nearest to the box
/// centre; for the default layout that is exactly the rule of keeping the
/// central `fov - 2 * edge_margin` degrees.
pub fn filter_edge_boxes(
    dets: Vec<Detection>,
    view_index: usize,
    views: &[ViewSpec],
    cfg: &FusionConfig,
) -> Vec<Detection> {
    partition_edge_boxes(dets, view_index, views, cfg).0
}

/// [`filter_edge_boxes`] that also returns the whole boxes it ceded to a
/// neighbouring view.
fn partition_edge_boxes(
    dets: Vec<Detection>,
    view_index: usize,
    views: &[ViewSpec],
    cfg: &FusionConfig,
) -> (Vec<Detection>, Vec<Detection>) {
    let view = &views[view_index];
    dets.into_iter()
        .map(|mut d| {
            d.tangency = tangency_of(&d.bbox, view, cfg.tangency_tolerance);
            d
        })
        .partition(|d| {
            if d.tangency.any() {
                return true;
            }
            let (cx, cy) = d.bbox.center();
            let lon = perspective_to_direction(cx, cy, view).lon();
            let own = wrap_signed(lon - view.theta_c(), 360.0).abs();
            let other = views
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != view_index)
                .map(|(_, v)| wrap_signed(lon - v.theta_c(), 360.0).abs())
                .fold(f64::INFINITY, f64::min);
            own <= other + cfg.sector_slack
        })
}

fn border_samples(b: &BoxXYXY) -> Vec<(f64, f64)> {
    let nx = (b.width().ceil() as usize).max(1);
    let ny = (b.height().ceil() as usize).max(1);
    let mut pts = Vec::with_capacity(2 * (nx + ny + 2));
    for i in 0..=nx {
        let x = b.x_min + b.width() * i as f64 / nx as f64;
        pts.push((x, b.y_min));
        pts.push((x, b.y_max));
    }
    for j in 1..ny {
        let y = b.y_min + b.height() * j as f64 / ny as f64;
        pts.push((b.x_min, y));
        pts.push((b.x_max, y));
    }
    pts
}

/// Reprojected MBR with `x_min` in `[0, W)`; `x_max` exceeds `W` for boxes
/// straddling the seam.
fn reproject_unwrapped(det: &Detection, view: &ViewSpec, pano: &PanoramaGeometry) -> Result<BoxXYXY> {
    let b = &det.bbox;
    if !(view.contains_pixel(b.x_min, b.y_min) && view.contains_pixel(b.x_max, b.y_max)) {
        return Err(Error::OutOfBounds {
            x: if view.contains_pixel(b.x_min, b.y_min) { b.x_max } else { b.x_min },
            y: if view.contains_pixel(b.x_min, b.y_min) { b.y_max } else { b.y_min },
            width: view.out_width(),
            height: view.out_height(),
        });
    }
    let theta = view.theta_c();
    let mut mbr = BoxXYXY::from_points(border_samples(b).into_iter().map(|(px, py)| {
        let d = perspective_to_direction(px, py, view);
        let lon = theta + wrap_signed(d.lon() - theta, 360.0);
        (pano.lon_to_x(lon), pano.lat_to_y(d.lat()))
    }))
    .expect("border has samples");

    // A pole inside the box is an interior latitude extremum.
    for lat in [90.0, -90.0] {
        let pole = SphericalDirection::new(0.0, lat).expect("valid pole");
        if let Some((px, py)) = direction_to_perspective(&pole, view) {
            if (b.x_min..=b.x_max).contains(&px) && (b.y_min..=b.y_max).contains(&py) {
                mbr.x_min = pano.lon_to_x(theta - 180.0);
                mbr.x_max = mbr.x_min + pano.width_f();
                if lat > 0.0 {
                    mbr.y_min = 0.0;
                } else {
                    mbr.y_max = pano.height_f();
                }
            }
        }
    }
    let shift = mbr.x_min.div_euclid(pano.width_f()) * pano.width_f();
    Ok(mbr.shifted_x(-shift))
}

fn to_panorama(det: &Detection, bbox: BoxXYXY) -> Detection {
    Detection {
        bbox,
        space: FrameSpace::Panorama,
        ..det.clone()
    }
}

/// Splits a panorama detection whose box runs past the right image edge
/// into a part ending at `W` and a part starting at `0`, both flagged as
/// seam fragments. The left image part keeps the right tangency and vice
/// versa.
pub fn split_at_seam(det: Detection, pano: &PanoramaGeometry) -> Vec<Detection> {
    let w = pano.width_f();
    if det.bbox.x_max <= w {
        return vec![det];
    }
    let mut right = det.clone();
    right.bbox.x_max = w;
    right.wraps_seam = true;
    right.tangency.right = false;
    let mut left = det;
    left.bbox = BoxXYXY {
        x_min: 0.0,
        x_max: (left.bbox.x_max - w).min(w),
        ..left.bbox
    };
    left.wraps_seam = true;
    left.tangency.left = false;
    vec![right, left]
}

/// Maps a sub-view detection to the panorama as the MBR of its reprojected
/// border pixels. Boxes crossing the longitude seam come back as two
/// seam-flagged parts.
pub fn reproject_box(det: &Detection, view: &ViewSpec, pano: &PanoramaGeometry) -> Result<Vec<Detection>> {
    let b = reproject_unwrapped(det, view, pano)?;
    Ok(split_at_seam(to_panorama(det, b), pano))
}

/// Whether every border point of a panorama box projects into `view`
/// horizontally, allowing `tol` pixels outside.
fn inside_view_horizontally(b: &BoxXYXY, view: &ViewSpec, pano: &PanoramaGeometry, tol: f64) -> bool {
    let step = (b.width().max(b.height()) / 64.0).max(1.0);
    let nx = (b.width() / step).ceil().max(1.0) as usize;
    let ny = (b.height() / step).ceil().max(1.0) as usize;
    let w = view.out_width() as f64;
    let check = |x: f64, y: f64| {
        let lat = pano.y_to_lat(y).clamp(-90.0, 90.0);
        let d = SphericalDirection::new(pano.x_to_lon(x), lat).expect("finite");
        match direction_to_perspective(&d, view) {
            Some((px, _)) => px >= -tol && px <= w + tol,
            None => false,
        }
    };
    (0..=nx).all(|i| {
        let x = b.x_min + b.width() * i as f64 / nx as f64;
        check(x, b.y_min) && check(x, b.y_max)
    }) && (0..=ny).all(|j| {
        let y = b.y_min + b.height() * j as f64 / ny as f64;
        check(b.x_min, y) && check(b.x_max, y)
    })
}

/// Fragments that were combined into one box.
#[derive(Debug, Clone, PartialEq)]
pub struct MergeRecord {
    pub fragments: Vec<Detection>,
    pub merged: Detection,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MergeOutcome {
    pub output: Vec<Detection>,
    pub merges: Vec<MergeRecord>,
    /// Cut fragments dropped because a neighbouring view holds the object.
    pub covered: Vec<Detection>,
    /// Duplicates removed by non-maximum suppression.
    pub suppressed: Vec<Detection>,
}

struct DisjointSet(Vec<usize>);

impl DisjointSet {
    fn find(&mut self, i: usize) -> usize {
        let p = self.0[i];
        if p == i {
            return i;
        }
        let r = self.find(p);
        self.0[i] = r;
        r
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Copy of `b` shifted by a multiple of `w` so its centre is nearest `x`.
fn nearest_copy(b: &BoxXYXY, x: f64, w: f64) -> BoxXYXY {
    let dx = b.center().0 - x;
    b.shifted_x(-(dx - wrap_signed(dx, w)))
}

/// Whether at least half of `frag` lies inside a whole same-category box
/// seen by view `n`.
fn included_in_whole(frag: &Detection, n: usize, dets: &[Detection], w: f64) -> bool {
    dets.iter().any(|e| {
        e.source_view == Some(n)
            && !e.tangency.any()
            && e.category == frag.category
            && nearest_copy(&e.bbox, frag.bbox.center().0, w).intersection_area(&frag.bbox) >= frag.bbox.area() / 2.0
    })
}

/// Combines cut fragments of the same object, removes cut fragments that a
/// neighbouring view sees whole, then suppresses same-category duplicates.
///
/// Input boxes are panorama detections whose `source_view` indexes `views`.
pub fn merge_boxes(
    dets: Vec<Detection>,
    views: &[ViewSpec],
    cfg: &FusionConfig,
    pano: &PanoramaGeometry,
) -> Vec<Detection> {
    merge_boxes_traced(dets, views, cfg, pano).output
}

pub fn merge_boxes_traced(
    dets: Vec<Detection>,
    views: &[ViewSpec],
    cfg: &FusionConfig,
    pano: &PanoramaGeometry,
) -> MergeOutcome {
    let w = pano.width_f();
    let nb = neighbours(views);
    let view_of = |d: &Detection| d.source_view.filter(|&v| v < views.len());

    // Candidate pairs across each shared view boundary.
    let mut pairs = Vec::new();
    for (a, da) in dets.iter().enumerate() {
        let Some(va) = view_of(da) else { continue };
        if !da.tangency.right {
            continue;
        }
        for (b, db) in dets.iter().enumerate() {
            if a == b || !db.tangency.left || view_of(db) != Some(nb[va].1) || da.category != db.category {
                continue;
            }
            let viou = da.bbox.vertical_iou(&db.bbox);
            let bb = nearest_copy(&db.bbox, da.bbox.center().0, w);
            if viou >= cfg.merge_vertical_iou && da.bbox.horizontal_overlap(&bb) >= 0.0 {
                pairs.push((viou, a, b));
            }
        }
    }
    pairs.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut used_right = vec![false; dets.len()];
    let mut used_left = vec![false; dets.len()];
    let mut ds = DisjointSet((0..dets.len()).collect());
    for &(_, a, b) in &pairs {
        if used_right[a] || used_left[b] {
            continue;
        }
        used_right[a] = true;
        used_left[b] = true;
        ds.union(a, b);
    }

    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); dets.len()];
    for i in 0..dets.len() {
        let r = ds.find(i);
        groups[r].push(i);
    }

    let mut outcome = MergeOutcome::default();
    let mut survivors = Vec::new();
    for group in groups.into_iter().filter(|g| !g.is_empty()) {
        if group.len() == 1 {
            let d = &dets[group[0]];
            let covered = view_of(d).is_some_and(|v| {
                let tol = cfg.containment_tolerance * views[v].out_width() as f64;
                let sides = [(d.tangency.left, nb[v].0), (d.tangency.right, nb[v].1)];
                sides.iter().any(|&(cut, n)| {
                    cut && (inside_view_horizontally(&d.bbox, &views[n], pano, tol) || included_in_whole(d, n, &dets, w))
                })
            });
            if covered {
                outcome.covered.push(d.clone());
            } else {
                survivors.push(d.clone());
            }
            continue;
        }
        let anchor_x = dets[group[0]].bbox.center().0;
        let boxes: Vec<BoxXYXY> = group.iter().map(|&i| nearest_copy(&dets[i].bbox, anchor_x, w)).collect();
        let mut mbr = boxes[1..].iter().fold(boxes[0], |acc, b| acc.union(b));
        mbr = mbr.shifted_x(-(mbr.x_min.div_euclid(w) * w));
        let area: f64 = group.iter().map(|&i| dets[i].bbox.area()).sum();
        let score = if area > 0.0 {
            group.iter().map(|&i| dets[i].bbox.area() * dets[i].score).sum::<f64>() / area
        } else {
            group.iter().map(|&i| dets[i].score).sum::<f64>() / group.len() as f64
        };
        let largest = *group
            .iter()
            .max_by(|&&a, &&b| dets[a].bbox.area().total_cmp(&dets[b].bbox.area()))
            .expect("non-empty group");
        let merged = Detection {
            bbox: mbr,
            score: score.clamp(0.0, 1.0),
            category: dets[group[0]].category,
            space: FrameSpace::Panorama,
            wraps_seam: false,
            tangency: Tangency::default(),
            source_view: None,
            feature: dets[largest].feature.clone(),
        };
        outcome.merges.push(MergeRecord {
            fragments: group.iter().map(|&i| dets[i].clone()).collect(),
            merged: merged.clone(),
        });
        survivors.push(merged);
    }

    sort_by_score(&mut survivors);
    let mut keep = vec![true; survivors.len()];
    for i in 0..survivors.len() {
        if !keep[i] {
            continue;
        }
        for j in i + 1..survivors.len() {
            if keep[j]
                && survivors[i].category == survivors[j].category
                && wrapped_iou(&survivors[i].bbox, &survivors[j].bbox, w) >= cfg.nms_iou
            {
                keep[j] = false;
            }
        }
    }
    for (d, k) in survivors.into_iter().zip(keep) {
        if k {
            outcome.output.push(d);
        } else {
            outcome.suppressed.push(d);
        }
    }
    outcome
}

fn sort_by_score(dets: &mut [Detection]) {
    dets.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.bbox.x_min.total_cmp(&b.bbox.x_min))
            .then(a.bbox.y_min.total_cmp(&b.bbox.y_min))
            .then(a.bbox.x_max.total_cmp(&b.bbox.x_max))
            .then(a.bbox.y_max.total_cmp(&b.bbox.y_max))
    });
}

/// Everything [`Fuser::fuse_frame_traced`] produced along the way.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FusionTrace {
    /// Detector output per view.
    pub raw: Vec<Vec<Detection>>,
    /// Per-view survivors of the edge filter, with tangency flags.
    pub kept: Vec<Vec<Detection>>,
    /// Panorama boxes before merging; seam-crossing boxes are unsplit.
    pub reprojected: Vec<Detection>,
    pub merge: MergeOutcome,
    /// Final output: seam-split and sorted by descending score.
    pub output: Vec<Detection>,
}

/// Holds the view layout (and lazily the resampling maps) for a panorama size.
pub struct Fuser {
    cfg: FusionConfig,
    pano: PanoramaGeometry,
    views: Vec<ViewSpec>,
    maps: OnceLock<Vec<ProjectionMaps>>,
}

impl Fuser {
    pub fn new(cfg: FusionConfig, pano: PanoramaGeometry) -> Result<Self> {
        let views = make_views(&cfg)?;
        Ok(Fuser {
            cfg,
            pano,
            views,
            maps: OnceLock::new(),
        })
    }

    pub fn config(&self) -> &FusionConfig {
        &self.cfg
    }

    pub fn panorama(&self) -> &PanoramaGeometry {
        &self.pano
    }

    pub fn views(&self) -> &[ViewSpec] {
        &self.views
    }

    pub fn maps(&self) -> &[ProjectionMaps] {
        self.maps.get_or_init(|| {
            self.views
                .par_iter()
                .map(|v| build_projection_maps(v, &self.pano))
                .collect()
        })
    }

    pub fn fuse_frame(
        &self,
        frame_index: u32,
        frame: Option<&RgbImage>,
        detector: &dyn DetectorPort,
    ) -> Result<Vec<Detection>> {
        Ok(self.fuse_frame_traced(frame_index, frame, detector)?.output)
    }

    pub fn fuse_frame_traced(
        &self,
        frame_index: u32,
        frame: Option<&RgbImage>,
        detector: &dyn DetectorPort,
    ) -> Result<FusionTrace> {
        let images: Option<Vec<RgbImage>> = if detector.needs_pixels() {
            let frame = frame.ok_or_else(|| Error::Detector {
                view: None,
                message: "detector needs pixels but no frame was supplied".into(),
            })?;
            Some(
                self.maps()
                    .par_iter()
                    .map(|m| resample_view(frame, m, &self.pano))
                    .collect::<Result<_>>()?,
            )
        } else {
            None
        };

        let run = |i: usize| -> Result<Vec<Detection>> {
            let req = ViewRequest {
                frame_index,
                view_index: i,
                view: &self.views[i],
                image: images.as_ref().map(|v| &v[i]),
            };
            let wrap = |e: Error| match e {
                Error::Detector { view: Some(_), .. } => e,
                other => Error::Detector {
                    view: Some(i),
                    message: other.to_string(),
                },
            };
            let mut dets = detector.detect(&req).map_err(wrap)?;
            let (w, h) = (self.views[i].out_width() as f64, self.views[i].out_height() as f64);
            for d in &mut dets {
                d.validate().map_err(wrap)?;
                let b = &d.bbox;
                if b.x_min < 0.0 || b.y_min < 0.0 || b.x_max > w || b.y_max > h {
                    return Err(wrap(Error::invalid(format!("box {b:?} outside the {w}x{h} view"))));
                }
                d.space = FrameSpace::View(i);
                d.source_view = Some(i);
            }
            Ok(dets)
        };
        let raw: Vec<Vec<Detection>> = if detector.concurrent() {
            (0..self.views.len()).into_par_iter().map(run).collect::<Result<_>>()?
        } else {
            (0..self.views.len()).map(run).collect::<Result<_>>()?
        };
        self.fuse_detections_traced(raw)
    }

    /// Fusion from per-view detector output, bypassing the detector.
    pub fn fuse_detections_traced(&self, raw: Vec<Vec<Detection>>) -> Result<FusionTrace> {
        if raw.len() != self.views.len() {
            return Err(Error::invalid(format!(
                "{} detection lists for {} views",
                raw.len(),
                self.views.len()
            )));
        }
        let (mut kept, ceded): (Vec<Vec<Detection>>, Vec<Vec<Detection>>) = raw
            .iter()
            .enumerate()
            .map(|(i, dets)| partition_edge_boxes(dets.clone(), i, &self.views, &self.cfg))
            .unzip();
        let reproject = |i: usize, d: &Detection| -> Result<Detection> {
            let b = reproject_unwrapped(d, &self.views[i], &self.pano).map_err(|e| Error::Detector {
                view: Some(i),
                message: e.to_string(),
            })?;
            Ok(to_panorama(d, b))
        };
        let mut reprojected = Vec::new();
        for (i, dets) in kept.iter().enumerate() {
            for d in dets {
                reprojected.push(reproject(i, d)?);
            }
        }
        // A ceded box comes back when no other view holds the object whole.
        let w = self.pano.width_f();
        let mut rescued = Vec::new();
        for (i, dets) in ceded.iter().enumerate() {
            for d in dets {
                let p = reproject(i, d)?;
                let held = reprojected.iter().any(|k| {
                    k.source_view != Some(i)
                        && !k.tangency.any()
                        && k.category == p.category
                        && nearest_copy(&k.bbox, p.bbox.center().0, w).intersection_area(&p.bbox) > 0.0
                });
                if !held {
                    rescued.push((i, d.clone(), p));
                }
            }
        }
        for (i, d, p) in rescued {
            kept[i].push(d);
            reprojected.push(p);
        }
        let merge = merge_boxes_traced(reprojected.clone(), &self.views, &self.cfg, &self.pano);
        let mut output: Vec<Detection> = merge
            .output
            .iter()
            .cloned()
            .flat_map(|d| split_at_seam(d, &self.pano))
            .collect();
        sort_by_score(&mut output);
        Ok(FusionTrace {
            raw,
            kept,
            reprojected,
            merge,
            output,
        })
    }
}

/// One-shot fusion of a single frame.
pub fn fuse_frame(
    frame_index: u32,
    frame: Option<&RgbImage>,
    detector: &dyn DetectorPort,
    cfg: &FusionConfig,
    pano: &PanoramaGeometry,
) -> Result<Vec<Detection>> {
    Fuser::new(cfg.clone(), *pano)?.fuse_frame(frame_index, frame, detector)
}
