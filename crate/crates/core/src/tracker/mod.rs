//! Multi-object tracker: Kalman motion model, matching cascade on
//! appearance then IoU, with optional category filtering and seam
//! continuity for full 360° panoramas.

pub mod assignment;
pub mod distance;
pub mod kalman;

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::category::Category;
use crate::detection::Detection;
use crate::error::{Error, Result};
use crate::geometry::BoxXYXY;

pub use assignment::{hungarian_solve, linear_assignment, Assignment, CostMatrix, MASK_COST};
pub use distance::{
    apply_category_filter, cosine_distance, iou_distance_wrapped, mahalanobis_distance_wrapped,
    merge_seam_detections, nearest_candidate,
};
pub use kalman::{KalmanFilter, KalmanState, CHI2_95_4DOF};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    /// Frames a confirmed track survives without a match.
    pub max_age: u32,
    /// Consecutive matches needed before a track is confirmed.
    pub n_init: u32,
    /// Weight of the Mahalanobis term in the cascade cost; 0 is cosine only.
    pub lambda: f64,
    pub gating_threshold: f64,
    pub max_cosine_distance: f64,
    pub max_iou_distance: f64,
    pub gallery_size: usize,
    pub pano_width: f64,
    pub category_support: bool,
    pub boundary_support: bool,
    pub seam_vertical_iou: f64,
    /// Also report the tentative frames of a track once it is confirmed.
    pub backfill_tentative: bool,
    /// Length of the per-track centre-x history.
    pub position_history: usize,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            max_age: 30,
            n_init: 3,
            lambda: 0.0,
            gating_threshold: CHI2_95_4DOF,
            max_cosine_distance: 0.2,
            max_iou_distance: 0.7,
            gallery_size: 100,
            pano_width: 3840.0,
            category_support: true,
            boundary_support: true,
            seam_vertical_iou: 0.3,
            backfill_tentative: false,
            position_history: 16,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_init < 1 || self.max_age < 1 {
            return Err(Error::Config("n_init and max_age must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config(format!("lambda {} outside [0, 1]", self.lambda)));
        }
        if !(self.pano_width.is_finite() && self.pano_width > 0.0) {
            return Err(Error::Config(format!("bad panorama width {}", self.pano_width)));
        }
        if self.gallery_size == 0 || self.position_history < 2 {
            return Err(Error::Config("gallery_size must be >= 1 and position_history >= 2".into()));
        }
        Ok(())
    }

    fn wrap_width(&self) -> Option<f64> {
        self.boundary_support.then_some(self.pano_width)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrackState {
    Tentative,
    Confirmed,
    Deleted,
}

#[derive(Debug, Clone)]
pub struct Track {
    pub id: u64,
    pub state: TrackState,
    pub category: Category,
    pub kalman: KalmanState,
    pub hits: u32,
    pub age: u32,
    pub time_since_update: u32,
    pub score: f64,
    pub gallery: VecDeque<Vec<f32>>,
    pub positions: VecDeque<f64>,
    pending: Vec<TrackOutput>,
}

impl Track {
    pub fn is_confirmed(&self) -> bool {
        self.state == TrackState::Confirmed
    }

    /// Current box, with `x_min` folded into `[0, width)` when wrapping.
    pub fn bbox(&self, pano_width: Option<f64>) -> BoxXYXY {
        let b = self.kalman.bbox();
        match pano_width {
            Some(w) => normalize_box_x(&b, w),
            None => b,
        }
    }
}

/// Shifts a box by whole panorama widths so that `x_min` lies in `[0, w)`.
pub fn normalize_box_x(b: &BoxXYXY, w: f64) -> BoxXYXY {
    let x = b.x_min.rem_euclid(w);
    b.shifted_x(x - b.x_min)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackOutput {
    pub frame: u32,
    pub id: u64,
    pub category: Category,
    pub score: f64,
    /// May extend past the panorama width for objects across the seam.
    pub bbox: BoxXYXY,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchStage {
    Cascade,
    Iou,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssociationEvent {
    pub frame: u32,
    pub track_id: u64,
    pub track_category: Category,
    pub detection_category: Category,
    pub stage: MatchStage,
}

impl AssociationEvent {
    pub fn is_cross_category(&self) -> bool {
        self.track_category != self.detection_category
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepOutput {
    /// Confirmed tracks matched in this frame.
    pub tracks: Vec<TrackOutput>,
    pub associations: Vec<AssociationEvent>,
    /// Earlier-frame boxes of tracks confirmed in this frame, when
    /// `backfill_tentative` is set.
    pub backfill: Vec<TrackOutput>,
    /// True if some detection had no appearance feature, so the cascade
    /// used IoU in place of cosine distance.
    pub appearance_fallback: bool,
}

#[derive(Debug, Clone)]
pub struct Tracker {
    cfg: TrackerConfig,
    kf: KalmanFilter,
    tracks: Vec<Track>,
    next_id: u64,
}

impl Tracker {
    pub fn new(cfg: TrackerConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Tracker {
            cfg,
            kf: KalmanFilter::default(),
            tracks: Vec::new(),
            next_id: 1,
        })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    /// Advances the tracker by one frame of panorama detections.
    pub fn step(&mut self, frame: u32, detections: Vec<Detection>) -> Result<StepOutput> {
        for d in &detections {
            d.validate()?;
        }
        for t in &mut self.tracks {
            t.kalman = self.kf.predict(&t.kalman);
            t.age += 1;
            t.time_since_update += 1;
        }
        let dets = if self.cfg.boundary_support {
            merge_seam_detections(detections, self.cfg.pano_width, self.cfg.seam_vertical_iou)
        } else {
            detections
        };

        let mut out = StepOutput {
            appearance_fallback: dets.iter().any(|d| d.feature.is_none()),
            ..StepOutput::default()
        };
        let (matches, unmatched_tracks, unmatched_dets) = self.match_detections(&dets, frame, &mut out)?;

        let wrap = self.cfg.wrap_width();
        for &(ti, di) in &matches {
            let det = &dets[di];
            let t = &mut self.tracks[ti];
            let cand = nearest_candidate(&det.bbox, t.kalman.mean[0], wrap);
            t.kalman = self.kf.update(&t.kalman, &kalman::box_to_measurement(&cand))?;
            if let Some(w) = wrap {
                t.kalman.mean[0] = t.kalman.mean[0].rem_euclid(w);
            }
            t.hits += 1;
            t.time_since_update = 0;
            t.score = det.score;
            if let Some(f) = &det.feature {
                t.gallery.push_back(f.clone());
                if t.gallery.len() > self.cfg.gallery_size {
                    t.gallery.pop_front();
                }
            }
            if t.state == TrackState::Tentative && t.hits >= self.cfg.n_init {
                t.state = TrackState::Confirmed;
                if self.cfg.backfill_tentative {
                    out.backfill.append(&mut t.pending);
                }
            }
        }
        for &ti in &unmatched_tracks {
            let t = &mut self.tracks[ti];
            if t.state == TrackState::Tentative || t.time_since_update > self.cfg.max_age {
                t.state = TrackState::Deleted;
            }
        }
        for &di in &unmatched_dets {
            self.spawn(&dets[di]);
        }
        self.tracks.retain(|t| t.state != TrackState::Deleted);

        for t in &mut self.tracks {
            if t.time_since_update != 0 {
                continue;
            }
            let bbox = t.bbox(wrap);
            t.positions.push_back(t.kalman.mean[0]);
            if t.positions.len() > self.cfg.position_history {
                t.positions.pop_front();
            }
            let o = TrackOutput {
                frame,
                id: t.id,
                category: t.category,
                score: t.score,
                bbox,
            };
            match t.state {
                TrackState::Confirmed => out.tracks.push(o),
                TrackState::Tentative if self.cfg.backfill_tentative => t.pending.push(o),
                _ => {}
            }
        }
        out.tracks.sort_by_key(|o| o.id);
        Ok(out)
    }

    fn spawn(&mut self, det: &Detection) {
        let mut kalman = self.kf.initiate(&kalman::box_to_measurement(&det.bbox));
        if let Some(w) = self.cfg.wrap_width() {
            kalman.mean[0] = kalman.mean[0].rem_euclid(w);
        }
        let state = if self.cfg.n_init <= 1 {
            TrackState::Confirmed
        } else {
            TrackState::Tentative
        };
        self.tracks.push(Track {
            id: self.next_id,
            state,
            category: det.category,
            kalman,
            hits: 1,
            age: 1,
            time_since_update: 0,
            score: det.score,
            gallery: det.feature.iter().cloned().collect(),
            positions: VecDeque::new(),
            pending: Vec::new(),
        });
        self.next_id += 1;
    }

    /// Matching cascade over confirmed tracks, then IoU matching for the
    /// rest. Returns `(matches, unmatched tracks, unmatched detections)`.
    #[allow(clippy::type_complexity)]
    fn match_detections(
        &self,
        dets: &[Detection],
        frame: u32,
        out: &mut StepOutput,
    ) -> Result<(Vec<(usize, usize)>, Vec<usize>, Vec<usize>)> {
        let mut matches = Vec::new();
        let mut unmatched_dets: Vec<usize> = (0..dets.len()).collect();
        let confirmed: Vec<usize> = (0..self.tracks.len()).filter(|&i| self.tracks[i].is_confirmed()).collect();
        let unconfirmed: Vec<usize> = (0..self.tracks.len()).filter(|&i| !self.tracks[i].is_confirmed()).collect();

        for level in 1..=self.cfg.max_age {
            if unmatched_dets.is_empty() {
                break;
            }
            let rows: Vec<usize> = confirmed
                .iter()
                .copied()
                .filter(|&i| self.tracks[i].time_since_update == level)
                .collect();
            if rows.is_empty() {
                continue;
            }
            let (costs, gate) = self.cascade_costs(&rows, &unmatched_dets, dets)?;
            let a = hungarian_solve(&costs, gate);
            let mut used = vec![false; unmatched_dets.len()];
            for (r, c) in a.matches {
                used[c] = true;
                self.record(frame, rows[r], &dets[unmatched_dets[c]], MatchStage::Cascade, out);
                matches.push((rows[r], unmatched_dets[c]));
            }
            unmatched_dets = unmatched_dets
                .into_iter()
                .zip(used)
                .filter_map(|(d, u)| (!u).then_some(d))
                .collect();
        }

        let matched_tracks: Vec<bool> = {
            let mut m = vec![false; self.tracks.len()];
            for &(t, _) in &matches {
                m[t] = true;
            }
            m
        };
        let mut iou_rows = unconfirmed;
        let mut unmatched_tracks = Vec::new();
        for &i in &confirmed {
            if matched_tracks[i] {
                continue;
            }
            if self.tracks[i].time_since_update == 1 {
                iou_rows.push(i);
            } else {
                unmatched_tracks.push(i);
            }
        }

        let costs = self.iou_costs(&iou_rows, &unmatched_dets, dets)?;
        let a = hungarian_solve(&costs, self.cfg.max_iou_distance);
        for &(r, c) in &a.matches {
            self.record(frame, iou_rows[r], &dets[unmatched_dets[c]], MatchStage::Iou, out);
            matches.push((iou_rows[r], unmatched_dets[c]));
        }
        unmatched_tracks.extend(a.unmatched_rows.iter().map(|&r| iou_rows[r]));
        let unmatched_dets: Vec<usize> = a.unmatched_cols.iter().map(|&c| unmatched_dets[c]).collect();
        unmatched_tracks.sort_unstable();
        Ok((matches, unmatched_tracks, unmatched_dets))
    }

    fn record(&self, frame: u32, ti: usize, det: &Detection, stage: MatchStage, out: &mut StepOutput) {
        let t = &self.tracks[ti];
        out.associations.push(AssociationEvent {
            frame,
            track_id: t.id,
            track_category: t.category,
            detection_category: det.category,
            stage,
        });
    }

    fn cascade_costs(
        &self,
        rows: &[usize],
        cols: &[usize],
        dets: &[Detection],
    ) -> Result<(CostMatrix, f64)> {
        let wrap = self.cfg.wrap_width();
        let appearance = cols.iter().all(|&j| dets[j].feature.is_some())
            && rows.iter().all(|&i| !self.tracks[i].gallery.is_empty());
        let mut costs = CostMatrix::zeros(rows.len(), cols.len());
        for (r, &i) in rows.iter().enumerate() {
            let t = &self.tracks[i];
            let tb = t.kalman.bbox();
            for (c, &j) in cols.iter().enumerate() {
                let d = &dets[j];
                let maha = mahalanobis_distance_wrapped(&self.kf, &t.kalman, &d.bbox, wrap)?;
                let base = if appearance {
                    let gallery: Vec<Vec<f32>> = t.gallery.iter().cloned().collect();
                    cosine_distance(&gallery, d.feature.as_deref().unwrap_or_default())?
                } else {
                    iou_distance_wrapped(&tb, &d.bbox, wrap)
                };
                let mut cost = if appearance {
                    self.cfg.lambda * maha + (1.0 - self.cfg.lambda) * base
                } else {
                    base
                };
                if maha > self.cfg.gating_threshold {
                    cost = MASK_COST;
                }
                costs[(r, c)] = cost;
            }
        }
        self.filter_categories(&mut costs, rows, cols, dets)?;
        let gate = if appearance {
            self.cfg.max_cosine_distance
        } else {
            self.cfg.max_iou_distance
        };
        Ok((costs, gate))
    }

    fn iou_costs(&self, rows: &[usize], cols: &[usize], dets: &[Detection]) -> Result<CostMatrix> {
        let wrap = self.cfg.wrap_width();
        let mut costs = CostMatrix::zeros(rows.len(), cols.len());
        for (r, &i) in rows.iter().enumerate() {
            let tb = self.tracks[i].kalman.bbox();
            for (c, &j) in cols.iter().enumerate() {
                costs[(r, c)] = iou_distance_wrapped(&tb, &dets[j].bbox, wrap);
            }
        }
        self.filter_categories(&mut costs, rows, cols, dets)?;
        Ok(costs)
    }

    fn filter_categories(&self, costs: &mut CostMatrix, rows: &[usize], cols: &[usize], dets: &[Detection]) -> Result<()> {
        if !self.cfg.category_support {
            return Ok(());
        }
        let tc: Vec<Category> = rows.iter().map(|&i| self.tracks[i].category).collect();
        let dc: Vec<Category> = cols.iter().map(|&j| dets[j].category).collect();
        apply_category_filter(costs, &tc, &dc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::FrameSpace;

    const W: f64 = 1000.0;

    fn cfg() -> TrackerConfig {
        TrackerConfig {
            pano_width: W,
            ..TrackerConfig::default()
        }
    }

    fn det(x0: f64, x1: f64, cat: Category) -> Detection {
        Detection::new(BoxXYXY::new(x0, 100.0, x1, 160.0).unwrap(), 0.9, cat, FrameSpace::Panorama).unwrap()
    }

    #[test]
    fn confirmed_on_third_frame() {
        let mut t = Tracker::new(cfg()).unwrap();
        for f in 1..=2 {
            assert!(t.step(f, vec![det(100.0, 130.0, Category::Car)]).unwrap().tracks.is_empty());
        }
        let out = t.step(3, vec![det(100.0, 130.0, Category::Car)]).unwrap();
        assert_eq!(out.tracks.len(), 1);
        assert_eq!(out.tracks[0].id, 1);
        assert!(out.appearance_fallback);
    }

    #[test]
    fn backfill_reports_tentative_frames() {
        let mut t = Tracker::new(TrackerConfig {
            backfill_tentative: true,
            ..cfg()
        })
        .unwrap();
        t.step(1, vec![det(100.0, 130.0, Category::Car)]).unwrap();
        t.step(2, vec![det(100.0, 130.0, Category::Car)]).unwrap();
        let out = t.step(3, vec![det(100.0, 130.0, Category::Car)]).unwrap();
        let frames: Vec<u32> = out.backfill.iter().map(|o| o.frame).collect();
        assert_eq!(frames, vec![1, 2]);
    }

    #[test]
    fn deleted_after_max_age() {
        let mut t = Tracker::new(TrackerConfig { max_age: 5, ..cfg() }).unwrap();
        for f in 1..=3 {
            t.step(f, vec![det(100.0, 130.0, Category::Car)]).unwrap();
        }
        for f in 4..=8 {
            t.step(f, vec![]).unwrap();
            assert_eq!(t.tracks().len(), 1, "frame {f}");
        }
        t.step(9, vec![]).unwrap();
        assert!(t.tracks().is_empty());
    }

    #[test]
    fn tentative_track_dies_on_first_miss() {
        let mut t = Tracker::new(cfg()).unwrap();
        t.step(1, vec![det(100.0, 130.0, Category::Car)]).unwrap();
        t.step(2, vec![]).unwrap();
        assert!(t.tracks().is_empty());
    }

    #[test]
    fn category_filter_blocks_cross_matches() {
        for support in [true, false] {
            let mut t = Tracker::new(TrackerConfig {
                category_support: support,
                ..cfg()
            })
            .unwrap();
            for f in 1..=3 {
                t.step(f, vec![det(100.0, 130.0, Category::Person)]).unwrap();
            }
            let out = t.step(4, vec![det(102.0, 132.0, Category::Bicycle)]).unwrap();
            let cross = out.associations.iter().any(|e| e.is_cross_category());
            assert_eq!(cross, !support);
        }
    }

    #[test]
    fn fresher_track_wins_cascade() {
        let mut t = Tracker::new(cfg()).unwrap();
        for f in 1..=3 {
            t.step(f, vec![det(100.0, 130.0, Category::Car), det(104.0, 134.0, Category::Car)]).unwrap();
        }
        let ids: Vec<u64> = t.tracks().iter().map(|t| t.id).collect();
        // Track 1 misses one frame.
        t.step(4, vec![det(104.0, 134.0, Category::Car)]).unwrap();
        let out = t.step(5, vec![det(102.0, 132.0, Category::Car)]).unwrap();
        assert_eq!(out.tracks.len(), 1);
        assert_eq!(out.tracks[0].id, ids[1]);
    }

    #[test]
    fn appearance_gate_separates_objects() {
        let mut t = Tracker::new(cfg()).unwrap();
        let with = |d: Detection, f: [f32; 2]| d.with_feature(Some(f.to_vec()));
        for f in 1..=3 {
            t.step(f, vec![with(det(100.0, 130.0, Category::Car), [1.0, 0.0])]).unwrap();
        }
        let out = t.step(4, vec![with(det(100.0, 130.0, Category::Car), [0.0, 1.0])]).unwrap();
        // The cascade rejects the new appearance, the IoU stage takes it.
        assert_eq!(out.associations.len(), 1);
        assert_eq!(out.associations[0].stage, MatchStage::Iou);
        assert!(!out.appearance_fallback);
    }

    fn crossing_ids(boundary_support: bool) -> Vec<u64> {
        let mut t = Tracker::new(TrackerConfig {
            boundary_support,
            ..cfg()
        })
        .unwrap();
        let mut ids = Vec::new();
        // 30 px wide, moving left by 4 px per frame through x = 0.
        for f in 1..=40u32 {
            let x0 = 60.0 - 4.0 * f as f64;
            let mut dets = Vec::new();
            if x0 >= 0.0 {
                dets.push(det(x0, x0 + 30.0, Category::Car));
            } else if x0 + 30.0 <= 0.0 {
                dets.push(det(x0 + W, x0 + 30.0 + W, Category::Car));
            } else {
                let mut l = det(0.0, x0 + 30.0, Category::Car);
                let mut r = det(x0 + W, W, Category::Car);
                l.wraps_seam = true;
                r.wraps_seam = true;
                dets.push(l);
                dets.push(r);
            }
            for o in t.step(f, dets).unwrap().tracks {
                ids.push(o.id);
            }
        }
        ids.dedup();
        ids
    }

    #[test]
    fn seam_crossing_keeps_id_only_with_boundary_support() {
        assert_eq!(crossing_ids(true), vec![1]);
        assert!(crossing_ids(false).len() >= 2);
    }

    #[test]
    fn ids_strictly_increase() {
        let mut t = Tracker::new(cfg()).unwrap();
        t.step(1, vec![det(0.0, 30.0, Category::Car), det(500.0, 530.0, Category::Bus)]).unwrap();
        t.step(2, vec![det(200.0, 230.0, Category::Car)]).unwrap();
        let ids: Vec<u64> = t.tracks().iter().map(|t| t.id).collect();
        assert_eq!(ids, vec![3]);
    }

    #[test]
    fn normalize_box() {
        let b = BoxXYXY::new(-10.0, 0.0, 20.0, 5.0).unwrap();
        assert_eq!(normalize_box_x(&b, W), BoxXYXY::new(990.0, 0.0, 1020.0, 5.0).unwrap());
        assert_eq!(normalize_box_x(&b.shifted_x(10.0), W), b.shifted_x(10.0));
    }

    #[test]
    fn rejects_bad_config() {
        assert!(Tracker::new(TrackerConfig { n_init: 0, ..cfg() }).is_err());
        assert!(Tracker::new(TrackerConfig { lambda: 2.0, ..cfg() }).is_err());
    }
}
