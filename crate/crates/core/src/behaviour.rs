//! Motion direction relative to the rider and detection of overtaking
//! manoeuvres from confirmed track boxes.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::category::Category;
use crate::error::{Error, Result};
use crate::geometry::{wrap_signed, BoxXYXY};
use crate::tracker::TrackOutput;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MotionLabel {
    Forwards,
    Backwards,
    Undetermined,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn label(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }
}

impl std::str::FromStr for Side {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "left" => Ok(Side::Left),
            "right" => Ok(Side::Right),
            other => Err(Error::invalid(format!("unknown side {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OvertakeState {
    Unconfirmed,
    Confirmed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OvertakeRecord {
    pub track_id: u64,
    pub side: Side,
    pub state: OvertakeState,
    pub start_frame: u32,
    pub end_frame: Option<u32>,
}

impl OvertakeRecord {
    pub fn confirmed(track_id: u64, side: Side, start_frame: u32, end_frame: u32) -> Self {
        OvertakeRecord {
            track_id,
            side,
            state: OvertakeState::Confirmed,
            start_frame,
            end_frame: Some(end_frame),
        }
    }

    /// Frames from start to end; zero for records without an end.
    pub fn duration_frames(&self) -> u32 {
        self.end_frame.map_or(0, |e| e.saturating_sub(self.start_frame))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BehaviourConfig {
    pub window: usize,
    pub vote_threshold: usize,
    /// Longitude the rider is heading towards, degrees.
    pub forward_lon: f64,
    pub left_line_lon: f64,
    pub right_line_lon: f64,
    pub eligible: Vec<Category>,
    /// Confirmed records shorter than this many seconds are dropped; 0 keeps all.
    pub min_duration: f64,
    pub fps: f64,
}

impl Default for BehaviourConfig {
    fn default() -> Self {
        BehaviourConfig {
            window: 5,
            vote_threshold: 3,
            forward_lon: 0.0,
            left_line_lon: -90.0,
            right_line_lon: 90.0,
            eligible: vec![Category::Car, Category::Bus, Category::Truck, Category::Motorbike],
            min_duration: 0.0,
            fps: 30.0,
        }
    }
}

impl BehaviourConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.vote_threshold == 0 || self.vote_threshold > self.window {
            return Err(Error::Config(format!(
                "vote_threshold {} must be in 1..={}",
                self.vote_threshold, self.window
            )));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) || self.min_duration.is_nan() || self.min_duration < 0.0 {
            return Err(Error::Config("fps must be positive and min_duration non-negative".into()));
        }
        Ok(())
    }

    /// Every longitude moved by `dlon` degrees.
    pub fn rotated(&self, dlon: f64) -> Self {
        BehaviourConfig {
            forward_lon: self.forward_lon + dlon,
            left_line_lon: self.left_line_lon + dlon,
            right_line_lon: self.right_line_lon + dlon,
            ..self.clone()
        }
    }

    fn lon_to_x(lon: f64, w: f64) -> f64 {
        (lon / 360.0 + 0.5).rem_euclid(1.0) * w
    }

    fn min_duration_frames(&self) -> f64 {
        self.min_duration * self.fps
    }
}

/// Majority vote over the last `window` displacements: does the object get
/// closer to the forward direction or further from it?
pub fn classify_direction(positions: &[f64], pano_width: f64, cfg: &BehaviourConfig) -> MotionLabel {
    if positions.len() < 2 {
        return MotionLabel::Undetermined;
    }
    let centre = BehaviourConfig::lon_to_x(cfg.forward_lon, pano_width);
    let dist = |x: f64| wrap_signed(x - centre, pano_width).abs();
    let start = positions.len().saturating_sub(cfg.window + 1);
    let (mut toward, mut away) = (0, 0);
    for w in positions[start..].windows(2) {
        let (a, b) = (dist(w[0]), dist(w[1]));
        if b < a {
            toward += 1;
        } else if b > a {
            away += 1;
        }
    }
    if toward >= cfg.vote_threshold {
        MotionLabel::Forwards
    } else if away >= cfg.vote_threshold {
        MotionLabel::Backwards
    } else {
        MotionLabel::Undetermined
    }
}

/// +1 if `x` moved from left of `line` onto or past it, -1 if it moved from
/// right of `line` onto or past it, 0 otherwise. Positions are compared on the wrapped circle, so
/// the antipode of the line never counts.
fn crossing(prev: f64, cur: f64, line: f64, w: f64) -> i8 {
    let a = wrap_signed(prev - line, w);
    let b = a + wrap_signed(cur - prev, w);
    if a < 0.0 && b >= 0.0 {
        1
    } else if a > 0.0 && b <= 0.0 {
        -1
    } else {
        0
    }
}

/// Per-track overtake state machine.
#[derive(Debug, Clone, Default)]
pub struct OvertakeFsm {
    active: Option<OvertakeRecord>,
    prev_box: Option<BoxXYXY>,
}

impl OvertakeFsm {
    /// Feeds one box. Returns the record if this frame confirmed or failed it.
    pub fn step(
        &mut self,
        track_id: u64,
        motion: MotionLabel,
        bbox: &BoxXYXY,
        frame: u32,
        pano_width: f64,
        cfg: &BehaviourConfig,
    ) -> Option<OvertakeRecord> {
        let prev = self.prev_box.replace(*bbox)?;
        let w = pano_width;
        let left = BehaviourConfig::lon_to_x(cfg.left_line_lon, w);
        let right = BehaviourConfig::lon_to_x(cfg.right_line_lon, w);
        let lead_l = crossing(prev.x_max, bbox.x_max, left, w);
        let trail_l = crossing(prev.x_min, bbox.x_min, left, w);
        let lead_r = crossing(prev.x_min, bbox.x_min, right, w);
        let trail_r = crossing(prev.x_max, bbox.x_max, right, w);

        if self.active.is_none() && motion == MotionLabel::Forwards {
            if lead_l == 1 {
                self.active = Some(OvertakeRecord {
                    track_id,
                    side: Side::Left,
                    state: OvertakeState::Unconfirmed,
                    start_frame: frame,
                    end_frame: None,
                });
            } else if lead_r == -1 {
                self.active = Some(OvertakeRecord {
                    track_id,
                    side: Side::Right,
                    state: OvertakeState::Unconfirmed,
                    start_frame: frame,
                    end_frame: None,
                });
            }
        }

        let rec = self.active.as_mut()?;
        let (confirm, fail) = match rec.side {
            Side::Left => (trail_l == 1, lead_l == -1),
            Side::Right => (trail_r == -1, lead_r == 1),
        };
        if confirm {
            rec.state = OvertakeState::Confirmed;
            rec.end_frame = Some(frame);
        } else if fail {
            rec.state = OvertakeState::Failed;
        } else {
            return None;
        }
        self.active.take()
    }

    pub fn active(&self) -> Option<&OvertakeRecord> {
        self.active.as_ref()
    }
}

/// Streaming overtake detection over per-frame confirmed track outputs.
#[derive(Debug, Clone)]
pub struct OvertakeDetector {
    cfg: BehaviourConfig,
    pano_width: f64,
    positions: BTreeMap<u64, VecDeque<f64>>,
    fsms: BTreeMap<u64, OvertakeFsm>,
    confirmed: Vec<OvertakeRecord>,
    failed: usize,
}

impl OvertakeDetector {
    pub fn new(cfg: BehaviourConfig, pano_width: f64) -> Result<Self> {
        cfg.validate()?;
        Ok(OvertakeDetector {
            cfg,
            pano_width,
            positions: BTreeMap::new(),
            fsms: BTreeMap::new(),
            confirmed: Vec::new(),
            failed: 0,
        })
    }

    /// All outputs must belong to `frame`.
    pub fn step(&mut self, frame: u32, outputs: &[TrackOutput]) {
        let w = self.pano_width;
        for o in outputs {
            if !self.cfg.eligible.contains(&o.category) {
                continue;
            }
            let pos = self.positions.entry(o.id).or_default();
            pos.push_back((o.bbox.center().0).rem_euclid(w));
            if pos.len() > self.cfg.window + 1 {
                pos.pop_front();
            }
            let motion = classify_direction(pos.make_contiguous(), w, &self.cfg);
            let fsm = self.fsms.entry(o.id).or_default();
            match fsm.step(o.id, motion, &o.bbox, frame, w, &self.cfg) {
                Some(r) if r.state == OvertakeState::Confirmed => {
                    if r.duration_frames() as f64 >= self.cfg.min_duration_frames() {
                        self.confirmed.push(r);
                    }
                }
                Some(_) => self.failed += 1,
                None => {}
            }
        }
    }

    pub fn failed_count(&self) -> usize {
        self.failed
    }

    /// Confirmed records sorted by end frame, then track id.
    pub fn finish(mut self) -> Vec<OvertakeRecord> {
        self.confirmed.sort_by_key(|r| (r.end_frame, r.track_id, r.start_frame));
        self.confirmed
    }
}

/// Runs the overtake detector over a whole stream of track outputs.
pub fn detect_overtakes(stream: &[TrackOutput], pano_width: f64, cfg: &BehaviourConfig) -> Result<Vec<OvertakeRecord>> {
    let mut by_frame: BTreeMap<u32, Vec<TrackOutput>> = BTreeMap::new();
    for o in stream {
        by_frame.entry(o.frame).or_default().push(o.clone());
    }
    let mut det = OvertakeDetector::new(cfg.clone(), pano_width)?;
    for (frame, outs) in &by_frame {
        det.step(*frame, outs);
    }
    Ok(det.finish())
}

/// `(frame, track id)` pairs lying inside a confirmed overtake.
pub fn overtake_frames(records: &[OvertakeRecord]) -> BTreeSet<(u32, u64)> {
    let mut out = BTreeSet::new();
    for r in records {
        if let Some(end) = r.end_frame {
            for f in r.start_frame..=end {
                out.insert((f, r.track_id));
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OvertakeScore {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
    /// Set when there were no predictions and precision was reported as 1.
    pub precision_undefined: bool,
    pub recall_undefined: bool,
}

impl OvertakeScore {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { (1.0, true) } else { (num as f64 / den as f64, false) };
        let (precision, precision_undefined) = ratio(tp, tp + fp);
        let (recall, recall_undefined) = ratio(tp, tp + fn_);
        let (f_score, _) = ratio(2 * tp, 2 * tp + fp + fn_);
        OvertakeScore {
            tp,
            fp,
            fn_,
            precision,
            recall,
            f_score,
            precision_undefined,
            recall_undefined,
        }
    }
}

/// Greedy one-to-one matching of predicted and true overtakes on the same
/// side whose frame intervals overlap once widened by `frame_tolerance`;
/// larger overlaps are matched first.
pub fn score_overtakes(predicted: &[OvertakeRecord], truth: &[OvertakeRecord], frame_tolerance: u32) -> OvertakeScore {
    let interval = |r: &OvertakeRecord| (r.start_frame as i64, r.end_frame.unwrap_or(r.start_frame) as i64);
    let tol = frame_tolerance as i64;
    let mut pairs = Vec::new();
    for (i, p) in predicted.iter().enumerate() {
        let (ps, pe) = interval(p);
        for (j, t) in truth.iter().enumerate().filter(|(_, t)| t.side == p.side) {
            let (ts, te) = interval(t);
            let overlap = pe.min(te) - ps.max(ts);
            if overlap >= -tol {
                pairs.push((overlap, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| b.0.cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2))));
    let mut pu = vec![false; predicted.len()];
    let mut tu = vec![false; truth.len()];
    let mut tp = 0;
    for (_, i, j) in pairs {
        if !pu[i] && !tu[j] {
            pu[i] = true;
            tu[j] = true;
            tp += 1;
        }
    }
    OvertakeScore::from_counts(tp, predicted.len() - tp, truth.len() - tp)
}
