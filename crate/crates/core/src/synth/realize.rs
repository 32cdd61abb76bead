//! Ground truth evaluated from a scene script: per-frame boxes and the
//! overtakes implied by exact edge/line crossing times.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::behaviour::{BehaviourConfig, OvertakeRecord, Side};
use crate::error::Result;
use crate::detection::{Detection, FrameSpace};
use crate::formats::coco::{CocoAnnotation, CocoFile, CocoImage};
use crate::formats::fused::FusedDetections;
use crate::formats::mot::{tracks_to_mot, MotRecord};
use crate::formats::{AnnotatedObject, FrameAnnotations};
use crate::geometry::{wrap_signed, BoxXYXY};
use crate::tracker::TrackOutput;

use super::scene::{Keyframe, ScriptedObject, SceneScript};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthBundle {
    pub width: u32,
    pub height: u32,
    pub fps: f64,
    /// Every frame of the scene, including empty ones. Boxes are not
    /// split at the seam.
    pub frames: Vec<FrameAnnotations>,
    pub overtakes: Vec<OvertakeRecord>,
}

impl GroundTruthBundle {
    /// All boxes as perfect track outputs.
    pub fn track_outputs(&self) -> Vec<TrackOutput> {
        self.frames
            .iter()
            .flat_map(|f| {
                f.objects.iter().map(move |o| TrackOutput {
                    frame: f.frame,
                    id: o.id,
                    category: o.category,
                    score: 1.0,
                    bbox: o.bbox,
                })
            })
            .collect()
    }

    /// MOT records with seam-straddling boxes split in two.
    pub fn to_mot(&self) -> Vec<MotRecord> {
        tracks_to_mot(&self.track_outputs(), self.width as f64)
    }

    /// One image per frame, one annotation per MOT record.
    pub fn to_coco(&self) -> CocoFile {
        let mut file = CocoFile::with_default_categories();
        for f in &self.frames {
            file.images.push(CocoImage {
                id: f.frame as u64,
                file_name: format!("frame_{:06}.png", f.frame),
                width: self.width,
                height: self.height,
                extra: Default::default(),
            });
        }
        for (k, r) in self.to_mot().iter().enumerate() {
            file.annotations.push(CocoAnnotation {
                id: k as u64 + 1,
                image_id: r.frame as u64,
                category_id: r.category.coco_id(),
                bbox: [r.bbox.x_min, r.bbox.y_min, r.bbox.width(), r.bbox.height()],
                area: Some(r.bbox.area()),
                iscrowd: 0,
                score: None,
                track_id: Some(r.id),
                extra: Default::default(),
            });
        }
        file
    }
}

/// Truth boxes as panorama detections, the way a seam-aware detector on the
/// whole panorama would report them: boxes across the seam become two
/// flagged pieces. Scores and features come from the script.
pub fn panorama_detections(script: &SceneScript, bundle: &GroundTruthBundle) -> Result<FusedDetections> {
    let w = bundle.width as f64;
    let mut out = FusedDetections {
        range: Some((1, script.frames)),
        ..Default::default()
    };
    for f in &bundle.frames {
        let mut dets = Vec::new();
        for o in &f.objects {
            let src = &script.objects[(o.id - 1) as usize];
            let piece = |b: BoxXYXY, wraps: bool| -> Result<Detection> {
                let mut d = Detection::new(b, src.score, o.category, FrameSpace::Panorama)?.with_feature(src.feature.clone());
                d.wraps_seam = wraps;
                Ok(d)
            };
            let b = o.bbox;
            if b.x_max > w {
                dets.push(piece(BoxXYXY { x_max: w, ..b }, true)?);
                dets.push(piece(BoxXYXY { x_min: 0.0, x_max: b.x_max - w, ..b }, true)?);
            } else {
                dets.push(piece(b, false)?);
            }
        }
        out.frames.insert(f.frame, dets);
    }
    Ok(out)
}

pub fn realize(script: &SceneScript) -> Result<GroundTruthBundle> {
    realize_with(script, &BehaviourConfig::default())
}

/// Like [`realize`], with overtake lines and eligibility taken from `cfg`.
pub fn realize_with(script: &SceneScript, cfg: &BehaviourConfig) -> Result<GroundTruthBundle> {
    script.validate()?;
    let pano = script.panorama()?;
    let mut frames = Vec::with_capacity(script.frames as usize);
    for f in 1..=script.frames {
        let objects = script
            .objects
            .iter()
            .enumerate()
            .filter_map(|(i, o)| {
                o.box_at(f as f64).map(|b| AnnotatedObject {
                    id: i as u64 + 1,
                    category: o.category,
                    bbox: b.to_panorama(&pano),
                    visibility: 1.0,
                })
            })
            .collect();
        frames.push(FrameAnnotations { frame: f, objects });
    }
    let mut overtakes = Vec::new();
    for (i, o) in script.objects.iter().enumerate() {
        if cfg.eligible.contains(&o.category) {
            overtakes.extend(object_overtakes(i as u64 + 1, o, cfg));
        }
    }
    overtakes.sort_by_key(|r| (r.end_frame, r.track_id, r.start_frame));
    Ok(GroundTruthBundle {
        width: script.width,
        height: script.height,
        fps: script.fps,
        frames,
        overtakes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Edge {
    Min,
    Max,
}

#[derive(Debug, Clone, Copy)]
struct Crossing {
    t: f64,
    edge: Edge,
    side: Side,
    upward: bool,
    forwards: bool,
}

fn edge_lon(k: &Keyframe, e: Edge) -> f64 {
    match e {
        Edge::Min => k.lon - k.width_deg / 2.0,
        Edge::Max => k.lon + k.width_deg / 2.0,
    }
}

/// Crossings of both box edges over both lines, in time order. An upward
/// crossing goes from below the line to on or above it, a downward one from
/// above to on or below.
fn crossings(o: &ScriptedObject, cfg: &BehaviourConfig) -> Vec<Crossing> {
    let mut out = Vec::new();
    for seg in o.keyframes.windows(2) {
        let (a, b) = (&seg[0], &seg[1]);
        let (ta, tb) = (a.frame as f64, b.frame as f64);
        let v = (b.lon - a.lon) / (tb - ta);
        for (side, line) in [(Side::Left, cfg.left_line_lon), (Side::Right, cfg.right_line_lon)] {
            for edge in [Edge::Min, Edge::Max] {
                let (e0, e1) = (edge_lon(a, edge), edge_lon(b, edge));
                if e0 == e1 {
                    continue;
                }
                let (lo, hi) = (e0.min(e1), e0.max(e1));
                let kmin = ((lo - line) / 360.0).floor() as i64;
                let kmax = ((hi - line) / 360.0).ceil() as i64;
                for k in kmin..=kmax {
                    let c = line + 360.0 * k as f64;
                    let upward = e0 < c && c <= e1;
                    let downward = e0 > c && c >= e1;
                    if !(upward || downward) {
                        continue;
                    }
                    let t = ta + (c - e0) / (e1 - e0) * (tb - ta);
                    let centre = a.lon + v * (t - ta);
                    let offset = wrap_signed(centre - cfg.forward_lon, 360.0);
                    out.push(Crossing {
                        t,
                        edge,
                        side,
                        upward,
                        forwards: offset * v < 0.0,
                    });
                }
            }
        }
    }
    out.sort_by(|x, y| x.t.total_cmp(&y.t));
    out
}

fn object_overtakes(id: u64, o: &ScriptedObject, cfg: &BehaviourConfig) -> Vec<OvertakeRecord> {
    let frame_of = |t: f64| t.ceil() as u32;
    let mut active: Option<(Side, f64)> = None;
    let mut out = Vec::new();
    for c in crossings(o, cfg) {
        let lead = match c.side {
            Side::Left => c.edge == Edge::Max && c.upward,
            Side::Right => c.edge == Edge::Min && !c.upward,
        };
        match active {
            None => {
                if lead && c.forwards {
                    active = Some((c.side, c.t));
                }
            }
            Some((side, start)) if side == c.side => {
                let trail = match side {
                    Side::Left => c.edge == Edge::Min && c.upward,
                    Side::Right => c.edge == Edge::Max && !c.upward,
                };
                let retreat = match side {
                    Side::Left => c.edge == Edge::Max && !c.upward,
                    Side::Right => c.edge == Edge::Min && c.upward,
                };
                if trail {
                    out.push(OvertakeRecord::confirmed(id, side, frame_of(start), frame_of(c.t)));
                    active = None;
                } else if retreat {
                    active = None;
                }
            }
            Some(_) => {}
        }
    }
    out
}

/// Per-object trajectories keyed by object id.
pub fn trajectories(bundle: &GroundTruthBundle) -> BTreeMap<u64, Vec<TrackOutput>> {
    let mut out: BTreeMap<u64, Vec<TrackOutput>> = BTreeMap::new();
    for o in bundle.track_outputs() {
        out.entry(o.id).or_default().push(o);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::behaviour::detect_overtakes;
    use crate::category::Category;

    fn kf(frame: u32, lon: f64) -> Keyframe {
        Keyframe {
            frame,
            lon,
            lat: -10.0,
            width_deg: 10.0,
            height_deg: 6.0,
        }
    }

    fn script(objects: Vec<ScriptedObject>, frames: u32) -> SceneScript {
        SceneScript {
            width: 3600,
            height: 1800,
            frames,
            fps: 30.0,
            seed: 0,
            objects,
        }
    }

    fn obj(cat: Category, kfs: Vec<Keyframe>) -> ScriptedObject {
        ScriptedObject {
            category: cat,
            score: 0.9,
            feature: None,
            keyframes: kfs,
        }
    }

    #[test]
    fn stationary_object() {
        let s = script(vec![obj(Category::Car, vec![kf(1, 20.0), kf(10, 20.0)])], 10);
        let b = realize(&s).unwrap();
        assert_eq!(b.frames.len(), 10);
        let first = b.frames[0].objects[0].bbox;
        assert!(b.frames.iter().all(|f| f.objects[0].bbox == first));
        assert!(b.overtakes.is_empty());
    }

    #[test]
    fn left_pass_crossing_frames() {
        // lon_max = lon + 5 runs from -120 to -55 over frames 1..=41, so it
        // reaches -90 at t = 1 + 30 * 40 / 65; lon_min reaches -90 at
        // t = 1 + 40 * 40 / 65.
        let s = script(vec![obj(Category::Car, vec![kf(1, -125.0), kf(41, -60.0)])], 41);
        let b = realize(&s).unwrap();
        let ts: f64 = 1.0 + 30.0 * 40.0 / 65.0;
        let tc: f64 = 1.0 + 40.0 * 40.0 / 65.0;
        assert_eq!(
            b.overtakes,
            vec![OvertakeRecord::confirmed(1, Side::Left, ts.ceil() as u32, tc.ceil() as u32)]
        );
        let found = detect_overtakes(&b.track_outputs(), 3600.0, &BehaviourConfig::default()).unwrap();
        assert_eq!(found, b.overtakes);
    }

    #[test]
    fn right_pass_and_retreat() {
        let pass = obj(Category::Bus, vec![kf(1, 130.0), kf(60, 50.0)]);
        let retreat = obj(Category::Car, vec![kf(1, 130.0), kf(20, 92.0), kf(40, 130.0)]);
        let person = obj(Category::Person, vec![kf(1, 130.0), kf(60, 50.0)]);
        let s = script(vec![pass, retreat, person], 60);
        let b = realize(&s).unwrap();
        assert_eq!(b.overtakes.len(), 1);
        assert_eq!((b.overtakes[0].track_id, b.overtakes[0].side), (1, Side::Right));
        let found = detect_overtakes(&b.track_outputs(), 3600.0, &BehaviourConfig::default()).unwrap();
        assert_eq!(found, b.overtakes);
    }

    #[test]
    fn seam_crossing_keeps_one_id() {
        let s = script(vec![obj(Category::Car, vec![kf(1, 170.0), kf(20, 200.0)])], 20);
        let b = realize(&s).unwrap();
        let t = trajectories(&b);
        assert_eq!(t.len(), 1);
        assert_eq!(t[&1].len(), 20);
        let mot = b.to_mot();
        assert!(mot.iter().all(|r| r.id == 1));
        assert!(mot.len() > 20);
        assert_eq!(b.to_coco().annotations.len(), mot.len());
    }

    #[test]
    fn realize_is_deterministic() {
        let s = script(vec![obj(Category::Car, vec![kf(1, -125.0), kf(41, -60.0)])], 41);
        assert_eq!(realize(&s).unwrap(), realize(&s).unwrap());
    }
}
