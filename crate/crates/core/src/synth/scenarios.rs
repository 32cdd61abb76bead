//! Ready-made scene scripts used by the tests, the benches and `synth`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::category::Category;
use crate::projection::PanoramaGeometry;
use crate::synth::scene::{AngularBox, Keyframe, SceneScript, ScriptedObject};
use crate::tracker::TrackOutput;

pub const DEFAULT_WIDTH: u32 = 3840;
pub const DEFAULT_HEIGHT: u32 = 1920;
pub const FEATURE_DIM: usize = 32;

pub fn kf(frame: u32, lon: f64, lat: f64, width_deg: f64, height_deg: f64) -> Keyframe {
    Keyframe {
        frame,
        lon,
        lat,
        width_deg,
        height_deg,
    }
}

pub fn object(category: Category, feature: Option<Vec<f32>>, keyframes: Vec<Keyframe>) -> ScriptedObject {
    ScriptedObject {
        category,
        score: 0.9,
        feature,
        keyframes,
    }
}

fn script(frames: u32, seed: u64, objects: Vec<ScriptedObject>) -> SceneScript {
    SceneScript {
        width: DEFAULT_WIDTH,
        height: DEFAULT_HEIGHT,
        frames,
        fps: 30.0,
        seed,
        objects,
    }
}

/// Same scene on a different raster; trajectories are angular so nothing
/// else changes.
pub fn resized(script: &SceneScript, width: u32, height: u32) -> SceneScript {
    SceneScript {
        width,
        height,
        ..script.clone()
    }
}

pub fn random_feature(rng: &mut impl Rng, dim: usize) -> Vec<f32> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn overlaps(a: &AngularBox, b: &AngularBox, margin: f64) -> bool {
    let d = crate::geometry::wrap_signed(a.centre().0 - b.centre().0, 360.0).abs();
    let half_w = (a.lon_max - a.lon_min + b.lon_max - b.lon_min) / 2.0;
    let lat_sep = !(a.lat_max + margin <= b.lat_min || b.lat_max + margin <= a.lat_min);
    d < half_w + margin && lat_sep
}

/// One frame with several small objects and one long object that spans a
/// view boundary. Every box lies inside latitudes `[-70, 50]` and no two
/// boxes come within 5 degrees of each other.
pub fn fusion_scene(seed: u64) -> SceneScript {
    let mut rng = rng(seed);
    let mut boxes: Vec<(Category, AngularBox)> = Vec::new();
    let k = rng.random_range(0..4) as f64;
    let long_w = rng.random_range(30.0..60.0);
    let long_h = rng.random_range(8.0..20.0);
    let long_lon = 45.0 + 90.0 * k + rng.random_range(-10.0..10.0);
    let long_lat = rng.random_range(-25.0..5.0);
    boxes.push((Category::Bus, AngularBox::from_centre(long_lon, long_lat, long_w, long_h)));
    let cats = [Category::Person, Category::Bicycle, Category::Car, Category::Motorbike, Category::Truck];
    let mut attempts = 0;
    while boxes.len() < 7 && attempts < 10_000 {
        attempts += 1;
        let w = rng.random_range(3.0..10.0);
        let h = rng.random_range(3.0..10.0);
        let lat = rng.random_range(-70.0 + h / 2.0..50.0 - h / 2.0);
        let lon = rng.random_range(-180.0..180.0);
        let b = AngularBox::from_centre(lon, lat, w, h);
        if boxes.iter().all(|(_, o)| !overlaps(&b, o, 5.0)) {
            boxes.push((cats[rng.random_range(0..cats.len())], b));
        }
    }
    let objects = boxes
        .into_iter()
        .map(|(c, b)| {
            let (lon, lat) = b.centre();
            object(c, None, vec![kf(1, lon, lat, b.lon_max - b.lon_min, b.lat_max - b.lat_min)])
        })
        .collect();
    script(1, seed, objects)
}

/// A pedestrian leaves and a cyclist appears right where it was, with no
/// appearance features to tell them apart.
pub fn category_swap_scene() -> SceneScript {
    script(
        60,
        0,
        vec![
            object(
                Category::Person,
                None,
                vec![kf(1, -20.0, -12.0, 2.5, 6.0), kf(30, -17.0, -12.0, 2.5, 6.0)],
            ),
            object(
                Category::Bicycle,
                None,
                vec![kf(31, -17.0, -12.0, 4.0, 5.0), kf(60, -12.0, -12.0, 4.0, 5.0)],
            ),
        ],
    )
}

/// A car driving across the seam behind the camera.
pub fn seam_crossing_scene() -> SceneScript {
    let mut r = rng(6);
    script(
        90,
        6,
        vec![object(
            Category::Car,
            Some(random_feature(&mut r, FEATURE_DIM)),
            vec![kf(1, 150.0, -10.0, 8.0, 5.0), kf(90, 210.0, -10.0, 8.0, 5.0)],
        )],
    )
}

/// 200 frames, 10 objects, one per 36-degree sector, with distinct
/// features. The object in the sector behind the camera crosses the seam.
pub fn mot_scene(seed: u64) -> SceneScript {
    let mut rng = rng(seed);
    let frames = 200;
    let objects = (0..10)
        .map(|i| {
            let cat = Category::ALL[i % Category::ALL.len()];
            let centre = 36.0 * i as f64;
            let w = rng.random_range(4.0..8.0);
            let h = rng.random_range(4.0..8.0);
            let lat = -10.0 + rng.random_range(-4.0..4.0);
            let start = if i == 5 { 1 } else { rng.random_range(1..40) };
            let end = if i == 5 { frames } else { rng.random_range(160..=frames) };
            let mid = (start + end) / 2;
            let (a, b) = if i == 5 {
                (centre - 10.0, centre + 10.0)
            } else {
                let d = rng.random_range(-10.0..10.0);
                (centre - d, centre + d)
            };
            let bend = centre + rng.random_range(-3.0..3.0);
            object(
                cat,
                Some(random_feature(&mut rng, FEATURE_DIM)),
                vec![kf(start, a, lat, w, h), kf(mid, bend, lat, w, h), kf(end, b, lat, w, h)],
            )
        })
        .collect();
    script(frames, seed, objects)
}

/// Kinds of manoeuvre in [`overtake_suite`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Manoeuvre {
    Completed,
    Failed,
    Ineligible,
}

/// Scripted overtakes: 20 completed (10 per side), 5 failed (the leading
/// edge crosses the line, then the vehicle falls back) and 5 by ineligible
/// categories. Each side is a lane used by one manoeuvre at a time.
/// Returns the script and the kind of each object.
pub fn overtake_suite(seed: u64) -> (SceneScript, Vec<Manoeuvre>) {
    let mut rng = rng(seed);
    let mut plan: Vec<(Manoeuvre, bool)> = Vec::new();
    for i in 0..10 {
        plan.push((Manoeuvre::Completed, true));
        plan.push((Manoeuvre::Completed, false));
        if i < 5 {
            plan.push((Manoeuvre::Failed, i % 2 == 0));
            plan.push((Manoeuvre::Ineligible, i % 2 == 1));
        }
    }
    let vehicles = [Category::Car, Category::Bus, Category::Truck, Category::Motorbike];
    let mut lane_free = [1u32, 1u32];
    let mut objects = Vec::new();
    let mut kinds = Vec::new();
    for (kind, left) in plan {
        let lane = usize::from(!left);
        let sign = if left { -1.0 } else { 1.0 };
        let w = rng.random_range(15.0..25.0);
        let h = rng.random_range(6.0..12.0);
        let lat = -10.0;
        let speed: f64 = rng.random_range(0.5..0.9);
        let start = lane_free[lane];
        let (category, keyframes) = match kind {
            Manoeuvre::Completed | Manoeuvre::Ineligible => {
                let dur = (80.0 / speed).ceil() as u32;
                let cat = if kind == Manoeuvre::Completed {
                    vehicles[rng.random_range(0..vehicles.len())]
                } else if rng.random_bool(0.5) {
                    Category::Person
                } else {
                    Category::Bicycle
                };
                (
                    cat,
                    vec![
                        kf(start, sign * 130.0, lat, w, h),
                        kf(start + dur, sign * 50.0, lat, w, h),
                    ],
                )
            }
            Manoeuvre::Failed => {
                let dur = (40.0 / speed).ceil() as u32;
                (
                    vehicles[rng.random_range(0..vehicles.len())],
                    vec![
                        kf(start, sign * 130.0, lat, w, h),
                        kf(start + dur, sign * 90.0, lat, w, h),
                        kf(start + 2 * dur, sign * 130.0, lat, w, h),
                    ],
                )
            }
        };
        lane_free[lane] = keyframes.last().expect("keyframes").frame + 5;
        objects.push(object(category, Some(random_feature(&mut rng, FEATURE_DIM)), keyframes));
        kinds.push(kind);
    }
    let frames = lane_free[0].max(lane_free[1]);
    (script(frames, seed, objects), kinds)
}

/// Short tracks that creep forward for five frames on the left side and
/// then jump across the line within one frame, so each produces an overtake
/// lasting a single frame. Ids start at `first_id`; tracks start at
/// `first_frame` and follow one another.
pub fn ghost_tracks(first_id: u64, first_frame: u32, count: usize, width: u32, height: u32) -> Vec<TrackOutput> {
    let pano = PanoramaGeometry::new(width, height).expect("valid panorama size");
    let mut out = Vec::new();
    for g in 0..count {
        let id = first_id + g as u64;
        let f0 = first_frame + 10 * g as u32;
        let lons = [-130.0, -129.0, -128.0, -127.0, -126.0, -88.0, -50.0];
        for (k, lon) in lons.into_iter().enumerate() {
            let b = AngularBox::from_centre(lon, -10.0, 10.0, 6.0).to_panorama(&pano);
            out.push(TrackOutput {
                frame: f0 + k as u32,
                id,
                category: Category::Car,
                score: 1.0,
                bbox: b,
            });
        }
    }
    out
}

/// Two overtakes on the left and one on the right, one after another.
pub fn three_overtake_scene() -> SceneScript {
    let mut r = rng(3);
    let mut f = || Some(random_feature(&mut r, FEATURE_DIM));
    script(
        200,
        3,
        vec![
            object(Category::Car, f(), vec![kf(1, -130.0, -10.0, 16.0, 8.0), kf(60, -50.0, -10.0, 16.0, 8.0)]),
            object(Category::Truck, f(), vec![kf(70, -130.0, -8.0, 20.0, 10.0), kf(130, -50.0, -8.0, 20.0, 10.0)]),
            object(Category::Bus, f(), vec![kf(130, 130.0, -9.0, 22.0, 12.0), kf(200, 50.0, -9.0, 22.0, 12.0)]),
        ],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::behaviour::{detect_overtakes, BehaviourConfig, OvertakeState};
    use crate::synth::realize::realize;

    #[test]
    fn generated_scripts_validate() {
        for s in [
            fusion_scene(1),
            category_swap_scene(),
            seam_crossing_scene(),
            mot_scene(2),
            overtake_suite(3).0,
            three_overtake_scene(),
        ] {
            s.validate().unwrap();
        }
    }

    #[test]
    fn fusion_scene_layout() {
        for seed in 0..20 {
            let s = fusion_scene(seed);
            assert_eq!(s.objects.len(), 7, "seed {seed}");
            for o in &s.objects {
                let b = o.box_at(1.0).unwrap();
                assert!(b.lat_min >= -70.0 && b.lat_max <= 50.0);
            }
        }
        assert_eq!(fusion_scene(4), fusion_scene(4));
    }

    #[test]
    fn overtake_suite_truth_counts() {
        let (s, kinds) = overtake_suite(11);
        assert_eq!(kinds.iter().filter(|k| **k == Manoeuvre::Completed).count(), 20);
        let truth = realize(&s).unwrap();
        assert_eq!(truth.overtakes.len(), 20);
        for r in &truth.overtakes {
            assert_eq!(kinds[(r.track_id - 1) as usize], Manoeuvre::Completed);
            assert!(r.duration_frames() >= 15);
        }
    }

    #[test]
    fn ghosts_are_one_frame_overtakes() {
        let g = ghost_tracks(100, 1, 3, DEFAULT_WIDTH, DEFAULT_HEIGHT);
        let found = detect_overtakes(&g, DEFAULT_WIDTH as f64, &BehaviourConfig::default()).unwrap();
        assert_eq!(found.len(), 3);
        assert!(found.iter().all(|r| r.state == OvertakeState::Confirmed && r.duration_frames() == 1));
    }

    #[test]
    fn three_overtakes_in_truth() {
        assert_eq!(realize(&three_overtake_scene()).unwrap().overtakes.len(), 3);
    }

    #[test]
    fn mot_scene_has_a_seam_crosser() {
        let s = mot_scene(9);
        let b = realize(&s).unwrap();
        let w = s.width as f64;
        assert!(b.frames.iter().any(|f| f.objects.iter().any(|o| o.bbox.x_max > w)));
        assert_eq!(b.frames.len(), 200);
    }
}
