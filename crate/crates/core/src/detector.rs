//! Detector boundary: anything that turns a sub-view into detections.
//!
//! Three sources are provided: pre-computed detections read from a text
//! store, an external process speaking a line protocol, and a perfect
//! detector that projects scripted ground truth into each view.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use image::RgbImage;
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::category::Category;
use crate::detection::{Detection, FrameSpace};
use crate::error::{Error, Result};
use crate::geometry::BoxXYXY;
use crate::projection::{geographic_to_sphere, SphericalDirection, ViewSpec};
use crate::synth::scene::{AngularBox, SceneScript};

/// What a detector sees for one sub-view.
#[derive(Debug, Clone, Copy)]
pub struct ViewRequest<'a> {
    pub frame_index: u32,
    pub view_index: usize,
    pub view: &'a ViewSpec,
    /// Resampled sub-view; `None` when the detector declared it does not
    /// need pixels.
    pub image: Option<&'a RgbImage>,
}

pub trait DetectorPort: Send + Sync {
    fn detect(&self, req: &ViewRequest<'_>) -> Result<Vec<Detection>>;

    /// Whether the pipeline must resample the panorama for this detector.
    fn needs_pixels(&self) -> bool {
        true
    }

    /// Whether `detect` may be called for several views at once.
    fn concurrent(&self) -> bool {
        true
    }
}

/// Detections keyed by `(frame, view)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DetectionStore {
    entries: BTreeMap<(u32, usize), Vec<Detection>>,
    feature_dim: Option<usize>,
}

impl DetectionStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn feature_dim(&self) -> Option<usize> {
        self.feature_dim
    }

    pub fn is_empty(&self) -> bool {
        self.entries.values().all(|v| v.is_empty())
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }

    pub fn insert(&mut self, frame: u32, view: usize, det: Detection) -> Result<()> {
        det.validate()?;
        if let Some(f) = &det.feature {
            match self.feature_dim {
                Some(d) if d != f.len() => {
                    return Err(Error::invalid(format!(
                        "feature dimension {} differs from store dimension {d}",
                        f.len()
                    )))
                }
                _ => self.feature_dim = Some(f.len()),
            }
        }
        self.entries.entry((frame, view)).or_default().push(det);
        Ok(())
    }

    pub fn get(&self, frame: u32, view: usize) -> &[Detection] {
        self.entries.get(&(frame, view)).map_or(&[], Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(u32, usize), &Vec<Detection>)> {
        self.entries.iter()
    }

    pub fn frames(&self) -> impl Iterator<Item = u32> + '_ {
        let mut last = None;
        self.entries.keys().filter_map(move |&(f, _)| {
            if last == Some(f) {
                return None;
            }
            last = Some(f);
            Some(f)
        })
    }

    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let mut store = DetectionStore::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |m: String| Error::parse(source_name, i + 1, m);
            let cols: Vec<&str> = line.split_whitespace().collect();
            if cols.len() < 8 {
                return Err(err(format!("expected at least 8 columns, found {}", cols.len())));
            }
            let frame: u32 = cols[0].parse().map_err(|_| err(format!("bad frame `{}`", cols[0])))?;
            let view: usize = cols[1].parse().map_err(|_| err(format!("bad view `{}`", cols[1])))?;
            let category: Category = cols[2].parse().map_err(|e: Error| err(e.to_string()))?;
            let nums = parse_floats(&cols[3..8]).map_err(err)?;
            let feature = if cols.len() > 8 {
                Some(
                    cols[8..]
                        .iter()
                        .map(|c| c.parse::<f32>().map_err(|_| format!("bad feature value `{c}`")))
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(err)?,
                )
            } else {
                None
            };
            let bbox = BoxXYXY::new(nums[1], nums[2], nums[3], nums[4]).map_err(|e| err(e.to_string()))?;
            let det = Detection::new(bbox, nums[0], category, FrameSpace::View(view))
                .map_err(|e| err(e.to_string()))?
                .with_feature(feature);
            store.insert(frame, view, det).map_err(|e| err(e.to_string()))?;
        }
        Ok(store)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (&(frame, view), dets) in &self.entries {
            for d in dets {
                let b = &d.bbox;
                let _ = write!(
                    out,
                    "{frame} {view} {} {} {} {} {} {}",
                    d.category, d.score, b.x_min, b.y_min, b.x_max, b.y_max
                );
                for v in d.feature.iter().flatten() {
                    let _ = write!(out, " {v}");
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

pub(crate) fn parse_floats(cols: &[&str]) -> std::result::Result<Vec<f64>, String> {
    cols.iter()
        .map(|c| c.parse::<f64>().map_err(|_| format!("bad number `{c}`")))
        .collect()
}

/// Serves detections from a [`DetectionStore`].
#[derive(Debug, Clone)]
pub struct StoreDetector {
    store: DetectionStore,
}

impl StoreDetector {
    pub fn new(store: DetectionStore) -> Self {
        StoreDetector { store }
    }
}

impl DetectorPort for StoreDetector {
    fn detect(&self, req: &ViewRequest<'_>) -> Result<Vec<Detection>> {
        Ok(self.store.get(req.frame_index, req.view_index).to_vec())
    }

    fn needs_pixels(&self) -> bool {
        false
    }
}

/// Runs a command per view. The sub-view is written to a temporary PNG
/// whose path is appended as the last argument; stdout must carry one
/// `category score x_min y_min x_max y_max` line per detection.
#[derive(Debug, Clone)]
pub struct ExternalDetector {
    program: String,
    args: Vec<String>,
    timeout: Duration,
}

impl ExternalDetector {
    pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

    /// `template` is split on whitespace: program followed by fixed arguments.
    pub fn new(template: &str) -> Result<Self> {
        let mut parts = template.split_whitespace().map(str::to_string);
        let program = parts
            .next()
            .ok_or_else(|| Error::Config("empty detector command".into()))?;
        Ok(ExternalDetector {
            program,
            args: parts.collect(),
            timeout: Self::DEFAULT_TIMEOUT,
        })
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    fn run(&self, image_path: &Path, view: usize) -> Result<String> {
        let fail = |message: String| Error::Detector {
            view: Some(view),
            message,
        };
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .arg(image_path)
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| fail(format!("cannot start `{}`: {e}", self.program)))?;

        let mut stdout = child.stdout.take().expect("piped stdout");
        let mut stderr = child.stderr.take().expect("piped stderr");
        let out_reader = std::thread::spawn(move || {
            let mut s = String::new();
            stdout.read_to_string(&mut s).map(|_| s)
        });
        let err_reader = std::thread::spawn(move || {
            let mut s = String::new();
            let _ = stderr.read_to_string(&mut s);
            s
        });

        let start = Instant::now();
        let status = loop {
            match child.try_wait().map_err(|e| fail(e.to_string()))? {
                Some(status) => break status,
                None if start.elapsed() >= self.timeout => {
                    let _ = child.kill();
                    let _ = child.wait();
                    return Err(fail(format!("timed out after {:?}", self.timeout)));
                }
                None => std::thread::sleep(Duration::from_millis(5)),
            }
        };
        let stdout = out_reader
            .join()
            .map_err(|_| fail("stdout reader panicked".into()))?
            .map_err(|e| fail(format!("reading stdout: {e}")))?;
        let stderr = err_reader.join().unwrap_or_default();
        if !status.success() {
            return Err(fail(format!("exited with {status}: {}", stderr.trim())));
        }
        Ok(stdout)
    }
}

impl DetectorPort for ExternalDetector {
    fn detect(&self, req: &ViewRequest<'_>) -> Result<Vec<Detection>> {
        let image = req.image.ok_or_else(|| Error::Detector {
            view: Some(req.view_index),
            message: "external detector needs the sub-view image".into(),
        })?;
        let file = tempfile::Builder::new()
            .prefix("panotrack-view-")
            .suffix(".png")
            .tempfile()
            .map_err(|e| Error::io(std::env::temp_dir(), e))?;
        image.save_with_format(file.path(), image::ImageFormat::Png)?;
        let stdout = self.run(file.path(), req.view_index)?;
        parse_detector_output(&stdout, req.view_index)
    }
}

fn parse_detector_output(stdout: &str, view: usize) -> Result<Vec<Detection>> {
    let source = format!("detector output (view {view})");
    let mut dets = Vec::new();
    for (i, line) in stdout.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let err = |m: String| Error::parse(&source, i + 1, m);
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() != 6 {
            return Err(err(format!("expected 6 columns, found {}", cols.len())));
        }
        let category: Category = cols[0].parse().map_err(|e: Error| err(e.to_string()))?;
        let n = parse_floats(&cols[1..]).map_err(err)?;
        let bbox = BoxXYXY::new(n[1], n[2], n[3], n[4]).map_err(|e| err(e.to_string()))?;
        dets.push(Detection::new(bbox, n[0], category, FrameSpace::View(view)).map_err(|e| err(e.to_string()))?);
    }
    Ok(dets)
}

/// One ground-truth object as the perfect detector sees it.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthObject {
    pub id: u64,
    pub category: Category,
    pub angular: AngularBox,
    pub score: f64,
    pub feature: Option<Vec<f32>>,
}

/// Projects scripted objects into each view and reports the clipped
/// bounding rectangle, optionally jittered and randomly dropped.
#[derive(Debug, Clone)]
pub struct PerfectDetector {
    frames: BTreeMap<u32, Vec<TruthObject>>,
    jitter_sigma: f64,
    drop_prob: f64,
    seed: u64,
    /// Score lost at the view edge relative to the view centre.
    edge_score_falloff: f64,
}

impl PerfectDetector {
    pub fn new(frames: BTreeMap<u32, Vec<TruthObject>>, seed: u64) -> Self {
        PerfectDetector {
            frames,
            jitter_sigma: 0.0,
            drop_prob: 0.0,
            seed,
            edge_score_falloff: 0.2,
        }
    }

    pub fn from_scene(script: &SceneScript) -> Self {
        let mut frames: BTreeMap<u32, Vec<TruthObject>> = BTreeMap::new();
        for f in 1..=script.frames {
            let objs = script
                .objects
                .iter()
                .enumerate()
                .filter_map(|(i, o)| {
                    o.box_at(f as f64).map(|angular| TruthObject {
                        id: i as u64 + 1,
                        category: o.category,
                        angular,
                        score: o.score,
                        feature: o.feature.clone(),
                    })
                })
                .collect();
            frames.insert(f, objs);
        }
        Self::new(frames, script.seed)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_jitter(mut self, sigma: f64) -> Self {
        self.jitter_sigma = sigma.max(0.0);
        self
    }

    pub fn with_drop_probability(mut self, p: f64) -> Self {
        self.drop_prob = p.clamp(0.0, 1.0);
        self
    }

    pub fn with_edge_score_falloff(mut self, falloff: f64) -> Self {
        self.edge_score_falloff = falloff.clamp(0.0, 1.0);
        self
    }

    pub fn objects(&self, frame: u32) -> &[TruthObject] {
        self.frames.get(&frame).map_or(&[], Vec::as_slice)
    }

    fn rng(&self, frame: u32, view: usize) -> ChaCha8Rng {
        let mut seed = [0u8; 32];
        seed[..8].copy_from_slice(&self.seed.to_le_bytes());
        seed[8..12].copy_from_slice(&frame.to_le_bytes());
        seed[12..20].copy_from_slice(&(view as u64).to_le_bytes());
        ChaCha8Rng::from_seed(seed)
    }
}

/// Noise-free sub-view rectangle of an angular box, clipped to the view.
/// `None` when no part of the object is inside the view.
pub fn project_angular_box(b: &AngularBox, view: &ViewSpec) -> Option<BoxXYXY> {
    let (w, h) = (view.out_width() as f64, view.out_height() as f64);
    let rt = view.rotation().transpose();
    let t = view.tan_half_fov();
    let project = |lon: f64, lat: f64| -> (f64, f64, bool) {
        let d = geographic_to_sphere(&SphericalDirection::new(lon, lat.clamp(-90.0, 90.0)).expect("finite"));
        let l: Vector3<f64> = rt * Vector3::new(d.x(), d.y(), d.z());
        let front = l.z > 1e-9;
        let z = l.z.max(1e-6);
        let (u, v) = (t + l.x / z, t - l.y / z);
        (u * w / (2.0 * t), v * h / (2.0 * t), front)
    };

    let dlon = b.lon_max - b.lon_min;
    let dlat = b.lat_max - b.lat_min;
    let n_lon = ((dlon / 0.05).ceil() as usize).clamp(8, 8000);
    let n_lat = ((dlat / 0.05).ceil() as usize).clamp(8, 8000);
    let mut pts = Vec::with_capacity(2 * (n_lon + n_lat) + 4);
    for i in 0..=n_lon {
        let lon = b.lon_min + dlon * i as f64 / n_lon as f64;
        pts.push(project(lon, b.lat_min));
        pts.push(project(lon, b.lat_max));
    }
    for j in 0..=n_lat {
        let lat = b.lat_min + dlat * j as f64 / n_lat as f64;
        pts.push(project(b.lon_min, lat));
        pts.push(project(b.lon_max, lat));
    }

    let axis_inside = b.contains(view.theta_c(), view.phi_c());
    let any_inside = pts
        .iter()
        .any(|&(x, y, front)| front && (0.0..=w).contains(&x) && (0.0..=h).contains(&y));
    if !any_inside && !axis_inside {
        return None;
    }
    let mbr = BoxXYXY::from_points(
        pts.iter()
            .filter(|p| p.2)
            .map(|&(x, y, _)| (x, y))
            .chain(pts.iter().filter(|p| !p.2).map(|&(x, y, _)| (x, y))),
    )?
    .clipped(w, h);
    (mbr.width() > 0.0 && mbr.height() > 0.0).then_some(mbr)
}

impl DetectorPort for PerfectDetector {
    fn detect(&self, req: &ViewRequest<'_>) -> Result<Vec<Detection>> {
        let view = req.view;
        let (w, h) = (view.out_width() as f64, view.out_height() as f64);
        let mut rng = self.rng(req.frame_index, req.view_index);
        let noise = Normal::new(0.0, self.jitter_sigma.max(f64::MIN_POSITIVE)).expect("valid sigma");
        let mut out = Vec::new();
        for obj in self.objects(req.frame_index) {
            let Some(mut b) = project_angular_box(&obj.angular, view) else {
                continue;
            };
            // Draw unconditionally so the stream does not depend on visibility order.
            let dropped = rng.random::<f64>() < self.drop_prob;
            if self.jitter_sigma > 0.0 {
                let mut j = |v: f64| v + noise.sample(&mut rng);
                b = BoxXYXY {
                    x_min: j(b.x_min),
                    y_min: j(b.y_min),
                    x_max: j(b.x_max),
                    y_max: j(b.y_max),
                }
                .clipped(w, h);
                if b.width() <= 0.0 || b.height() <= 0.0 {
                    continue;
                }
            }
            if dropped {
                continue;
            }
            let az = view.column_angle((b.x_min + b.x_max) / 2.0);
            let score = obj.score * (1.0 - self.edge_score_falloff * (az.abs() / (view.fov() / 2.0)).min(1.0));
            let det = Detection::new(b, score.clamp(0.0, 1.0), obj.category, FrameSpace::View(req.view_index))?
                .with_feature(obj.feature.clone());
            out.push(det);
        }
        Ok(out)
    }

    fn needs_pixels(&self) -> bool {
        false
    }
}
