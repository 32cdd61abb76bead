//! Batch pipeline: fuse detections, track, find overtakes, evaluate and
//! report. Every stage reads and writes files so that any stage can be
//! re-run on its own from the previous stage's output.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use image::{Rgb, RgbImage};
use log::{debug, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::behaviour::{detect_overtakes, overtake_frames, score_overtakes, BehaviourConfig, OvertakeRecord, OvertakeScore};
use crate::detector::{DetectionStore, DetectorPort, ExternalDetector, PerfectDetector, StoreDetector};
use crate::error::{Error, Result};
use crate::formats::coco::{parse_coco_results, CocoFile, CocoResult};
use crate::formats::{mot_to_tracks, read_mot, read_overtakes, tracks_to_mot, write_mot, write_overtakes, FusedDetections, MotRecord};
use crate::fusion::{FusionConfig, Fuser};
use crate::metrics::ap::{coco_predictions, coco_truth};
use crate::metrics::{compute_ap, compute_mot_metrics, dataset_report, ApConfig, ApReport, DatasetReport, MotConfig, MotReport};
use crate::projection::PanoramaGeometry;
use crate::synth::realize::{panorama_detections, realize_with};
use crate::synth::render::render_all;
use crate::synth::scenarios;
use crate::synth::scene::SceneScript;
use crate::tracker::{AssociationEvent, TrackOutput, Tracker, TrackerConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PanoramaSize {
    pub width: u32,
    pub height: u32,
}

impl Default for PanoramaSize {
    fn default() -> Self {
        PanoramaSize {
            width: 3840,
            height: 1920,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorSource {
    /// Per-view detections read from `detector.store`.
    #[default]
    Store,
    /// `detector.command` run once per sub-view image.
    External,
    /// Ground truth from `paths.scene`, projected into each view.
    Perfect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    pub source: DetectorSource,
    pub store: Option<PathBuf>,
    pub command: Option<String>,
    pub timeout_secs: f64,
    /// Perfect detector only: Gaussian box jitter in sub-view pixels.
    pub jitter: f64,
    /// Perfect detector only.
    pub drop_probability: f64,
    pub seed: u64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            source: DetectorSource::Store,
            store: None,
            command: None,
            timeout_secs: 60.0,
            jitter: 0.0,
            drop_probability: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Directory of panorama PNG frames; the n-th file in name order is
    /// frame n.
    pub frames: Option<PathBuf>,
    /// Scene script read by the perfect detector.
    pub scene: Option<PathBuf>,
    pub detections: PathBuf,
    pub tracks: PathBuf,
    pub overtakes: PathBuf,
    pub overlay: PathBuf,
    pub truth_tracks: Option<PathBuf>,
    pub truth_overtakes: Option<PathBuf>,
    pub truth_coco: Option<PathBuf>,
    /// Detection results scored against `truth_coco`; when unset the
    /// fused detections file is scored, with frame numbers as image ids.
    pub coco_results: Option<PathBuf>,
    /// Directory for evaluation and report tables.
    pub reports: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            frames: None,
            scene: None,
            detections: "detections.txt".into(),
            tracks: "tracks.txt".into(),
            overtakes: "overtakes.txt".into(),
            overlay: "overlay".into(),
            truth_tracks: None,
            truth_overtakes: None,
            truth_coco: None,
            coco_results: None,
            reports: "reports".into(),
        }
    }
}

/// Inclusive frame range; open ends are unbounded.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrameRange {
    pub first: Option<u32>,
    pub last: Option<u32>,
}

impl FrameRange {
    pub fn contains(&self, f: u32) -> bool {
        self.first.is_none_or(|a| f >= a) && self.last.is_none_or(|b| f <= b)
    }
}

impl std::str::FromStr for FrameRange {
    type Err = Error;

    /// `A:B`, `A:` or `:B`.
    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s
            .split_once(':')
            .ok_or_else(|| Error::invalid(format!("frame range `{s}` is not of the form A:B")))?;
        let num = |t: &str| -> Result<Option<u32>> {
            if t.is_empty() {
                Ok(None)
            } else {
                t.parse().map(Some).map_err(|_| Error::invalid(format!("bad frame number `{t}`")))
            }
        };
        Ok(FrameRange {
            first: num(a)?,
            last: num(b)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub mot: MotConfig,
    pub ap: ApConfig,
    /// Slack in frames when matching predicted and true overtakes.
    pub overtake_tolerance: u32,
    /// Heat-map cell size of the dataset report, pixels.
    pub report_cell: u32,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            mot: MotConfig::default(),
            ap: ApConfig::default(),
            overtake_tolerance: 1,
            report_cell: 64,
        }
    }
}

/// Everything the pipeline needs. `tracker.pano_width` and
/// `eval.mot.pano_width` follow `panorama.width`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub panorama: PanoramaSize,
    pub frames: FrameRange,
    /// Write annotated copies of the frames in `overtakes`.
    pub overlay: bool,
    pub paths: PathsConfig,
    pub detector: DetectorConfig,
    pub fusion: FusionConfig,
    pub tracker: TrackerConfig,
    pub behaviour: BehaviourConfig,
    pub eval: EvalConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Fuse,
    Track,
    Overtakes,
    Eval,
    Report,
}

fn require(path: &Path, what: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, format!("{what} not found")),
        ))
    }
}

fn require_opt<'a>(path: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    let p = path
        .as_deref()
        .ok_or_else(|| Error::Config(format!("{what} path is not set")))?;
    require(p, what)?;
    Ok(p)
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str, source_name: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| Error::Schema {
            context: source_name.to_string(),
            message: e.to_string(),
        })?;
        let cfg: PipelineConfig = serde_path_to_error::deserialize(de).map_err(|e| Error::Schema {
            context: format!("{source_name}: {}", e.path()),
            message: e.inner().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Value checks that do not touch the file system.
    pub fn validate(&self) -> Result<()> {
        PanoramaGeometry::new(self.panorama.width, self.panorama.height)?;
        self.fusion.validate()?;
        self.tracker_config().validate()?;
        self.behaviour.validate()?;
        if !(self.eval.mot.iou_threshold > 0.0 && self.eval.mot.iou_threshold <= 1.0) {
            return Err(Error::Config("eval.mot.iou_threshold must lie in (0, 1]".into()));
        }
        if self.eval.report_cell == 0 {
            return Err(Error::Config("eval.report_cell must be positive".into()));
        }
        if !(self.detector.timeout_secs > 0.0 && self.detector.jitter >= 0.0) {
            return Err(Error::Config("detector timeout must be positive and jitter non-negative".into()));
        }
        Ok(())
    }

    /// Checks that the inputs a stage reads are configured and exist.
    pub fn check_inputs(&self, stage: Stage) -> Result<()> {
        self.validate()?;
        match stage {
            Stage::Fuse => {
                if let Some(dir) = &self.paths.frames {
                    require(dir, "frames directory")?;
                }
                match self.detector.source {
                    DetectorSource::Store => {
                        require_opt(&self.detector.store, "detector store")?;
                    }
                    DetectorSource::External => {
                        if self.detector.command.as_deref().is_none_or(|c| c.trim().is_empty()) {
                            return Err(Error::Config("detector.command is required for the external detector".into()));
                        }
                        require_opt(&self.paths.frames, "frames directory")?;
                    }
                    DetectorSource::Perfect => {
                        require_opt(&self.paths.scene, "scene script")?;
                    }
                }
            }
            Stage::Track => require(&self.paths.detections, "detections file")?,
            Stage::Overtakes => {
                require(&self.paths.tracks, "tracks file")?;
                if self.overlay {
                    require_opt(&self.paths.frames, "frames directory")?;
                }
            }
            Stage::Eval => {
                if self.paths.truth_tracks.is_none() && self.paths.truth_overtakes.is_none() && self.paths.truth_coco.is_none() {
                    return Err(Error::Config("no ground truth configured".into()));
                }
                if self.paths.truth_tracks.is_some() {
                    require_opt(&self.paths.truth_tracks, "truth tracks")?;
                    require(&self.paths.tracks, "tracks file")?;
                }
                if self.paths.truth_overtakes.is_some() {
                    require_opt(&self.paths.truth_overtakes, "truth overtakes")?;
                    require(&self.paths.overtakes, "overtakes file")?;
                }
                if self.paths.truth_coco.is_some() {
                    require_opt(&self.paths.truth_coco, "truth annotations")?;
                    match &self.paths.coco_results {
                        Some(p) => require(p, "detection results")?,
                        None => require(&self.paths.detections, "detections file")?,
                    }
                }
            }
            Stage::Report => {
                let p = self.paths.truth_tracks.as_ref().unwrap_or(&self.paths.tracks);
                require(p, "tracks file")?;
            }
        }
        Ok(())
    }

    pub fn tracker_config(&self) -> TrackerConfig {
        TrackerConfig {
            pano_width: self.panorama.width as f64,
            ..self.tracker.clone()
        }
    }

    pub fn mot_config(&self) -> MotConfig {
        MotConfig {
            pano_width: Some(self.panorama.width as f64),
            ..self.eval.mot.clone()
        }
    }

    pub fn panorama_geometry(&self) -> Result<PanoramaGeometry> {
        PanoramaGeometry::new(self.panorama.width, self.panorama.height)
    }
}

/// PNG files of a directory in name order.
pub fn list_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    files.sort();
    Ok(files)
}

fn load_frame(path: &Path) -> Result<RgbImage> {
    Ok(image::open(path)
        .map_err(|e| Error::Schema {
            context: path.display().to_string(),
            message: e.to_string(),
        })?
        .to_rgb8())
}

fn frame_path(files: &[PathBuf], frame: u32) -> Result<&Path> {
    frame
        .checked_sub(1)
        .and_then(|i| files.get(i as usize))
        .map(PathBuf::as_path)
        .ok_or_else(|| Error::invalid(format!("no image for frame {frame}")))
}

/// Fuses the given frames in parallel. `frame_image` supplies pixels when
/// the detector needs them.
pub fn fuse_sequence(
    fuser: &Fuser,
    detector: &dyn DetectorPort,
    frames: &[u32],
    frame_image: &(dyn Fn(u32) -> Result<RgbImage> + Sync),
) -> Result<(FusedDetections, Vec<Duration>)> {
    let results: Vec<(u32, Vec<crate::Detection>, Duration)> = frames
        .par_iter()
        .map(|&f| {
            let t0 = Instant::now();
            let img = if detector.needs_pixels() { Some(frame_image(f)?) } else { None };
            let dets = fuser.fuse_frame(f, img.as_ref(), detector)?;
            let dt = t0.elapsed();
            debug!("frame {f}: {} detections in {:.1} ms", dets.len(), dt.as_secs_f64() * 1e3);
            Ok((f, dets, dt))
        })
        .collect::<Result<_>>()?;
    let mut out = FusedDetections {
        range: frames.first().zip(frames.last()).map(|(a, b)| (*a, *b)),
        ..Default::default()
    };
    let mut times = Vec::with_capacity(results.len());
    for (f, dets, dt) in results {
        out.frames.insert(f, dets);
        times.push(dt);
    }
    Ok((out, times))
}

/// Perfect-detector fusion of a whole scene.
pub fn fuse_scene(script: &SceneScript, cfg: &FusionConfig) -> Result<FusedDetections> {
    let fuser = Fuser::new(cfg.clone(), script.panorama()?)?;
    let detector = PerfectDetector::from_scene(script);
    let frames: Vec<u32> = (1..=script.frames).collect();
    let no_pixels = |_: u32| -> Result<RgbImage> { Err(Error::invalid("perfect detector reads no pixels")) };
    Ok(fuse_sequence(&fuser, &detector, &frames, &no_pixels)?.0)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrackRun {
    /// Sorted by frame, then id.
    pub outputs: Vec<TrackOutput>,
    pub associations: Vec<AssociationEvent>,
    /// Frames in which the cascade fell back to IoU.
    pub appearance_fallback_frames: usize,
    pub frame_times: Vec<Duration>,
}

impl TrackRun {
    pub fn cross_category_matches(&self) -> usize {
        self.associations.iter().filter(|a| a.is_cross_category()).count()
    }

    pub fn track_ids(&self) -> BTreeSet<u64> {
        self.outputs.iter().map(|o| o.id).collect()
    }
}

/// Runs the tracker over every frame of `dets`, in order.
pub fn track_detections(dets: &FusedDetections, cfg: &TrackerConfig) -> Result<TrackRun> {
    let mut tracker = Tracker::new(cfg.clone())?;
    let mut run = TrackRun::default();
    for f in dets.frame_indices() {
        let t0 = Instant::now();
        let step = tracker.step(f, dets.get(f).to_vec())?;
        run.frame_times.push(t0.elapsed());
        run.outputs.extend(step.tracks);
        run.outputs.extend(step.backfill);
        run.associations.extend(step.associations);
        run.appearance_fallback_frames += usize::from(step.appearance_fallback);
    }
    run.outputs.sort_by_key(|o| (o.frame, o.id));
    Ok(run)
}

fn build_detector(cfg: &PipelineConfig, scene: Option<&SceneScript>) -> Result<Box<dyn DetectorPort>> {
    Ok(match cfg.detector.source {
        DetectorSource::Store => {
            let path = require_opt(&cfg.detector.store, "detector store")?;
            Box::new(StoreDetector::new(DetectionStore::load(path)?))
        }
        DetectorSource::External => Box::new(
            ExternalDetector::new(cfg.detector.command.as_deref().unwrap_or_default())?
                .with_timeout(Duration::from_secs_f64(cfg.detector.timeout_secs)),
        ),
        DetectorSource::Perfect => {
            let scene = scene.ok_or_else(|| Error::Config("perfect detector needs a scene".into()))?;
            Box::new(
                PerfectDetector::from_scene(scene)
                    .with_seed(cfg.detector.seed)
                    .with_jitter(cfg.detector.jitter)
                    .with_drop_probability(cfg.detector.drop_probability),
            )
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FuseSummary {
    pub frames: usize,
    pub detections: usize,
    pub elapsed: Duration,
    pub output: PathBuf,
}

pub fn cmd_fuse(cfg: &PipelineConfig) -> Result<FuseSummary> {
    cfg.check_inputs(Stage::Fuse)?;
    let start = Instant::now();
    let scene = match cfg.detector.source {
        DetectorSource::Perfect => Some(SceneScript::load(require_opt(&cfg.paths.scene, "scene script")?)?),
        _ => None,
    };
    let mut cfg = cfg.clone();
    if let Some(s) = &scene {
        cfg.panorama = PanoramaSize {
            width: s.width,
            height: s.height,
        };
    }
    let detector = build_detector(&cfg, scene.as_ref())?;
    let files = match &cfg.paths.frames {
        Some(dir) => Some(list_frames(dir)?),
        None => None,
    };
    let candidates: Vec<u32> = if let Some(files) = &files {
        (1..=files.len() as u32).collect()
    } else if let Some(s) = &scene {
        (1..=s.frames).collect()
    } else if let Some(p) = &cfg.detector.store {
        DetectionStore::load(p)?.frames().collect()
    } else {
        Vec::new()
    };
    let frames: Vec<u32> = candidates.into_iter().filter(|&f| cfg.frames.contains(f)).collect();
    let fuser = Fuser::new(cfg.fusion.clone(), cfg.panorama_geometry()?)?;
    let loader = |f: u32| -> Result<RgbImage> {
        let files = files
            .as_ref()
            .ok_or_else(|| Error::Config("the detector needs frames but paths.frames is not set".into()))?;
        let img = load_frame(frame_path(files, f)?)?;
        let pano = fuser.panorama();
        if (img.width(), img.height()) != (pano.width(), pano.height()) {
            return Err(Error::DimensionMismatch {
                expected_w: pano.width(),
                expected_h: pano.height(),
                found_w: img.width(),
                found_h: img.height(),
            });
        }
        Ok(img)
    };
    let (fused, times) = fuse_sequence(&fuser, detector.as_ref(), &frames, &loader)?;
    fused.save(&cfg.paths.detections)?;
    let elapsed = start.elapsed();
    let busy: f64 = times.iter().map(Duration::as_secs_f64).sum();
    if !times.is_empty() {
        info!(
            "fused {} frames, {} detections; {:.1} ms per frame ({:.2} FPS single-threaded)",
            frames.len(),
            fused.len(),
            busy * 1e3 / times.len() as f64,
            times.len() as f64 / busy.max(f64::MIN_POSITIVE)
        );
    }
    Ok(FuseSummary {
        frames: frames.len(),
        detections: fused.len(),
        elapsed,
        output: cfg.paths.detections.clone(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackSummary {
    pub frames: usize,
    pub records: usize,
    pub tracks: usize,
    pub cross_category_matches: usize,
    pub mean_frame_time: Duration,
    pub output: PathBuf,
}

pub fn cmd_track(cfg: &PipelineConfig) -> Result<TrackSummary> {
    cfg.check_inputs(Stage::Track)?;
    let mut dets = FusedDetections::load(&cfg.paths.detections)?;
    if cfg.frames != FrameRange::default() {
        let keep: Vec<u32> = dets.frame_indices().into_iter().filter(|&f| cfg.frames.contains(f)).collect();
        dets.frames.retain(|f, _| cfg.frames.contains(*f));
        dets.range = keep.first().zip(keep.last()).map(|(a, b)| (*a, *b));
    }
    let run = track_detections(&dets, &cfg.tracker_config())?;
    let records = tracks_to_mot(&run.outputs, cfg.panorama.width as f64);
    write_mot(&cfg.paths.tracks, &records)?;
    let mean = if run.frame_times.is_empty() {
        Duration::ZERO
    } else {
        run.frame_times.iter().sum::<Duration>() / run.frame_times.len() as u32
    };
    info!(
        "tracked {} frames: {} tracks, {:.3} ms per frame",
        run.frame_times.len(),
        run.track_ids().len(),
        mean.as_secs_f64() * 1e3
    );
    Ok(TrackSummary {
        frames: run.frame_times.len(),
        records: records.len(),
        tracks: run.track_ids().len(),
        cross_category_matches: run.cross_category_matches(),
        mean_frame_time: mean,
        output: cfg.paths.tracks.clone(),
    })
}

const OVERTAKE_COLOUR: Rgb<u8> = Rgb([255, 0, 0]);
const TRACK_COLOUR: Rgb<u8> = Rgb([0, 255, 0]);

fn draw_rect(img: &mut RgbImage, r: &MotRecord, colour: Rgb<u8>, thickness: i64) {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let x0 = r.bbox.x_min.floor() as i64;
    let x1 = r.bbox.x_max.ceil() as i64 - 1;
    let y0 = r.bbox.y_min.floor() as i64;
    let y1 = r.bbox.y_max.ceil() as i64 - 1;
    let mut put = |x: i64, y: i64| {
        if (0..w).contains(&x) && (0..h).contains(&y) {
            img.put_pixel(x as u32, y as u32, colour);
        }
    };
    for t in 0..thickness {
        for x in x0..=x1 {
            put(x, y0 + t);
            put(x, y1 - t);
        }
        for y in y0..=y1 {
            put(x0 + t, y);
            put(x1 - t, y);
        }
    }
}

/// Copies of the frames with every track box drawn; boxes inside an
/// overtake period are red.
pub fn write_overlay(frames_dir: &Path, out_dir: &Path, records: &[MotRecord], overtakes: &[OvertakeRecord]) -> Result<usize> {
    let files = list_frames(frames_dir)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let marked = overtake_frames(overtakes);
    let groups = crate::formats::group_by_frame(records);
    files
        .par_iter()
        .enumerate()
        .map(|(i, path)| {
            let frame = i as u32 + 1;
            let mut img = load_frame(path)?;
            if let Some(g) = groups.iter().find(|g| g.frame == frame) {
                for o in &g.objects {
                    let colour = if marked.contains(&(frame, o.id)) { OVERTAKE_COLOUR } else { TRACK_COLOUR };
                    draw_rect(&mut img, &MotRecord::new(frame, o.id, o.bbox, o.category), colour, 3);
                }
            }
            let name = path.file_name().expect("listed files have names");
            let out = out_dir.join(name);
            img.save_with_format(&out, image::ImageFormat::Png)?;
            Ok(())
        })
        .collect::<Result<Vec<()>>>()
        .map(|v| v.len())
}

#[derive(Debug, Clone, PartialEq)]
pub struct OvertakeSummary {
    pub records: Vec<OvertakeRecord>,
    pub overlay_frames: usize,
    pub output: PathBuf,
}

pub fn cmd_overtakes(cfg: &PipelineConfig) -> Result<OvertakeSummary> {
    cfg.check_inputs(Stage::Overtakes)?;
    let w = cfg.panorama.width as f64;
    let records = read_mot(&cfg.paths.tracks)?;
    let records: Vec<MotRecord> = records.into_iter().filter(|r| cfg.frames.contains(r.frame)).collect();
    let tracks = mot_to_tracks(&records, Some(w))?;
    let found = detect_overtakes(&tracks, w, &cfg.behaviour)?;
    write_overtakes(&cfg.paths.overtakes, &found)?;
    let overlay_frames = if cfg.overlay {
        let dir = cfg.paths.frames.as_deref().expect("checked above");
        write_overlay(dir, &cfg.paths.overlay, &records, &found)?
    } else {
        0
    };
    info!("{} confirmed overtakes", found.len());
    Ok(OvertakeSummary {
        records: found,
        overlay_frames,
        output: cfg.paths.overtakes.clone(),
    })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalTables {
    pub mot: Option<MotReport>,
    pub ap: Option<ApReport>,
    pub overtakes: Option<OvertakeScore>,
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".into(), |x| format!("{x:.6}"))
}

impl EvalTables {
    pub fn mot_csv(r: &MotReport) -> String {
        format!(
            "IDF1,IDP,IDR,MOTA,MOTP,MT,PT,ML,FP,FN,IDs,IDt,FM\n{:.6},{:.6},{:.6},{:.6},{:.6},{},{},{},{},{},{},{},{}\n",
            r.idf1,
            r.idp,
            r.idr,
            r.mota,
            r.motp,
            r.mostly_tracked,
            r.partially_tracked,
            r.mostly_lost,
            r.false_positives,
            r.misses,
            r.id_switches,
            r.id_transfers,
            r.fragmentations
        )
    }

    pub fn ap_csv(r: &ApReport) -> String {
        format!(
            "AP,AP50,AP75,APs,APm,APl\n{},{},{},{},{},{}\n",
            opt(r.ap),
            opt(r.ap50),
            opt(r.ap75),
            opt(r.ap_small),
            opt(r.ap_medium),
            opt(r.ap_large)
        )
    }

    pub fn overtake_csv(s: &OvertakeScore) -> String {
        format!(
            "TP,FP,FN,precision,recall,F\n{},{},{},{:.6},{:.6},{:.6}\n",
            s.tp, s.fp, s.fn_, s.precision, s.recall, s.f_score
        )
    }

    /// All available tables, each preceded by a `# name` line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        if let Some(r) = &self.ap {
            let _ = write!(s, "# detection\n{}", Self::ap_csv(r));
        }
        if let Some(r) = &self.mot {
            let _ = write!(s, "# tracking\n{}", Self::mot_csv(r));
        }
        if let Some(r) = &self.overtakes {
            let _ = write!(s, "# overtakes\n{}", Self::overtake_csv(r));
        }
        s
    }
}

/// Fused detections as COCO results, with the frame number as image id.
pub fn fused_to_coco_results(dets: &FusedDetections) -> Vec<CocoResult> {
    dets.frames
        .iter()
        .flat_map(|(&f, ds)| {
            ds.iter().map(move |d| CocoResult {
                image_id: f as u64,
                category_id: d.category.coco_id(),
                bbox: [d.bbox.x_min, d.bbox.y_min, d.bbox.width(), d.bbox.height()],
                score: d.score,
            })
        })
        .collect()
}

fn check_aligned(pred: &[MotRecord], truth: &[MotRecord], width: f64) -> Result<()> {
    let pf: BTreeSet<u32> = pred.iter().map(|r| r.frame).collect();
    let tf: BTreeSet<u32> = truth.iter().map(|r| r.frame).collect();
    if !pf.is_empty() && !tf.is_empty() && pf.is_disjoint(&tf) {
        return Err(Error::invalid("predicted and true tracks share no frame"));
    }
    if let Some(r) = pred.iter().chain(truth).find(|r| r.bbox.x_max > width + 1.0) {
        return Err(Error::invalid(format!(
            "frame {}: box ends at x = {} beyond the panorama width {width}",
            r.frame, r.bbox.x_max
        )));
    }
    Ok(())
}

pub fn cmd_eval(cfg: &PipelineConfig) -> Result<EvalTables> {
    cfg.check_inputs(Stage::Eval)?;
    let mut tables = EvalTables::default();
    if let Some(truth_path) = &cfg.paths.truth_tracks {
        let truth = read_mot(truth_path)?;
        let pred = read_mot(&cfg.paths.tracks)?;
        check_aligned(&pred, &truth, cfg.panorama.width as f64)?;
        tables.mot = Some(compute_mot_metrics(&pred, &truth, &cfg.mot_config())?);
    }
    if let Some(truth_path) = &cfg.paths.truth_overtakes {
        let truth = read_overtakes(truth_path)?;
        let pred = read_overtakes(&cfg.paths.overtakes)?;
        tables.overtakes = Some(score_overtakes(&pred, &truth, cfg.eval.overtake_tolerance));
    }
    if let Some(truth_path) = &cfg.paths.truth_coco {
        let file = CocoFile::load(truth_path)?;
        let results = match cfg.paths.coco_results.as_deref() {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                parse_coco_results(&text, &p.display().to_string())?
            }
            None => fused_to_coco_results(&FusedDetections::load(&cfg.paths.detections)?),
        };
        let images: BTreeSet<u64> = file.images.iter().map(|i| i.id).collect();
        if let Some(r) = results.iter().find(|r| !images.contains(&r.image_id)) {
            return Err(Error::invalid(format!("result for image {} that is not in the annotations", r.image_id)));
        }
        tables.ap = Some(compute_ap(&coco_predictions(&results, &file)?, &coco_truth(&file)?, &cfg.eval.ap));
    }
    let dir = &cfg.paths.reports;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, text: String| -> Result<()> {
        let p = dir.join(name);
        std::fs::write(&p, text).map_err(|e| Error::io(p, e))
    };
    if let Some(r) = &tables.mot {
        write("mot.csv", EvalTables::mot_csv(r))?;
    }
    if let Some(r) = &tables.ap {
        write("ap.csv", EvalTables::ap_csv(r))?;
    }
    if let Some(r) = &tables.overtakes {
        write("overtakes.csv", EvalTables::overtake_csv(r))?;
    }
    Ok(tables)
}

/// Dataset statistics over the truth tracks, or the predicted tracks when
/// no truth is configured.
pub fn cmd_report(cfg: &PipelineConfig) -> Result<DatasetReport> {
    cfg.check_inputs(Stage::Report)?;
    let path = cfg.paths.truth_tracks.as_ref().unwrap_or(&cfg.paths.tracks);
    let records = read_mot(path)?;
    let report = dataset_report(&records, cfg.panorama.width, cfg.panorama.height, cfg.eval.report_cell)?;
    let dir = &cfg.paths.reports;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, text) in [("heat.csv", report.heat_csv()), ("counts.csv", report.counts_csv())] {
        let p = dir.join(name);
        std::fs::write(&p, text).map_err(|e| Error::io(p, e))?;
    }
    Ok(report)
}

pub const SCENARIOS: [&str; 6] = ["fusion", "category-swap", "seam-crossing", "mot", "overtakes", "three-overtakes"];

pub fn scenario(name: &str, seed: u64) -> Result<SceneScript> {
    Ok(match name {
        "fusion" => scenarios::fusion_scene(seed),
        "category-swap" => scenarios::category_swap_scene(),
        "seam-crossing" => scenarios::seam_crossing_scene(),
        "mot" => scenarios::mot_scene(seed),
        "overtakes" => scenarios::overtake_suite(seed).0,
        "three-overtakes" => scenarios::three_overtake_scene(),
        other => {
            return Err(Error::invalid(format!(
                "unknown scenario `{other}`; expected one of {}",
                SCENARIOS.join(", ")
            )))
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSummary {
    pub frames: u32,
    pub objects: usize,
    pub overtakes: usize,
    pub rendered: usize,
    pub config: PathBuf,
}

/// Writes a scene and its ground truth to `out_dir`, plus a pipeline
/// config that runs the perfect detector on it:
///
/// ```text
/// scene.toml  truth_tracks.txt  truth.json  truth_overtakes.txt
/// panorama_detections.txt  pipeline.toml  [frames/]
/// ```
pub fn cmd_synth(script: &SceneScript, behaviour: &BehaviourConfig, out_dir: &Path, render: bool) -> Result<SynthSummary> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let truth = realize_with(script, behaviour)?;
    let write = |name: &str, text: String| -> Result<PathBuf> {
        let p = out_dir.join(name);
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
        Ok(p)
    };
    let scene_path = write("scene.toml", script.to_toml_string()?)?;
    let truth_tracks = out_dir.join("truth_tracks.txt");
    write_mot(&truth_tracks, &truth.to_mot())?;
    let truth_coco = write("truth.json", truth.to_coco().to_json()?)?;
    let truth_overtakes = out_dir.join("truth_overtakes.txt");
    write_overtakes(&truth_overtakes, &truth.overtakes)?;
    write("panorama_detections.txt", panorama_detections(script, &truth)?.to_text())?;
    let mut rendered = 0;
    let frames_dir = out_dir.join("frames");
    if render {
        std::fs::create_dir_all(&frames_dir).map_err(|e| Error::io(&frames_dir, e))?;
        for (i, img) in render_all(script)?.iter().enumerate() {
            let p = frames_dir.join(format!("frame_{:06}.png", i + 1));
            img.save_with_format(&p, image::ImageFormat::Png)?;
            rendered += 1;
        }
    }
    let cfg = PipelineConfig {
        panorama: PanoramaSize {
            width: script.width,
            height: script.height,
        },
        paths: PathsConfig {
            frames: render.then(|| frames_dir.clone()),
            scene: Some(scene_path),
            detections: out_dir.join("detections.txt"),
            tracks: out_dir.join("tracks.txt"),
            overtakes: out_dir.join("overtakes.txt"),
            overlay: out_dir.join("overlay"),
            truth_tracks: Some(truth_tracks),
            truth_overtakes: Some(truth_overtakes),
            truth_coco: Some(truth_coco),
            coco_results: None,
            reports: out_dir.join("reports"),
        },
        detector: DetectorConfig {
            source: DetectorSource::Perfect,
            seed: script.seed,
            ..DetectorConfig::default()
        },
        behaviour: BehaviourConfig {
            fps: script.fps,
            ..behaviour.clone()
        },
        tracker: TrackerConfig {
            backfill_tentative: true,
            ..TrackerConfig::default()
        },
        ..PipelineConfig::default()
    };
    let config = write("pipeline.toml", cfg.to_toml_string()?)?;
    Ok(SynthSummary {
        frames: script.frames,
        objects: script.objects.len(),
        overtakes: truth.overtakes.len(),
        rendered,
        config,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::realize::realize;

    #[test]
    fn default_config_round_trips() {
        let cfg = PipelineConfig::default();
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(PipelineConfig::from_toml_str(&text, "t").unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_are_rejected_with_path() {
        let e = PipelineConfig::from_toml_str("[tracker]\nmax_ages = 3\n", "t").unwrap_err().to_string();
        assert!(e.contains("tracker"), "{e}");
        let e = PipelineConfig::from_toml_str("[tracker]\nn_init = 0\n", "t").unwrap_err();
        assert!(matches!(e, Error::Config(_)));
    }

    #[test]
    fn frame_range_parsing() {
        let r: FrameRange = "3:7".parse().unwrap();
        assert!(r.contains(3) && r.contains(7) && !r.contains(8) && !r.contains(2));
        let open: FrameRange = ":5".parse().unwrap();
        assert!(open.contains(0) && !open.contains(6));
        assert!("5".parse::<FrameRange>().is_err());
    }

    #[test]
    fn missing_inputs_are_path_errors() {
        let cfg = PipelineConfig {
            paths: PathsConfig {
                detections: "/nonexistent/dets.txt".into(),
                ..Default::default()
            },
            ..Default::default()
        };
        assert!(matches!(cfg.check_inputs(Stage::Track), Err(Error::Io { .. })));
        assert!(matches!(cfg.check_inputs(Stage::Fuse), Err(Error::Config(_))));
        assert!(matches!(cfg.check_inputs(Stage::Eval), Err(Error::Config(_))));
    }

    #[test]
    fn perfect_scene_tracks_match_truth() {
        let script = scenarios::three_overtake_scene();
        let truth = realize(&script).unwrap();
        let fused = fuse_scene(&script, &FusionConfig::default()).unwrap();
        assert_eq!(fused.frame_indices().len(), script.frames as usize);
        let cfg = TrackerConfig {
            backfill_tentative: true,
            pano_width: script.width as f64,
            ..Default::default()
        };
        let run = track_detections(&fused, &cfg).unwrap();
        assert_eq!(run.track_ids().len(), 3);
        let mot = compute_mot_metrics(
            &tracks_to_mot(&run.outputs, script.width as f64),
            &truth.to_mot(),
            &MotConfig {
                pano_width: Some(script.width as f64),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(mot.mota, 1.0);
        let found = detect_overtakes(&run.outputs, script.width as f64, &BehaviourConfig::default()).unwrap();
        assert_eq!(found.len(), 3);
    }

    #[test]
    fn overlay_marks_overtakes_in_red() {
        let dir = tempfile::tempdir().unwrap();
        let frames = dir.path().join("frames");
        std::fs::create_dir(&frames).unwrap();
        RgbImage::new(40, 20).save(frames.join("frame_000001.png")).unwrap();
        let bbox = crate::BoxXYXY::new(5.0, 5.0, 15.0, 15.0).unwrap();
        let rec = MotRecord::new(1, 4, bbox, crate::Category::Car);
        let ot = OvertakeRecord::confirmed(4, crate::behaviour::Side::Left, 1, 2);
        let out = dir.path().join("overlay");
        assert_eq!(write_overlay(&frames, &out, &[rec], &[ot]).unwrap(), 1);
        let img = image::open(out.join("frame_000001.png")).unwrap().to_rgb8();
        assert_eq!(*img.get_pixel(5, 5), OVERTAKE_COLOUR);
        assert_eq!(*img.get_pixel(10, 10), Rgb([0, 0, 0]));
    }
}
