//! Fused panorama detections, one per line:
//! `frame category score x_min y_min x_max y_max wraps_seam [f1..fd]`.
//! A `# frames FIRST LAST` header records the frame range so that frames
//! without detections are still stepped through.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::category::Category;
use crate::detection::{Detection, FrameSpace};
use crate::error::{Error, Result};
use crate::geometry::BoxXYXY;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FusedDetections {
    /// Inclusive frame range, if known.
    pub range: Option<(u32, u32)>,
    pub frames: BTreeMap<u32, Vec<Detection>>,
}

impl FusedDetections {
    pub fn insert(&mut self, frame: u32, dets: Vec<Detection>) {
        self.frames.entry(frame).or_default().extend(dets);
    }

    /// Every frame to process: the header range if present, else the
    /// frames that have detections.
    pub fn frame_indices(&self) -> Vec<u32> {
        match self.range {
            Some((a, b)) => (a..=b).collect(),
            None => self.frames.keys().copied().collect(),
        }
    }

    pub fn get(&self, frame: u32) -> &[Detection] {
        self.frames.get(&frame).map_or(&[], Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.frames.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        if let Some((a, b)) = self.range {
            let _ = writeln!(s, "# frames {a} {b}");
        }
        for (frame, dets) in &self.frames {
            for d in dets {
                let b = &d.bbox;
                let _ = write!(
                    s,
                    "{frame} {} {} {} {} {} {} {}",
                    d.category, d.score, b.x_min, b.y_min, b.x_max, b.y_max, d.wraps_seam as u8
                );
                for v in d.feature.iter().flatten() {
                    let _ = write!(s, " {v}");
                }
                s.push('\n');
            }
        }
        s
    }

    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let mut out = FusedDetections::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let err = |m: String| Error::parse(source_name, i + 1, m);
            if let Some(rest) = line.strip_prefix('#') {
                let cols: Vec<&str> = rest.split_whitespace().collect();
                if cols.first() == Some(&"frames") {
                    match (cols.get(1).map(|c| c.parse()), cols.get(2).map(|c| c.parse())) {
                        (Some(Ok(a)), Some(Ok(b))) if a <= b => out.range = Some((a, b)),
                        _ => return Err(err("bad `# frames FIRST LAST` header".into())),
                    }
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split_whitespace().collect();
            if cols.len() < 8 {
                return Err(err(format!("expected at least 8 columns, found {}", cols.len())));
            }
            let frame: u32 = cols[0].parse().map_err(|_| err(format!("bad frame `{}`", cols[0])))?;
            let category: Category = cols[1].parse().map_err(|e: Error| err(e.to_string()))?;
            let nums = crate::detector::parse_floats(&cols[2..7]).map_err(err)?;
            let wraps = match cols[7] {
                "0" => false,
                "1" => true,
                other => return Err(err(format!("bad seam flag `{other}`"))),
            };
            let feature = if cols.len() > 8 {
                Some(
                    cols[8..]
                        .iter()
                        .map(|c| c.parse::<f32>().map_err(|_| err(format!("bad feature value `{c}`"))))
                        .collect::<Result<Vec<_>>>()?,
                )
            } else {
                None
            };
            let bbox = BoxXYXY::new(nums[1], nums[2], nums[3], nums[4]).map_err(|e| err(e.to_string()))?;
            let mut d = Detection::new(bbox, nums[0], category, FrameSpace::Panorama)
                .map_err(|e| err(e.to_string()))?
                .with_feature(feature);
            d.wraps_seam = wraps;
            out.frames.entry(frame).or_default().push(d);
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}
