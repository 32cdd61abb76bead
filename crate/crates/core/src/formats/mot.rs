//! MOT16-style comma-separated tracks:
//! `frame, id, bb_left, bb_top, bb_width, bb_height, conf, class, visibility`.
//! `class` is the COCO category id; columns past the ninth are kept verbatim.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use crate::category::Category;
use crate::error::{Error, Result};
use crate::geometry::BoxXYXY;
use crate::tracker::{normalize_box_x, TrackOutput};

#[derive(Debug, Clone, PartialEq)]
pub struct MotRecord {
    pub frame: u32,
    pub id: u64,
    pub bbox: BoxXYXY,
    pub conf: f64,
    pub category: Category,
    pub visibility: f64,
    pub extra: Vec<String>,
}

impl MotRecord {
    pub fn new(frame: u32, id: u64, bbox: BoxXYXY, category: Category) -> Self {
        MotRecord {
            frame,
            id,
            bbox,
            conf: 1.0,
            category,
            visibility: 1.0,
            extra: Vec::new(),
        }
    }
}

pub fn parse_mot(text: &str, source_name: &str) -> Result<Vec<MotRecord>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |m: String| Error::parse(source_name, i + 1, m);
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() < 6 {
            return Err(err(format!("expected at least 6 columns, found {}", cols.len())));
        }
        let frame: u32 = cols[0].parse().map_err(|_| err(format!("bad frame `{}`", cols[0])))?;
        let id_f: f64 = cols[1].parse().map_err(|_| err(format!("bad id `{}`", cols[1])))?;
        if id_f < 0.0 || id_f.fract() != 0.0 {
            return Err(err(format!("id must be a non-negative integer, found `{}`", cols[1])));
        }
        let nums = crate::detector::parse_floats(&cols[2..6]).map_err(err)?;
        let bbox = BoxXYXY::new(nums[0], nums[1], nums[0] + nums[2], nums[1] + nums[3]).map_err(|e| err(e.to_string()))?;
        let num = |k: usize, default: f64| -> Result<f64> {
            match cols.get(k) {
                Some(c) => c.parse().map_err(|_| err(format!("bad number `{c}`"))),
                None => Ok(default),
            }
        };
        let conf = num(6, 1.0)?;
        let category = match cols.get(7) {
            Some(c) => {
                let id: u32 = c.parse().map_err(|_| err(format!("bad class `{c}`")))?;
                Category::from_coco_id(id).ok_or_else(|| err(format!("unknown class id {id}")))?
            }
            None => return Err(err("missing class column".into())),
        };
        let visibility = num(8, 1.0)?;
        out.push(MotRecord {
            frame,
            id: id_f as u64,
            bbox,
            conf,
            category,
            visibility,
            extra: cols.iter().skip(9).map(|s| s.to_string()).collect(),
        });
    }
    Ok(out)
}

pub fn read_mot(path: &Path) -> Result<Vec<MotRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_mot(&text, &path.display().to_string())
}

pub fn format_mot(records: &[MotRecord]) -> String {
    let mut s = String::new();
    for r in records {
        let _ = write!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.frame,
            r.id,
            r.bbox.x_min,
            r.bbox.y_min,
            r.bbox.width(),
            r.bbox.height(),
            r.conf,
            r.category.coco_id(),
            r.visibility
        );
        for e in &r.extra {
            s.push(',');
            s.push_str(e);
        }
        s.push('\n');
    }
    s
}

pub fn write_mot(path: &Path, records: &[MotRecord]) -> Result<()> {
    std::fs::write(path, format_mot(records)).map_err(|e| Error::io(path, e))
}

/// Converts tracker outputs to MOT records. A box running past the right
/// edge is written as two clipped boxes with the same id.
pub fn tracks_to_mot(outputs: &[TrackOutput], pano_width: f64) -> Vec<MotRecord> {
    let mut out = Vec::new();
    for o in outputs {
        let b = normalize_box_x(&o.bbox, pano_width);
        let mut push = |bbox: BoxXYXY| {
            out.push(MotRecord {
                conf: o.score,
                ..MotRecord::new(o.frame, o.id, bbox, o.category)
            })
        };
        if b.x_max > pano_width {
            push(BoxXYXY { x_max: pano_width, ..b });
            push(BoxXYXY {
                x_min: 0.0,
                x_max: b.x_max - pano_width,
                ..b
            });
        } else {
            push(b);
        }
    }
    out.sort_by(|a, b| (a.frame, a.id).cmp(&(b.frame, b.id)).then(a.bbox.x_min.total_cmp(&b.bbox.x_min)));
    out
}

/// Inverse of [`tracks_to_mot`]: same-id seam pieces in one frame become a
/// single box extending past the right edge.
pub fn mot_to_tracks(records: &[MotRecord], pano_width: Option<f64>) -> Result<Vec<TrackOutput>> {
    let mut grouped: BTreeMap<(u32, u64), Vec<&MotRecord>> = BTreeMap::new();
    for r in records {
        grouped.entry((r.frame, r.id)).or_default().push(r);
    }
    let mut out = Vec::new();
    for ((frame, id), rs) in grouped {
        let bbox = join_same_id(&rs, frame, id, pano_width)?;
        out.push(TrackOutput {
            frame,
            id,
            category: rs[0].category,
            score: rs.iter().map(|r| r.conf).fold(f64::NEG_INFINITY, f64::max),
            bbox,
        });
    }
    Ok(out)
}

const SEAM_TOL: f64 = 1.0;

/// Joins the boxes one id has in one frame. Two boxes are accepted only if
/// they sit on opposite panorama edges.
pub(crate) fn join_same_id(rs: &[&MotRecord], frame: u32, id: u64, pano_width: Option<f64>) -> Result<BoxXYXY> {
    match (rs, pano_width) {
        ([r], _) => Ok(r.bbox),
        ([a, b], Some(w)) => {
            let (l, r) = if a.bbox.x_min <= b.bbox.x_min { (a, b) } else { (b, a) };
            if l.bbox.x_min <= SEAM_TOL && r.bbox.x_max >= w - SEAM_TOL && l.bbox.x_max < r.bbox.x_min {
                Ok(r.bbox.union(&l.bbox.shifted_x(w)))
            } else {
                Err(Error::DuplicateId { frame, id })
            }
        }
        _ => Err(Error::DuplicateId { frame, id }),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SplitMergeReport {
    /// Old id to new id.
    pub remaps: BTreeMap<u64, u64>,
    /// Boxes taking part in a seam pair.
    pub pair_boxes: usize,
    /// Boxes whose id changed.
    pub relabelled: usize,
}

/// Gives both halves of every seam-split object the smaller of their ids,
/// across the whole file. Pairs are boxes in one frame with the same
/// category, one touching `x = 0` and one touching the right edge, with
/// vertical IoU of at least `min_vertical_iou`.
pub fn merge_split_track_ids(
    records: &[MotRecord],
    pano_width: f64,
    min_vertical_iou: f64,
) -> Result<(Vec<MotRecord>, SplitMergeReport)> {
    let mut by_frame: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        by_frame.entry(r.frame).or_default().push(i);
    }
    let mut parent: BTreeMap<u64, u64> = BTreeMap::new();
    fn find(parent: &mut BTreeMap<u64, u64>, x: u64) -> u64 {
        let p = *parent.get(&x).unwrap_or(&x);
        if p == x {
            return x;
        }
        let root = find(parent, p);
        parent.insert(x, root);
        root
    }
    let mut ambiguous = BTreeSet::new();
    let mut in_pair = vec![false; records.len()];
    for (&frame, idx) in &by_frame {
        let left: Vec<usize> = idx.iter().copied().filter(|&i| records[i].bbox.x_min <= SEAM_TOL).collect();
        let right: Vec<usize> = idx
            .iter()
            .copied()
            .filter(|&i| records[i].bbox.x_max >= pano_width - 1.0 - SEAM_TOL)
            .collect();
        let pairs_of = |i: usize, others: &[usize]| -> Vec<usize> {
            others
                .iter()
                .copied()
                .filter(|&j| {
                    j != i
                        && records[i].category == records[j].category
                        && records[i].bbox.vertical_iou(&records[j].bbox) >= min_vertical_iou
                })
                .collect()
        };
        for &l in &left {
            let cands = pairs_of(l, &right);
            if cands.len() > 1 {
                ambiguous.insert(frame);
                continue;
            }
            let Some(&r) = cands.first() else { continue };
            if pairs_of(r, &left).len() > 1 {
                ambiguous.insert(frame);
                continue;
            }
            in_pair[l] = true;
            in_pair[r] = true;
            let (a, b) = (find(&mut parent, records[l].id), find(&mut parent, records[r].id));
            if a != b {
                let (lo, hi) = (a.min(b), a.max(b));
                parent.insert(hi, lo);
            }
        }
    }
    if !ambiguous.is_empty() {
        return Err(Error::AmbiguousSplit {
            frames: ambiguous.into_iter().collect(),
        });
    }
    let ids: BTreeSet<u64> = parent.keys().copied().collect();
    let mut report = SplitMergeReport::default();
    for id in ids {
        let root = find(&mut parent, id);
        if root != id {
            report.remaps.insert(id, root);
        }
    }
    let mut out = records.to_vec();
    for (r, paired) in out.iter_mut().zip(&in_pair) {
        if *paired {
            report.pair_boxes += 1;
        }
        if let Some(&new) = report.remaps.get(&r.id) {
            r.id = new;
            report.relabelled += 1;
        }
    }
    Ok((out, report))
}
