//! File formats: MOT tracks, COCO annotations, fused detections and
//! overtake reports.

pub mod coco;
pub mod fused;
pub mod mot;
pub mod overtakes;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::category::Category;
use crate::geometry::BoxXYXY;

pub use coco::{CocoAnnotation, CocoCategory, CocoFile, CocoImage, CocoResult};
pub use fused::FusedDetections;
pub use mot::{merge_split_track_ids, mot_to_tracks, parse_mot, read_mot, tracks_to_mot, write_mot, MotRecord};
pub use overtakes::{parse_overtakes, read_overtakes, write_overtakes};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedObject {
    pub id: u64,
    pub category: Category,
    pub bbox: BoxXYXY,
    pub visibility: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameAnnotations {
    pub frame: u32,
    pub objects: Vec<AnnotatedObject>,
}

/// Groups MOT records by frame, in frame order.
pub fn group_by_frame(records: &[MotRecord]) -> Vec<FrameAnnotations> {
    let mut map: BTreeMap<u32, Vec<AnnotatedObject>> = BTreeMap::new();
    for r in records {
        map.entry(r.frame).or_default().push(AnnotatedObject {
            id: r.id,
            category: r.category,
            bbox: r.bbox,
            visibility: r.visibility,
        });
    }
    map.into_iter().map(|(frame, objects)| FrameAnnotations { frame, objects }).collect()
}

/// Flattens frame annotations back into MOT records.
pub fn frames_to_mot(frames: &[FrameAnnotations]) -> Vec<MotRecord> {
    frames
        .iter()
        .flat_map(|f| {
            f.objects.iter().map(move |o| MotRecord {
                visibility: o.visibility,
                ..MotRecord::new(f.frame, o.id, o.bbox, o.category)
            })
        })
        .collect()
}
