//! COCO-style annotation files. Fields this crate does not use are kept in
//! the `extra` maps and written back unchanged.

use std::collections::BTreeMap;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::category::Category;
use crate::error::{Error, Result};
use crate::geometry::BoxXYXY;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoFile {
    #[serde(default)]
    pub images: Vec<CocoImage>,
    #[serde(default)]
    pub annotations: Vec<CocoAnnotation>,
    pub categories: Vec<CocoCategory>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoImage {
    pub id: u64,
    pub file_name: String,
    pub width: u32,
    pub height: u32,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoAnnotation {
    pub id: u64,
    pub image_id: u64,
    pub category_id: u32,
    /// `[x, y, width, height]`.
    pub bbox: [f64; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub area: Option<f64>,
    #[serde(default)]
    pub iscrowd: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub track_id: Option<u64>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoCategory {
    pub id: u32,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub supercategory: Option<String>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

/// Entry of a COCO detection-results list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoResult {
    pub image_id: u64,
    pub category_id: u32,
    pub bbox: [f64; 4],
    pub score: f64,
}

fn from_json<T: DeserializeOwned>(text: &str, source_name: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| Error::Schema {
        context: format!("{source_name}: {}", e.path()),
        message: e.inner().to_string(),
    })
}

impl CocoCategory {
    pub fn from_category(c: Category) -> Self {
        CocoCategory {
            id: c.coco_id(),
            name: c.coco_name().to_string(),
            supercategory: None,
            extra: Map::new(),
        }
    }
}

impl CocoAnnotation {
    pub fn xyxy(&self) -> Result<BoxXYXY> {
        let [x, y, w, h] = self.bbox;
        BoxXYXY::new(x, y, x + w, y + h)
    }
}

impl CocoFile {
    /// An empty file listing the seven categories.
    pub fn with_default_categories() -> Self {
        CocoFile {
            images: Vec::new(),
            annotations: Vec::new(),
            categories: Category::ALL.into_iter().map(CocoCategory::from_category).collect(),
            extra: Map::new(),
        }
    }

    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let file: CocoFile = from_json(text, source_name)?;
        file.category_map(source_name)?;
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::invalid(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    /// File category ids resolved to the fixed label set by name. Fails on
    /// names outside the set and on annotations with undeclared ids.
    pub fn category_map(&self, source_name: &str) -> Result<BTreeMap<u32, Category>> {
        let mut map = BTreeMap::new();
        for (i, c) in self.categories.iter().enumerate() {
            let cat: Category = c.name.parse().map_err(|e: Error| Error::Schema {
                context: format!("{source_name}: categories[{i}].name"),
                message: e.to_string(),
            })?;
            map.insert(c.id, cat);
        }
        for (i, a) in self.annotations.iter().enumerate() {
            if !map.contains_key(&a.category_id) {
                return Err(Error::Schema {
                    context: format!("{source_name}: annotations[{i}].category_id"),
                    message: format!("category id {} is not declared", a.category_id),
                });
            }
        }
        Ok(map)
    }
}

pub fn parse_coco_results(text: &str, source_name: &str) -> Result<Vec<CocoResult>> {
    from_json(text, source_name)
}

pub fn results_to_json(results: &[CocoResult]) -> Result<String> {
    serde_json::to_string_pretty(results).map_err(|e| Error::invalid(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"{
        "info": {"description": "x"},
        "images": [{"id": 1, "file_name": "f1.png", "width": 3840, "height": 1920, "frame": 1}],
        "annotations": [{"id": 5, "image_id": 1, "category_id": 7, "bbox": [10, 20, 30, 40],
                         "iscrowd": 0, "track_id": 6, "attributes": {"occluded": false}}],
        "categories": [{"id": 7, "name": "bus"}, {"id": 1, "name": "person", "supercategory": "human"}]
    }"#;

    #[test]
    fn round_trip_preserves_unknown_fields() {
        let f = CocoFile::parse(SAMPLE, "s").unwrap();
        assert_eq!(f.extra["info"]["description"], "x");
        assert_eq!(f.images[0].extra["frame"], 1);
        assert_eq!(f.annotations[0].extra["attributes"]["occluded"], false);
        let again = CocoFile::parse(&f.to_json().unwrap(), "s").unwrap();
        assert_eq!(again, f);
        assert_eq!(f.category_map("s").unwrap()[&7], Category::Bus);
        assert_eq!(f.annotations[0].xyxy().unwrap(), BoxXYXY::new(10.0, 20.0, 40.0, 60.0).unwrap());
    }

    #[test]
    fn unknown_category_is_rejected() {
        let bad = SAMPLE.replace("\"bus\"", "\"giraffe\"");
        let e = CocoFile::parse(&bad, "s").unwrap_err().to_string();
        assert!(e.contains("categories[0].name"), "{e}");
        let undeclared = SAMPLE.replace("\"category_id\": 7", "\"category_id\": 9");
        assert!(CocoFile::parse(&undeclared, "s").unwrap_err().to_string().contains("annotations[0]"));
    }

    #[test]
    fn schema_errors_carry_path() {
        let bad = SAMPLE.replace("[10, 20, 30, 40]", "[10, 20]");
        let e = CocoFile::parse(&bad, "s").unwrap_err().to_string();
        assert!(e.contains("annotations[0].bbox"), "{e}");
    }

    #[test]
    fn results_round_trip() {
        let r = vec![CocoResult {
            image_id: 1,
            category_id: 3,
            bbox: [1.0, 2.0, 3.0, 4.0],
            score: 0.5,
        }];
        assert_eq!(parse_coco_results(&results_to_json(&r).unwrap(), "r").unwrap(), r);
    }
}
