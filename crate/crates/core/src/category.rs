//! The fixed label set shared by detections, tracks and annotations.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

/// Road-user categories. Ids follow the COCO numbering so MOT `class`
/// columns stay compatible with COCO-trained detectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Category {
    Person,
    Bicycle,
    Car,
    Motorbike,
    Bus,
    Truck,
    TrafficLight,
}

impl Category {
    pub const ALL: [Category; 7] = [
        Category::Person,
        Category::Bicycle,
        Category::Car,
        Category::Motorbike,
        Category::Bus,
        Category::Truck,
        Category::TrafficLight,
    ];

    /// Whitespace-free label used in the text formats.
    pub fn label(self) -> &'static str {
        match self {
            Category::Person => "person",
            Category::Bicycle => "bicycle",
            Category::Car => "car",
            Category::Motorbike => "motorbike",
            Category::Bus => "bus",
            Category::Truck => "truck",
            Category::TrafficLight => "traffic_light",
        }
    }

    /// Name as it appears in COCO category tables.
    pub fn coco_name(self) -> &'static str {
        match self {
            Category::Motorbike => "motorcycle",
            Category::TrafficLight => "traffic light",
            other => other.label(),
        }
    }

    pub fn coco_id(self) -> u32 {
        match self {
            Category::Person => 1,
            Category::Bicycle => 2,
            Category::Car => 3,
            Category::Motorbike => 4,
            Category::Bus => 6,
            Category::Truck => 8,
            Category::TrafficLight => 10,
        }
    }

    pub fn from_coco_id(id: u32) -> Option<Category> {
        Category::ALL.into_iter().find(|c| c.coco_id() == id)
    }

    pub fn is_motor_vehicle(self) -> bool {
        matches!(
            self,
            Category::Car | Category::Motorbike | Category::Bus | Category::Truck
        )
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        let cat = match norm.as_str() {
            "person" | "pedestrian" => Category::Person,
            "bicycle" | "bike" => Category::Bicycle,
            "car" => Category::Car,
            "motorbike" | "motorcycle" => Category::Motorbike,
            "bus" => Category::Bus,
            "truck" => Category::Truck,
            "traffic_light" | "trafficlight" => Category::TrafficLight,
            _ => return Err(Error::UnknownCategory(s.to_string())),
        };
        Ok(cat)
    }
}

impl Serialize for Category {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.label())
    }
}

impl<'de> Deserialize<'de> for Category {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
