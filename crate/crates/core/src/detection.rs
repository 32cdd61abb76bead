use serde::{Deserialize, Serialize};

use crate::category::Category;
use crate::error::{Error, Result};
use crate::geometry::BoxXYXY;

/// Which raster a detection's coordinates refer to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FrameSpace {
    View(usize),
    Panorama,
}

/// Sub-view edges a box touches. Only the left and right edges matter for
/// fragment merging; clipping at the top or bottom is not recoverable.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tangency {
    pub left: bool,
    pub right: bool,
}

impl Tangency {
    pub fn any(&self) -> bool {
        self.left || self.right
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BoxXYXY,
    pub score: f64,
    pub category: Category,
    pub space: FrameSpace,
    pub wraps_seam: bool,
    pub tangency: Tangency,
    /// Sub-view the detection came from, kept after reprojection.
    pub source_view: Option<usize>,
    pub feature: Option<Vec<f32>>,
}

impl Detection {
    pub fn new(bbox: BoxXYXY, score: f64, category: Category, space: FrameSpace) -> Result<Self> {
        let d = Detection {
            bbox,
            score,
            category,
            space,
            wraps_seam: false,
            tangency: Tangency::default(),
            source_view: match space {
                FrameSpace::View(i) => Some(i),
                FrameSpace::Panorama => None,
            },
            feature: None,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn with_feature(mut self, feature: Option<Vec<f32>>) -> Self {
        self.feature = feature;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.score) {
            return Err(Error::invalid(format!(
                "score {} outside [0, 1]",
                self.score
            )));
        }
        BoxXYXY::new(
            self.bbox.x_min,
            self.bbox.y_min,
            self.bbox.x_max,
            self.bbox.y_max,
        )?;
        if let Some(f) = &self.feature {
            if f.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("non-finite appearance feature"));
            }
        }
        Ok(())
    }
}
