//! Axis-aligned boxes in pixel space, format conversions and IoU helpers.
//!
//! Coordinates are continuous: pixel `i` spans `[i, i + 1)`, so a box that
//! covers the last column of a `W`-wide image has `x_max == W`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Corner form `(x_min, y_min, x_max, y_max)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxXYXY {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

/// Centre form `(x, y, w, h)` as emitted by YOLO-style detectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxXYWH {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoxXYXY {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        let b = BoxXYXY {
            x_min,
            y_min,
            x_max,
            y_max,
        };
        if ![x_min, y_min, x_max, y_max].iter().all(|v| v.is_finite()) {
            return Err(Error::invalid(format!("non-finite box {b:?}")));
        }
        if x_min > x_max || y_min > y_max {
            return Err(Error::invalid(format!("inverted box {b:?}")));
        }
        Ok(b)
    }

    /// MBR of a point cloud; `None` when the iterator is empty.
    pub fn from_points<I: IntoIterator<Item = (f64, f64)>>(points: I) -> Option<Self> {
        let mut it = points.into_iter();
        let (x0, y0) = it.next()?;
        let mut b = BoxXYXY {
            x_min: x0,
            y_min: y0,
            x_max: x0,
            y_max: y0,
        };
        for (x, y) in it {
            b.x_min = b.x_min.min(x);
            b.x_max = b.x_max.max(x);
            b.y_min = b.y_min.min(y);
            b.y_max = b.y_max.max(y);
        }
        Some(b)
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    pub fn center(&self) -> (f64, f64) {
        (
            (self.x_min + self.x_max) / 2.0,
            (self.y_min + self.y_max) / 2.0,
        )
    }

    pub fn shifted_x(&self, dx: f64) -> Self {
        BoxXYXY {
            x_min: self.x_min + dx,
            x_max: self.x_max + dx,
            ..*self
        }
    }

    pub fn union(&self, other: &BoxXYXY) -> Self {
        BoxXYXY {
            x_min: self.x_min.min(other.x_min),
            y_min: self.y_min.min(other.y_min),
            x_max: self.x_max.max(other.x_max),
            y_max: self.y_max.max(other.y_max),
        }
    }

    pub fn clipped(&self, width: f64, height: f64) -> Self {
        BoxXYXY {
            x_min: self.x_min.clamp(0.0, width),
            y_min: self.y_min.clamp(0.0, height),
            x_max: self.x_max.clamp(0.0, width),
            y_max: self.y_max.clamp(0.0, height),
        }
    }

    pub fn intersection_area(&self, other: &BoxXYXY) -> f64 {
        let w = self.x_max.min(other.x_max) - self.x_min.max(other.x_min);
        let h = self.y_max.min(other.y_max) - self.y_min.max(other.y_min);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    pub fn iou(&self, other: &BoxXYXY) -> f64 {
        let inter = self.intersection_area(other);
        if inter <= 0.0 {
            return 0.0;
        }
        inter / (self.area() + other.area() - inter)
    }

    /// One-dimensional IoU of the vertical extents.
    pub fn vertical_iou(&self, other: &BoxXYXY) -> f64 {
        interval_iou(self.y_min, self.y_max, other.y_min, other.y_max)
    }

    pub fn horizontal_overlap(&self, other: &BoxXYXY) -> f64 {
        self.x_max.min(other.x_max) - self.x_min.max(other.x_min)
    }

    pub fn to_xywh(&self) -> Result<BoxXYWH> {
        xyxy_to_xywh(*self)
    }
}

impl BoxXYWH {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        if !(w > 0.0 && h > 0.0) || ![x, y, w, h].iter().all(|v| v.is_finite()) {
            return Err(Error::invalid(format!(
                "box needs finite centre and positive size, got ({x}, {y}, {w}, {h})"
            )));
        }
        Ok(BoxXYWH { x, y, w, h })
    }

    pub fn to_xyxy(&self) -> Result<BoxXYXY> {
        yolo_to_xyxy(*self)
    }
}

/// Centre/size to corners.
pub fn yolo_to_xyxy(b: BoxXYWH) -> Result<BoxXYXY> {
    let b = BoxXYWH::new(b.x, b.y, b.w, b.h)?;
    Ok(BoxXYXY {
        x_min: b.x - b.w / 2.0,
        x_max: b.x + b.w / 2.0,
        y_min: b.y - b.h / 2.0,
        y_max: b.y + b.h / 2.0,
    })
}

/// Corners to centre/size. Degenerate boxes are rejected.
pub fn xyxy_to_xywh(b: BoxXYXY) -> Result<BoxXYWH> {
    BoxXYWH::new(
        (b.x_min + b.x_max) / 2.0,
        (b.y_min + b.y_max) / 2.0,
        b.x_max - b.x_min,
        b.y_max - b.y_min,
    )
}

pub fn interval_iou(a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    let inter = a1.min(b1) - a0.max(b0);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = (a1 - a0) + (b1 - b0) - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// The box itself plus its copies on the virtual panoramas to either side.
pub fn wrapped_candidates(b: &BoxXYXY, pano_width: f64) -> [BoxXYXY; 3] {
    [b.shifted_x(-pano_width), *b, b.shifted_x(pano_width)]
}

/// Largest IoU between `a` and any horizontal copy of `b`.
pub fn wrapped_iou(a: &BoxXYXY, b: &BoxXYXY, pano_width: f64) -> f64 {
    wrapped_candidates(b, pano_width)
        .iter()
        .map(|c| a.iou(c))
        .fold(0.0, f64::max)
}

/// Signed difference `a - b` folded into `(-period/2, period/2]`.
pub fn wrap_signed(diff: f64, period: f64) -> f64 {
    let half = period / 2.0;
    let mut d = diff.rem_euclid(period);
    if d > half {
        d -= period;
    }
    d
}
