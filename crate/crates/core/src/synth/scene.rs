//! Scene scripts: objects moving over the sphere along piecewise-linear
//! keyframes, specified directly in longitude/latitude.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::category::Category;
use crate::error::{Error, Result};
use crate::geometry::BoxXYXY;
use crate::projection::{normalize_lon, PanoramaGeometry};

fn default_fps() -> f64 {
    30.0
}

fn default_score() -> f64 {
    0.9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Keyframe {
    pub frame: u32,
    /// Centre longitude in degrees. May leave `[-180, 180)`; consecutive
    /// keyframes are joined by the straight segment between the raw values.
    pub lon: f64,
    /// Centre latitude in degrees, positive upwards.
    pub lat: f64,
    pub width_deg: f64,
    pub height_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedObject {
    pub category: Category,
    #[serde(default = "default_score")]
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature: Option<Vec<f32>>,
    pub keyframes: Vec<Keyframe>,
}

/// A scripted scene. Frames are numbered from 1; an object exists from its
/// first keyframe to its last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneScript {
    pub width: u32,
    pub height: u32,
    pub frames: u32,
    #[serde(default = "default_fps")]
    pub fps: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub objects: Vec<ScriptedObject>,
}

/// Longitude/latitude rectangle. `lon_max - lon_min` is the angular width;
/// `lon_min` is not normalised.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngularBox {
    pub lon_min: f64,
    pub lon_max: f64,
    pub lat_min: f64,
    pub lat_max: f64,
}

impl AngularBox {
    pub fn from_centre(lon: f64, lat: f64, width_deg: f64, height_deg: f64) -> Self {
        AngularBox {
            lon_min: lon - width_deg / 2.0,
            lon_max: lon + width_deg / 2.0,
            lat_min: lat - height_deg / 2.0,
            lat_max: lat + height_deg / 2.0,
        }
    }

    pub fn centre(&self) -> (f64, f64) {
        (
            (self.lon_min + self.lon_max) / 2.0,
            (self.lat_min + self.lat_max) / 2.0,
        )
    }

    pub fn contains(&self, lon: f64, lat: f64) -> bool {
        let rel = (lon - self.lon_min).rem_euclid(360.0);
        rel <= self.lon_max - self.lon_min && (self.lat_min..=self.lat_max).contains(&lat)
    }

    /// Panorama box with `x_min` in `[0, width)`; `x_max` may exceed the
    /// width when the object straddles the seam.
    pub fn to_panorama(&self, pano: &PanoramaGeometry) -> BoxXYXY {
        let x_min = pano.lon_to_x(normalize_lon(self.lon_min));
        let w = (self.lon_max - self.lon_min) * pano.px_per_degree();
        BoxXYXY {
            x_min,
            x_max: x_min + w,
            y_min: pano.lat_to_y(self.lat_max),
            y_max: pano.lat_to_y(self.lat_min),
        }
    }

    pub fn shifted_lon(&self, dlon: f64) -> Self {
        AngularBox {
            lon_min: self.lon_min + dlon,
            lon_max: self.lon_max + dlon,
            ..*self
        }
    }
}

impl ScriptedObject {
    pub fn first_frame(&self) -> u32 {
        self.keyframes.first().map_or(0, |k| k.frame)
    }

    pub fn last_frame(&self) -> u32 {
        self.keyframes.last().map_or(0, |k| k.frame)
    }

    /// Interpolated keyframe at a (possibly fractional) time, `None`
    /// outside the object's lifetime.
    pub fn state_at(&self, t: f64) -> Option<Keyframe> {
        let first = self.keyframes.first()?;
        let last = self.keyframes.last()?;
        if t < first.frame as f64 || t > last.frame as f64 {
            return None;
        }
        if self.keyframes.len() == 1 {
            return Some(first.clone());
        }
        let seg = self
            .keyframes
            .windows(2)
            .find(|w| t <= w[1].frame as f64)
            .unwrap_or(&self.keyframes[self.keyframes.len() - 2..]);
        let (a, b) = (&seg[0], &seg[1]);
        let s = (t - a.frame as f64) / (b.frame as f64 - a.frame as f64);
        let lerp = |p: f64, q: f64| p + (q - p) * s;
        Some(Keyframe {
            frame: t.round() as u32,
            lon: lerp(a.lon, b.lon),
            lat: lerp(a.lat, b.lat),
            width_deg: lerp(a.width_deg, b.width_deg),
            height_deg: lerp(a.height_deg, b.height_deg),
        })
    }

    pub fn box_at(&self, t: f64) -> Option<AngularBox> {
        self.state_at(t)
            .map(|k| AngularBox::from_centre(k.lon, k.lat, k.width_deg, k.height_deg))
    }
}

impl SceneScript {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let script: SceneScript = toml::from_str(text).map_err(|e| Error::Schema {
            context: "scene script".into(),
            message: e.to_string(),
        })?;
        script.validate()?;
        Ok(script)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Schema { message, .. } => Error::Schema {
                context: path.display().to_string(),
                message,
            },
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Schema {
            context: "scene script".into(),
            message: e.to_string(),
        })
    }

    pub fn panorama(&self) -> Result<PanoramaGeometry> {
        PanoramaGeometry::new(self.width, self.height)
    }

    pub fn validate(&self) -> Result<()> {
        self.panorama()?;
        if self.frames == 0 {
            return Err(Error::Config("scene needs at least one frame".into()));
        }
        if self.fps.is_nan() || self.fps <= 0.0 {
            return Err(Error::Config(format!("fps {} must be positive", self.fps)));
        }
        let mut dim = None;
        for (i, obj) in self.objects.iter().enumerate() {
            let ctx = |m: String| Error::Config(format!("object {i}: {m}"));
            if obj.keyframes.is_empty() {
                return Err(ctx("no keyframes".into()));
            }
            if !(0.0..=1.0).contains(&obj.score) {
                return Err(ctx(format!("score {} outside [0, 1]", obj.score)));
            }
            if let Some(f) = &obj.feature {
                if *dim.get_or_insert(f.len()) != f.len() {
                    return Err(ctx("feature dimension differs from earlier objects".into()));
                }
            }
            for w in obj.keyframes.windows(2) {
                if w[1].frame <= w[0].frame {
                    return Err(ctx("keyframes must have increasing frames".into()));
                }
            }
            for k in &obj.keyframes {
                if k.frame == 0 || k.frame > self.frames {
                    return Err(ctx(format!("keyframe frame {} outside 1..={}", k.frame, self.frames)));
                }
                if !(k.width_deg > 0.0 && k.width_deg < 360.0 && k.height_deg > 0.0) {
                    return Err(ctx("keyframe size must be positive and narrower than 360".into()));
                }
                if k.lat - k.height_deg / 2.0 < -90.0 || k.lat + k.height_deg / 2.0 > 90.0 {
                    return Err(ctx(format!("box at lat {} leaves the sphere", k.lat)));
                }
                if ![k.lon, k.lat, k.width_deg, k.height_deg].iter().all(|v| v.is_finite()) {
                    return Err(ctx("non-finite keyframe".into()));
                }
            }
        }
        Ok(())
    }

    /// Copy with every longitude moved by `dlon` degrees.
    pub fn shifted_lon(&self, dlon: f64) -> Self {
        let mut out = self.clone();
        for obj in &mut out.objects {
            for k in &mut obj.keyframes {
                k.lon += dlon;
            }
        }
        out
    }
}
