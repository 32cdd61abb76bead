//! Object detection fusion, panoramic tracking and overtake detection for
//! equirectangular 360° video.

pub mod behaviour;
pub mod category;
pub mod detection;
pub mod detector;
pub mod error;
pub mod formats;
pub mod fusion;
pub mod geometry;
pub mod metrics;
pub mod pipeline;
pub mod projection;
pub mod synth;
pub mod tracker;

pub use category::Category;
pub use detection::{Detection, FrameSpace, Tangency};
pub use error::{Error, Result};
pub use geometry::{BoxXYWH, BoxXYXY};
pub use projection::{PanoramaGeometry, ProjectionMaps, SphericalDirection, UnitVector, ViewSpec};
