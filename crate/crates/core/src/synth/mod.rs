//! Scripted scenes with analytically known ground truth.

pub mod realize;
pub mod render;
pub mod scenarios;
pub mod scene;
