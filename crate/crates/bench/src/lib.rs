//! Inputs shared by the benchmarks.

use panotrack_core::formats::FusedDetections;
use panotrack_core::fusion::FusionConfig;
use panotrack_core::pipeline::fuse_scene;
use panotrack_core::synth::scenarios::mot_scene;
use panotrack_core::tracker::CostMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_costs(rows: usize, cols: usize, seed: u64) -> CostMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    CostMatrix::from_fn(rows, cols, |_, _| rng.random_range(0.0..1.0))
}

/// Perfect-detector fusion of the ten-object scene.
pub fn mot_detections() -> FusedDetections {
    fuse_scene(&mot_scene(0), &FusionConfig::default()).expect("synthetic scene fuses")
}
