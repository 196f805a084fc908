//! Shared fixtures for the benchmarks.

use stereolane::pipeline::PipelineConfig;
use stereolane::synth::{generate_scene, sample_scene, SceneKind};
use stereolane::{GrayImage, RoadProfileModel};

/// A synthetic stereo pair with its ground-truth road profile.
pub struct Fixture {
    pub left: GrayImage,
    pub right: GrayImage,
    pub model: RoadProfileModel,
    pub config: PipelineConfig,
}

pub fn fixture(kind: SceneKind, width: usize, height: usize) -> Fixture {
    let scene = generate_scene(&sample_scene(kind, 42, width, height)).expect("sampled scenes are valid");
    Fixture {
        left: scene.left,
        right: scene.right,
        model: scene.gt_model,
        config: PipelineConfig::default(),
    }
}

/// Frame size of the benchmark sequences.
pub const FULL: (usize, usize) = (1242, 375);
pub const HALF: (usize, usize) = (621, 188);
