//! Stereo lane detection: temporally seeded block matching, road profile
//! estimation from v-disparity, and lane extraction through a vanishing-point
//! trajectory.

pub mod error;
pub mod features;
pub mod imagery;
pub mod lanes;
pub mod pipeline;
pub mod poly;
pub mod roadmodel;
pub mod stereo;
pub mod synth;
pub mod vprofile;

pub use error::{Error, Result};
pub use imagery::{GradientField, GrayImage, RgbImage};
pub use lanes::{BinaryMask, Lane};
pub use pipeline::{FrameReport, PipelineConfig};
pub use roadmodel::{Horizon, RoadProfileModel};
pub use stereo::{DisparityMap, MatchStats, MatcherParams};
pub use synth::{SceneConfig, SceneTruth};
pub use vprofile::VanishingPointTrajectory;
