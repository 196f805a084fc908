use serde::{Deserialize, Serialize};

use super::frame::{FrameOutput, Seed, StageTimings};
use crate::lanes::Lane;
use crate::roadmodel::RoadProfileModel;
use crate::stereo::MatchStats;
use crate::vprofile::VanishingPointTrajectory;

/// Matcher counters without the wall time, so reports of identical runs
/// compare equal.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MatchSummary {
    pub cost_evaluations: u64,
    pub pixels_attempted: u64,
    pub valid_pixels: u64,
    pub valid_fraction: f64,
}

impl From<&MatchStats> for MatchSummary {
    fn from(s: &MatchStats) -> Self {
        Self {
            cost_evaluations: s.cost_evaluations,
            pixels_attempted: s.pixels_attempted,
            valid_pixels: s.valid_pixels,
            valid_fraction: s.valid_fraction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameReport {
    pub frame: usize,
    /// Model that bounded this frame's disparity search and where it came from.
    pub seed: Seed,
    pub fitted_model: Option<RoadProfileModel>,
    pub horizon: Option<f64>,
    pub trajectory: Option<VanishingPointTrajectory>,
    pub matching: MatchSummary,
    pub lane_count: usize,
    pub lane_offsets: Vec<f64>,
    pub lanes: Vec<Lane>,
    pub timings: StageTimings,
}

impl FrameReport {
    pub fn new(frame: usize, out: &FrameOutput) -> Self {
        Self {
            frame,
            seed: out.seed,
            fitted_model: out.fitted_model,
            horizon: out.horizon.map(|h| h.row),
            trajectory: out.trajectory,
            matching: MatchSummary::from(&out.stats),
            lane_count: out.lanes.len(),
            lane_offsets: out.lanes.iter().map(|l| l.offset).collect(),
            lanes: out.lanes.clone(),
            timings: out.timings,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is serializable")
    }

    /// JSON with every timing zeroed; identical inputs give identical bytes.
    pub fn deterministic_json(&self) -> String {
        let mut r = self.clone();
        r.timings = StageTimings::default();
        r.to_json()
    }
}

/// Sequence-level summary written as `metrics.json`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SequenceMetrics {
    pub frames: usize,
    pub total_lanes: usize,
    pub frames_with_horizon: usize,
    pub mean_cost_evaluations: f64,
    pub mean_evaluations_per_pixel: f64,
    pub mean_valid_fraction: f64,
    /// Means over all frames; `disparity_steady` excludes frame 0.
    pub mean_timings: StageTimings,
    pub mean_disparity_steady: f64,
}

impl SequenceMetrics {
    pub fn from_reports(reports: &[FrameReport]) -> Self {
        let n = reports.len();
        if n == 0 {
            return Self::default();
        }
        let mean = |f: &dyn Fn(&FrameReport) -> f64| reports.iter().map(f).sum::<f64>() / n as f64;
        let t = |f: fn(&StageTimings) -> f64| mean(&|r: &FrameReport| f(&r.timings));
        let steady: Vec<f64> = reports.iter().skip(1).map(|r| r.timings.disparity).collect();
        Self {
            frames: n,
            total_lanes: reports.iter().map(|r| r.lane_count).sum(),
            frames_with_horizon: reports.iter().filter(|r| r.horizon.is_some()).count(),
            mean_cost_evaluations: mean(&|r| r.matching.cost_evaluations as f64),
            mean_evaluations_per_pixel: mean(&|r| {
                let m = &r.matching;
                if m.pixels_attempted == 0 {
                    0.0
                } else {
                    m.cost_evaluations as f64 / m.pixels_attempted as f64
                }
            }),
            mean_valid_fraction: mean(&|r| r.matching.valid_fraction),
            mean_timings: StageTimings {
                bootstrap: t(|s| s.bootstrap),
                disparity: t(|s| s.disparity),
                smoothing: t(|s| s.smoothing),
                gradients: t(|s| s.gradients),
                road_profile: t(|s| s.road_profile),
                vanishing_point: t(|s| s.vanishing_point),
                lanes: t(|s| s.lanes),
                total: t(|s| s.total),
            },
            mean_disparity_steady: if steady.is_empty() {
                0.0
            } else {
                steady.iter().sum::<f64>() / steady.len() as f64
            },
        }
    }
}
