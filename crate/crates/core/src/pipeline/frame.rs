use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::PipelineConfig;
use crate::error::Result;
use crate::features::{detect_keypoints, match_keypoints, sparse_v_disparity};
use crate::imagery::{bilateral_filter, sobel_gradients, GrayImage, RgbImage};
use crate::lanes::{
    attach_samples, edge_likelihood, lane_offset_histogram, render_lanes, road_mask, select_peak_pairs, BinaryMask,
    Lane,
};
use crate::roadmodel::{fit_parabola_ransac, horizon_row, Horizon, RoadProfileModel};
use crate::stereo::{compute_disparity, DisparityMap, MatchStats};
use crate::vprofile::{
    build_uvp_accumulator, build_v_disparity, dp_road_profile, dp_uvp, fit_profile_from_path, fit_uvp_quartic,
    VanishingPointTrajectory,
};

/// Where the model that seeded a frame's disparity search came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SeedSource {
    /// Sparse feature matches of this frame; only used for the first frame.
    Bootstrap,
    /// Dense road profile fitted on the given earlier frame.
    PreviousFrame { frame: usize },
    /// No usable model; the search covered every disparity.
    FullSearch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Seed {
    pub model: RoadProfileModel,
    pub source: SeedSource,
}

impl Seed {
    pub fn full_search() -> Self {
        Self {
            model: RoadProfileModel::UNINITIALIZED,
            source: SeedSource::FullSearch,
        }
    }
}

/// Seconds spent per stage.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StageTimings {
    pub bootstrap: f64,
    pub disparity: f64,
    pub smoothing: f64,
    pub gradients: f64,
    pub road_profile: f64,
    pub vanishing_point: f64,
    pub lanes: f64,
    pub total: f64,
}

/// Everything computed for one stereo pair.
#[derive(Debug, Clone)]
pub struct FrameOutput {
    pub seed: Seed,
    pub disparity: DisparityMap,
    pub stats: MatchStats,
    /// Profile fitted on this frame's dense v-disparity; seeds the next frame.
    pub fitted_model: Option<RoadProfileModel>,
    pub mask: BinaryMask,
    pub horizon: Option<Horizon>,
    pub trajectory: Option<VanishingPointTrajectory>,
    pub lanes: Vec<Lane>,
    pub timings: StageTimings,
}

impl FrameOutput {
    /// Seed for the following frame.
    pub fn next_seed(&self, frame: usize) -> Seed {
        match self.fitted_model {
            Some(model) => Seed {
                model,
                source: SeedSource::PreviousFrame { frame },
            },
            None => Seed::full_search(),
        }
    }

    pub fn overlay(&self, left: &GrayImage) -> RgbImage {
        let traj = self.trajectory.unwrap_or(VanishingPointTrajectory::constant(0.0, 0.0));
        render_lanes(left, Some(&self.mask), &self.lanes, &traj)
    }
}

/// Road profile from sparse feature matches, `None` when too few matches
/// support a fit.
pub fn bootstrap_model(left: &GrayImage, right: &GrayImage, cfg: &PipelineConfig) -> Option<RoadProfileModel> {
    let f = &cfg.features;
    let kl = detect_keypoints(left, f.threshold, f.max_count);
    let kr = detect_keypoints(right, f.threshold, f.max_count);
    let matches = match_keypoints(&kl, &kr, f.max_hamming, cfg.d_max as usize);
    let points: Vec<(f64, f64)> = sparse_v_disparity(&matches).iter().map(|p| (p.v, p.d)).collect();
    let fit = fit_parabola_ransac(&points, &cfg.ransac).ok()?;
    (fit.model.is_finite() && !fit.model.is_uninitialized()).then_some(fit.model)
}

/// Seed for the first frame of a sequence.
pub fn bootstrap_seed(left: &GrayImage, right: &GrayImage, cfg: &PipelineConfig) -> Seed {
    match bootstrap_model(left, right, cfg) {
        Some(model) => Seed {
            model,
            source: SeedSource::Bootstrap,
        },
        None => Seed::full_search(),
    }
}

/// Dense road profile from a disparity map.
pub fn fit_road_profile(disp: &DisparityMap, cfg: &PipelineConfig) -> Option<RoadProfileModel> {
    let vd = build_v_disparity(disp, cfg.d_max as usize);
    let path = dp_road_profile(&vd, cfg.lambda_v).ok()?;
    let model = fit_profile_from_path(&path).ok()?;
    model.is_finite().then_some(model)
}

/// Vanishing-point trajectory and lanes from the road mask and gradients.
fn detect_lanes(
    grad: &crate::imagery::GradientField,
    mask: &BinaryMask,
    v_h: f64,
    cfg: &PipelineConfig,
) -> Result<(Option<VanishingPointTrajectory>, Vec<Lane>, f64, f64)> {
    let t0 = Instant::now();
    let (w, h) = (grad.width(), grad.height());
    let bottom = h - 1;
    let acc = build_uvp_accumulator(grad, mask, v_h, cfg.lanes.edge_threshold).spread(cfg.lanes.vote_spread);
    if acc.rows() < 5 || acc.total() == 0.0 {
        return Ok((None, Vec::new(), t0.elapsed().as_secs_f64(), 0.0));
    }
    let path = dp_uvp(&acc, cfg.lambda_u)?;
    let first = acc.first_row();
    let mut traj = match fit_uvp_quartic(&path, v_h) {
        Ok(t) => t,
        Err(_) => return Ok((None, Vec::new(), t0.elapsed().as_secs_f64(), 0.0)),
    };
    if !traj.is_sane(w, first..=bottom) {
        // fall back to a straight road at the vote-weighted path column
        let (num, den) = path
            .nodes
            .iter()
            .fold((0.0, 0.0), |(n, d), p| (n + p.votes * p.value as f64, d + p.votes));
        traj = VanishingPointTrajectory::constant(if den > 0.0 { num / den } else { w as f64 / 2.0 }, v_h);
    }
    let t_vp = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let lik = edge_likelihood(grad, mask, &traj);
    let hist = lane_offset_histogram(&lik, &traj, bottom);
    let peak = hist.bins.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let l = &cfg.lanes;
    let mut lanes = select_peak_pairs(&hist, l.min_width, l.max_width, l.min_peak_fraction * peak, l.max_lanes);
    attach_samples(&mut lanes, &traj, bottom);
    Ok((Some(traj), lanes, t_vp, t1.elapsed().as_secs_f64()))
}

/// Runs every per-frame stage on one rectified pair.
pub fn process_frame(left: &GrayImage, right: &GrayImage, seed: Seed, cfg: &PipelineConfig) -> Result<FrameOutput> {
    let start = Instant::now();
    let mut timings = StageTimings::default();

    let (disparity, stats) = compute_disparity(left, right, &seed.model, &cfg.matcher())?;
    timings.disparity = stats.wall_time;

    let t = Instant::now();
    let b = &cfg.bilateral;
    let smoothed = bilateral_filter(left, b.sigma_s, b.sigma_r, b.radius)?;
    timings.smoothing = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let grad = sobel_gradients(&smoothed)?;
    timings.gradients = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let fitted_model = fit_road_profile(&disparity, cfg);
    let mask_model = fitted_model.unwrap_or(seed.model);
    let mask = road_mask(&disparity, &mask_model, cfg.mu);
    let horizon = fitted_model.and_then(|m| horizon_row(&m, left.height()).ok());
    timings.road_profile = t.elapsed().as_secs_f64();

    let (trajectory, lanes) = match horizon {
        Some(hz) if hz.row < (left.height() - 1) as f64 => {
            let (traj, lanes, t_vp, t_lanes) = detect_lanes(&grad, &mask, hz.row, cfg)?;
            timings.vanishing_point = t_vp;
            timings.lanes = t_lanes;
            (traj, lanes)
        }
        _ => (None, Vec::new()),
    };
    timings.total = start.elapsed().as_secs_f64();

    Ok(FrameOutput {
        seed,
        disparity,
        stats,
        fitted_model,
        mask,
        horizon,
        trajectory,
        lanes,
        timings,
    })
}
