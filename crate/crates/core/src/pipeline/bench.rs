use std::hash::{DefaultHasher, Hash, Hasher};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::PipelineConfig;
use super::frame::{bootstrap_seed, fit_road_profile, Seed, SeedSource};
use super::report::MatchSummary;
use super::run::{list_frames, load_pair};
use crate::error::{Error, Result};
use crate::imagery::GrayImage;
use crate::roadmodel::{row_search_range, RoadProfileModel};
use crate::stereo::{compute_disparity, compute_disparity_full, DisparityMap};

/// Relative runtime reduction reported for the propagation-only matcher the
/// seeded search was originally compared against. Context only.
pub const REFERENCE_REDUCTION: f64 = 0.37;

/// Two maps count as agreeing at a pixel when both are valid and differ by
/// less than this.
pub const AGREEMENT_TOL: f32 = 1e-4;

pub fn input_hash(left: &GrayImage, right: &GrayImage) -> u64 {
    let mut h = DefaultHasher::new();
    left.dims().hash(&mut h);
    left.data().hash(&mut h);
    right.dims().hash(&mut h);
    right.data().hash(&mut h);
    h.finish()
}

/// Fraction of mutually valid pixels where the maps agree, and the number of
/// mutually valid pixels.
pub fn disparity_agreement(a: &DisparityMap, b: &DisparityMap) -> (f64, usize) {
    let (mut both, mut same) = (0usize, 0usize);
    for (x, y) in a.raw().iter().zip(b.raw()) {
        if *x >= 0.0 && *y >= 0.0 {
            both += 1;
            if (x - y).abs() < AGREEMENT_TOL {
                same += 1;
            }
        }
    }
    (if both == 0 { 1.0 } else { same as f64 / both as f64 }, both)
}

/// [`disparity_agreement`] restricted to pixels whose `full` disparity lies
/// at least half a level inside the seed band of its row, where both searches
/// see the same winner. Rows the model leaves without a band are skipped.
pub fn band_agreement(
    seeded: &DisparityMap,
    full: &DisparityMap,
    model: &RoadProfileModel,
    tau: u32,
    d_max: u32,
) -> (f64, usize) {
    let (mut both, mut same) = (0usize, 0usize);
    for v in 0..full.height() {
        let band = row_search_range(model, v as f64, tau, d_max);
        if band.is_empty() {
            continue;
        }
        let (lo, hi) = (band.lo as f32 + 0.5, band.hi as f32 - 0.5);
        for u in 0..full.width() {
            if let (Some(a), Some(b)) = (seeded.get(u, v), full.get(u, v)) {
                if b >= lo && b <= hi {
                    both += 1;
                    if (a - b).abs() < AGREEMENT_TOL {
                        same += 1;
                    }
                }
            }
        }
    }
    (if both == 0 { 1.0 } else { same as f64 / both as f64 }, both)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchFrame {
    pub frame: usize,
    pub seed_source: SeedSource,
    pub input_hash: String,
    pub seeded: MatchSummary,
    pub full: MatchSummary,
    pub seeded_time: f64,
    pub full_time: f64,
    pub agreement: f64,
    pub mutually_valid: usize,
    pub band_agreement: f64,
    /// Mutually valid pixels whose full-search disparity lies inside the band.
    pub in_band: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub frames: Vec<BenchFrame>,
    /// Means over frames 1.. for both matchers.
    pub mean_seeded_time: f64,
    pub mean_full_time: f64,
    pub mean_seeded_evaluations: f64,
    pub mean_full_evaluations: f64,
    /// `seeded / full` of the mean cost evaluations.
    pub evaluation_ratio: f64,
    pub evaluation_reduction: f64,
    pub wall_clock_reduction: f64,
    pub reference_reduction: f64,
    /// Mean per-frame agreement between the seeded and full maps. Includes
    /// textureless regions where both matchers return noise.
    pub agreement: f64,
    /// Mean per-frame [`band_agreement`].
    pub band_agreement: f64,
}

impl BenchReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("bench report is serializable")
    }
}

/// Seeded and full-search matching on every frame of an in-memory sequence.
/// Seeds follow the pipeline: bootstrap on frame 0, then the profile fitted
/// on the previous seeded map.
pub fn bench_frames<I>(frames: I, cfg: &PipelineConfig) -> Result<BenchReport>
where
    I: IntoIterator<Item = Result<(GrayImage, GrayImage)>>,
{
    cfg.validate()?;
    let params = cfg.matcher();
    let mut out = Vec::new();
    let mut seed: Option<Seed> = None;
    for (i, pair) in frames.into_iter().enumerate() {
        let (left, right) = pair?;
        let s = match seed.take() {
            Some(s) => s,
            None if i == 0 => bootstrap_seed(&left, &right, cfg),
            None => Seed::full_search(),
        };
        let before = input_hash(&left, &right);
        let (seeded, seeded_stats) = compute_disparity(&left, &right, &s.model, &params)?;
        let seeded_hash = input_hash(&left, &right);
        let (full, full_stats) = compute_disparity_full(&left, &right, &params)?;
        let full_hash = input_hash(&left, &right);
        if before != seeded_hash || before != full_hash {
            return Err(Error::Invariant(format!("frame {i}: matcher inputs differ")));
        }
        let (agreement, mutually_valid) = disparity_agreement(&seeded, &full);
        let (band_agreement, in_band) = band_agreement(&seeded, &full, &s.model, cfg.tau, cfg.d_max);
        out.push(BenchFrame {
            frame: i,
            seed_source: s.source,
            input_hash: format!("{before:016x}"),
            seeded: MatchSummary::from(&seeded_stats),
            full: MatchSummary::from(&full_stats),
            seeded_time: seeded_stats.wall_time,
            full_time: full_stats.wall_time,
            agreement,
            mutually_valid,
            band_agreement,
            in_band,
        });
        seed = Some(match fit_road_profile(&seeded, cfg) {
            Some(model) => Seed {
                model,
                source: SeedSource::PreviousFrame { frame: i },
            },
            None => Seed::full_search(),
        });
    }
    if out.len() < 2 {
        return Err(Error::MissingFrame(format!(
            "benchmark needs at least 2 frames, got {}",
            out.len()
        )));
    }

    let steady = &out[1..];
    let mean = |f: &dyn Fn(&BenchFrame) -> f64| steady.iter().map(f).sum::<f64>() / steady.len() as f64;
    let mean_seeded_time = mean(&|f| f.seeded_time);
    let mean_full_time = mean(&|f| f.full_time);
    let mean_seeded_evaluations = mean(&|f| f.seeded.cost_evaluations as f64);
    let mean_full_evaluations = mean(&|f| f.full.cost_evaluations as f64);
    let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else { 1.0 };
    let evaluation_ratio = ratio(mean_seeded_evaluations, mean_full_evaluations);
    let n = out.len() as f64;
    let agreement = out.iter().map(|f| f.agreement).sum::<f64>() / n;
    let band_agreement = out.iter().map(|f| f.band_agreement).sum::<f64>() / n;
    Ok(BenchReport {
        mean_seeded_time,
        mean_full_time,
        mean_seeded_evaluations,
        mean_full_evaluations,
        evaluation_ratio,
        evaluation_reduction: 1.0 - evaluation_ratio,
        wall_clock_reduction: 1.0 - ratio(mean_seeded_time, mean_full_time),
        reference_reduction: REFERENCE_REDUCTION,
        agreement,
        band_agreement,
        frames: out,
    })
}

/// [`bench_frames`] over a sequence directory.
pub fn run_bench(seq_dir: impl AsRef<Path>, cfg: &PipelineConfig) -> Result<BenchReport> {
    let pairs = list_frames(seq_dir)?;
    if pairs.len() < 2 {
        return Err(Error::MissingFrame(format!(
            "benchmark needs at least 2 frames, got {}",
            pairs.len()
        )));
    }
    bench_frames(pairs.iter().map(load_pair), cfg)
}
