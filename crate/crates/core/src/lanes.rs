//! Road-area masking, signed edge likelihood, offset histogram, plus-minus
//! peak pairing and overlay rendering.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::imagery::{GradientField, GrayImage, RgbImage};
use crate::roadmodel::{horizon_row, RoadProfileModel};
use crate::stereo::DisparityMap;
use crate::vprofile::VanishingPointTrajectory;

/// Extra bins on either side of the image columns in the offset histogram.
pub const HISTOGRAM_MARGIN: usize = 200;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn filled(width: usize, height: usize, value: bool) -> Self {
        Self {
            width,
            height,
            bits: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for v in 0..height {
            for u in 0..width {
                bits.push(f(u, v));
            }
        }
        Self { width, height, bits }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> bool {
        self.bits[v * self.width + u]
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, value: bool) {
        self.bits[v * self.width + u] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    /// Intersection over union; 1 when both masks are empty.
    pub fn iou(&self, other: &Self) -> f64 {
        let mut inter = 0usize;
        let mut union = 0usize;
        for (&a, &b) in self.bits.iter().zip(&other.bits) {
            inter += usize::from(a && b);
            union += usize::from(a || b);
        }
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    }

    pub fn to_image(&self) -> GrayImage {
        GrayImage::from_fn(self.width, self.height, |u, v| if self.get(u, v) { 255 } else { 0 })
    }
}

/// Signed per-pixel lane-edge likelihood.
#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodField {
    width: usize,
    height: usize,
    values: Vec<f32>,
}

impl LikelihoodField {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> f32 {
        self.values[v * self.width + u]
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }
}

/// One detected marking. `offset` and `pair` are columns on the bottom row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lane {
    pub offset: f64,
    /// Positive-peak and negative-peak offsets, positive first.
    pub pair: [f64; 2],
    /// `[u, v]` centerline samples from the horizon down to the bottom row.
    pub samples: Vec<[f64; 2]>,
}

#[derive(Serialize, Deserialize)]
struct LaneSet {
    lanes: Vec<Lane>,
}

pub fn lanes_to_json(lanes: &[Lane]) -> String {
    serde_json::to_string(&LaneSet { lanes: lanes.to_vec() }).expect("lanes are serializable")
}

pub fn lanes_from_json(s: &str) -> Result<Vec<Lane>> {
    let set: LaneSet = serde_json::from_str(s)?;
    Ok(set.lanes)
}

/// Road pixels: valid disparity within `μ` of the profile, below the horizon.
pub fn road_mask(disp: &DisparityMap, model: &RoadProfileModel, mu: f64) -> BinaryMask {
    let (w, h) = disp.dims();
    let first_row = horizon_row(model, h).map_or(0.0, |hz| hz.row);
    BinaryMask::from_fn(w, h, |u, v| {
        let vf = v as f64;
        if vf < first_row {
            return false;
        }
        match disp.get(u, v) {
            Some(d) => {
                let f = model.eval(vf);
                let d = f64::from(d);
                d >= (f - mu).max(0.0) && d <= f + mu
            }
            None => false,
        }
    })
}

/// `∇·cos(θ_edge − θ_vp)`.
#[inline]
pub fn likelihood(magnitude: f64, edge_angle: f64, vp_angle: f64) -> f64 {
    magnitude * (edge_angle - vp_angle).cos()
}

/// Likelihood that each masked pixel lies on an edge aimed at the vanishing
/// point. The edge direction is the tangent (gradient turned by −π/2), so
/// the left edge of a bright stripe scores positive and its right edge
/// negative.
pub fn edge_likelihood(grad: &GradientField, mask: &BinaryMask, traj: &VanishingPointTrajectory) -> LikelihoodField {
    let (w, h) = (grad.width(), grad.height());
    let mut values = vec![0.0f32; w * h];
    for v in 0..h {
        let vf = v as f64;
        let g = traj.eval(vf);
        for u in 0..w {
            if !mask.get(u, v) {
                continue;
            }
            let idx = grad.index(u, v);
            let mag = f64::from(grad.magnitude[idx]);
            if mag == 0.0 {
                continue;
            }
            let vp_angle = (traj.v_h - vf).atan2(g - u as f64);
            values[idx] = likelihood(mag, f64::from(grad.edge_angle(idx)), vp_angle) as f32;
        }
    }
    LikelihoodField {
        width: w,
        height: h,
        values,
    }
}

/// Signed likelihood mass per bottom-row offset. Bin `i` holds offset
/// `i − margin`.
#[derive(Debug, Clone, PartialEq)]
pub struct OffsetHistogram {
    pub margin: usize,
    pub bins: Vec<f64>,
}

impl OffsetHistogram {
    pub fn offset_of(&self, bin: f64) -> f64 {
        bin - self.margin as f64
    }

    pub fn total(&self) -> f64 {
        self.bins.iter().sum()
    }
}

/// Bottom-row column reached by following the ray from the row's vanishing
/// point through `(u, v)`.
#[inline]
pub fn project_to_bottom(u: f64, v: f64, traj: &VanishingPointTrajectory, bottom_row: f64) -> f64 {
    let g = traj.eval(v);
    u + (bottom_row - v) * (u - g) / (v - traj.v_h)
}

pub fn lane_offset_histogram(
    lik: &LikelihoodField,
    traj: &VanishingPointTrajectory,
    bottom_row: usize,
) -> OffsetHistogram {
    let margin = HISTOGRAM_MARGIN;
    let mut bins = vec![0.0f64; lik.width + 2 * margin];
    let b = bottom_row as f64;
    for v in 0..lik.height {
        let vf = v as f64;
        if vf <= traj.v_h {
            continue;
        }
        for u in 0..lik.width {
            let val = lik.get(u, v);
            if val == 0.0 {
                continue;
            }
            let bin = project_to_bottom(u as f64, vf, traj, b).round() + margin as f64;
            if bin >= 0.0 && bin < bins.len() as f64 {
                bins[bin as usize] += f64::from(val);
            }
        }
    }
    OffsetHistogram { margin, bins }
}

/// Centered 5-bin moving average, truncated at the ends.
fn smooth(bins: &[f64]) -> Vec<f64> {
    let n = bins.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(2);
            let hi = (i + 2).min(n.saturating_sub(1));
            bins[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

/// Local maxima above `min_peak` as `(bin, height)`. A flat top is reported
/// at its center.
fn peaks(s: &[f64], min_peak: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < s.len() {
        let mut j = i;
        while j + 1 < s.len() && s[j + 1] == s[i] {
            j += 1;
        }
        let left_lower = i == 0 || s[i - 1] < s[i];
        let right_lower = j + 1 == s.len() || s[j + 1] < s[i];
        if left_lower && right_lower && s[i] > 0.0 && s[i] >= min_peak {
            out.push(((i + j) as f64 / 2.0, s[i]));
        }
        i = j + 1;
    }
    out
}

/// Pairs each positive peak, strongest first, with the nearest unused
/// negative peak `min_width..=max_width` bins to its right.
pub fn select_peak_pairs(
    hist: &OffsetHistogram,
    min_width: f64,
    max_width: f64,
    min_peak: f64,
    max_lanes: usize,
) -> Vec<Lane> {
    let s = smooth(&hist.bins);
    let neg: Vec<f64> = s.iter().map(|x| -x).collect();
    let mut pos = peaks(&s, min_peak);
    let negs = peaks(&neg, min_peak);
    pos.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.total_cmp(&b.0)));
    let mut used = vec![false; negs.len()];
    let mut pairs: Vec<(f64, f64, f64)> = Vec::new();
    for &(p, pm) in &pos {
        let best = negs
            .iter()
            .enumerate()
            .filter(|&(k, &(n, _))| !used[k] && n - p >= min_width && n - p <= max_width)
            .min_by(|a, b| a.1 .0.total_cmp(&b.1 .0));
        if let Some((k, &(n, nm))) = best {
            used[k] = true;
            pairs.push((p, n, pm + nm));
        }
    }
    pairs.sort_by(|a, b| b.2.total_cmp(&a.2));
    pairs.truncate(max_lanes);
    pairs
        .into_iter()
        .map(|(p, n, _)| {
            let (p, n) = (hist.offset_of(p), hist.offset_of(n));
            Lane {
                offset: 0.5 * (p + n),
                pair: [p, n],
                samples: Vec::new(),
            }
        })
        .collect()
}

/// Column of a lane with bottom-row `offset` at row `v`. The lateral
/// distance from the trajectory shrinks linearly to zero at the horizon.
#[inline]
pub fn lane_column(traj: &VanishingPointTrajectory, offset: f64, bottom_row: f64, v: f64) -> f64 {
    let g = traj.eval(v);
    g + (offset - g) * (v - traj.v_h) / (bottom_row - traj.v_h)
}

/// `[u, v]` samples for every integer row from just below the horizon to the
/// bottom row.
pub fn lane_polyline(traj: &VanishingPointTrajectory, offset: f64, bottom_row: usize) -> Vec<[f64; 2]> {
    let b = bottom_row as f64;
    let first = if traj.v_h < 0.0 {
        0
    } else {
        traj.v_h.floor() as usize + 1
    };
    (first..=bottom_row)
        .map(|v| [lane_column(traj, offset, b, v as f64), v as f64])
        .collect()
}

pub fn attach_samples(lanes: &mut [Lane], traj: &VanishingPointTrajectory, bottom_row: usize) {
    for lane in lanes {
        lane.samples = lane_polyline(traj, lane.offset, bottom_row);
    }
}

/// Gray frame with the road mask tinted green and lanes in red.
pub fn render_lanes(
    img: &GrayImage,
    mask: Option<&BinaryMask>,
    lanes: &[Lane],
    traj: &VanishingPointTrajectory,
) -> RgbImage {
    let mut out = RgbImage::from_gray(img);
    let (w, h) = img.dims();
    if let Some(mask) = mask {
        for v in 0..h {
            for u in 0..w {
                if mask.get(u, v) {
                    let [r, g, b] = out.get(u, v);
                    out.set(u, v, [r / 2, ((u16::from(g) + 255) / 2) as u8, b / 2]);
                }
            }
        }
    }
    for lane in lanes {
        let samples = if lane.samples.is_empty() {
            lane_polyline(traj, lane.offset, h - 1)
        } else {
            lane.samples.clone()
        };
        for [u, v] in samples {
            let v = v.round();
            if v < 0.0 || v >= h as f64 {
                continue;
            }
            let c = u.round() as i64;
            for x in c - 1..=c + 1 {
                if x >= 0 && (x as usize) < w {
                    out.set(x as usize, v as usize, [255, 0, 0]);
                }
            }
        }
    }
    out
}

pub fn save_overlay(img: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    img.save(path)
}
