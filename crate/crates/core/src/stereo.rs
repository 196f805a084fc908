//! Dense disparity by zero-mean SAD block matching.
//!
//! Rows are processed bottom-up. Each pixel's candidate set is the union of
//! the road-model band for its row and `{d−1, d, d+1}` around the valid
//! disparities of its three neighbours in the row below. The full-search
//! baseline uses `[0, d_max]` everywhere.

use std::path::Path;
use std::time::Instant;

use image::{ImageBuffer, Luma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagery::GrayImage;
use crate::roadmodel::{row_search_range, RoadProfileModel, SearchRange};

pub const INVALID: f32 = -1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct DisparityMap {
    width: usize,
    height: usize,
    values: Vec<f32>,
}

impl DisparityMap {
    pub fn new_invalid(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            values: vec![INVALID; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> Option<f32>) -> Self {
        let mut m = Self::new_invalid(width, height);
        for v in 0..height {
            for u in 0..width {
                if let Some(d) = f(u, v) {
                    m.set(u, v, d);
                }
            }
        }
        m
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> Option<f32> {
        let d = self.values[v * self.width + u];
        (d >= 0.0).then_some(d)
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, d: f32) {
        debug_assert!(d >= 0.0 && d.is_finite(), "disparity {d} is not storable");
        self.values[v * self.width + u] = d;
    }

    #[inline]
    pub fn invalidate(&mut self, u: usize, v: usize) {
        self.values[v * self.width + u] = INVALID;
    }

    pub fn raw(&self) -> &[f32] {
        &self.values
    }

    pub fn valid_count(&self) -> usize {
        self.values.iter().filter(|&&d| d >= 0.0).count()
    }

    /// 16-bit PNG, value `round(d·256)`, 0 reserved for invalid. A valid zero
    /// disparity is written as 1 (1/256 px) so that it stays valid.
    pub fn save_png16(&self, path: impl AsRef<Path>) -> Result<()> {
        let raw: Vec<u16> = self
            .values
            .iter()
            .map(|&d| {
                if d < 0.0 {
                    0
                } else {
                    (f64::from(d) * 256.0).round().clamp(1.0, 65535.0) as u16
                }
            })
            .collect();
        let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
            ImageBuffer::from_raw(self.width as u32, self.height as u32, raw).expect("dimensions match");
        buf.save(path.as_ref())?;
        Ok(())
    }

    pub fn load_png16(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::FileNotFound(path.to_path_buf()));
        }
        let img = image::open(path)?;
        let image::DynamicImage::ImageLuma16(buf) = img else {
            return Err(Error::UnsupportedFormat(format!(
                "{}: disparity maps must be 16-bit grayscale",
                path.display()
            )));
        };
        let (w, h) = (buf.width() as usize, buf.height() as usize);
        let values = buf
            .into_raw()
            .into_iter()
            .map(|p| if p == 0 { INVALID } else { f32::from(p) / 256.0 })
            .collect();
        Ok(Self {
            width: w,
            height: h,
            values,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MatchStats {
    pub cost_evaluations: u64,
    /// Pixels whose own block lies inside the image.
    pub pixels_attempted: u64,
    pub valid_pixels: u64,
    pub valid_fraction: f64,
    /// Seconds.
    pub wall_time: f64,
}

impl MatchStats {
    pub fn evaluations_per_attempt(&self) -> f64 {
        if self.pixels_attempted == 0 {
            0.0
        } else {
            self.cost_evaluations as f64 / self.pixels_attempted as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatcherParams {
    pub tau: u32,
    pub d_max: u32,
    pub block_radius: usize,
    /// A pixel is kept only if `best < uniqueness · second_best`.
    pub uniqueness: f64,
}

impl Default for MatcherParams {
    fn default() -> Self {
        Self {
            tau: 3,
            d_max: 64,
            block_radius: 3,
            uniqueness: 0.95,
        }
    }
}

/// Zero-mean SAD between the block at `(u, v)` in `left` and `(u − d, v)` in
/// `right`. Reference implementation; the matchers use a precomputed variant.
pub fn match_cost(
    left: &GrayImage,
    right: &GrayImage,
    u: usize,
    v: usize,
    d: usize,
    block_radius: usize,
) -> Result<f64> {
    let r = block_radius;
    let (w, h) = left.dims();
    if right.dims() != left.dims() {
        return Err(Error::SizeMismatch {
            left: left.dims(),
            right: right.dims(),
        });
    }
    if u < r + d || u + r >= w || v < r || v + r >= h {
        return Err(Error::OutOfBounds { u, v, d });
    }
    let n = ((2 * r + 1) * (2 * r + 1)) as f64;
    let (mut sl, mut sr) = (0.0, 0.0);
    for y in v - r..=v + r {
        for x in u - r..=u + r {
            sl += f64::from(left.get(x, y));
            sr += f64::from(right.get(x - d, y));
        }
    }
    let (ml, mr) = (sl / n, sr / n);
    let mut cost = 0.0;
    for y in v - r..=v + r {
        for x in u - r..=u + r {
            cost += ((f64::from(left.get(x, y)) - ml) - (f64::from(right.get(x - d, y)) - mr)).abs();
        }
    }
    Ok(cost)
}

/// Images converted to f32 with per-pixel block means.
struct CostVolume {
    width: usize,
    radius: usize,
    left: Vec<f32>,
    right: Vec<f32>,
    mean_left: Vec<f32>,
    mean_right: Vec<f32>,
}

impl CostVolume {
    fn new(left: &GrayImage, right: &GrayImage, radius: usize) -> Self {
        let to_f32 = |img: &GrayImage| img.data().iter().map(|&p| f32::from(p)).collect::<Vec<f32>>();
        Self {
            width: left.width(),
            radius,
            left: to_f32(left),
            right: to_f32(right),
            mean_left: block_means(left, radius),
            mean_right: block_means(right, radius),
        }
    }

    /// Caller guarantees both blocks are inside the image.
    #[inline]
    fn cost(&self, u: usize, v: usize, d: usize) -> f32 {
        let w = self.width;
        let r = self.radius;
        let side = 2 * r + 1;
        let delta = self.mean_left[v * w + u] - self.mean_right[v * w + u - d];
        let mut s = 0.0f32;
        for y in v - r..=v + r {
            let start = y * w + u - r;
            let l = &self.left[start..start + side];
            let rr = &self.right[start - d..start - d + side];
            for (a, b) in l.iter().zip(rr) {
                s += (a - b - delta).abs();
            }
        }
        s
    }
}

fn block_means(img: &GrayImage, r: usize) -> Vec<f32> {
    let (w, h) = img.dims();
    let mut integral = vec![0u64; (w + 1) * (h + 1)];
    for v in 0..h {
        let mut row = 0u64;
        for u in 0..w {
            row += u64::from(img.get(u, v));
            integral[(v + 1) * (w + 1) + u + 1] = integral[v * (w + 1) + u + 1] + row;
        }
    }
    let n = ((2 * r + 1) * (2 * r + 1)) as f32;
    let mut out = vec![0.0f32; w * h];
    if w <= 2 * r || h <= 2 * r {
        return out;
    }
    for v in r..h - r {
        for u in r..w - r {
            let (x0, y0, x1, y1) = (u - r, v - r, u + r + 1, v + r + 1);
            let s = integral[y1 * (w + 1) + x1] + integral[y0 * (w + 1) + x0]
                - integral[y0 * (w + 1) + x1]
                - integral[y1 * (w + 1) + x0];
            out[v * w + u] = s as f32 / n;
        }
    }
    out
}

fn check_inputs(left: &GrayImage, right: &GrayImage, params: &MatcherParams) -> Result<()> {
    if left.dims() != right.dims() {
        return Err(Error::SizeMismatch {
            left: left.dims(),
            right: right.dims(),
        });
    }
    if params.d_max < 1 || !(params.uniqueness > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "matcher needs d_max >= 1 and uniqueness > 0, got {} and {}",
            params.d_max, params.uniqueness
        )));
    }
    Ok(())
}

/// Model-seeded matching with three-neighbour propagation from the row below.
pub fn compute_disparity(
    left: &GrayImage,
    right: &GrayImage,
    seed_model: &RoadProfileModel,
    params: &MatcherParams,
) -> Result<(DisparityMap, MatchStats)> {
    check_inputs(left, right, params)?;
    Ok(run_matcher(
        left,
        right,
        params,
        |v| row_search_range(seed_model, v as f64, params.tau, params.d_max),
        !seed_model.is_uninitialized(),
    ))
}

/// Exhaustive `[0, d_max]` search at every pixel.
pub fn compute_disparity_full(
    left: &GrayImage,
    right: &GrayImage,
    params: &MatcherParams,
) -> Result<(DisparityMap, MatchStats)> {
    check_inputs(left, right, params)?;
    let full = SearchRange {
        lo: 0,
        hi: i64::from(params.d_max),
    };
    Ok(run_matcher(left, right, params, |_| full, false))
}

fn run_matcher(
    left: &GrayImage,
    right: &GrayImage,
    params: &MatcherParams,
    row_range: impl Fn(usize) -> SearchRange,
    propagate: bool,
) -> (DisparityMap, MatchStats) {
    let start = Instant::now();
    let (w, h) = left.dims();
    let r = params.block_radius;
    let d_max = params.d_max as usize;
    let uniq = params.uniqueness as f32;
    let vol = CostVolume::new(left, right, r);
    let mut out = DisparityMap::new_invalid(w, h);
    let mut stats = MatchStats::default();

    // Per-disparity scratch, tagged with the pixel serial that wrote it.
    let mut cand_tag = vec![0u64; d_max + 1];
    let mut cost_tag = vec![0u64; d_max + 1];
    let mut costs = vec![0.0f32; d_max + 1];
    let mut cands: Vec<usize> = Vec::with_capacity(d_max + 1);
    let mut serial = 0u64;

    if w <= 2 * r || h <= 2 * r {
        return (out, stats);
    }
    for v in (r..h - r).rev() {
        let band = row_range(v);
        for u in r..w - r {
            serial += 1;
            stats.pixels_attempted += 1;
            // right block must stay inside: u − d − r ≥ 0
            let feasible_max = (u - r).min(d_max);
            cands.clear();
            if !band.is_empty() {
                let hi = (band.hi as usize).min(feasible_max);
                for d in band.lo as usize..=hi {
                    cand_tag[d] = serial;
                    cands.push(d);
                }
            }
            if propagate && v + 1 < h - r {
                for x in u.saturating_sub(1)..=(u + 1).min(w - 1) {
                    if let Some(nd) = out.get(x, v + 1) {
                        let c = nd.round() as usize;
                        for d in c.saturating_sub(1)..=c + 1 {
                            if d <= feasible_max && cand_tag[d] != serial {
                                cand_tag[d] = serial;
                                cands.push(d);
                            }
                        }
                    }
                }
                cands.sort_unstable();
            }
            if cands.is_empty() {
                continue;
            }

            let mut best_d = cands[0];
            let mut best = f32::INFINITY;
            for &d in &cands {
                let c = vol.cost(u, v, d);
                costs[d] = c;
                cost_tag[d] = serial;
                if c < best {
                    best = c;
                    best_d = d;
                }
            }
            stats.cost_evaluations += cands.len() as u64;

            let second = cands
                .iter()
                .filter(|&&d| d.abs_diff(best_d) >= 2)
                .map(|&d| costs[d])
                .fold(f32::INFINITY, f32::min);

            let mut neighbour = |d: usize, stats: &mut MatchStats| -> f32 {
                if cost_tag[d] != serial {
                    costs[d] = vol.cost(u, v, d);
                    cost_tag[d] = serial;
                    stats.cost_evaluations += 1;
                }
                costs[d]
            };
            // the block one disparity higher leaves the image, so the winner
            // cannot be confirmed as a minimum
            if best_d == feasible_max && best_d < d_max {
                continue;
            }
            let below = (best_d >= 1).then(|| neighbour(best_d - 1, &mut stats));
            let above = (best_d < feasible_max).then(|| neighbour(best_d + 1, &mut stats));

            // the band may have cut off a lower cost just outside it
            if below.is_some_and(|c| c < best) || above.is_some_and(|c| c < best) {
                continue;
            }
            if second.is_finite() && best >= uniq * second {
                continue;
            }
            let mut disp = best_d as f32;
            if let (Some(cm), Some(cp)) = (below, above) {
                let denom = cm - 2.0 * best + cp;
                if denom > 0.0 {
                    disp += (0.5 * (cm - cp) / denom).clamp(-0.5, 0.5);
                }
            }
            out.set(u, v, disp.clamp(0.0, d_max as f32));
            stats.valid_pixels += 1;
        }
    }
    stats.valid_fraction = stats.valid_pixels as f64 / (w * h) as f64;
    stats.wall_time = start.elapsed().as_secs_f64();
    (out, stats)
}
