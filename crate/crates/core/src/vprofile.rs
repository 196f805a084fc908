//! Dense v-disparity, the vanishing-point column accumulator, the two path
//! optimizations over them, and the polynomial fits `f(v)` and `g(v)`.
//!
//! Both optimizations minimize `E = −votes + λ·|step|` along a path that
//! visits one cell per sweep level.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagery::{GradientField, GrayImage};
use crate::lanes::BinaryMask;
use crate::poly;
use crate::roadmodel::{fit_parabola_lsf, RoadProfileModel};
use crate::stereo::DisparityMap;

/// Largest row step between consecutive disparity levels of the road path.
pub const ROAD_MAX_STEP: usize = 6;
/// Largest column step between consecutive rows of the vanishing-point path.
pub const UVP_MAX_STEP: usize = 5;
/// Tangents closer than this to horizontal are not projected to the horizon.
const MIN_TANGENT_SIN: f64 = 0.05;

/// Vote counts over `(disparity, row)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VDisparityMap {
    d_max: usize,
    height: usize,
    votes: Vec<u32>,
}

impl VDisparityMap {
    pub fn new(d_max: usize, height: usize) -> Self {
        Self {
            d_max,
            height,
            votes: vec![0; (d_max + 1) * height],
        }
    }

    /// Row-major counts, `counts[v * (d_max + 1) + d]`.
    pub fn from_counts(d_max: usize, height: usize, counts: Vec<u32>) -> Result<Self> {
        if counts.len() != (d_max + 1) * height {
            return Err(Error::InvalidParameter(format!(
                "{} counts for a {}x{height} v-disparity map",
                counts.len(),
                d_max + 1
            )));
        }
        Ok(Self {
            d_max,
            height,
            votes: counts,
        })
    }

    pub fn d_max(&self) -> usize {
        self.d_max
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, d: usize, v: usize) -> u32 {
        self.votes[v * (self.d_max + 1) + d]
    }

    pub fn row(&self, v: usize) -> &[u32] {
        let n = self.d_max + 1;
        &self.votes[v * n..(v + 1) * n]
    }

    pub fn row_sum(&self, v: usize) -> u64 {
        self.row(v).iter().map(|&c| u64::from(c)).sum()
    }

    pub fn total(&self) -> u64 {
        self.votes.iter().map(|&c| u64::from(c)).sum()
    }

    /// Disparity with the most votes in row `v`, `None` for an empty row.
    pub fn row_argmax(&self, v: usize) -> Option<usize> {
        let row = self.row(v);
        let (d, &c) = row.iter().enumerate().rev().max_by_key(|(_, &c)| c)?;
        (c > 0).then_some(d)
    }

    /// Log-scaled heatmap, disparity along x and row along y.
    pub fn heatmap(&self) -> GrayImage {
        let max = self.votes.iter().copied().max().unwrap_or(0);
        log_heatmap(self.d_max + 1, self.height, max as f64, |d, v| self.get(d, v) as f64)
    }

    pub fn save_heatmap(&self, path: impl AsRef<Path>) -> Result<()> {
        self.heatmap().save(path)
    }
}

/// Vote weights over `(candidate column, edge row)` for rows
/// `first_row..=last_row`.
#[derive(Debug, Clone, PartialEq)]
pub struct UvpAccumulator {
    width: usize,
    first_row: usize,
    rows: usize,
    votes: Vec<f64>,
}

impl UvpAccumulator {
    pub fn new(width: usize, first_row: usize, rows: usize) -> Self {
        Self {
            width,
            first_row,
            rows,
            votes: vec![0.0; width * rows],
        }
    }

    /// Row-major weights, `votes[(v − first_row) * width + u]`.
    pub fn from_votes(width: usize, first_row: usize, rows: usize, votes: Vec<f64>) -> Result<Self> {
        if votes.len() != width * rows {
            return Err(Error::InvalidParameter(format!(
                "{} votes for a {width}x{rows} accumulator",
                votes.len()
            )));
        }
        if votes.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidParameter(
                "accumulator votes must be finite and non-negative".into(),
            ));
        }
        Ok(Self {
            width,
            first_row,
            rows,
            votes,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn first_row(&self) -> usize {
        self.first_row
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Vote at absolute image row `v`; zero outside the covered rows.
    #[inline]
    pub fn get(&self, u: usize, v: usize) -> f64 {
        if v < self.first_row || v >= self.first_row + self.rows {
            return 0.0;
        }
        self.votes[(v - self.first_row) * self.width + u]
    }

    fn add(&mut self, u: usize, v: usize, w: f64) {
        self.votes[(v - self.first_row) * self.width + u] += w;
    }

    pub fn total(&self) -> f64 {
        self.votes.iter().sum()
    }

    /// Column totals summed over all rows.
    pub fn column_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.width];
        for row in self.votes.chunks(self.width.max(1)) {
            for (s, &w) in sums.iter_mut().zip(row) {
                *s += w;
            }
        }
        sums
    }

    /// Averages each row over a `2·radius + 1` column window, truncated at
    /// the borders. Spreads every vote over the uncertainty of its tangent.
    pub fn spread(&self, radius: usize) -> Self {
        if radius == 0 || self.width == 0 {
            return self.clone();
        }
        let w = self.width;
        let mut votes = vec![0.0; self.votes.len()];
        let mut prefix = vec![0.0; w + 1];
        for (src, dst) in self.votes.chunks(w).zip(votes.chunks_mut(w)) {
            for u in 0..w {
                prefix[u + 1] = prefix[u] + src[u];
            }
            for (u, out) in dst.iter_mut().enumerate() {
                let lo = u.saturating_sub(radius);
                let hi = (u + radius).min(w - 1);
                *out = ((prefix[hi + 1] - prefix[lo]) / (2 * radius + 1) as f64).max(0.0);
            }
        }
        Self { votes, ..self.clone() }
    }

    pub fn heatmap(&self) -> GrayImage {
        let max = self.votes.iter().copied().fold(0.0, f64::max);
        log_heatmap(self.width, self.rows.max(1), max, |u, r| {
            if r < self.rows {
                self.votes[r * self.width + u]
            } else {
                0.0
            }
        })
    }

    pub fn save_heatmap(&self, path: impl AsRef<Path>) -> Result<()> {
        self.heatmap().save(path)
    }
}

fn log_heatmap(width: usize, height: usize, max: f64, f: impl Fn(usize, usize) -> f64) -> GrayImage {
    let norm = (1.0 + max).ln();
    GrayImage::from_fn(width.max(1), height.max(1), |x, y| {
        if norm <= 0.0 || x >= width || y >= height {
            return 0;
        }
        (255.0 * (1.0 + f(x, y)).ln() / norm).round().clamp(0.0, 255.0) as u8
    })
}

/// Vanishing-point column per row, `g(v) = β0 + β1·v + … + β4·v⁴`, paired
/// with the horizon row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VanishingPointTrajectory {
    pub beta: [f64; 5],
    pub v_h: f64,
}

impl VanishingPointTrajectory {
    /// Straight road: the vanishing point sits at one column for every row.
    pub fn constant(column: f64, v_h: f64) -> Self {
        Self {
            beta: [column, 0.0, 0.0, 0.0, 0.0],
            v_h,
        }
    }

    #[inline]
    pub fn eval(&self, v: f64) -> f64 {
        poly::eval(&self.beta, v)
    }

    /// True when `g` stays within `[−width, 2·width]` on the given rows.
    pub fn is_sane(&self, width: usize, rows: std::ops::RangeInclusive<usize>) -> bool {
        let w = width as f64;
        self.beta.iter().all(|b| b.is_finite())
            && rows.into_iter().all(|v| {
                let g = self.eval(v as f64);
                g >= -w && g <= 2.0 * w
            })
    }
}

/// One cell visited by an optimal path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathNode {
    /// Sweep coordinate: disparity level for the road path, row for the
    /// vanishing-point path.
    pub index: usize,
    /// Chosen cell within the level: row for the road path, column for the
    /// vanishing-point path.
    pub value: usize,
    pub votes: f64,
    /// Accumulated energy of the path up to and including this node.
    pub energy: f64,
}

/// Optimal path in sweep order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpPath {
    pub nodes: Vec<PathNode>,
    pub total_energy: f64,
}

impl DpPath {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("index,value,energy\n");
        for n in &self.nodes {
            let _ = writeln!(s, "{},{},{}", n.index, n.value, n.energy);
        }
        s
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

pub fn build_v_disparity(disp: &DisparityMap, d_max: usize) -> VDisparityMap {
    let mut vd = VDisparityMap::new(d_max, disp.height());
    let n = d_max + 1;
    for (i, &d) in disp.raw().iter().enumerate() {
        if d < 0.0 {
            continue;
        }
        let bin = (d.round() as usize).min(d_max);
        vd.votes[(i / disp.width()) * n + bin] += 1;
    }
    vd
}

/// Road profile path. Levels are swept from `d_max` down to 0; the node at
/// level `d` sits at row `v` and is reached from level `d + 1` at row
/// `v + τ`, `τ ∈ [0, 6]`, so disparity never increases going up the image.
/// Ties go to the smaller step, and among equal final energies to the
/// smaller row.
pub fn dp_road_profile(vd: &VDisparityMap, lambda_v: f64) -> Result<DpPath> {
    if vd.height == 0 {
        return Err(Error::EmptyInput("v-disparity map has no rows".into()));
    }
    check_lambda(lambda_v)?;
    let h = vd.height;
    let levels = vd.d_max + 1;
    // energy[d * h + v], step[d * h + v] = τ into level d + 1
    let mut energy = vec![0.0f64; levels * h];
    let mut step = vec![0u8; levels * h];
    for v in 0..h {
        energy[vd.d_max * h + v] = -f64::from(vd.get(vd.d_max, v));
    }
    for d in (0..vd.d_max).rev() {
        let (cur, prev) = energy.split_at_mut((d + 1) * h);
        let cur = &mut cur[d * h..];
        let prev = &prev[..h];
        for v in 0..h {
            let mut best = prev[v];
            let mut best_tau = 0;
            for tau in 1..=ROAD_MAX_STEP.min(h - 1 - v) {
                let e = prev[v + tau] + lambda_v * tau as f64;
                if e < best {
                    best = e;
                    best_tau = tau;
                }
            }
            cur[v] = best - f64::from(vd.get(d, v));
            step[d * h + v] = best_tau as u8;
        }
    }

    let mut v = argmin(&energy[..h]);
    let total_energy = energy[v];
    let mut nodes = Vec::with_capacity(levels);
    for d in 0..levels {
        nodes.push(PathNode {
            index: d,
            value: v,
            votes: f64::from(vd.get(d, v)),
            energy: energy[d * h + v],
        });
        v += step[d * h + v] as usize;
    }
    nodes.reverse();
    Ok(DpPath { nodes, total_energy })
}

/// Vanishing-point column path. Rows are swept bottom to top; consecutive
/// rows differ by at most 5 columns. Ties go to the smaller `|τ|`, then to
/// the leftward step, and among equal final energies to the smaller column.
pub fn dp_uvp(acc: &UvpAccumulator, lambda_u: f64) -> Result<DpPath> {
    if acc.rows == 0 || acc.width == 0 {
        return Err(Error::EmptyInput("vanishing-point accumulator is empty".into()));
    }
    check_lambda(lambda_u)?;
    let w = acc.width;
    let rows = acc.rows;
    let mut energy = vec![0.0f64; rows * w];
    let mut step = vec![0i8; rows * w];
    let last = rows - 1;
    for u in 0..w {
        energy[last * w + u] = -acc.votes[last * w + u];
    }
    for r in (0..last).rev() {
        let (cur, below) = energy.split_at_mut((r + 1) * w);
        let cur = &mut cur[r * w..];
        let below = &below[..w];
        for u in 0..w {
            let mut best = below[u];
            let mut best_tau = 0i64;
            for k in 1..=UVP_MAX_STEP as i64 {
                for tau in [-k, k] {
                    let t = u as i64 + tau;
                    if t < 0 || t >= w as i64 {
                        continue;
                    }
                    let e = below[t as usize] + lambda_u * k as f64;
                    if e < best {
                        best = e;
                        best_tau = tau;
                    }
                }
            }
            cur[u] = best - acc.votes[r * w + u];
            step[r * w + u] = best_tau as i8;
        }
    }

    let mut u = argmin(&energy[..w]);
    let total_energy = energy[u];
    let mut nodes = Vec::with_capacity(rows);
    for r in 0..rows {
        nodes.push(PathNode {
            index: acc.first_row + r,
            value: u,
            votes: acc.votes[r * w + u],
            energy: energy[r * w + u],
        });
        u = (u as i64 + i64::from(step[r * w + u])) as usize;
    }
    nodes.reverse();
    Ok(DpPath { nodes, total_energy })
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "smoothness weight must be >= 0, got {lambda}"
        )));
    }
    Ok(())
}

/// First index of the minimum.
fn argmin(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x < xs[best] {
            best = i;
        }
    }
    best
}

/// Node weights for a fit: the votes, or uniform if fewer than `need`
/// distinct rows carry any.
fn path_weights(path: &DpPath, need: usize, row: impl Fn(&PathNode) -> usize) -> Vec<f64> {
    let mut voted: Vec<usize> = path.nodes.iter().filter(|n| n.votes > 0.0).map(row).collect();
    voted.sort_unstable();
    voted.dedup();
    if voted.len() >= need {
        path.nodes.iter().map(|n| n.votes).collect()
    } else {
        vec![1.0; path.nodes.len()]
    }
}

/// Vote-weighted parabola through the road path's `(row, disparity)` nodes.
pub fn fit_profile_from_path(path: &DpPath) -> Result<RoadProfileModel> {
    let points: Vec<(f64, f64)> = path.nodes.iter().map(|n| (n.value as f64, n.index as f64)).collect();
    let weights = path_weights(path, 3, |n| n.value);
    fit_parabola_lsf(&points, Some(&weights))
}

/// Vote-weighted quartic through the vanishing-point path's `(row, column)`
/// nodes.
pub fn fit_uvp_quartic(path: &DpPath, v_h: f64) -> Result<VanishingPointTrajectory> {
    let mut rows: Vec<usize> = path.nodes.iter().map(|n| n.index).collect();
    rows.sort_unstable();
    rows.dedup();
    if rows.len() < 5 {
        return Err(Error::DegenerateInput(format!(
            "quartic fit needs 5 distinct rows, path has {}",
            rows.len()
        )));
    }
    let xs: Vec<f64> = path.nodes.iter().map(|n| n.index as f64).collect();
    let ys: Vec<f64> = path.nodes.iter().map(|n| n.value as f64).collect();
    let weights = path_weights(path, 5, |n| n.index);
    let c = poly::fit_weighted(&xs, &ys, Some(&weights), 4)?;
    Ok(VanishingPointTrajectory {
        beta: [c[0], c[1], c[2], c[3], c[4]],
        v_h,
    })
}

/// Projects each strong masked edge's tangent line to the horizon row and
/// votes with the gradient magnitude at the crossing column.
pub fn build_uvp_accumulator(grad: &GradientField, mask: &BinaryMask, v_h: f64, mag_threshold: f64) -> UvpAccumulator {
    let width = grad.width();
    let height = grad.height();
    let first_row = if v_h < 0.0 {
        0
    } else {
        (v_h.floor() as usize + 1).min(height)
    };
    let mut acc = UvpAccumulator::new(width, first_row, height - first_row);
    for v in first_row..height {
        for u in 0..width {
            if !mask.get(u, v) {
                continue;
            }
            let idx = grad.index(u, v);
            let mag = f64::from(grad.magnitude[idx]);
            if mag < mag_threshold || mag == 0.0 {
                continue;
            }
            let phi = f64::from(grad.orientation[idx]) + std::f64::consts::FRAC_PI_2;
            let (s, c) = phi.sin_cos();
            if s.abs() < MIN_TANGENT_SIN {
                continue;
            }
            let uc = u as f64 + (v_h - v as f64) * c / s;
            let col = uc.round();
            if uc >= 0.0 && col < width as f64 {
                acc.add(col as usize, v, mag);
            }
        }
    }
    acc
}
