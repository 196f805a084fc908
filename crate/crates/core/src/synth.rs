//! Synthetic rectified stereo scenes with exact ground truth.
//!
//! The background layer (textured road, lane stripes, sky) and the obstacle
//! layer are rendered procedurally. The left view composites them directly;
//! the right view resamples each layer at `u + d`, so road surface points
//! keep their texture between views.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagery::GrayImage;
use crate::lanes::{lane_column, lane_polyline, BinaryMask, Lane};
use crate::roadmodel::{horizon_row, RoadProfileModel};
use crate::stereo::DisparityMap;
use crate::vprofile::VanishingPointTrajectory;

const SKY: f32 = 200.0;
const ROAD_BASE: f32 = 95.0;
const STRIPE_GAIN: f32 = 80.0;
const OBSTACLE_BASE: f32 = 60.0;
const TEXTURE_RADIUS: usize = 2;

/// Fronto-parallel rectangle at constant disparity. Ranges are inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub u: [usize; 2],
    pub v: [usize; 2],
    pub disparity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub width: usize,
    pub height: usize,
    pub d_max: usize,
    pub road_alpha: [f64; 3],
    /// Bottom-row centerlines of the lane markings.
    pub lane_offsets: Vec<f64>,
    /// Marking width on the bottom row.
    pub lane_width: f64,
    /// Vanishing-point column per row, `g(v)`.
    pub uvp_beta: [f64; 5],
    pub texture_seed: u64,
    /// Advanced by [`next_frame`] so consecutive frames get fresh texture.
    #[serde(default)]
    pub frame: u64,
    pub noise_sigma: f64,
    /// Standard deviation of the road texture in grey levels; obstacles get
    /// half as much again.
    #[serde(default = "default_texture_std")]
    pub texture_std: f64,
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
}

pub const DEFAULT_TEXTURE_STD: f64 = 16.0;

fn default_texture_std() -> f64 {
    DEFAULT_TEXTURE_STD
}

impl SceneConfig {
    pub fn model(&self) -> RoadProfileModel {
        let [a0, a1, a2] = self.road_alpha;
        RoadProfileModel::new(a0, a1, a2)
    }

    /// Horizon row used for the geometry; far above the image when the
    /// profile never reaches zero.
    pub fn horizon(&self) -> f64 {
        match horizon_row(&self.model(), self.height) {
            Ok(h) if !h.clamped => h.row,
            _ => -(self.height as f64),
        }
    }

    pub fn trajectory(&self) -> VanishingPointTrajectory {
        VanishingPointTrajectory {
            beta: self.uvp_beta,
            v_h: self.horizon(),
        }
    }

    pub fn bottom_row(&self) -> usize {
        self.height - 1
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.width < 32 || self.height < 32 {
            return bad(format!(
                "scene must be at least 32x32, got {}x{}",
                self.width, self.height
            ));
        }
        if !self.road_alpha.iter().chain(&self.uvp_beta).all(|x| x.is_finite()) {
            return bad("non-finite scene coefficients".into());
        }
        let model = self.model();
        match horizon_row(&model, self.height) {
            Ok(h) if h.clamped && h.row > 0.0 => {
                return bad("road profile horizon lies below the image".into());
            }
            _ => {}
        }
        let v_h = self.horizon();
        for v in 0..self.height {
            if (v as f64) < v_h {
                continue;
            }
            let f = model.eval(v as f64);
            if f < -1e-9 || f > self.d_max as f64 {
                return bad(format!(
                    "road disparity {f:.3} at row {v} is outside [0, {}]",
                    self.d_max
                ));
            }
        }
        if !(self.lane_width > 0.0) {
            return bad("lane width must be positive".into());
        }
        for &o in &self.lane_offsets {
            if !(o >= 0.0 && o < self.width as f64) {
                return bad(format!("lane offset {o} is outside the bottom row"));
            }
        }
        if !(self.texture_std >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "texture_std must be >= 0, got {}",
                self.texture_std
            )));
        }
        if !(self.noise_sigma >= 0.0) {
            return bad("noise sigma must be non-negative".into());
        }
        for ob in &self.obstacles {
            if ob.u[0] > ob.u[1] || ob.v[0] > ob.v[1] || ob.u[1] >= self.width || ob.v[1] >= self.height {
                return bad(format!("obstacle {ob:?} is outside the image"));
            }
            if !(ob.disparity >= 0.0 && ob.disparity <= self.d_max as f64) {
                return bad(format!(
                    "obstacle disparity {} is outside [0, {}]",
                    ob.disparity, self.d_max
                ));
            }
        }
        Ok(())
    }
}

/// Per-frame change applied by [`next_frame`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Drift {
    pub d_alpha: [f64; 3],
    /// Either empty or one entry per lane.
    pub d_offsets: Vec<f64>,
}

pub fn next_frame(cfg: &SceneConfig, drift: &Drift) -> Result<SceneConfig> {
    if !drift.d_offsets.is_empty() && drift.d_offsets.len() != cfg.lane_offsets.len() {
        return Err(Error::InvalidConfig(format!(
            "{} offset drifts for {} lanes",
            drift.d_offsets.len(),
            cfg.lane_offsets.len()
        )));
    }
    let mut next = cfg.clone();
    for (a, d) in next.road_alpha.iter_mut().zip(drift.d_alpha) {
        *a += d;
    }
    for (o, d) in next.lane_offsets.iter_mut().zip(&drift.d_offsets) {
        *o += d;
    }
    next.frame += 1;
    next.validate()?;
    Ok(next)
}

/// Random drift that shifts the road profile by at most `max_shift`
/// disparities and every lane by the same amount of at most one pixel per
/// frame.
pub fn sample_drift(cfg: &SceneConfig, seed: u64, max_shift: f64) -> Drift {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xD1F7);
    let shift = if max_shift > 0.0 {
        rng.gen_range(-max_shift..=max_shift)
    } else {
        0.0
    };
    let lateral = rng.gen_range(-1.0..=1.0);
    Drift {
        d_alpha: [shift, 0.0, 0.0],
        d_offsets: vec![lateral; cfg.lane_offsets.len()],
    }
}

/// `frames` configs starting at `first`, each drifted from the one before.
pub fn sequence_configs(first: &SceneConfig, drift: &Drift, frames: usize) -> Result<Vec<SceneConfig>> {
    first.validate()?;
    let mut out = vec![first.clone()];
    while out.len() < frames {
        let next = next_frame(&out[out.len() - 1], drift)?;
        out.push(next);
    }
    out.truncate(frames);
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct SceneTruth {
    pub config: SceneConfig,
    pub left: GrayImage,
    pub right: GrayImage,
    pub gt_disparity: DisparityMap,
    pub gt_model: RoadProfileModel,
    pub gt_lanes: Vec<Lane>,
    pub gt_traj: VanishingPointTrajectory,
    pub road_mask_truth: BinaryMask,
}

/// Serialized ground truth of one scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub config: SceneConfig,
    pub model: RoadProfileModel,
    pub lanes: Vec<Lane>,
    pub trajectory: VanishingPointTrajectory,
}

impl SceneTruth {
    pub fn record(&self) -> TruthRecord {
        TruthRecord {
            config: self.config.clone(),
            model: self.gt_model,
            lanes: self.gt_lanes.clone(),
            trajectory: self.gt_traj,
        }
    }

    /// Writes `left.png`, `right.png`, `gt_disp.png` and `truth.json`.
    pub fn write_bundle(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        self.left.save(dir.join("left.png"))?;
        self.right.save(dir.join("right.png"))?;
        self.gt_disparity.save_png16(dir.join("gt_disp.png"))?;
        std::fs::write(dir.join("truth.json"), serde_json::to_string_pretty(&self.record())?)?;
        Ok(())
    }

    /// Writes `NNNNNN_left.png` and `NNNNNN_right.png` into `seq_dir` and
    /// `NNNNNN_truth.json` into `truth_dir`.
    pub fn write_frame(&self, seq_dir: impl AsRef<Path>, truth_dir: impl AsRef<Path>, index: usize) -> Result<()> {
        let (seq_dir, truth_dir) = (seq_dir.as_ref(), truth_dir.as_ref());
        std::fs::create_dir_all(seq_dir)?;
        std::fs::create_dir_all(truth_dir)?;
        self.left.save(seq_dir.join(format!("{index:06}_left.png")))?;
        self.right.save(seq_dir.join(format!("{index:06}_right.png")))?;
        std::fs::write(
            truth_dir.join(format!("{index:06}_truth.json")),
            serde_json::to_string_pretty(&self.record())?,
        )?;
        Ok(())
    }
}

pub fn read_truth(path: impl AsRef<Path>) -> Result<TruthRecord> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::FileNotFound(path.to_path_buf()));
    }
    let s = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&s)?)
}

/// Box-filtered uniform noise, roughly zero mean.
struct Texture {
    width: usize,
    values: Vec<f32>,
}

impl Texture {
    fn new(rng: &mut ChaCha8Rng, width: usize, height: usize, gain: f32) -> Self {
        let r = TEXTURE_RADIUS;
        let (pw, ph) = (width + 2 * r, height + 2 * r);
        let raw: Vec<f32> = (0..pw * ph).map(|_| rng.gen::<f32>() - 0.5).collect();
        // integral image with a zero border row and column
        let mut sat = vec![0.0f64; (pw + 1) * (ph + 1)];
        for y in 0..ph {
            let mut row = 0.0f64;
            for x in 0..pw {
                row += f64::from(raw[y * pw + x]);
                sat[(y + 1) * (pw + 1) + x + 1] = sat[y * (pw + 1) + x + 1] + row;
            }
        }
        let side = 2 * r + 1;
        let area = (side * side) as f64;
        let mut values = vec![0.0f32; width * height];
        for y in 0..height {
            for x in 0..width {
                let (x1, y1) = (x + side, y + side);
                let s =
                    sat[y1 * (pw + 1) + x1] - sat[y * (pw + 1) + x1] - sat[y1 * (pw + 1) + x] + sat[y * (pw + 1) + x];
                values[y * width + x] = gain * 255.0 * (s / area) as f32;
            }
        }
        Self { width, values }
    }

    #[inline]
    fn at(&self, x: usize, y: usize) -> f32 {
        self.values[y * self.width + x]
    }

    /// Linear interpolation along the row, clamped to the stored columns.
    fn sample(&self, x: f64, y: usize) -> f32 {
        let x = x.clamp(0.0, (self.width - 1) as f64);
        let x0 = x.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let t = (x - x0 as f64) as f32;
        self.at(x0, y) * (1.0 - t) + self.at(x1, y) * t
    }
}

/// Fraction of the pixel `[u − ½, u + ½]` covered by `[lo, hi]`.
#[inline]
fn coverage(u: f64, lo: f64, hi: f64) -> f64 {
    ((u + 0.5).min(hi) - (u - 0.5).max(lo)).max(0.0)
}

pub fn generate_scene(cfg: &SceneConfig) -> Result<SceneTruth> {
    cfg.validate()?;
    let (w, h) = (cfg.width, cfg.height);
    let model = cfg.model();
    let traj = cfg.trajectory();
    let v_h = traj.v_h;
    let bottom = cfg.bottom_row() as f64;
    let seed = cfg.texture_seed ^ cfg.frame.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // background columns reach past the right border by the largest shift
    let bw = w + cfg.d_max + 2;
    // a box mean of uniform [−½, ½] noise over 25 samples has std 1/(2·√3·5)
    let gain = (cfg.texture_std * 10.0 * 3f64.sqrt() / 255.0) as f32;
    let road_tex = Texture::new(&mut rng, bw, h, gain);
    let obstacle_tex = Texture::new(&mut rng, w, h, 1.5 * gain);

    let mut background = vec![0.0f32; bw * h];
    for v in 0..h {
        let vf = v as f64;
        let row = &mut background[v * bw..(v + 1) * bw];
        if vf < v_h {
            row.fill(SKY);
            continue;
        }
        for (x, px) in row.iter_mut().enumerate() {
            *px = ROAD_BASE + road_tex.at(x, v);
        }
        if vf <= v_h {
            continue;
        }
        let scale = (vf - v_h) / (bottom - v_h);
        let half = 0.5 * cfg.lane_width * scale;
        for &offset in &cfg.lane_offsets {
            let c = lane_column(&traj, offset, bottom, vf);
            let (lo, hi) = (c - half, c + half);
            let x0 = (lo - 1.0).floor().max(0.0) as usize;
            let x1 = ((hi + 1.0).ceil().max(0.0) as usize).min(bw - 1);
            for x in x0..=x1 {
                row[x] += STRIPE_GAIN * coverage(x as f64, lo, hi) as f32;
            }
        }
    }

    let road_d = |v: usize| model.eval(v as f64).max(0.0);
    let obstacle_at = |u: f64, v: usize| {
        cfg.obstacles
            .iter()
            .filter(|o| v >= o.v[0] && v <= o.v[1] && u >= o.u[0] as f64 && u <= o.u[1] as f64)
            .max_by(|a, b| a.disparity.total_cmp(&b.disparity))
    };

    let mut left = vec![0.0f32; w * h];
    let mut right = vec![0.0f32; w * h];
    let mut gt = DisparityMap::new_invalid(w, h);
    let mut truth_mask = BinaryMask::filled(w, h, false);
    for v in 0..h {
        let vf = v as f64;
        let sky = vf < v_h;
        let d_road = if sky { 0.0 } else { road_d(v) };
        for u in 0..w {
            let ob = obstacle_at(u as f64, v);
            let idx = v * w + u;
            match ob {
                Some(o) => {
                    left[idx] = OBSTACLE_BASE + obstacle_tex.at(u, v);
                    gt.set(u, v, o.disparity as f32);
                }
                None => {
                    left[idx] = background[v * bw + u];
                    gt.set(u, v, d_road as f32);
                    truth_mask.set(u, v, !sky);
                }
            }
            // the nearest surface seen by the right camera at column u
            let ob_r = cfg
                .obstacles
                .iter()
                .filter(|o| {
                    let x = u as f64 + o.disparity;
                    v >= o.v[0] && v <= o.v[1] && x >= o.u[0] as f64 && x <= o.u[1] as f64
                })
                .max_by(|a, b| a.disparity.total_cmp(&b.disparity));
            right[idx] = match ob_r {
                Some(o) => OBSTACLE_BASE + obstacle_tex.sample(u as f64 + o.disparity, v),
                None => {
                    let x = (u as f64 + d_road).min((bw - 1) as f64);
                    let x0 = x.floor() as usize;
                    let x1 = (x0 + 1).min(bw - 1);
                    let t = (x - x0 as f64) as f32;
                    background[v * bw + x0] * (1.0 - t) + background[v * bw + x1] * t
                }
            };
        }
    }

    let noise = Normal::new(0.0, cfg.noise_sigma.max(0.0)).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut quantize = |buf: &[f32]| {
        let data = buf
            .iter()
            .map(|&x| {
                let n = if cfg.noise_sigma > 0.0 {
                    noise.sample(&mut rng)
                } else {
                    0.0
                };
                (f64::from(x) + n).round().clamp(0.0, 255.0) as u8
            })
            .collect();
        GrayImage::from_vec(w, h, data)
    };
    let left = quantize(&left)?;
    let right = quantize(&right)?;

    let gt_lanes = cfg
        .lane_offsets
        .iter()
        .map(|&o| Lane {
            offset: o,
            pair: [o - 0.5 * cfg.lane_width, o + 0.5 * cfg.lane_width],
            samples: lane_polyline(&traj, o, cfg.bottom_row()),
        })
        .collect();

    Ok(SceneTruth {
        config: cfg.clone(),
        left,
        right,
        gt_disparity: gt,
        gt_model: model,
        gt_lanes,
        gt_traj: traj,
        road_mask_truth: truth_mask,
    })
}

/// Families of randomized scenes used by the evaluation suites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SceneKind {
    /// Linear road profile, straight lanes.
    Straight,
    /// Quadratic road profile (`α2 ≠ 0`).
    Curved,
    /// Linear profile with a standing obstacle in the ego lane.
    Obstacle,
}

impl SceneKind {
    pub const ALL: [SceneKind; 3] = [SceneKind::Straight, SceneKind::Curved, SceneKind::Obstacle];
}

/// Profile whose horizon is `v_h` and disparity at `bottom` is `f_bottom`,
/// with quadratic coefficient `a2`.
pub fn profile_through(v_h: f64, bottom: f64, f_bottom: f64, a2: f64) -> RoadProfileModel {
    // f(v) = a1·(v − v_h) + a2·(v − v_h)²
    let l = bottom - v_h;
    let a1 = (f_bottom - a2 * l * l) / l;
    RoadProfileModel::new(-a1 * v_h + a2 * v_h * v_h, a1 - 2.0 * a2 * v_h, a2)
}

/// Random driving-like scene of the given kind. Road slopes stay within
/// `[1/6, 0.5]` disparity per row so the road path is trackable by the
/// profile optimization.
pub fn sample_scene(kind: SceneKind, seed: u64, width: usize, height: usize) -> SceneConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bottom = (height - 1) as f64;
    let hf = height as f64;
    let v_h = rng.gen_range(0.38 * hf..0.45 * hf).round() + rng.gen_range(0.0..1.0f64);
    let l = bottom - v_h;
    let f_bottom = rng.gen_range(0.23..0.27) * l;
    let a2 = match kind {
        SceneKind::Curved => {
            // slope ratio between the horizon and the bottom row is (1 ∓ k)/(1 ± k)
            let mag = rng.gen_range(0.1..0.25) * f_bottom / (l * l);
            if rng.gen_bool(0.5) {
                mag
            } else {
                -mag
            }
        }
        _ => 0.0,
    };
    let model = profile_through(v_h, bottom, f_bottom, a2);

    let w = width as f64;
    let vp = w * rng.gen_range(0.45..0.55);
    let spacing = w * rng.gen_range(0.28..0.34);
    let lanes = rng.gen_range(2..=4usize);
    let first = -((lanes - 1) as f64) / 2.0;
    let offsets: Vec<f64> = (0..lanes)
        .map(|k| vp + (first + k as f64) * spacing + rng.gen_range(-6.0..6.0))
        .filter(|&o| o >= 0.05 * w && o <= 0.95 * w)
        .collect();
    let lane_width = rng.gen_range(12.0..18.0);

    let mut obstacles = Vec::new();
    if kind == SceneKind::Obstacle {
        // stands on the road between the two central markings
        let depth = rng.gen_range(0.2..0.55) * l;
        let vb = (v_h + depth).round();
        let scale = (vb - v_h) / l;
        let center = vp + rng.gen_range(-0.1..0.1) * spacing * scale;
        let half_w = 0.3 * spacing * scale;
        let tall = 0.45 * spacing * scale;
        obstacles.push(Obstacle {
            u: [
                (center - half_w).max(0.0) as usize,
                ((center + half_w) as usize).min(width - 1),
            ],
            v: [(vb - tall).max(0.0) as usize, vb as usize],
            disparity: model.eval(vb),
        });
    }

    SceneConfig {
        width,
        height,
        d_max: 64,
        road_alpha: model.alpha,
        lane_offsets: offsets,
        lane_width,
        uvp_beta: [vp, 0.0, 0.0, 0.0, 0.0],
        texture_seed: seed,
        frame: 0,
        noise_sigma: 2.0,
        texture_std: DEFAULT_TEXTURE_STD,
        obstacles,
    }
}
