//! Quadratic road disparity profile `f(v) = α0 + α1·v + α2·v²`.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly;

/// Road disparity as a function of image row. The all-zero model is the
/// uninitialized state used before the first fit.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RoadProfileModel {
    pub alpha: [f64; 3],
}

impl RoadProfileModel {
    pub const UNINITIALIZED: Self = Self { alpha: [0.0; 3] };

    pub fn new(alpha0: f64, alpha1: f64, alpha2: f64) -> Self {
        Self {
            alpha: [alpha0, alpha1, alpha2],
        }
    }

    pub fn is_uninitialized(&self) -> bool {
        self.alpha == [0.0; 3]
    }

    pub fn is_finite(&self) -> bool {
        self.alpha.iter().all(|a| a.is_finite())
    }

    #[inline]
    pub fn eval(&self, v: f64) -> f64 {
        let [a0, a1, a2] = self.alpha;
        a0 + v * (a1 + v * a2)
    }

    #[inline]
    pub fn slope(&self, v: f64) -> f64 {
        self.alpha[1] + 2.0 * self.alpha[2] * v
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model is always serializable")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s)?;
        if !m.is_finite() {
            return Err(Error::InvalidParameter("road model coefficients must be finite".into()));
        }
        Ok(m)
    }
}

#[inline]
pub fn eval_profile(model: &RoadProfileModel, v: f64) -> f64 {
    model.eval(v)
}

/// Weighted least-squares parabola through `(v, d)` points.
pub fn fit_parabola_lsf(points: &[(f64, f64)], weights: Option<&[f64]>) -> Result<RoadProfileModel> {
    let (vs, ds): (Vec<f64>, Vec<f64>) = points.iter().copied().unzip();
    let c = poly::fit_weighted(&vs, &ds, weights, 2)?;
    Ok(RoadProfileModel::new(c[0], c[1], c[2]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RansacParams {
    pub iterations: usize,
    pub inlier_tol: f64,
    pub seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            iterations: 200,
            inlier_tol: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RansacResult {
    pub model: RoadProfileModel,
    /// `n_I / (n_I + n_O)`.
    pub inlier_ratio: f64,
    pub inlier_count: usize,
    /// Indices into the input of the winning consensus set.
    pub inliers: Vec<usize>,
}

/// RANSAC over minimal three-row samples, keeping the hypothesis with the
/// largest consensus (ties broken by the smaller absolute residual sum) and
/// refitting it by least squares on its inliers.
pub fn fit_parabola_ransac(points: &[(f64, f64)], params: &RansacParams) -> Result<RansacResult> {
    if params.iterations == 0 || !(params.inlier_tol > 0.0) {
        return Err(Error::InvalidParameter(
            "RANSAC needs iterations >= 1 and inlier_tol > 0".into(),
        ));
    }
    let mut rows: Vec<f64> = points.iter().map(|p| p.0).collect();
    rows.sort_by(f64::total_cmp);
    rows.dedup();
    if rows.len() < 3 {
        return Err(Error::DegenerateInput(format!(
            "RANSAC needs 3 distinct rows, got {}",
            rows.len()
        )));
    }

    let n = points.len();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut best: Option<(usize, f64, RoadProfileModel)> = None;
    for _ in 0..params.iterations {
        let idx = if n == 3 {
            vec![0, 1, 2]
        } else {
            sample(&mut rng, n, 3).into_vec()
        };
        let (a, b, c) = (points[idx[0]], points[idx[1]], points[idx[2]]);
        if a.0 == b.0 || a.0 == c.0 || b.0 == c.0 {
            continue;
        }
        let Ok(coef) = poly::interpolate(&[a.0, b.0, c.0], &[a.1, b.1, c.1]) else {
            continue;
        };
        let hyp = RoadProfileModel::new(coef[0], coef[1], coef[2]);
        let (count, resid) = points.iter().fold((0usize, 0.0f64), |(k, s), &(v, d)| {
            let r = (d - hyp.eval(v)).abs();
            if r <= params.inlier_tol {
                (k + 1, s + r)
            } else {
                (k, s)
            }
        });
        let better = match best {
            None => true,
            Some((bc, br, _)) => count > bc || (count == bc && resid < br),
        };
        if better {
            best = Some((count, resid, hyp));
        }
    }
    let Some((_, _, hyp)) = best else {
        return Err(Error::DegenerateInput(
            "no RANSAC sample spanned three distinct rows".into(),
        ));
    };

    let inliers: Vec<usize> = (0..n)
        .filter(|&i| (points[i].1 - hyp.eval(points[i].0)).abs() <= params.inlier_tol)
        .collect();
    let support: Vec<(f64, f64)> = inliers.iter().map(|&i| points[i]).collect();
    let model = fit_parabola_lsf(&support, None).unwrap_or(hyp);
    Ok(RansacResult {
        model,
        inlier_ratio: inliers.len() as f64 / n as f64,
        inlier_count: inliers.len(),
        inliers,
    })
}

/// Road/sky boundary row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Horizon {
    pub row: f64,
    /// Set when the root fell outside the image and was clamped.
    pub clamped: bool,
}

/// Root of `f(v) = 0` where disparity increases going down the image.
pub fn horizon_row(model: &RoadProfileModel, image_height: usize) -> Result<Horizon> {
    if model.is_uninitialized() {
        return Err(Error::NoHorizon("road model is uninitialized".into()));
    }
    let [a0, a1, a2] = model.alpha;
    let root = if a2 == 0.0 {
        if a1 <= 0.0 {
            return Err(Error::NoHorizon(format!("linear profile with non-positive slope {a1}")));
        }
        -a0 / a1
    } else {
        let disc = a1 * a1 - 4.0 * a2 * a0;
        if disc <= 0.0 {
            return Err(Error::NoHorizon(format!("discriminant {disc} has no crossing root")));
        }
        let sq = disc.sqrt();
        let q = -0.5 * (a1 + a1.signum() * sq);
        let mut roots = vec![q / a2];
        if q != 0.0 {
            roots.push(a0 / q);
        }
        roots
            .into_iter()
            .filter(|&r| model.slope(r) > 0.0)
            .fold(None, |acc: Option<f64>, r| match acc {
                Some(a) if model.slope(a) >= model.slope(r) => Some(a),
                _ => Some(r),
            })
            .ok_or_else(|| Error::NoHorizon("no root with increasing disparity".into()))?
    };
    let max_row = image_height.saturating_sub(1) as f64;
    let clamped_row = root.clamp(0.0, max_row);
    Ok(Horizon {
        row: clamped_row,
        clamped: clamped_row != root,
    })
}

/// Inclusive integer disparity interval; empty when `lo > hi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchRange {
    pub lo: i64,
    pub hi: i64,
}

impl SearchRange {
    pub fn is_empty(&self) -> bool {
        self.lo > self.hi
    }

    pub fn len(&self) -> usize {
        if self.is_empty() {
            0
        } else {
            (self.hi - self.lo + 1) as usize
        }
    }

    pub fn contains(&self, d: f64) -> bool {
        d >= self.lo as f64 && d <= self.hi as f64
    }
}

/// Candidate disparities `[round(f(v)) − τ, round(f(v)) + τ] ∩ [0, d_max]`;
/// the full range when the model is uninitialized.
pub fn row_search_range(model: &RoadProfileModel, v: f64, tau: u32, d_max: u32) -> SearchRange {
    let d_max = i64::from(d_max);
    if model.is_uninitialized() {
        return SearchRange { lo: 0, hi: d_max };
    }
    let center = model.eval(v).round();
    let tau = i64::from(tau);
    // saturate absurd extrapolations before the integer cast
    let center = center.clamp(-(d_max + tau + 1) as f64, (2 * d_max + tau + 1) as f64) as i64;
    SearchRange {
        lo: (center - tau).max(0),
        hi: (center + tau).min(d_max),
    }
}
