//! Sparse corner detection and left–right matching for bootstrapping the
//! road model on the first frame of a sequence.
//!
//! The detector is a single-scale FAST-9 segment test on the 16-sample
//! Bresenham circle of radius 3 followed by 3×3 non-maximum suppression. The
//! descriptor is a 512-bit string of intensity comparisons between points of
//! a fixed concentric sampling pattern on a Gaussian-smoothed image. Rectified
//! stereo pairs share scale and orientation, so neither is normalized.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::imagery::GrayImage;

pub const DESCRIPTOR_BITS: usize = 512;
const DESCRIPTOR_WORDS: usize = DESCRIPTOR_BITS / 64;
/// Outermost ring of the sampling pattern.
pub const PATTERN_RADIUS: usize = 12;
const ARC_LENGTH: usize = 9;

const CIRCLE: [(isize, isize); 16] = [
    (0, -3),
    (1, -3),
    (2, -2),
    (3, -1),
    (3, 0),
    (3, 1),
    (2, 2),
    (1, 3),
    (0, 3),
    (-1, 3),
    (-2, 2),
    (-3, 1),
    (-3, 0),
    (-3, -1),
    (-2, -2),
    (-1, -3),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Descriptor(pub [u64; DESCRIPTOR_WORDS]);

impl Descriptor {
    #[inline]
    pub fn hamming(&self, other: &Self) -> u32 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a ^ b).count_ones()).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Keypoint {
    pub u: usize,
    pub v: usize,
    pub score: f64,
    pub descriptor: Descriptor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Correspondence {
    pub left: Keypoint,
    pub right: Keypoint,
    pub distance: u32,
    /// `u_left − u_right`.
    pub disparity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparseVDPoint {
    pub v: f64,
    pub d: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureParams {
    pub threshold: u8,
    pub max_count: usize,
    pub max_hamming: u32,
}

impl Default for FeatureParams {
    fn default() -> Self {
        Self {
            threshold: 25,
            max_count: 2000,
            max_hamming: 100,
        }
    }
}

struct Pattern {
    points: Vec<(f64, f64)>,
    pairs: Vec<(usize, usize)>,
}

/// 60 points on rings of radius 0/4/8/12 holding 1/8/19/32 points; the 512
/// closest point pairs are compared.
fn pattern() -> &'static Pattern {
    static PATTERN: OnceLock<Pattern> = OnceLock::new();
    PATTERN.get_or_init(|| {
        let mut points = Vec::with_capacity(60);
        for (radius, count) in [(0.0, 1usize), (4.0, 8), (8.0, 19), (12.0, 32)] {
            for k in 0..count {
                let a = 2.0 * PI * k as f64 / count as f64;
                points.push((radius * a.cos(), radius * a.sin()));
            }
        }
        let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
        for i in 0..points.len() {
            for j in i + 1..points.len() {
                let d = (points[i].0 - points[j].0).hypot(points[i].1 - points[j].1);
                pairs.push((d, i, j));
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let pairs = pairs
            .into_iter()
            .take(DESCRIPTOR_BITS)
            .map(|(_, i, j)| (i, j))
            .collect();
        Pattern { points, pairs }
    })
}

/// Separable 5-tap Gaussian (σ ≈ 1) with clamped borders.
fn smooth(img: &GrayImage) -> Vec<f32> {
    const K: [f32; 5] = [0.0545, 0.2442, 0.4026, 0.2442, 0.0545];
    let (w, h) = img.dims();
    let mut tmp = vec![0.0f32; w * h];
    for v in 0..h {
        for u in 0..w {
            let mut s = 0.0;
            for (k, &wt) in K.iter().enumerate() {
                let x = (u as isize + k as isize - 2).clamp(0, w as isize - 1) as usize;
                s += wt * f32::from(img.get(x, v));
            }
            tmp[v * w + u] = s;
        }
    }
    let mut out = vec![0.0f32; w * h];
    for v in 0..h {
        for u in 0..w {
            let mut s = 0.0;
            for (k, &wt) in K.iter().enumerate() {
                let y = (v as isize + k as isize - 2).clamp(0, h as isize - 1) as usize;
                s += wt * tmp[y * w + u];
            }
            out[v * w + u] = s;
        }
    }
    out
}

/// Segment-test score: sum of absolute center differences over the longest
/// qualifying arc, or `None` when no arc of ≥ 9 samples qualifies.
fn corner_score(img: &GrayImage, u: usize, v: usize, threshold: i32) -> Option<f64> {
    let c = i32::from(img.get(u, v));
    let mut diffs = [0i32; 16];
    for (k, &(dx, dy)) in CIRCLE.iter().enumerate() {
        diffs[k] = i32::from(img.get((u as isize + dx) as usize, (v as isize + dy) as usize)) - c;
    }
    let mut best: Option<f64> = None;
    for sign in [1i32, -1] {
        let mut run = 0usize;
        let mut sum = 0i64;
        let mut best_run = 0usize;
        let mut best_sum = 0i64;
        // two laps so arcs wrapping past sample 15 are counted
        for k in 0..32 {
            let d = sign * diffs[k % 16];
            if d > threshold {
                run += 1;
                sum += i64::from(d);
                if run > best_run || (run == best_run && sum > best_sum) {
                    best_run = run.min(16);
                    best_sum = sum;
                }
                if run == 16 {
                    break;
                }
            } else {
                run = 0;
                sum = 0;
            }
        }
        if best_run >= ARC_LENGTH {
            let s = best_sum as f64;
            best = Some(best.map_or(s, |b: f64| b.max(s)));
        }
    }
    best
}

/// Detects up to `max_count` corners and describes them.
pub fn detect_keypoints(img: &GrayImage, threshold: u8, max_count: usize) -> Vec<Keypoint> {
    let (w, h) = img.dims();
    let m = PATTERN_RADIUS;
    if w <= 2 * m + 1 || h <= 2 * m + 1 || max_count == 0 {
        return Vec::new();
    }
    let threshold = i32::from(threshold.max(1));
    let mut scores = vec![0.0f64; w * h];
    for v in m..h - m {
        for u in m..w - m {
            if let Some(s) = corner_score(img, u, v, threshold) {
                scores[v * w + u] = s;
            }
        }
    }

    let mut found: Vec<(usize, usize, f64)> = Vec::new();
    for v in m..h - m {
        for u in m..w - m {
            let s = scores[v * w + u];
            if s <= 0.0 {
                continue;
            }
            let here = v * w + u;
            let mut is_max = true;
            'nms: for y in v - 1..=v + 1 {
                for x in u - 1..=u + 1 {
                    let idx = y * w + x;
                    if idx == here {
                        continue;
                    }
                    let o = scores[idx];
                    if o > s || (o == s && idx < here) {
                        is_max = false;
                        break 'nms;
                    }
                }
            }
            if is_max {
                found.push((u, v, s));
            }
        }
    }
    found.sort_by(|a, b| b.2.total_cmp(&a.2).then((a.1, a.0).cmp(&(b.1, b.0))));
    found.truncate(max_count);
    found.sort_by_key(|&(u, v, _)| (v, u));

    let smoothed = smooth(img);
    found
        .into_iter()
        .map(|(u, v, score)| Keypoint {
            u,
            v,
            score,
            descriptor: describe(&smoothed, w, u, v),
        })
        .collect()
}

fn describe(smoothed: &[f32], width: usize, u: usize, v: usize) -> Descriptor {
    let pat = pattern();
    let samples: Vec<f32> = pat
        .points
        .iter()
        .map(|&(dx, dy)| {
            let x = (u as f64 + dx).round() as usize;
            let y = (v as f64 + dy).round() as usize;
            smoothed[y * width + x]
        })
        .collect();
    let mut words = [0u64; DESCRIPTOR_WORDS];
    for (bit, &(i, j)) in pat.pairs.iter().enumerate() {
        if samples[i] < samples[j] {
            words[bit / 64] |= 1u64 << (bit % 64);
        }
    }
    Descriptor(words)
}

/// Epipolar-constrained nearest-neighbour matching with a ratio test and
/// one-to-one pruning.
pub fn match_keypoints(left: &[Keypoint], right: &[Keypoint], max_hamming: u32, d_max: usize) -> Vec<Correspondence> {
    const RATIO: f64 = 0.8;
    let mut by_row: HashMap<usize, Vec<usize>> = HashMap::new();
    for (j, kp) in right.iter().enumerate() {
        by_row.entry(kp.v).or_default().push(j);
    }

    // (left index, right index, distance)
    let mut tentative: Vec<(usize, usize, u32)> = Vec::new();
    for (i, l) in left.iter().enumerate() {
        let mut best: Option<(u32, usize)> = None;
        let mut second = u32::MAX;
        for row in l.v.saturating_sub(1)..=l.v + 1 {
            let Some(cands) = by_row.get(&row) else {
                continue;
            };
            for &j in cands {
                let r = &right[j];
                if r.u > l.u || l.u - r.u > d_max {
                    continue;
                }
                let dist = l.descriptor.hamming(&r.descriptor);
                match best {
                    Some((bd, bj)) if dist > bd || (dist == bd && j > bj) => second = second.min(dist),
                    Some((bd, _)) => {
                        second = second.min(bd);
                        best = Some((dist, j));
                    }
                    None => best = Some((dist, j)),
                }
            }
        }
        if let Some((bd, bj)) = best {
            let passes_ratio = second == u32::MAX || f64::from(bd) <= RATIO * f64::from(second);
            if bd <= max_hamming && passes_ratio {
                tentative.push((i, bj, bd));
            }
        }
    }

    let mut winner: HashMap<usize, (u32, usize)> = HashMap::new();
    for &(i, j, d) in &tentative {
        let e = winner.entry(j).or_insert((d, i));
        if d < e.0 || (d == e.0 && i < e.1) {
            *e = (d, i);
        }
    }
    let mut out: Vec<Correspondence> = tentative
        .into_iter()
        .filter(|&(i, j, _)| winner[&j].1 == i)
        .map(|(i, j, distance)| Correspondence {
            left: left[i].clone(),
            right: right[j].clone(),
            distance,
            disparity: left[i].u as f64 - right[j].u as f64,
        })
        .collect();
    out.sort_by_key(|c| (c.left.v, c.left.u));
    out
}

/// One `(v_left, disparity)` point per correspondence; duplicates are kept.
pub fn sparse_v_disparity(matches: &[Correspondence]) -> Vec<SparseVDPoint> {
    matches
        .iter()
        .map(|c| SparseVDPoint {
            v: c.left.v as f64,
            d: c.disparity,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn textured(w: usize, h: usize, seed: u64) -> GrayImage {
        // blocky random texture: strong, well-separated corners
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cells: Vec<u8> = (0..(w / 4 + 2) * (h / 4 + 2)).map(|_| rng.gen_range(0..=255)).collect();
        GrayImage::from_fn(w, h, |u, v| cells[(v / 4) * (w / 4 + 2) + u / 4])
    }

    fn shift_left(img: &GrayImage, by: usize) -> GrayImage {
        GrayImage::from_fn(img.width(), img.height(), |u, v| {
            img.get((u + by).min(img.width() - 1), v)
        })
    }

    #[test]
    fn pattern_shape() {
        let p = pattern();
        assert_eq!(p.points.len(), 60);
        assert_eq!(p.pairs.len(), DESCRIPTOR_BITS);
        assert!(p
            .points
            .iter()
            .all(|&(x, y)| x.hypot(y) <= PATTERN_RADIUS as f64 + 1e-9));
    }

    #[test]
    fn constant_image_has_no_corners() {
        assert!(detect_keypoints(&GrayImage::filled(64, 64, 90), 20, 100).is_empty());
    }

    #[test]
    fn isolated_dot_is_a_corner() {
        let mut img = GrayImage::new(40, 40);
        img.set(20, 17, 255);
        let kps = detect_keypoints(&img, 20, 100);
        assert_eq!(kps.len(), 1);
        assert_eq!((kps[0].u, kps[0].v), (20, 17));
    }

    #[test]
    fn square_corners_are_detected() {
        // FAST-9 does not fire on checkerboard X-junctions (two 4-sample arcs);
        // convex corners of isolated squares are the ideal case instead.
        let img = GrayImage::from_fn(96, 96, |u, v| {
            let inside = |c: usize| (c % 32) >= 12 && (c % 32) < 20;
            if inside(u) && inside(v) {
                220
            } else {
                30
            }
        });
        let kps = detect_keypoints(&img, 20, 1000);
        let mut expected = Vec::new();
        for by in [12usize, 44, 76] {
            for bx in [12usize, 44, 76] {
                for (cx, cy) in [(bx, by), (bx + 7, by), (bx, by + 7), (bx + 7, by + 7)] {
                    if cx >= PATTERN_RADIUS
                        && cy >= PATTERN_RADIUS
                        && cx < 96 - PATTERN_RADIUS
                        && cy < 96 - PATTERN_RADIUS
                    {
                        expected.push((cx, cy));
                    }
                }
            }
        }
        assert!(!expected.is_empty());
        for (cx, cy) in expected {
            assert!(
                kps.iter().any(|k| k.u.abs_diff(cx) <= 1 && k.v.abs_diff(cy) <= 1),
                "corner ({cx},{cy}) missed"
            );
        }
    }

    #[test]
    fn self_match_has_zero_disparity() {
        let img = textured(120, 80, 1);
        let kps = detect_keypoints(&img, 25, 500);
        assert!(!kps.is_empty());
        let m = match_keypoints(&kps, &kps, 100, 64);
        assert!(!m.is_empty());
        assert!(m.iter().all(|c| c.disparity == 0.0));
    }

    #[test]
    fn shifted_pair_matches_at_shift() {
        let left = textured(160, 80, 2);
        let right = shift_left(&left, 5);
        let lk = detect_keypoints(&left, 25, 1000);
        let rk = detect_keypoints(&right, 25, 1000);
        let m = match_keypoints(&lk, &rk, 100, 64);
        assert!(m.len() > 10, "only {} matches", m.len());
        assert!(m.iter().all(|c| c.disparity == 5.0));
    }

    #[test]
    fn epipolar_rejection() {
        let left = textured(120, 80, 3);
        let lk = detect_keypoints(&left, 25, 1);
        let mut rk = lk.clone();
        rk[0].v += 2;
        assert!(match_keypoints(&lk, &rk, 512, 64).is_empty());
    }

    #[test]
    fn sparse_points() {
        assert!(sparse_v_disparity(&[]).is_empty());
        let kp = |u, v| Keypoint {
            u,
            v,
            score: 1.0,
            descriptor: Descriptor::default(),
        };
        let c = Correspondence {
            left: kp(500, 200),
            right: kp(480, 200),
            distance: 0,
            disparity: 20.0,
        };
        assert_eq!(sparse_v_disparity(&[c]), vec![SparseVDPoint { v: 200.0, d: 20.0 }]);
    }

    #[test]
    fn sparse_points_on_a_line() {
        let kp = |u, v| Keypoint {
            u,
            v,
            score: 1.0,
            descriptor: Descriptor::default(),
        };
        let matches: Vec<_> = (0..100)
            .map(|i| {
                let v = 3 * i + 20;
                let d = 2 + v / 20;
                Correspondence {
                    left: kp(300 + d, v),
                    right: kp(300, v),
                    distance: 0,
                    disparity: d as f64,
                }
            })
            .collect();
        for p in sparse_v_disparity(&matches) {
            assert_eq!(p.d, (2 + p.v as usize / 20) as f64);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn correspondences_respect_geometry(seed in any::<u64>(), shift in 0usize..20) {
            let left = textured(96, 64, seed);
            let right = shift_left(&left, shift);
            let lk = detect_keypoints(&left, 25, 300);
            let rk = detect_keypoints(&right, 25, 300);
            let m = match_keypoints(&lk, &rk, 100, 32);
            let mut lefts = std::collections::HashSet::new();
            let mut rights = std::collections::HashSet::new();
            for c in &m {
                prop_assert!(c.left.v.abs_diff(c.right.v) <= 1);
                prop_assert!(c.disparity >= 0.0 && c.disparity <= 32.0);
                prop_assert!(lefts.insert((c.left.u, c.left.v)));
                prop_assert!(rights.insert((c.right.u, c.right.v)));
            }
        }

        #[test]
        fn detection_is_translation_covariant(seed in any::<u64>(), du in 0usize..8, dv in 0usize..8) {
            let base = textured(100, 100, seed);
            let shifted = GrayImage::from_fn(100, 100, |u, v| {
                if u >= du && v >= dv { base.get(u - du, v - dv) } else { 0 }
            });
            let a = detect_keypoints(&base, 25, usize::MAX);
            let b = detect_keypoints(&shifted, 25, usize::MAX);
            // compare away from both images' borders
            let lo = PATTERN_RADIUS + 10;
            let hi = 100 - PATTERN_RADIUS - 10;
            let inner = |u: usize, v: usize| u >= lo && u < hi && v >= lo && v < hi;
            let sa: Vec<_> = a.iter().map(|k| (k.u + du, k.v + dv)).filter(|&(u, v)| inner(u, v)).collect();
            let sb: Vec<_> = b.iter().map(|k| (k.u, k.v)).filter(|&(u, v)| inner(u, v)).collect();
            prop_assert_eq!(sa, sb);
        }
    }
}
