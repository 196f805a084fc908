#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stereolane::lanes::BinaryMask;
use stereolane::stereo::DisparityMap;
use stereolane::synth::SceneConfig;
use stereolane::vprofile::{UvpAccumulator, VDisparityMap};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Keeps `cand` when it beats `best` on energy, or ties and reads smaller.
fn keep_better<K: Ord>(best: &mut Option<(f64, K)>, energy: f64, key: K) {
    let better = match best {
        None => true,
        Some((e, k)) => energy < *e || (energy == *e && key < *k),
    };
    if better {
        *best = Some((energy, key));
    }
}

/// Every admissible road path, scored directly. Returns the optimal energy
/// and the rows at levels `0..=d_max`; among optimal paths the one whose row
/// sequence reads smallest wins.
pub fn brute_road(vd: &VDisparityMap, lambda: f64) -> (f64, Vec<usize>) {
    let h = vd.height();
    let levels = vd.d_max() + 1;
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut path = Vec::with_capacity(levels);
    fn walk(
        vd: &VDisparityMap,
        lambda: f64,
        h: usize,
        levels: usize,
        path: &mut Vec<usize>,
        best: &mut Option<(f64, Vec<usize>)>,
    ) {
        if path.len() == levels {
            let mut e = 0.0;
            for (d, &v) in path.iter().enumerate() {
                e -= f64::from(vd.get(d, v));
                if d > 0 {
                    e += lambda * (v - path[d - 1]) as f64;
                }
            }
            keep_better(best, e, path.clone());
            return;
        }
        let (lo, hi) = match path.last() {
            None => (0, h - 1),
            Some(&p) => (p, (p + 6).min(h - 1)),
        };
        for v in lo..=hi {
            path.push(v);
            walk(vd, lambda, h, levels, path, best);
            path.pop();
        }
    }
    walk(vd, lambda, h, levels, &mut path, &mut best);
    best.expect("at least one path")
}

/// Every admissible column path through the accumulator, scored directly.
/// Returns the optimal energy and the columns from the top row down; ties
/// go to the smaller top column, then per step down to the smaller `|τ|`
/// and then the leftward step.
pub fn brute_uvp(acc: &UvpAccumulator, lambda: f64) -> (f64, Vec<usize>) {
    let (w, rows, first) = (acc.width(), acc.rows(), acc.first_row());
    let mut best: Option<(f64, Vec<(usize, i64)>)> = None;
    let mut path: Vec<usize> = Vec::with_capacity(rows);
    fn walk(
        acc: &UvpAccumulator,
        lambda: f64,
        w: usize,
        rows: usize,
        first: usize,
        path: &mut Vec<usize>,
        best: &mut Option<(f64, Vec<(usize, i64)>)>,
    ) {
        if path.len() == rows {
            let mut e = 0.0;
            // key: top column, then (|τ|, τ) for each step down
            let mut key = vec![(path[0], 0i64)];
            for (r, &u) in path.iter().enumerate() {
                e -= acc.get(u, first + r);
                if r > 0 {
                    let tau = u as i64 - path[r - 1] as i64;
                    e += lambda * tau.unsigned_abs() as f64;
                    key.push((tau.unsigned_abs() as usize, tau));
                }
            }
            keep_better(best, e, key);
            return;
        }
        let range = match path.last() {
            None => 0..=w - 1,
            Some(&p) => p.saturating_sub(5)..=(p + 5).min(w - 1),
        };
        for u in range {
            path.push(u);
            walk(acc, lambda, w, rows, first, path, best);
            path.pop();
        }
    }
    walk(acc, lambda, w, rows, first, &mut path, &mut best);
    let (e, key) = best.expect("at least one path");
    // rebuild columns: u_r = u_{r-1} + τ_r
    let mut cols = vec![key[0].0];
    for &(_, tau) in &key[1..] {
        let prev = *cols.last().unwrap() as i64;
        cols.push((prev + tau) as usize);
    }
    (e, cols)
}

/// Integer votes in `[0, max]`, with a fraction of empty cells.
pub fn random_v_disparity(r: &mut ChaCha8Rng, levels: usize, height: usize, max: u32) -> VDisparityMap {
    let counts = (0..levels * height)
        .map(|_| if r.gen_bool(0.3) { 0 } else { r.gen_range(0..=max) })
        .collect();
    VDisparityMap::from_counts(levels - 1, height, counts).unwrap()
}

pub fn random_accumulator(r: &mut ChaCha8Rng, width: usize, rows: usize, max: u32) -> UvpAccumulator {
    let first = r.gen_range(0..50);
    let votes = (0..width * rows)
        .map(|_| {
            if r.gen_bool(0.3) {
                0.0
            } else {
                f64::from(r.gen_range(0..=max))
            }
        })
        .collect();
    UvpAccumulator::from_votes(width, first, rows, votes).unwrap()
}

/// Fraction of `mask` pixels whose estimate is valid and within `tol` of the
/// truth, and the number of valid estimates among them.
pub fn accuracy_within(est: &DisparityMap, truth: &DisparityMap, mask: &BinaryMask, tol: f32) -> (f64, usize) {
    let (mut n, mut ok) = (0usize, 0usize);
    for v in 0..mask.height() {
        for u in 0..mask.width() {
            if !mask.get(u, v) {
                continue;
            }
            if let (Some(e), Some(t)) = (est.get(u, v), truth.get(u, v)) {
                n += 1;
                if (e - t).abs() <= tol {
                    ok += 1;
                }
            }
        }
    }
    (if n == 0 { 0.0 } else { ok as f64 / n as f64 }, n)
}

/// Small scene that keeps stereo-heavy properties cheap.
pub fn small_scene(seed: u64) -> SceneConfig {
    let mut r = rng(seed);
    let (w, h) = (240usize, 100usize);
    let v_h = r.gen_range(30.0..45.0);
    let slope = r.gen_range(0.2..0.35);
    let vp = r.gen_range(100.0..140.0);
    SceneConfig {
        width: w,
        height: h,
        d_max: 32,
        road_alpha: [-slope * v_h, slope, 0.0],
        lane_offsets: vec![vp - 70.0, vp + 70.0],
        lane_width: 8.0,
        uvp_beta: [vp, 0.0, 0.0, 0.0, 0.0],
        texture_seed: seed,
        frame: 0,
        noise_sigma: 2.0,
        texture_std: stereolane::synth::DEFAULT_TEXTURE_STD,
        obstacles: Vec::new(),
    }
}
