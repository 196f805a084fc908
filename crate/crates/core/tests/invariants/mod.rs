use std::collections::BTreeSet;

use crate::common::{rng, small_scene};
use proptest::prelude::*;
use rand::Rng;
use stereolane::features::{detect_keypoints, match_keypoints};
use stereolane::imagery::{bilateral_filter, sobel_gradients, GradientField, GrayImage};
use stereolane::lanes::{
    edge_likelihood, lane_column, lane_offset_histogram, project_to_bottom, road_mask, select_peak_pairs, BinaryMask,
    OffsetHistogram,
};
use stereolane::roadmodel::{
    eval_profile, fit_parabola_lsf, fit_parabola_ransac, horizon_row, row_search_range, RansacParams, RoadProfileModel,
};
use stereolane::stereo::{compute_disparity, compute_disparity_full, MatcherParams};
use stereolane::synth::generate_scene;
use stereolane::vprofile::{build_v_disparity, VanishingPointTrajectory};

const CASES: u32 = 100;

fn noise_image(seed: u64, w: usize, h: usize) -> GrayImage {
    let mut r = rng(seed);
    GrayImage::from_fn(w, h, |_, _| r.gen())
}

/// Box-blurred noise: corners and texture for detectors and matchers.
fn texture(seed: u64, w: usize, h: usize) -> GrayImage {
    let n = noise_image(seed, w, h);
    GrayImage::from_fn(w, h, |u, v| {
        let (mut s, mut c) = (0u32, 0u32);
        for y in v.saturating_sub(1)..=(v + 1).min(h - 1) {
            for x in u.saturating_sub(1)..=(u + 1).min(w - 1) {
                s += u32::from(n.get(x, y));
                c += 1;
            }
        }
        (s / c) as u8
    })
}

fn shifted(img: &GrayImage, du: i64, dv: i64) -> GrayImage {
    let (w, h) = img.dims();
    GrayImage::from_fn(w, h, |u, v| {
        let (x, y) = (u as i64 - du, v as i64 - dv);
        if x < 0 || y < 0 || x >= w as i64 || y >= h as i64 {
            0
        } else {
            img.get(x as usize, y as usize)
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(CASES))]

    // ---- imagery

    fn bilateral_keeps_constant_images(w in 1usize..20, h in 1usize..20, value in any::<u8>(),
                                       ss in 0.5f64..5.0, sr in 1.0f64..60.0, radius in 1usize..4) {
        let img = GrayImage::filled(w, h, value);
        prop_assert_eq!(bilateral_filter(&img, ss, sr, radius).unwrap(), img);
    }

    fn bilateral_stays_within_window(seed in any::<u64>(), w in 2usize..24, h in 2usize..24,
                                     ss in 0.5f64..5.0, sr in 1.0f64..60.0, radius in 1usize..4) {
        let img = noise_image(seed, w, h);
        let out = bilateral_filter(&img, ss, sr, radius).unwrap();
        for v in 0..h {
            for u in 0..w {
                let (mut lo, mut hi) = (255u8, 0u8);
                for y in v.saturating_sub(radius)..=(v + radius).min(h - 1) {
                    for x in u.saturating_sub(radius)..=(u + radius).min(w - 1) {
                        lo = lo.min(img.get(x, y));
                        hi = hi.max(img.get(x, y));
                    }
                }
                prop_assert!(out.get(u, v) >= lo && out.get(u, v) <= hi);
            }
        }
    }

    fn sobel_of_inverse_flips_sign(seed in any::<u64>(), w in 3usize..30, h in 3usize..30) {
        let img = noise_image(seed, w, h);
        let a = sobel_gradients(&img).unwrap();
        let b = sobel_gradients(&img.inverted()).unwrap();
        for v in 1..h - 1 {
            for u in 1..w - 1 {
                let i = a.index(u, v);
                prop_assert_eq!(a.magnitude[i], b.magnitude[i]);
                prop_assert_eq!(a.gx[i], -b.gx[i]);
                prop_assert_eq!(a.gy[i], -b.gy[i]);
            }
        }
    }

    fn imagery_is_pure(seed in any::<u64>(), w in 3usize..30, h in 3usize..30) {
        let img = noise_image(seed, w, h);
        prop_assert_eq!(bilateral_filter(&img, 2.0, 20.0, 2).unwrap(), bilateral_filter(&img, 2.0, 20.0, 2).unwrap());
        let (a, b) = (sobel_gradients(&img).unwrap(), sobel_gradients(&img).unwrap());
        prop_assert_eq!(a.gx, b.gx);
        prop_assert_eq!(a.orientation, b.orientation);
    }

    // ---- features

    fn matches_respect_epipolar_geometry(seed in any::<u64>(), shift in 0i64..20) {
        let left = texture(seed, 120, 80);
        // right(x) = left(x + shift): content moves left by `shift`
        let right = shifted(&left, -shift, 0);
        let kl = detect_keypoints(&left, 25, 5000);
        let kr = detect_keypoints(&right, 25, 5000);
        let matches = match_keypoints(&kl, &kr, 100, 32);
        prop_assert!(!matches.is_empty());
        for m in &matches {
            prop_assert!(m.left.v.abs_diff(m.right.v) <= 1);
            prop_assert!(m.disparity >= 0.0);
            prop_assert_eq!(m.disparity, m.left.u as f64 - m.right.u as f64);
        }
    }

    fn self_matches_have_zero_disparity(seed in any::<u64>()) {
        let img = texture(seed, 100, 70);
        let kps = detect_keypoints(&img, 25, 5000);
        let matches = match_keypoints(&kps, &kps, 100, 32);
        prop_assert!(!matches.is_empty());
        prop_assert!(matches.iter().all(|m| m.disparity == 0.0));
    }

    fn detection_is_translation_covariant(seed in any::<u64>(), du in -6i64..=6, dv in -6i64..=6) {
        let (w, h) = (110usize, 80usize);
        let img = texture(seed, w, h);
        let moved = shifted(&img, du, dv);
        // far enough from every border of both images that windows see the same content
        let m = 20i64;
        let inside = |u: i64, v: i64| u >= m + du.abs() && v >= m + dv.abs() && u < w as i64 - m - du.abs() && v < h as i64 - m - dv.abs();
        let a: BTreeSet<(i64, i64)> = detect_keypoints(&img, 25, usize::MAX)
            .iter()
            .map(|k| (k.u as i64 + du, k.v as i64 + dv))
            .filter(|&(u, v)| inside(u, v))
            .collect();
        let b: BTreeSet<(i64, i64)> = detect_keypoints(&moved, 25, usize::MAX)
            .iter()
            .map(|k| (k.u as i64, k.v as i64))
            .filter(|&(u, v)| inside(u, v))
            .collect();
        prop_assert!(!a.is_empty());
        prop_assert_eq!(a, b);
    }

    // ---- roadmodel

    fn lsf_is_a_global_minimum(seed in any::<u64>(), n in 3usize..40) {
        let mut r = rng(seed);
        let pts: Vec<(f64, f64)> = (0..n).map(|_| (r.gen_range(0.0..375.0), r.gen_range(0.0..64.0))).collect();
        let wts: Vec<f64> = (0..n).map(|_| r.gen_range(0.1..3.0)).collect();
        let rows: BTreeSet<u64> = pts.iter().map(|p| p.0.to_bits()).collect();
        prop_assume!(rows.len() >= 3);
        let m = fit_parabola_lsf(&pts, Some(&wts)).unwrap();
        let cost = |a: [f64; 3]| -> f64 {
            pts.iter().zip(&wts).map(|(&(v, d), w)| w * (a[0] + a[1] * v + a[2] * v * v - d).powi(2)).sum()
        };
        let base = cost(m.alpha);
        for k in 0..3 {
            for s in [-1e-3, 1e-3] {
                let mut a = m.alpha;
                a[k] += s;
                prop_assert!(cost(a) >= base * (1.0 - 1e-12));
            }
        }
    }

    fn ransac_without_outliers_equals_lsf(seed in any::<u64>(), n in 10usize..200) {
        let mut r = rng(seed);
        let truth = RoadProfileModel::new(r.gen_range(-60.0..-10.0), r.gen_range(0.1..0.4), r.gen_range(-2e-4..2e-4));
        let pts: Vec<(f64, f64)> = (0..n)
            .map(|_| {
                let v = r.gen_range(150.0..375.0);
                (v, truth.eval(v) + r.gen_range(-0.01..0.01))
            })
            .collect();
        let fit = fit_parabola_ransac(&pts, &RansacParams { seed, ..RansacParams::default() }).unwrap();
        let lsf = fit_parabola_lsf(&pts, None).unwrap();
        prop_assert_eq!(fit.inlier_ratio, 1.0);
        for k in 0..3 {
            prop_assert!((fit.model.alpha[k] - lsf.alpha[k]).abs() <= 1e-9 * lsf.alpha[k].abs().max(1.0));
        }
    }

    fn search_range_is_bounded(a0 in -100.0f64..100.0, a1 in -1.0f64..1.0, a2 in -1e-3f64..1e-3,
                               v in 0.0f64..400.0, tau in 0u32..10, d_max in 1u32..128) {
        let r = row_search_range(&RoadProfileModel::new(a0, a1, a2), v, tau, d_max);
        prop_assert!(r.len() <= (2 * tau + 1) as usize);
        if !r.is_empty() {
            prop_assert!(r.lo >= 0 && r.hi <= i64::from(d_max));
        }
    }

    fn horizon_is_a_root(a0 in -100.0f64..10.0, a1 in 0.01f64..1.0, a2 in -1e-3f64..1e-3) {
        let m = RoadProfileModel::new(a0, a1, a2);
        if let Ok(h) = horizon_row(&m, 375) {
            if !h.clamped {
                prop_assert!(eval_profile(&m, h.row).abs() <= 1e-6);
                prop_assert!(m.slope(h.row) > 0.0);
            }
        }
    }

    // ---- stereo

    fn seeded_matches_full_search_inside_its_band(seed in any::<u64>(), bias in -2.0f64..2.0) {
        let cfg = small_scene(seed);
        let t = generate_scene(&cfg).unwrap();
        let params = MatcherParams { d_max: 32, ..MatcherParams::default() };
        let m = t.gt_model;
        let model = RoadProfileModel::new(m.alpha[0] + bias, m.alpha[1], m.alpha[2]);
        let (seeded, ss) = compute_disparity(&t.left, &t.right, &model, &params).unwrap();
        let (full, fs) = compute_disparity_full(&t.left, &t.right, &params).unwrap();
        prop_assert!(ss.cost_evaluations <= fs.cost_evaluations);
        let mut checked = 0;
        for v in 0..cfg.height {
            let band = row_search_range(&model, v as f64, params.tau, params.d_max);
            for u in 0..cfg.width {
                if let Some(d) = full.get(u, v) {
                    // the integer winner is inside the band for sure
                    if !band.is_empty() && f64::from(d) >= band.lo as f64 + 0.5 && f64::from(d) <= band.hi as f64 - 0.5 {
                        prop_assert_eq!(seeded.get(u, v), Some(d));
                        checked += 1;
                    }
                }
            }
        }
        prop_assert!(checked > 1000);
    }

    fn disparities_stay_in_range(seed in any::<u64>()) {
        let cfg = small_scene(seed);
        let t = generate_scene(&cfg).unwrap();
        let params = MatcherParams { d_max: 32, ..MatcherParams::default() };
        let (seeded, _) = compute_disparity(&t.left, &t.right, &t.gt_model, &params).unwrap();
        prop_assert!(seeded.raw().iter().all(|&d| d < 0.0 || (0.0..=32.0).contains(&d)));
        let (same, _) = compute_disparity_full(&t.left, &t.left, &params).unwrap();
        prop_assert!(same.raw().iter().all(|&d| d <= 0.0));
        // a seed whose band contains 0 everywhere
        let flat = RoadProfileModel::new(0.0, 0.0, 0.0);
        let (same, _) = compute_disparity(&t.left, &t.left, &flat, &params).unwrap();
        prop_assert!(same.raw().iter().all(|&d| d <= 0.0));
    }

    fn matching_is_deterministic(seed in any::<u64>()) {
        let t = generate_scene(&small_scene(seed)).unwrap();
        let params = MatcherParams { d_max: 32, ..MatcherParams::default() };
        let (a, sa) = compute_disparity(&t.left, &t.right, &t.gt_model, &params).unwrap();
        let (b, sb) = compute_disparity(&t.left, &t.right, &t.gt_model, &params).unwrap();
        prop_assert_eq!(a, b);
        prop_assert_eq!(sa.cost_evaluations, sb.cost_evaluations);
        prop_assert_eq!(sa.valid_pixels, sb.valid_pixels);
    }

    // ---- vprofile

    fn v_disparity_conserves_mass(seed in any::<u64>(), d_max in 1usize..40) {
        let t = generate_scene(&small_scene(seed)).unwrap();
        let params = MatcherParams { d_max: 32, ..MatcherParams::default() };
        let (disp, _) = compute_disparity(&t.left, &t.right, &t.gt_model, &params).unwrap();
        let vd = build_v_disparity(&disp, d_max);
        prop_assert_eq!(vd.total(), disp.valid_count() as u64);
    }

    // ---- lanes

    fn likelihood_bounded_by_gradient(seed in any::<u64>(), w in 8usize..40, h in 8usize..40, vp in -20.0f64..60.0) {
        let mut r = rng(seed);
        let gx: Vec<f32> = (0..w * h).map(|_| r.gen_range(-300.0..300.0)).collect();
        let gy: Vec<f32> = (0..w * h).map(|_| r.gen_range(-300.0..300.0)).collect();
        let grad = GradientField::from_components(w, h, gx, gy).unwrap();
        let mask = BinaryMask::from_fn(w, h, |_, _| r.gen_bool(0.6));
        let traj = VanishingPointTrajectory { beta: [vp, r.gen_range(-0.5..0.5), 0.0, 0.0, 0.0], v_h: 2.5 };
        let lik = edge_likelihood(&grad, &mask, &traj);
        for v in 0..h {
            for u in 0..w {
                let val = lik.get(u, v);
                if mask.get(u, v) {
                    prop_assert!(val.abs() <= grad.magnitude[grad.index(u, v)] * (1.0 + 1e-6));
                } else {
                    prop_assert_eq!(val, 0.0);
                }
            }
        }
    }

    fn road_mask_is_monotone_in_mu(seed in any::<u64>(), mu1 in 0.0f64..6.0, extra in 0.0f64..6.0) {
        let t = generate_scene(&small_scene(seed)).unwrap();
        let params = MatcherParams { d_max: 32, ..MatcherParams::default() };
        let (disp, _) = compute_disparity(&t.left, &t.right, &t.gt_model, &params).unwrap();
        let a = road_mask(&disp, &t.gt_model, mu1);
        let b = road_mask(&disp, &t.gt_model, mu1 + extra);
        prop_assert!(a.is_subset_of(&b));
    }

    fn histogram_conserves_votes(seed in any::<u64>(), w in 8usize..60, h in 8usize..40, vp in 0.0f64..60.0) {
        let mut r = rng(seed);
        let gx: Vec<f32> = (0..w * h).map(|_| r.gen_range(-300.0..300.0)).collect();
        let gy: Vec<f32> = (0..w * h).map(|_| r.gen_range(-300.0..300.0)).collect();
        let grad = GradientField::from_components(w, h, gx, gy).unwrap();
        let mask = BinaryMask::from_fn(w, h, |_, _| r.gen_bool(0.7));
        let traj = VanishingPointTrajectory { beta: [vp, 0.0, 0.0, 0.0, 0.0], v_h: r.gen_range(-3.0..4.0) };
        let lik = edge_likelihood(&grad, &mask, &traj);
        let bottom = h - 1;
        let hist = lane_offset_histogram(&lik, &traj, bottom);
        let mut expected = 0.0f64;
        for v in 0..h {
            if v as f64 <= traj.v_h {
                continue;
            }
            for u in 0..w {
                let x = project_to_bottom(u as f64, v as f64, &traj, bottom as f64).round() + hist.margin as f64;
                if x >= 0.0 && x < hist.bins.len() as f64 {
                    expected += f64::from(lik.get(u, v));
                }
            }
        }
        prop_assert!((hist.total() - expected).abs() <= 1e-6 * expected.abs().max(1.0));
    }

    fn peak_pairs_are_disjoint_and_sorted(seed in any::<u64>(), n in 20usize..200, min_peak in 0.0f64..5.0) {
        let mut r = rng(seed);
        let bins: Vec<f64> = (0..n).map(|_| r.gen_range(-10.0..10.0)).collect();
        let hist = OffsetHistogram { margin: 10, bins };
        let lanes = select_peak_pairs(&hist, 2.0, 15.0, min_peak, 100);
        let pos: BTreeSet<u64> = lanes.iter().map(|l| l.pair[0].to_bits()).collect();
        let neg: BTreeSet<u64> = lanes.iter().map(|l| l.pair[1].to_bits()).collect();
        prop_assert_eq!(pos.len(), lanes.len());
        prop_assert_eq!(neg.len(), lanes.len());
        // combined magnitude from the 5-bin mean the selector peaks on
        let nb = hist.bins.len();
        let smooth = |i: usize| {
            let (lo, hi) = (i.saturating_sub(2), (i + 2).min(nb - 1));
            hist.bins[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        };
        let bin = |x: f64| (x + hist.margin as f64).floor() as usize;
        let strength: Vec<f64> = lanes.iter().map(|l| smooth(bin(l.pair[0])) - smooth(bin(l.pair[1]))).collect();
        for k in 1..strength.len() {
            prop_assert!(strength[k - 1] >= strength[k] - 1e-9);
        }
        for l in &lanes {
            let width = l.pair[1] - l.pair[0];
            prop_assert!((2.0..=15.0).contains(&width));
        }
    }

    // ---- synth

    fn synthesis_is_deterministic_and_consistent(seed in any::<u64>()) {
        let cfg = small_scene(seed);
        let a = generate_scene(&cfg).unwrap();
        let b = generate_scene(&cfg).unwrap();
        prop_assert_eq!(&a.left, &b.left);
        prop_assert_eq!(&a.right, &b.right);
        prop_assert_eq!(&a.gt_disparity, &b.gt_disparity);

        // stripes follow the trajectory's projective construction
        let bottom = (cfg.height - 1) as f64;
        for lane in &a.gt_lanes {
            for s in &lane.samples {
                prop_assert!((s[0] - lane_column(&a.gt_traj, lane.offset, bottom, s[1])).abs() <= 0.5);
            }
        }
    }

    fn right_view_is_the_warped_left(seed in any::<u64>()) {
        let cfg = small_scene(seed);
        let t = generate_scene(&cfg).unwrap();
        let (mut err, mut n) = (0.0f64, 0usize);
        for v in 0..cfg.height {
            for u in 0..cfg.width {
                if !t.road_mask_truth.get(u, v) {
                    continue;
                }
                let d = f64::from(t.gt_disparity.get(u, v).unwrap());
                let x = u as f64 - d;
                // keep away from the left border and stripe edges
                if x < 2.0 {
                    continue;
                }
                let (x0, f) = (x.floor() as usize, x - x.floor());
                let r = (1.0 - f) * f64::from(t.right.get(x0, v)) + f * f64::from(t.right.get(x0 + 1, v));
                err += (r - f64::from(t.left.get(u, v))).abs();
                n += 1;
            }
        }
        prop_assert!(n > 1000);
        prop_assert!(err / n as f64 <= 2.0 * cfg.noise_sigma, "mean abs error {}", err / n as f64);
    }
}

/// Every property, by module.
pub const PROPERTIES: &[(&str, &str, fn())] = &[
    (
        "imagery",
        "bilateral_keeps_constant_images",
        bilateral_keeps_constant_images,
    ),
    (
        "imagery",
        "bilateral_stays_within_window",
        bilateral_stays_within_window,
    ),
    ("imagery", "sobel_of_inverse_flips_sign", sobel_of_inverse_flips_sign),
    ("imagery", "imagery_is_pure", imagery_is_pure),
    (
        "features",
        "matches_respect_epipolar_geometry",
        matches_respect_epipolar_geometry,
    ),
    (
        "features",
        "self_matches_have_zero_disparity",
        self_matches_have_zero_disparity,
    ),
    (
        "features",
        "detection_is_translation_covariant",
        detection_is_translation_covariant,
    ),
    ("roadmodel", "lsf_is_a_global_minimum", lsf_is_a_global_minimum),
    (
        "roadmodel",
        "ransac_without_outliers_equals_lsf",
        ransac_without_outliers_equals_lsf,
    ),
    ("roadmodel", "search_range_is_bounded", search_range_is_bounded),
    ("roadmodel", "horizon_is_a_root", horizon_is_a_root),
    (
        "stereo",
        "seeded_matches_full_search_inside_its_band",
        seeded_matches_full_search_inside_its_band,
    ),
    ("stereo", "disparities_stay_in_range", disparities_stay_in_range),
    ("stereo", "matching_is_deterministic", matching_is_deterministic),
    ("vprofile", "v_disparity_conserves_mass", v_disparity_conserves_mass),
    (
        "lanes",
        "likelihood_bounded_by_gradient",
        likelihood_bounded_by_gradient,
    ),
    ("lanes", "road_mask_is_monotone_in_mu", road_mask_is_monotone_in_mu),
    ("lanes", "histogram_conserves_votes", histogram_conserves_votes),
    (
        "lanes",
        "peak_pairs_are_disjoint_and_sorted",
        peak_pairs_are_disjoint_and_sorted,
    ),
    (
        "synth",
        "synthesis_is_deterministic_and_consistent",
        synthesis_is_deterministic_and_consistent,
    ),
    ("synth", "right_view_is_the_warped_left", right_view_is_the_warped_left),
];

/// Runs the named property, panicking on a counterexample.
#[allow(dead_code)]
pub fn run(name: &str) {
    match PROPERTIES.iter().find(|p| p.1 == name) {
        Some(p) => (p.2)(),
        None => panic!("no property named {name}"),
    }
}
