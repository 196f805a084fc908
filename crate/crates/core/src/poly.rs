//! Weighted polynomial least squares through the normal equations.
//!
//! The abscissa is centered and scaled to [−1, 1] before the normal matrix is
//! formed; the fitted coefficients are mapped back to the raw basis by
//! binomial expansion. Without the rescaling a quartic in image rows
//! (v⁴ ≈ 10¹⁰) produces a normal matrix that is numerically singular.

use crate::error::{Error, Result};

/// Evaluates `c[0] + c[1]·x + … ` by Horner's rule.
#[inline]
pub fn eval(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

/// Fits a polynomial of `degree` to `(x, y)` minimizing `Σ wᵢ (yᵢ − p(xᵢ))²`.
///
/// Points with non-positive weight are ignored. Returns the raw-basis
/// coefficients, lowest order first.
pub fn fit_weighted(xs: &[f64], ys: &[f64], weights: Option<&[f64]>, degree: usize) -> Result<Vec<f64>> {
    assert_eq!(xs.len(), ys.len(), "x and y lengths differ");
    if let Some(w) = weights {
        assert_eq!(w.len(), xs.len(), "weight length differs from point count");
    }
    let ncoef = degree + 1;
    let weight = |i: usize| weights.map_or(1.0, |w| w[i]);

    let mut distinct: Vec<f64> = (0..xs.len()).filter(|&i| weight(i) > 0.0).map(|i| xs[i]).collect();
    if distinct.iter().any(|x| !x.is_finite()) || ys.iter().any(|y| !y.is_finite()) {
        return Err(Error::DegenerateInput("non-finite sample".into()));
    }
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < ncoef {
        return Err(Error::DegenerateInput(format!(
            "degree {degree} fit needs {ncoef} distinct abscissae, got {}",
            distinct.len()
        )));
    }
    let lo = distinct[0];
    let hi = distinct[distinct.len() - 1];
    let center = 0.5 * (lo + hi);
    let scale = if hi > lo { 0.5 * (hi - lo) } else { 1.0 };

    let mut ata = vec![0.0f64; ncoef * ncoef];
    let mut atb = vec![0.0f64; ncoef];
    let mut powers = vec![0.0f64; 2 * ncoef - 1];
    for i in 0..xs.len() {
        let w = weight(i);
        if w <= 0.0 {
            continue;
        }
        let t = (xs[i] - center) / scale;
        powers[0] = 1.0;
        for k in 1..powers.len() {
            powers[k] = powers[k - 1] * t;
        }
        for r in 0..ncoef {
            atb[r] += w * powers[r] * ys[i];
            for c in 0..ncoef {
                ata[r * ncoef + c] += w * powers[r + c];
            }
        }
    }
    let scaled = solve_spd(&mut ata, &mut atb, ncoef)?;
    Ok(unscale(&scaled, center, scale))
}

/// Exact interpolation through `degree + 1` points.
pub fn interpolate(xs: &[f64], ys: &[f64]) -> Result<Vec<f64>> {
    fit_weighted(xs, ys, None, xs.len() - 1)
}

/// Cholesky solve of the symmetric positive-definite system `A x = b`.
fn solve_spd(a: &mut [f64], b: &mut [f64], n: usize) -> Result<Vec<f64>> {
    let max_diag = (0..n).map(|i| a[i * n + i]).fold(0.0, f64::max);
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if d <= max_diag * 1e-13 {
            return Err(Error::DegenerateInput("normal matrix is singular".into()));
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= a[i * n + k] * b[k];
        }
        b[i] = s / a[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= a[k * n + i] * b[k];
        }
        b[i] = s / a[i * n + i];
    }
    Ok(b.to_vec())
}

/// Maps coefficients in `t = (x − c)/s` back to coefficients in `x`.
fn unscale(scaled: &[f64], center: f64, scale: f64) -> Vec<f64> {
    let n = scaled.len();
    let mut out = vec![0.0f64; n];
    for (k, &bk) in scaled.iter().enumerate() {
        // bk · ((x − c)/s)^k = bk/s^k · Σ_j C(k,j) x^j (−c)^(k−j)
        let factor = bk / scale.powi(k as i32);
        let mut binom = 1.0f64;
        for j in 0..=k {
            if j > 0 {
                binom = binom * (k - j + 1) as f64 / j as f64;
            }
            out[j] += factor * binom * (-center).powi((k - j) as i32);
        }
    }
    out
}
