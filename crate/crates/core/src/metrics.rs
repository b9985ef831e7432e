//! Distributional and pointwise error metrics: RMSE and the empirical
//! one-dimensional Wasserstein-1 distance, plus the fixed-bin amplitude
//! histograms used by the report artifacts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Root mean square error over two equally sized sample sets.
pub fn rmse(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Data(format!("rmse: length mismatch {} vs {}", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(Error::Data("rmse of empty samples".to_string()));
    }
    let sum: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((sum / a.len() as f64).sqrt())
}

/// Empirical Wasserstein-1 distance between two one-dimensional sample sets.
///
/// Equal sizes reduce to the mean absolute difference of the sorted samples;
/// unequal sizes integrate |F_a^{-1}(p) - F_b^{-1}(p)| over the merged
/// breakpoints of the two empirical quantile functions.
pub fn wasserstein_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Data("wasserstein of empty samples".to_string()));
    }
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(|p, q| p.partial_cmp(q).unwrap());
    ys.sort_by(|p, q| p.partial_cmp(q).unwrap());

    if xs.len() == ys.len() {
        let n = xs.len() as f64;
        return Ok(xs.iter().zip(&ys).map(|(x, y)| (x - y).abs()).sum::<f64>() / n);
    }

    // Quantile functions are piecewise constant with breakpoints at i/n and
    // j/m; walk the union of breakpoints and accumulate the rectangle areas.
    let (n, m) = (xs.len(), ys.len());
    let mut total = 0.0;
    let mut p = 0.0f64;
    let mut i = 0usize;
    let mut j = 0usize;
    while p < 1.0 - 1e-15 {
        let pa = (i + 1) as f64 / n as f64;
        let pb = (j + 1) as f64 / m as f64;
        let p_next = pa.min(pb).min(1.0);
        total += (xs[i] - ys[j]).abs() * (p_next - p);
        if pa <= p_next + 1e-15 && i + 1 < n {
            i += 1;
        }
        if pb <= p_next + 1e-15 && j + 1 < m {
            j += 1;
        }
        p = p_next;
    }
    Ok(total)
}

/// Histogram as bin edges plus normalized densities (area sums to one).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub density: Vec<f64>,
}

/// Symmetric histogram range `[-m, m]` covering at least the given mass
/// fraction of the pooled samples (by absolute value).
pub fn symmetric_range(pooled: &[f64], mass: f64) -> Result<f64> {
    if pooled.is_empty() {
        return Err(Error::Data("histogram range of empty samples".to_string()));
    }
    let mut mags: Vec<f64> = pooled.iter().map(|x| x.abs()).collect();
    mags.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let idx = ((mags.len() as f64 * mass).ceil() as usize).clamp(1, mags.len()) - 1;
    let m = mags[idx];
    Ok(if m > 0.0 { m } else { 1.0 })
}

/// Fixed-bin density histogram over `[-range, range]`. Samples outside the
/// range are clamped into the end bins so the densities always integrate
/// to one.
pub fn histogram(samples: &[f64], n_bins: usize, range: f64) -> Result<Histogram> {
    if samples.is_empty() {
        return Err(Error::Data("histogram of empty samples".to_string()));
    }
    if n_bins == 0 || !range.is_finite() || range <= 0.0 {
        return Err(Error::Config(format!("invalid histogram spec: {n_bins} bins, range {range}")));
    }
    let width = 2.0 * range / n_bins as f64;
    let mut counts = vec![0usize; n_bins];
    for &x in samples {
        let t = ((x + range) / width).floor();
        let bin = (t as i64).clamp(0, n_bins as i64 - 1) as usize;
        counts[bin] += 1;
    }
    let total = samples.len() as f64;
    let density = counts.iter().map(|&c| c as f64 / (total * width)).collect();
    let edges = (0..=n_bins).map(|i| -range + i as f64 * width).collect();
    Ok(Histogram { edges, density })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rmse_zero_on_identical() {
        let a = [1.0, -2.0, 3.5];
        assert_eq!(rmse(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn w1_translation_property() {
        let a: Vec<f64> = (0..257).map(|i| (i as f64 * 0.7).sin()).collect();
        let c = 0.37;
        let b: Vec<f64> = a.iter().map(|x| x + c).collect();
        let w = wasserstein_1d(&a, &b).unwrap();
        assert!((w - c).abs() < 1e-9, "w1 of a constant shift should be |c|, got {w}");
    }

    #[test]
    fn w1_identical_is_zero() {
        let a = [0.4, -1.0, 2.0, 0.0];
        assert_eq!(wasserstein_1d(&a, &a).unwrap(), 0.0);
    }

    // Independent oracle: both quantile functions are piecewise constant on
    // multiples of 1/(n*m), so a midpoint sum on that grid is exact.
    fn w1_oracle(a: &[f64], b: &[f64]) -> f64 {
        let mut xs = a.to_vec();
        let mut ys = b.to_vec();
        xs.sort_by(|p, q| p.partial_cmp(q).unwrap());
        ys.sort_by(|p, q| p.partial_cmp(q).unwrap());
        let l = xs.len() * ys.len();
        let mut total = 0.0;
        for k in 0..l {
            let p = (k as f64 + 0.5) / l as f64;
            let qa = xs[(p * xs.len() as f64).floor() as usize];
            let qb = ys[(p * ys.len() as f64).floor() as usize];
            total += (qa - qb).abs() / l as f64;
        }
        total
    }

    #[test]
    fn w1_matches_quantile_integration_oracle() {
        let mut state = 12345u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 * 4.0 - 2.0
        };
        for &(n, m) in &[(37usize, 53usize), (64, 64), (10, 100)] {
            let a: Vec<f64> = (0..n).map(|_| next()).collect();
            let b: Vec<f64> = (0..m).map(|_| next()).collect();
            let got = wasserstein_1d(&a, &b).unwrap();
            let want = w1_oracle(&a, &b);
            assert!(
                (got - want).abs() < 1e-8,
                "w1 mismatch for sizes ({n},{m}): {got} vs oracle {want}"
            );
        }
    }

    #[test]
    fn histogram_integrates_to_one() {
        let samples: Vec<f64> = (0..5000).map(|i| ((i as f64) * 0.013).sin() * 2.0).collect();
        let range = symmetric_range(&samples, 0.995).unwrap();
        let h = histogram(&samples, 100, range).unwrap();
        let width = h.edges[1] - h.edges[0];
        let mass: f64 = h.density.iter().map(|d| d * width).sum();
        assert!((mass - 1.0).abs() < 1e-6, "histogram mass {mass}");
    }
}
