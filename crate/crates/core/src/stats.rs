//! Small statistics helpers with deterministic reduction order.

use alloc::vec::Vec;

/// Pairwise (cascade) summation; the reduction tree depends only on length.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if xs.len() <= BLOCK {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    pairwise_sum(xs) / xs.len() as f64
}

/// Unbiased sample variance (two-pass).
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let sq: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
    pairwise_sum(&sq) / (xs.len() - 1) as f64
}

pub fn std_dev(xs: &[f64]) -> f64 {
    libm::sqrt(variance(xs))
}

/// Standard error of the mean.
pub fn std_error(xs: &[f64]) -> f64 {
    std_dev(xs) / libm::sqrt(xs.len() as f64)
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn quantile(xs: &[f64], p: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut s = xs.to_vec();
    s.sort_by(f64::total_cmp);
    quantile_sorted(&s, p)
}

pub fn quantile_sorted(s: &[f64], p: f64) -> f64 {
    let p = p.clamp(0.0, 1.0);
    let h = (s.len() - 1) as f64 * p;
    let lo = libm::floor(h) as usize;
    let hi = (lo + 1).min(s.len() - 1);
    s[lo] + (h - lo as f64) * (s[hi] - s[lo])
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / core::f64::consts::SQRT_2)
}

/// Standard normal upper-tail probability `P(Z > x)`.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x / core::f64::consts::SQRT_2)
}

/// Inverse of the standard normal upper tail: `z` with `P(Z > z) = p`.
pub fn normal_isf(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "tail probability must lie in (0,1)");
    // sf is strictly decreasing; bisection on [-40, 40] converges to ~1e-15.
    let (mut lo, mut hi) = (-40.0f64, 40.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if normal_sf(mid) > p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Two-sample Kolmogorov-Smirnov distance.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < x.len() && j < y.len() {
        let v = if x[i] <= y[j] { x[i] } else { y[j] };
        while i < x.len() && x[i] <= v {
            i += 1;
        }
        while j < y.len() && y[j] <= v {
            j += 1;
        }
        d = d.max(libm::fabs(i as f64 / n - j as f64 / m));
    }
    d
}

/// Hill estimator of the tail index from the `k` largest positive values.
///
/// Returns `None` when fewer than `k + 1` positive observations exist.
pub fn hill_tail_index(xs: &[f64], k: usize) -> Option<f64> {
    let mut pos: Vec<f64> = xs.iter().copied().filter(|x| *x > 0.0 && x.is_finite()).collect();
    if k == 0 || pos.len() <= k {
        return None;
    }
    pos.sort_by(|a, b| b.total_cmp(a));
    let xk = pos[k];
    let gamma = pos[..k].iter().map(|x| libm::log(x / xk)).sum::<f64>() / k as f64;
    (gamma > 0.0).then(|| 1.0 / gamma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn basic_moments() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(mean(&xs), 2.5);
        assert!((variance(&xs) - 5.0 / 3.0).abs() < 1e-15);
        assert_eq!(quantile(&xs, 0.5), 2.5);
        assert_eq!(quantile(&xs, 1.0), 4.0);
    }

    #[test]
    fn pairwise_matches_naive_on_integers() {
        let xs: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&xs), 499_500.0);
    }

    #[test]
    fn normal_quantiles() {
        assert!((normal_isf(0.025) - 1.959_963_984_540_054).abs() < 1e-9);
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-16);
        assert!((normal_isf(0.5)).abs() < 1e-12);
    }

    #[test]
    fn ks_identical_samples() {
        let a = vec![0.1, 0.5, 0.9];
        assert_eq!(ks_distance(&a, &a), 0.0);
        assert_eq!(ks_distance(&[0.0, 0.1], &[1.0, 2.0]), 1.0);
    }

    #[test]
    fn hill_on_pareto_quantiles() {
        // deterministic Pareto(alpha = 2) quantiles
        let n = 20_000;
        let xs: Vec<f64> =
            (1..=n).map(|i| libm::pow(1.0 - (i as f64 - 0.5) / n as f64, -0.5)).collect();
        let a = hill_tail_index(&xs, 400).unwrap();
        assert!((a - 2.0).abs() < 0.1, "{a}");
    }
}
