//! Adaptive Gauss-Legendre quadrature and composite Simpson rules.

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// 10-point Gauss-Legendre rule on `[-1, 1]` (positive half; symmetric).
const GL10_X: [f64; 5] = [
    0.148_874_338_981_631_21,
    0.433_395_394_129_247_2,
    0.679_409_568_299_024_4,
    0.865_063_366_688_984_5,
    0.973_906_528_517_171_7,
];
const GL10_W: [f64; 5] = [
    0.295_524_224_714_752_87,
    0.269_266_719_309_996_35,
    0.219_086_362_515_982_04,
    0.149_451_349_150_580_6,
    0.066_671_344_308_688_14,
];

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`,
/// by Newton iteration on `P_n`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut xs = alloc::vec![0.0; n];
    let mut ws = alloc::vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = libm::cos(core::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5));
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if libm::fabs(dx) < 1e-16 {
                break;
            }
        }
        xs[i] = -x;
        xs[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        ws[i] = w;
        ws[n - 1 - i] = w;
    }
    (xs, ws)
}

#[inline]
fn gl10<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> f64 {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut s = 0.0;
    for k in 0..5 {
        let d = h * GL10_X[k];
        s += GL10_W[k] * (f(c - d) + f(c + d));
    }
    s * h
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub nodes: usize,
}

/// Globally adaptive Gauss-Legendre integrator.
///
/// The interval with the largest local error (10-point rule on the whole
/// interval vs. on its two halves) is bisected until the summed error is
/// below `max(abs_tol, rel_tol * |I|)` or `max_nodes` evaluations were
/// spent. At the node cap the result is accepted if its relative error is
/// below `fail_rel`, otherwise [`Error::QuadratureDivergence`] is returned.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_nodes: usize,
    pub fail_rel: f64,
}

impl Default for Quadrature {
    fn default() -> Self {
        Self { rel_tol: 1e-9, abs_tol: 1e-13, max_nodes: 1 << 14, fail_rel: 1e-8 }
    }
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl Quadrature {
    fn piece<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Piece {
        let m = 0.5 * (a + b);
        let whole = gl10(f, a, b);
        let value = gl10(f, a, m) + gl10(f, m, b);
        Piece { a, b, value, error: libm::fabs(whole - value) }
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F, a: f64, b: f64) -> Result<QuadResult> {
        self.integrate_with_breaks(&mut f, a, b, &[])
    }

    /// Integrate over `[a, b]` with the interval pre-split at `breaks`
    /// (points outside `(a, b)` are ignored).
    pub fn integrate_with_breaks<F: FnMut(f64) -> f64>(
        &self,
        mut f: F,
        a: f64,
        b: f64,
        breaks: &[f64],
    ) -> Result<QuadResult> {
        if a == b {
            return Ok(QuadResult { value: 0.0, error: 0.0, nodes: 0 });
        }
        let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
        let mut cuts: Vec<f64> = breaks.iter().copied().filter(|x| *x > lo && *x < hi).collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let mut pieces = Vec::new();
        let mut left = lo;
        for c in cuts.into_iter().chain(core::iter::once(hi)) {
            pieces.push(Self::piece(&mut f, left, c));
            left = c;
        }
        let per_piece = 30;
        let mut nodes = pieces.len() * per_piece;
        loop {
            let value: f64 = pieces.iter().map(|p| p.value).sum();
            let error: f64 = pieces.iter().map(|p| p.error).sum();
            let target = self.abs_tol.max(self.rel_tol * libm::fabs(value));
            if error <= target {
                return Ok(QuadResult { value: sign * value, error, nodes });
            }
            if nodes + 2 * per_piece > self.max_nodes {
                let rel = error / libm::fabs(value).max(f64::MIN_POSITIVE);
                if error <= self.abs_tol.max(self.fail_rel * libm::fabs(value)) {
                    return Ok(QuadResult { value: sign * value, error, nodes });
                }
                return Err(Error::QuadratureDivergence { estimate: sign * value, change: rel });
            }
            let (worst, _) = pieces
                .iter()
                .enumerate()
                .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
                .expect("at least one piece");
            let p = pieces.swap_remove(worst);
            let m = 0.5 * (p.a + p.b);
            if !(m > p.a && m < p.b) {
                // interval exhausted at machine precision
                return Err(Error::QuadratureDivergence {
                    estimate: sign * value,
                    change: error / libm::fabs(value).max(f64::MIN_POSITIVE),
                });
            }
            pieces.push(Self::piece(&mut f, p.a, m));
            pieces.push(Self::piece(&mut f, m, p.b));
            nodes += 2 * per_piece;
        }
    }
}

/// Composite Simpson rule with `2 * pairs` panels.
pub fn simpson<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, pairs: usize) -> f64 {
    let n = 2 * pairs.max(1);
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn newton_rule_matches_table() {
        let (x, w) = gauss_legendre(10);
        for k in 0..5 {
            assert!((x[5 + k] - GL10_X[k]).abs() < 1e-15, "{k}");
            assert!((w[5 + k] - GL10_W[k]).abs() < 1e-14, "{k}");
        }
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn exact_for_degree_19() {
        let q = Quadrature::default();
        let r = q.integrate(|x| libm::pow(x, 19.0) + libm::pow(x, 18.0), 0.0, 1.0).unwrap();
        assert!((r.value - (1.0 / 20.0 + 1.0 / 19.0)).abs() < 1e-14);
    }

    #[test]
    fn smooth_and_discontinuous() {
        let q = Quadrature::default();
        let r = q.integrate(libm::exp, -1.0, 2.0).unwrap();
        assert!((r.value - (libm::exp(2.0) - libm::exp(-1.0))).abs() < 1e-12);
        // step at 0.3 without break hints
        let r = q.integrate(|x| if x < 0.3 { 1.0 } else { 0.0 }, 0.0, 1.0).unwrap();
        assert!((r.value - 0.3).abs() < 1e-9);
        let r = q.integrate_with_breaks(|x| if x < 0.3 { 1.0 } else { 0.0 }, 0.0, 1.0, &[0.3]).unwrap();
        assert!((r.value - 0.3).abs() < 1e-15);
        assert!((q.integrate(|x| x, 1.0, 0.0).unwrap().value + 0.5).abs() < 1e-15);
    }

    #[test]
    fn divergence_is_reported() {
        let q = Quadrature::default();
        let r = q.integrate(|x| 1.0 / x, 0.0, 1.0);
        assert!(matches!(r, Err(Error::QuadratureDivergence { .. })));
    }

    #[test]
    fn simpson_cubic_exact() {
        let s = simpson(|x| x * x * x - x, 0.0, 2.0, 3);
        assert!((s - 2.0).abs() < 1e-14);
    }
}
