//! Function objects with derivatives used by operators and transforms.

use alloc::sync::Arc;

/// Coefficient `(t, x) -> value`, shareable across threads.
pub type Coef = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

pub fn coef<F: Fn(f64, f64) -> f64 + Send + Sync + 'static>(f: F) -> Coef {
    Arc::new(f)
}

pub fn constant(c: f64) -> Coef {
    Arc::new(move |_, _| c)
}

/// A function of space with its first two derivatives.
pub trait SpaceFn {
    fn value(&self, x: f64) -> f64;
    fn d1(&self, x: f64) -> f64;
    fn d2(&self, x: f64) -> f64;
}

/// A function of `(t, x)` with the partial derivatives operators need.
///
/// `dxx` returns `None` when the function is only `C^{0,1}` (or `C^{1,1}`)
/// in the sense required by first-order operators.
pub trait TestFn: Send + Sync {
    fn value(&self, t: f64, x: f64) -> f64;
    fn dt(&self, t: f64, x: f64) -> Option<f64>;
    fn dx(&self, t: f64, x: f64) -> f64;
    fn dxx(&self, t: f64, x: f64) -> Option<f64>;
}

type F2 = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// [`TestFn`] assembled from closures.
#[derive(Clone)]
pub struct FnTest {
    pub v: F2,
    pub dt: Option<F2>,
    pub dx: F2,
    pub dxx: Option<F2>,
}

impl core::fmt::Debug for FnTest {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("FnTest")
            .field("has_dt", &self.dt.is_some())
            .field("has_dxx", &self.dxx.is_some())
            .finish()
    }
}

impl FnTest {
    /// Time-independent `C^2` function.
    pub fn space<V, D1, D2>(v: V, d1: D1, d2: D2) -> Self
    where
        V: Fn(f64) -> f64 + Send + Sync + 'static,
        D1: Fn(f64) -> f64 + Send + Sync + 'static,
        D2: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            v: Arc::new(move |_, x| v(x)),
            dt: Some(Arc::new(|_, _| 0.0)),
            dx: Arc::new(move |_, x| d1(x)),
            dxx: Some(Arc::new(move |_, x| d2(x))),
        }
    }

    pub fn full<V, T, D1, D2>(v: V, dt: T, d1: D1, d2: D2) -> Self
    where
        V: Fn(f64, f64) -> f64 + Send + Sync + 'static,
        T: Fn(f64, f64) -> f64 + Send + Sync + 'static,
        D1: Fn(f64, f64) -> f64 + Send + Sync + 'static,
        D2: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        Self { v: Arc::new(v), dt: Some(Arc::new(dt)), dx: Arc::new(d1), dxx: Some(Arc::new(d2)) }
    }

    /// `C^{0,1}` function: value and space derivative only.
    pub fn c01<V, D1>(v: V, d1: D1) -> Self
    where
        V: Fn(f64, f64) -> f64 + Send + Sync + 'static,
        D1: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        Self { v: Arc::new(v), dt: None, dx: Arc::new(d1), dxx: None }
    }

    pub fn identity() -> Self {
        Self::space(|x| x, |_| 1.0, |_| 0.0)
    }

    /// `a * self + b * other`.
    pub fn lin_comb(&self, a: f64, other: &FnTest, b: f64) -> FnTest {
        fn mix(p: &F2, a: f64, q: &F2, b: f64) -> F2 {
            let (p, q) = (p.clone(), q.clone());
            Arc::new(move |t, x| a * p(t, x) + b * q(t, x))
        }
        FnTest {
            v: mix(&self.v, a, &other.v, b),
            dt: match (&self.dt, &other.dt) {
                (Some(p), Some(q)) => Some(mix(p, a, q, b)),
                _ => None,
            },
            dx: mix(&self.dx, a, &other.dx, b),
            dxx: match (&self.dxx, &other.dxx) {
                (Some(p), Some(q)) => Some(mix(p, a, q, b)),
                _ => None,
            },
        }
    }
}

impl TestFn for FnTest {
    fn value(&self, t: f64, x: f64) -> f64 {
        (self.v)(t, x)
    }
    fn dt(&self, t: f64, x: f64) -> Option<f64> {
        self.dt.as_ref().map(|f| f(t, x))
    }
    fn dx(&self, t: f64, x: f64) -> f64 {
        (self.dx)(t, x)
    }
    fn dxx(&self, t: f64, x: f64) -> Option<f64> {
        self.dxx.as_ref().map(|f| f(t, x))
    }
}

/// `v(s, .)` with time frozen at `s`, seen as a space function.
pub struct Frozen<'a> {
    pub v: &'a dyn TestFn,
    pub s: f64,
}

impl SpaceFn for Frozen<'_> {
    fn value(&self, x: f64) -> f64 {
        self.v.value(self.s, x)
    }
    fn d1(&self, x: f64) -> f64 {
        self.v.dx(self.s, x)
    }
    fn d2(&self, x: f64) -> f64 {
        self.v.dxx(self.s, x).unwrap_or(f64::NAN)
    }
}

/// Space function from three closures.
pub struct Space<V, D1, D2> {
    pub v: V,
    pub d1: D1,
    pub d2: D2,
}

impl<V, D1, D2> SpaceFn for Space<V, D1, D2>
where
    V: Fn(f64) -> f64,
    D1: Fn(f64) -> f64,
    D2: Fn(f64) -> f64,
{
    fn value(&self, x: f64) -> f64 {
        (self.v)(x)
    }
    fn d1(&self, x: f64) -> f64 {
        (self.d1)(x)
    }
    fn d2(&self, x: f64) -> f64 {
        (self.d2)(x)
    }
}

/// Composition `f o h` with chain-rule derivatives.
pub struct Compose<'a> {
    pub outer: &'a dyn SpaceFn,
    pub inner: &'a dyn SpaceFn,
}

impl SpaceFn for Compose<'_> {
    fn value(&self, x: f64) -> f64 {
        self.outer.value(self.inner.value(x))
    }
    fn d1(&self, x: f64) -> f64 {
        self.outer.d1(self.inner.value(x)) * self.inner.d1(x)
    }
    fn d2(&self, x: f64) -> f64 {
        let y = self.inner.value(x);
        let h1 = self.inner.d1(x);
        self.outer.d2(y) * h1 * h1 + self.outer.d1(y) * self.inner.d2(x)
    }
}

/// `psi(s) = exp(-1/s)` for `s > 0`, else 0.
#[inline]
fn psi(s: f64) -> f64 {
    if s > 0.0 {
        libm::exp(-1.0 / s)
    } else {
        0.0
    }
}

/// Smooth step: 1 on `s <= 0`, 0 on `s >= 1`, `C^inf` in between.
pub fn smooth_step(s: f64) -> f64 {
    let (a, b) = (psi(1.0 - s), psi(s));
    a / (a + b)
}

pub fn smooth_step_d1(s: f64) -> f64 {
    if s <= 0.0 || s >= 1.0 {
        return 0.0;
    }
    let (a, b) = (psi(1.0 - s), psi(s));
    let da = -a / ((1.0 - s) * (1.0 - s));
    let db = b / (s * s);
    (da * b - a * db) / ((a + b) * (a + b))
}

/// `chi_N`: 1 on `|x| <= N`, 0 on `|x| >= N+1`, smooth in between.
///
/// As a [`SpaceFn`] this is `f_N` with `f_N(0) = 0` and `f_N' = chi_N`, so
/// `f_N -> Id` in `C^1` on compacts while `f_N'` has compact support.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cutoff {
    pub n: f64,
}

impl Cutoff {
    pub fn new(n: f64) -> Self {
        Self { n }
    }

    pub fn chi(&self, x: f64) -> f64 {
        smooth_step(libm::fabs(x) - self.n)
    }

    pub fn chi_d1(&self, x: f64) -> f64 {
        smooth_step_d1(libm::fabs(x) - self.n) * libm::copysign(1.0, x)
    }

    /// `int_0^u chi(s) ds` for `u` in `[0, 1]`, by 4 x 10-point Gauss-Legendre.
    fn step_integral(u: f64) -> f64 {
        if u <= 0.0 {
            return 0.0;
        }
        if u >= 1.0 {
            // chi(s) + chi(1 - s) = 1 on [0, 1]
            return 0.5;
        }
        let q = crate::quad::Quadrature::default();
        let pieces = [0.25 * u, 0.5 * u, 0.75 * u];
        q.integrate_with_breaks(smooth_step, 0.0, u, &pieces).map(|r| r.value).unwrap_or(f64::NAN)
    }
}

impl SpaceFn for Cutoff {
    fn value(&self, x: f64) -> f64 {
        let ax = libm::fabs(x);
        let inner = self.n;
        if ax <= inner {
            return x;
        }
        libm::copysign(inner + Self::step_integral(ax - inner), x)
    }
    fn d1(&self, x: f64) -> f64 {
        self.chi(x)
    }
    fn d2(&self, x: f64) -> f64 {
        self.chi_d1(x)
    }
}
