//! Characteristics `(B^k, C, nu)` on a grid and their transformations.
//!
//! Stieltjes integrals against `B^k` and `C` are left-point sums. The
//! compensator is either a state-dependent kernel, integrated by adaptive
//! quadrature step by step, or a list of weighted atoms. Kernel step `j`
//! covers `]t_j, t_{j+1}]` with rate `lambda_j` and state `x_j`; an atom with
//! grid index `i` belongs to step `i - 1`.

use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::func::{Cutoff, SpaceFn, TestFn};
use crate::kernel::SizeKernel;
use crate::path::{JumpMeasure, PathEnsemble, SamplePath, TimeGrid};
use crate::quad::Quadrature;
use crate::simulate::JumpDiffusionSpec;
use crate::truncation::TruncationFn;

/// Atom of a discrete compensator: mass `mass` at `(t_index, size)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NuAtom {
    pub index: usize,
    pub size: f64,
    pub mass: f64,
}

/// Jump compensator `nu(ds, dz)` along one path.
#[derive(Clone)]
pub enum Compensator {
    Kernel {
        /// `lambda(t_j, x_j)` for each step.
        rates: Vec<f64>,
        /// State `x_j` at which `q(x_j, dz)` is taken.
        states: Vec<f64>,
        sizes: SizeKernel,
        /// Successive pushforward maps `z -> v(t, y + z) - v(t, y)`.
        maps: Vec<Arc<dyn TestFn>>,
        quad: Quadrature,
    },
    Atoms(Vec<NuAtom>),
}

impl core::fmt::Debug for Compensator {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Compensator::Kernel { sizes, maps, rates, .. } => f
                .debug_struct("Kernel")
                .field("steps", &rates.len())
                .field("sizes", sizes)
                .field("maps", &maps.len())
                .finish(),
            Compensator::Atoms(a) => f.debug_tuple("Atoms").field(a).finish(),
        }
    }
}

impl Compensator {
    pub fn kernel(rates: Vec<f64>, states: Vec<f64>, sizes: SizeKernel) -> Self {
        Compensator::Kernel { rates, states, sizes, maps: Vec::new(), quad: Quadrature::default() }
    }

    /// `int g(z) nu_j(dz)` over step `j`; `breaks` are non-smooth points of `g`
    /// in the size variable of this compensator.
    pub fn step_integral<G: FnMut(f64) -> f64>(
        &self,
        grid: &TimeGrid,
        j: usize,
        mut g: G,
        breaks: &[f64],
    ) -> Result<f64> {
        match self {
            Compensator::Kernel { rates, states, sizes, maps, quad } => {
                let lam = rates[j];
                if lam == 0.0 {
                    return Ok(0.0);
                }
                let t = grid.time(j);
                let y = states[j];
                let e = if maps.is_empty() {
                    sizes.expect(y, &mut g, breaks, quad)?
                } else {
                    sizes.expect(
                        y,
                        |z| {
                            let (mut base, mut size) = (y, z);
                            for v in maps {
                                let nb = v.value(t, base);
                                size = v.value(t, base + size) - nb;
                                base = nb;
                            }
                            if size == 0.0 {
                                0.0
                            } else {
                                g(size)
                            }
                        },
                        &[],
                        quad,
                    )?
                };
                Ok(lam * grid.dt() * e)
            }
            Compensator::Atoms(atoms) => {
                Ok(atoms.iter().filter(|a| a.index == j + 1).map(|a| a.mass * g(a.size)).sum())
            }
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        match self {
            Compensator::Kernel { rates, states, sizes, .. } => {
                if rates.len() != n || states.len() != n {
                    return Err(invalid("nu", "one rate and one state per step required"));
                }
                if rates.iter().any(|r| !(*r >= 0.0)) {
                    return Err(invalid("nu.intensity", "must be nonnegative"));
                }
                sizes.validate()
            }
            Compensator::Atoms(atoms) => {
                if atoms.iter().any(|a| a.index == 0 || a.index > n || !(a.mass >= 0.0) || a.size == 0.0) {
                    return Err(invalid("nu.atoms", "need index in 1..=n, mass >= 0, nonzero size"));
                }
                Ok(())
            }
        }
    }
}

/// Discretized characteristics of one path.
#[derive(Debug, Clone)]
pub struct CharTriplet {
    pub b: SamplePath,
    pub c: SamplePath,
    pub nu: Compensator,
    pub k: TruncationFn,
}

impl CharTriplet {
    pub fn new(b: SamplePath, c: SamplePath, nu: Compensator, k: TruncationFn) -> Result<Self> {
        b.same_grid(&c)?;
        if b.first() != 0.0 {
            return Err(invalid("B", "must start at 0"));
        }
        if c.first() != 0.0 || c.values().windows(2).any(|w| w[1] < w[0]) {
            return Err(invalid("C", "must start at 0 and be nondecreasing"));
        }
        nu.validate(b.grid().n_steps())?;
        Ok(Self { b, c, nu, k })
    }

    pub fn grid(&self) -> &TimeGrid {
        self.b.grid()
    }

    /// Characteristics of a jump-diffusion along a simulated path:
    /// `B^k = int b ds + k * nu`, `C = int sigma^2 ds`.
    pub fn from_jump_diffusion(spec: &JumpDiffusionSpec, path: &SamplePath) -> Result<Self> {
        let grid = *path.grid();
        let n = grid.n_steps();
        let dt = grid.dt();
        let xv = path.values();
        let k = spec.truncation;
        let (rates, sizes) = match &spec.jumps {
            Some(jm) => ((0..n).map(|j| jm.rate(grid.time(j), xv[j])).collect(), jm.sizes.clone()),
            None => (alloc::vec![0.0; n], SizeKernel::Size(crate::kernel::SizeLaw::PointMass(1.0))),
        };
        let nu = Compensator::kernel(rates, xv[..n].to_vec(), sizes);
        let breaks = k.breakpoints();
        let mut b = Vec::with_capacity(n + 1);
        let mut c = Vec::with_capacity(n + 1);
        let (mut bs, mut cs) = (0.0, 0.0);
        b.push(0.0);
        c.push(0.0);
        for j in 0..n {
            let t = grid.time(j);
            let s = (spec.diffusion)(t, xv[j]);
            bs += (spec.drift)(t, xv[j]) * dt + nu.step_integral(&grid, j, |z| k.eval(z), &breaks)?;
            cs += s * s * dt;
            b.push(bs);
            c.push(cs);
        }
        Self::new(SamplePath::continuous(grid, b)?, SamplePath::continuous(grid, c)?, nu, k)
    }
}

/// Analytic triplets along every path of a jump-diffusion ensemble.
pub fn triplets_for_ensemble(spec: &JumpDiffusionSpec, ensemble: &PathEnsemble) -> Result<Vec<CharTriplet>> {
    ensemble.paths.iter().map(|p| CharTriplet::from_jump_diffusion(spec, p)).collect()
}

fn cumulate<F: FnMut(usize) -> Result<f64>>(grid: TimeGrid, mut step: F) -> Result<SamplePath> {
    let n = grid.n_steps();
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for j in 0..n {
        acc += step(j)?;
        out.push(acc);
    }
    SamplePath::continuous(grid, out)
}

fn merged_breaks(a: &TruncationFn, b: &TruncationFn) -> Vec<f64> {
    let mut v = a.breakpoints();
    v.extend(b.breakpoints());
    v
}

/// `B^{k_new} = B^k + (k_new - k) * nu`; `C` and `nu` unchanged.
pub fn change_truncation(tr: &CharTriplet, k_new: TruncationFn) -> Result<CharTriplet> {
    let grid = *tr.grid();
    let breaks = merged_breaks(&tr.k, &k_new);
    let k_old = tr.k;
    let corr = cumulate(grid, |j| tr.nu.step_integral(&grid, j, |z| k_new.eval(z) - k_old.eval(z), &breaks))?;
    Ok(CharTriplet { b: tr.b.lin_comb(1.0, &corr, 1.0)?, c: tr.c.clone(), nu: tr.nu.clone(), k: k_new })
}

/// Image of a jump measure under `(t, x) -> (t, v(t, X_{t-} + x) - v(t, X_{t-}))`.
pub fn pushforward_measure(mu: &JumpMeasure, v: &dyn TestFn, x: &SamplePath) -> JumpMeasure {
    let xv = x.values();
    JumpMeasure {
        atoms: mu
            .atoms
            .iter()
            .filter_map(|a| {
                let pre = xv[a.index] - a.size;
                let size = v.value(a.time, pre + a.size) - v.value(a.time, pre);
                (size != 0.0).then_some(crate::path::Atom { size, ..*a })
            })
            .collect(),
        detected: mu.detected,
    }
}

/// Image of a compensator under the same map, with states taken on `x`.
pub fn pushforward_compensator(nu: &Compensator, v: Arc<dyn TestFn>, x: &SamplePath) -> Compensator {
    match nu {
        Compensator::Kernel { rates, states, sizes, maps, quad } => {
            let mut maps = maps.clone();
            maps.push(v);
            Compensator::Kernel { rates: rates.clone(), states: states.clone(), sizes: sizes.clone(), maps, quad: *quad }
        }
        Compensator::Atoms(atoms) => {
            let xv = x.values();
            let g = x.grid();
            Compensator::Atoms(
                atoms
                    .iter()
                    .filter_map(|a| {
                        let t = g.time(a.index);
                        let pre = xv[a.index - 1];
                        let size = v.value(t, pre + a.size) - v.value(t, pre);
                        (size != 0.0).then_some(NuAtom { size, ..*a })
                    })
                    .collect(),
            )
        }
    }
}

/// Increments of the predictable part of `f(X)`, step by step:
/// `1/2 f''(X_j) dC_j + f'(X_j) dB_j + int (f(X_j+z) - f(X_j) - k(z) f'(X_j)) nu_j(dz)`.
pub fn ito_increments(tr: &CharTriplet, f: &dyn SpaceFn, x: &SamplePath) -> Result<Vec<f64>> {
    x.same_grid(&tr.b)?;
    let grid = *tr.grid();
    let (bv, cv, xv) = (tr.b.values(), tr.c.values(), x.values());
    let k = tr.k;
    let breaks = k.breakpoints();
    (0..grid.n_steps())
        .map(|j| {
            let y = xv[j];
            let (f0, f1, f2) = (f.value(y), f.d1(y), f.d2(y));
            let jump = tr.nu.step_integral(&grid, j, |z| f.value(y + z) - f0 - k.eval(z) * f1, &breaks)?;
            Ok(0.5 * f2 * (cv[j + 1] - cv[j]) + f1 * (bv[j + 1] - bv[j]) + jump)
        })
        .collect()
}

/// Predictable part of `f(X)` for bounded `f` in `C^2`.
pub fn ito_compensator(tr: &CharTriplet, f: &dyn SpaceFn, x: &SamplePath) -> Result<SamplePath> {
    let inc = ito_increments(tr, f, x)?;
    cumulate(*tr.grid(), |j| Ok(inc[j]))
}

/// Space function held behind an `Arc`, seen as a time-independent test function.
struct Lift(Arc<dyn SpaceFn + Send + Sync>);

impl TestFn for Lift {
    fn value(&self, _: f64, x: f64) -> f64 {
        self.0.value(x)
    }
    fn dt(&self, _: f64, _: f64) -> Option<f64> {
        Some(0.0)
    }
    fn dx(&self, _: f64, x: f64) -> f64 {
        self.0.d1(x)
    }
    fn dxx(&self, _: f64, x: f64) -> Option<f64> {
        Some(self.0.d2(x))
    }
}

fn check_bijective(h: &dyn SpaceFn, x: &SamplePath) -> Result<()> {
    let mut sign = 0.0;
    for &xv in x.values() {
        let d = h.d1(xv);
        if !(libm::fabs(d) > 1e-12) || (sign != 0.0 && d * sign < 0.0) {
            return Err(Error::NotBijective { x: xv, derivative: d });
        }
        sign = libm::copysign(1.0, d);
    }
    Ok(())
}

/// Characteristics of `Y = h(X)` for a semimartingale `X` and bijective `h` in `C^2`:
///
/// ```text
/// dB'_j = 1/2 h''(X_j) dC_j + h'(X_j) dB_j - int [k(z) h'(X_j) - k(h(X_j+z) - h(X_j))] nu_j(dz)
/// dC'_j = h'(X_j)^2 dC_j
/// nu'   = image of nu under z -> h(X_j + z) - h(X_j)
/// ```
pub fn transform_b_htransform(
    tr: &CharTriplet,
    h: Arc<dyn SpaceFn + Send + Sync>,
    x: &SamplePath,
) -> Result<CharTriplet> {
    x.same_grid(&tr.b)?;
    check_bijective(&*h, x)?;
    let grid = *tr.grid();
    let (bv, cv, xv) = (tr.b.values(), tr.c.values(), x.values());
    let k = tr.k;
    let breaks = k.breakpoints();
    let b = cumulate(grid, |j| {
        let y = xv[j];
        let (h0, h1, h2) = (h.value(y), h.d1(y), h.d2(y));
        let corr = tr.nu.step_integral(&grid, j, |z| k.eval(z) * h1 - k.eval(h.value(y + z) - h0), &breaks)?;
        Ok(0.5 * h2 * (cv[j + 1] - cv[j]) + h1 * (bv[j + 1] - bv[j]) - corr)
    })?;
    let c = cumulate(grid, |j| {
        let d = h.d1(xv[j]);
        Ok(d * d * (cv[j + 1] - cv[j]))
    })?;
    let nu = pushforward_compensator(&tr.nu, Arc::new(Lift(h.clone())), x);
    CharTriplet::new(b, c, nu, k)
}

/// Outcome of the cutoff route for `B'`.
#[derive(Debug, Clone)]
pub struct CutoffRoute {
    pub b: SamplePath,
    /// Cutoff levels tried, in order.
    pub levels: Vec<f64>,
    /// Sup-distance between successive estimates.
    pub distances: Vec<f64>,
}

/// `B'` of `Y = h(X)` read off the predictable part of `f_N(h(X))`:
///
/// ```text
/// dB'_j = (dA_j[f_N o h] - 1/2 f_N''(Y_j) dC'_j - int (f_N(Y_j+u) - f_N(Y_j) - k(u) f_N'(Y_j)) nu'_j(du)) / f_N'(Y_j)
/// ```
///
/// where `A[f]` is [`ito_compensator`] on the triplet of `X`, and `C'`, `nu'`
/// are those of `Y`. Steps with `f_N'(Y_j) != 1` are left out; `N` doubles
/// from `n0` until two successive estimates agree within `tol`.
pub fn b_via_cutoff(
    tr: &CharTriplet,
    h: Arc<dyn SpaceFn + Send + Sync>,
    x: &SamplePath,
    n0: f64,
    tol: f64,
    max_levels: usize,
) -> Result<CutoffRoute> {
    check_bijective(&*h, x)?;
    if !(n0 > 0.0) {
        return Err(invalid("n0", "must be positive"));
    }
    let grid = *tr.grid();
    let n = grid.n_steps();
    let k = tr.k;
    let y_path = crate::path::map_path(x, &|_, v| h.value(v));
    let yv = y_path.values();
    let c_bar = cumulate(grid, |j| {
        let d = h.d1(x.values()[j]);
        Ok(d * d * (tr.c.values()[j + 1] - tr.c.values()[j]))
    })?;
    let nu_bar = pushforward_compensator(&tr.nu, Arc::new(Lift(h.clone())), x);
    let mut levels = Vec::new();
    let mut distances = Vec::new();
    let mut prev: Option<Vec<f64>> = None;
    let mut level = n0;
    for _ in 0..max_levels.max(2) {
        let f = Cutoff::new(level);
        let comp = crate::func::Compose { outer: &f, inner: &*h };
        let inc = ito_increments(tr, &comp, x)?;
        let mut acc = 0.0;
        let mut b = Vec::with_capacity(n + 1);
        b.push(0.0);
        for j in 0..n {
            let y = yv[j];
            let (f0, f1, f2) = (f.value(y), f.d1(y), f.d2(y));
            if f1 == 1.0 {
                let jump = nu_bar.step_integral(&grid, j, |u| f.value(y + u) - f0 - k.eval(u) * f1, &[])?;
                acc += (inc[j] - 0.5 * f2 * (c_bar.values()[j + 1] - c_bar.values()[j]) - jump) / f1;
            }
            b.push(acc);
        }
        levels.push(level);
        if let Some(p) = &prev {
            let d = p.iter().zip(&b).map(|(a, c)| libm::fabs(a - c)).fold(0.0, f64::max);
            distances.push(d);
            if d < tol {
                return Ok(CutoffRoute { b: SamplePath::continuous(grid, b)?, levels, distances });
            }
        }
        prev = Some(b);
        level *= 2.0;
    }
    Err(invalid("cutoff", "estimates did not stabilize as N grew"))
}
