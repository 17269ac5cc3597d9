//! SDEs with distributional drift `beta'`: the limit `Sigma` of mollified
//! `2 int_0^x beta'_n / sigma_n^2`, the harmonic map `h` with `h' = e^{-Sigma}`,
//! the operator `L f = (sigma^2/2) phi' e^{-Sigma}` for `f' = e^{-Sigma} phi`,
//! and a simulator working in `Y = h(X)`.
//!
//! Tables live on a uniform grid over `[-R, R]` with `0` as a node and are
//! read back by cubic Hermite interpolation (values plus exact slopes).

use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::func::Cutoff;
use crate::kernel::JumpModel;
use crate::path::{EnsembleMeta, GroundTruth, Jump, PathEnsemble, SamplePath, TimeGrid};
use crate::quad::{gauss_legendre, Quadrature};
use crate::rng::{path_rng, path_seeds, PathRng};
use crate::simulate::{poisson, SimulatedPath};
use crate::truncation::TruncationFn;

pub type Fn1 = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mollifier {
    /// Standard normal density.
    Gaussian,
    /// `C exp(-1 / (1 - u^2))` on `]-1, 1[`.
    Bump,
}

/// Quadrature nodes `u` with weights already multiplied by `phi(u)` and `phi'(u)`.
struct MollifierRule {
    u: Vec<f64>,
    w_phi: Vec<f64>,
    w_dphi: Vec<f64>,
}

impl Mollifier {
    pub fn name(&self) -> &'static str {
        match self {
            Mollifier::Gaussian => "gaussian",
            Mollifier::Bump => "bump",
        }
    }

    fn rule(&self) -> MollifierRule {
        let (lo, hi, panels) = match self {
            Mollifier::Gaussian => (-9.0, 9.0, 36),
            Mollifier::Bump => (-1.0, 1.0, 32),
        };
        let (x, w) = gauss_legendre(8);
        let width = (hi - lo) / panels as f64;
        let mut u = Vec::with_capacity(panels * x.len());
        let mut wq = Vec::with_capacity(u.capacity());
        for p in 0..panels {
            let a = lo + p as f64 * width;
            for (xi, wi) in x.iter().zip(&w) {
                u.push(a + 0.5 * width * (xi + 1.0));
                wq.push(0.5 * width * wi);
            }
        }
        let (mut phi, mut dphi): (Vec<f64>, Vec<f64>) = match self {
            Mollifier::Gaussian => u
                .iter()
                .map(|&v| {
                    let d = libm::exp(-0.5 * v * v);
                    (d, -v * d)
                })
                .unzip(),
            Mollifier::Bump => u
                .iter()
                .map(|&v| {
                    let q = 1.0 - v * v;
                    let d = libm::exp(-1.0 / q);
                    (d, d * (-2.0 * v / (q * q)))
                })
                .unzip(),
        };
        // normalize with the same rule, so int phi = 1 exactly in the discrete sense
        let mass: f64 = phi.iter().zip(&wq).map(|(p, w)| p * w).sum();
        for (p, d) in phi.iter_mut().zip(dphi.iter_mut()) {
            *p /= mass;
            *d /= mass;
        }
        MollifierRule {
            w_phi: phi.iter().zip(&wq).map(|(p, w)| p * w).collect(),
            w_dphi: dphi.iter().zip(&wq).map(|(p, w)| p * w).collect(),
            u,
        }
    }
}

/// Operator data `(sigma^2/2) d^2 + beta' d` plus an optional jump kernel.
#[derive(Clone)]
pub struct DriftSpec {
    pub beta: Fn1,
    pub sigma: Fn1,
    /// Declared lower bound of `|sigma|` on the working interval.
    pub sigma_floor: f64,
    /// Mollifier bandwidths `n_1 < ... < n_m`.
    pub schedule: Vec<f64>,
    pub mollifier: Mollifier,
    pub jumps: Option<JumpModel>,
    pub truncation: TruncationFn,
}

impl core::fmt::Debug for DriftSpec {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("DriftSpec")
            .field("sigma_floor", &self.sigma_floor)
            .field("schedule", &self.schedule)
            .field("mollifier", &self.mollifier)
            .field("jumps", &self.jumps)
            .finish()
    }
}

impl DriftSpec {
    pub fn new(beta: Fn1, sigma: Fn1, sigma_floor: f64, schedule: Vec<f64>) -> Result<Self> {
        let s = Self {
            beta,
            sigma,
            sigma_floor,
            schedule,
            mollifier: Mollifier::Gaussian,
            jumps: None,
            truncation: TruncationFn::Clamp { radius: 1.0 },
        };
        s.validate()?;
        Ok(s)
    }

    pub fn with_mollifier(mut self, m: Mollifier) -> Self {
        self.mollifier = m;
        self
    }

    pub fn with_jumps(mut self, jm: JumpModel) -> Self {
        self.jumps = Some(jm);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.schedule.len() < 3 {
            return Err(invalid("schedule", "needs at least 3 bandwidths"));
        }
        if self.schedule.iter().any(|n| !(*n > 0.0 && n.is_finite())) || self.schedule.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(invalid("schedule", "bandwidths must be positive and strictly increasing"));
        }
        if !(self.sigma_floor > 0.0) {
            return Err(invalid("sigma_floor", "must be positive"));
        }
        self.truncation.check()
    }
}

/// A function tabulated with its slope on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub lo: f64,
    pub dx: f64,
    pub values: Vec<f64>,
    pub slopes: Vec<f64>,
}

impl Table {
    pub fn hi(&self) -> f64 {
        self.lo + self.dx * (self.values.len() - 1) as f64
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.values.len()).map(move |i| self.lo + i as f64 * self.dx)
    }

    fn locate(&self, x: f64) -> Result<(usize, f64)> {
        let hi = self.hi();
        let slack = 1e-12 * (1.0 + libm::fabs(hi));
        if !(x >= self.lo - slack && x <= hi + slack) {
            return Err(Error::OutsideDomain(alloc::format!("{x} outside table [{}, {hi}]", self.lo)));
        }
        let last = self.values.len() - 2;
        let s = ((x - self.lo) / self.dx).max(0.0);
        let i = (libm::floor(s) as usize).min(last);
        Ok((i, (s - i as f64).clamp(0.0, 1.0)))
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        let (i, u) = self.locate(x)?;
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (m0, m1) = (self.slopes[i] * self.dx, self.slopes[i + 1] * self.dx);
        let (u2, u3) = (u * u, u * u * u);
        Ok((2.0 * u3 - 3.0 * u2 + 1.0) * y0
            + (u3 - 2.0 * u2 + u) * m0
            + (-2.0 * u3 + 3.0 * u2) * y1
            + (u3 - u2) * m1)
    }

    pub fn eval_d1(&self, x: f64) -> Result<f64> {
        let (i, u) = self.locate(x)?;
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (m0, m1) = (self.slopes[i] * self.dx, self.slopes[i + 1] * self.dx);
        let u2 = u * u;
        let d = (6.0 * u2 - 6.0 * u) * y0
            + (3.0 * u2 - 4.0 * u + 1.0) * m0
            + (-6.0 * u2 + 6.0 * u) * y1
            + (3.0 * u2 - 2.0 * u) * m1;
        Ok(d / self.dx)
    }

    pub fn sup_distance(&self, other: &Table) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| libm::fabs(a - b)).fold(0.0, f64::max)
    }
}

/// Tabulated `Sigma` with the convergence history of the schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaTable {
    pub table: Table,
    /// Sup-distance between successive iterates.
    pub distances: Vec<f64>,
    pub tol: f64,
    pub bandwidth: f64,
}

/// Working interval `[-radius, radius]` split into `cells` (even) cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub radius: f64,
    pub cells: usize,
}

impl Interval {
    pub fn new(radius: f64, cells: usize) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(invalid("radius", "must be positive"));
        }
        if cells < 2 || cells % 2 == 1 {
            return Err(invalid("cells", "must be even and at least 2"));
        }
        Ok(Self { radius, cells })
    }

    fn dx(&self) -> f64 {
        2.0 * self.radius / self.cells as f64
    }
}

/// `Sigma_n` for one bandwidth: node values and slopes `2 beta'_n / sigma_n^2`.
fn sigma_iterate(spec: &DriftSpec, rule: &MollifierRule, n: f64, iv: &Interval) -> Result<Table> {
    let dx = iv.dx();
    let lo = -iv.radius;
    let integrand = |x: f64| -> Result<f64> {
        let mut db = 0.0;
        let mut s = 0.0;
        for k in 0..rule.u.len() {
            let y = x - rule.u[k] / n;
            db += rule.w_dphi[k] * (spec.beta)(y);
            s += rule.w_phi[k] * (spec.sigma)(y);
        }
        // beta * phi_n' = n int beta(x - u/n) phi'(u) du
        let db = n * db;
        if libm::fabs(s) < spec.sigma_floor {
            return Err(invalid("sigma", "mollified sigma falls below the declared floor"));
        }
        Ok(2.0 * db / (s * s))
    };
    let k = iv.cells;
    let mid = k / 2;
    let mut slopes = Vec::with_capacity(k + 1);
    for i in 0..=k {
        slopes.push(integrand(lo + i as f64 * dx)?);
    }
    let mut values = alloc::vec![0.0; k + 1];
    // Simpson per cell, cumulated outward from 0
    for i in mid..k {
        let xm = lo + (i as f64 + 0.5) * dx;
        values[i + 1] = values[i] + dx / 6.0 * (slopes[i] + 4.0 * integrand(xm)? + slopes[i + 1]);
    }
    for i in (0..mid).rev() {
        let xm = lo + (i as f64 + 0.5) * dx;
        values[i] = values[i + 1] - dx / 6.0 * (slopes[i] + 4.0 * integrand(xm)? + slopes[i + 1]);
    }
    Ok(Table { lo, dx, values, slopes })
}

/// Iterate the bandwidth schedule and return the last `Sigma_n` once
/// successive iterates are within `tol` in sup norm.
pub fn build_sigma(spec: &DriftSpec, iv: Interval, tol: f64) -> Result<SigmaTable> {
    spec.validate()?;
    if !(tol > 0.0) {
        return Err(invalid("tol", "must be positive"));
    }
    let rule = spec.mollifier.rule();
    let mut prev: Option<Table> = None;
    let mut distances = Vec::new();
    for &n in &spec.schedule {
        let t = sigma_iterate(spec, &rule, n, &iv)?;
        if let Some(p) = &prev {
            distances.push(p.sup_distance(&t));
        }
        prev = Some(t);
    }
    let last = *distances.last().unwrap_or(&f64::INFINITY);
    if !(last < tol) {
        return Err(Error::SigmaNotConverged { distances, tol });
    }
    Ok(SigmaTable { table: prev.unwrap(), distances, tol, bandwidth: *spec.schedule.last().unwrap() })
}

/// `h(x) = int_0^x e^{-Sigma}`, strictly increasing, with its inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct HTransform {
    pub sigma: Table,
    pub h: Table,
}

pub fn build_h(sigma: &SigmaTable) -> Result<HTransform> {
    let s = &sigma.table;
    let k = s.values.len() - 1;
    let mid = k / 2;
    let mut hp = Vec::with_capacity(k + 1);
    for (x, v) in s.nodes().zip(&s.values) {
        let e = libm::exp(-v);
        if !(e.is_finite() && e > 0.0) {
            return Err(Error::SigmaUnbounded { x, value: *v });
        }
        hp.push(e);
    }
    let cell = |i: usize| -> Result<f64> {
        let xm = s.lo + (i as f64 + 0.5) * s.dx;
        let em = libm::exp(-s.eval(xm)?);
        if !(em.is_finite() && em > 0.0) {
            return Err(Error::SigmaUnbounded { x: xm, value: s.eval(xm)? });
        }
        Ok(s.dx / 6.0 * (hp[i] + 4.0 * em + hp[i + 1]))
    };
    let mut h = alloc::vec![0.0; k + 1];
    for i in mid..k {
        h[i + 1] = h[i] + cell(i)?;
    }
    for i in (0..mid).rev() {
        h[i] = h[i + 1] - cell(i)?;
    }
    Ok(HTransform { sigma: s.clone(), h: Table { lo: s.lo, dx: s.dx, values: h, slopes: hp } })
}

impl HTransform {
    pub fn range(&self) -> (f64, f64) {
        (self.h.lo, self.h.hi())
    }

    pub fn image(&self) -> (f64, f64) {
        (self.h.values[0], *self.h.values.last().unwrap())
    }

    pub fn sigma_at(&self, x: f64) -> Result<f64> {
        self.sigma.eval(x)
    }

    pub fn value(&self, x: f64) -> Result<f64> {
        self.h.eval(x)
    }

    /// `h'(x) = e^{-Sigma(x)}`.
    pub fn d1(&self, x: f64) -> Result<f64> {
        Ok(libm::exp(-self.sigma.eval(x)?))
    }

    /// `h^{-1}(y)` by bisection on the monotone interpolant.
    pub fn inverse(&self, y: f64) -> Result<f64> {
        let (a, b) = self.image();
        if !(y >= a && y <= b) {
            return Err(Error::OutsideDomain(alloc::format!("{y} outside h-image [{a}, {b}]")));
        }
        let v = &self.h.values;
        let i = v.partition_point(|&z| z <= y).clamp(1, v.len() - 1) - 1;
        let mut lo = self.h.lo + i as f64 * self.h.dx;
        let mut hi = lo + self.h.dx;
        for _ in 0..200 {
            let m = 0.5 * (lo + hi);
            if m <= lo || m >= hi {
                break;
            }
            if self.h.eval(m)? < y {
                lo = m;
            } else {
                hi = m;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// `int_0^x e^{-Sigma} phi`, the `f` of a pair `(phi, phi')`.
    pub fn primitive(&self, phi: &dyn Fn(f64) -> f64, x: f64, quad: &Quadrature) -> Result<f64> {
        let mut err = None;
        let r = quad.integrate(
            |y| match self.sigma.eval(y) {
                Ok(s) => libm::exp(-s) * phi(y),
                Err(e) => {
                    err = Some(e);
                    0.0
                }
            },
            0.0,
            x,
        )?;
        match err {
            Some(e) => Err(e),
            None => Ok(r.value),
        }
    }
}

/// `L f(x) = (sigma(x)^2 / 2) phi'(x) e^{-Sigma(x)}` for `f' = e^{-Sigma} phi`.
pub fn apply_l(ht: &HTransform, sigma: &dyn Fn(f64) -> f64, dphi: &dyn Fn(f64) -> f64, x: f64) -> Result<f64> {
    let s = sigma(x);
    Ok(0.5 * s * s * dphi(x) * ht.d1(x)?)
}

/// `L f_N` for the cutoff family `f_N' = chi_N`, i.e. `phi = e^{Sigma} chi_N`.
pub fn apply_l_cutoff(ht: &HTransform, sigma: &dyn Fn(f64) -> f64, f: &Cutoff, x: f64) -> Result<f64> {
    let s = sigma(x);
    // (e^{Sigma} chi_N)' e^{-Sigma} = Sigma' chi_N + chi_N'
    Ok(0.5 * s * s * (ht.sigma.eval_d1(x)? * f.chi(x) + f.chi_d1(x)))
}

fn distdrift_path(
    spec: &DriftSpec,
    ht: &HTransform,
    x0: f64,
    grid: &TimeGrid,
    rng: &mut PathRng,
) -> Result<SimulatedPath> {
    let n = grid.n_steps();
    let dt = grid.dt();
    let sqrt_dt = libm::sqrt(dt);
    let (lo, hi) = ht.range();
    let exited = |t: f64, state: f64| Error::ExitedInterval { t, state, lo, hi };
    if !(x0 > lo && x0 < hi) {
        return Err(exited(0.0, x0));
    }
    let mut x = x0;
    let mut y = ht.value(x0)?;
    let (ylo, yhi) = ht.image();
    let mut values = Vec::with_capacity(n + 1);
    let mut w = Vec::with_capacity(n + 1);
    let mut xc = Vec::with_capacity(n + 1);
    let mut sig = Vec::with_capacity(n);
    let mut lam_path = Vec::with_capacity(n);
    let mut comp = Vec::with_capacity(n + 1);
    let mut jumps = Vec::new();
    let mut merged = 0usize;
    let (mut wc, mut xcc, mut cc) = (0.0, 0.0, 0.0);
    values.push(x);
    w.push(0.0);
    xc.push(0.0);
    comp.push(0.0);
    for j in 0..n {
        let t = grid.time(j);
        let t1 = grid.time(j + 1);
        let z: f64 = StandardNormal.sample(rng);
        let dw = sqrt_dt * z;
        let s = (spec.sigma)(x);
        // dY = (sigma h')(X) dW, no drift since L h = 0
        y += s * ht.d1(x)? * dw;
        if !(y > ylo && y < yhi) {
            return Err(exited(t1, if y <= ylo { lo } else { hi }));
        }
        let mut next = ht.inverse(y)?;
        wc += dw;
        xcc += s * dw;
        sig.push(s);
        let mut lam = 0.0;
        if let Some(jm) = &spec.jumps {
            lam = jm.rate(t, x);
            if !(lam >= 0.0) || lam > jm.bound * (1.0 + 1e-12) {
                return Err(Error::RateBoundExceeded { t, state: x, rate: lam, bound: jm.bound });
            }
            let mut total = 0.0;
            let mut accepted = 0usize;
            for _ in 0..poisson(jm.bound * dt, rng) {
                let u: f64 = rng.random();
                if u * jm.bound < lam {
                    let size = jm.sizes.sample(next + total, rng);
                    if size != 0.0 {
                        total += size;
                        accepted += 1;
                    }
                }
            }
            if accepted > 1 {
                merged += accepted - 1;
            }
            if total != 0.0 {
                next += total;
                if !(next > lo && next < hi) {
                    return Err(exited(t1, next));
                }
                y = ht.value(next)?;
                jumps.push(Jump { index: j + 1, size: total });
            }
        }
        lam_path.push(lam);
        cc += lam * dt;
        x = next;
        values.push(x);
        w.push(wc);
        xc.push(xcc);
        comp.push(cc);
    }
    let g = *grid;
    let path = SamplePath::new(g, values, jumps)?;
    let truth = GroundTruth {
        continuous_martingale: Some(SamplePath::from_parts_unchecked(g, xc, Some(Vec::new()))),
        driver: Some(SamplePath::from_parts_unchecked(g, w, Some(Vec::new()))),
        diffusion: Some(sig),
        intensity: spec.jumps.as_ref().map(|_| lam_path),
        compensator: spec.jumps.as_ref().map(|_| SamplePath::from_parts_unchecked(g, comp, Some(Vec::new()))),
    };
    Ok(SimulatedPath { path, truth, merged_jumps: merged })
}

pub fn simulate_distdrift_path(
    spec: &DriftSpec,
    ht: &HTransform,
    x0: f64,
    grid: &TimeGrid,
    seed: u64,
) -> Result<SimulatedPath> {
    distdrift_path(spec, ht, x0, grid, &mut path_rng(seed))
}

pub fn simulate_distdrift(
    spec: &DriftSpec,
    ht: &HTransform,
    x0: f64,
    grid: TimeGrid,
    n_paths: usize,
    seed: u64,
) -> Result<PathEnsemble> {
    if n_paths == 0 {
        return Err(invalid("n_paths", "must be at least 1"));
    }
    spec.validate()?;
    let seeds = path_seeds(seed, n_paths);
    let sims =
        seeds.iter().map(|&s| simulate_distdrift_path(spec, ht, x0, &grid, s)).collect::<Result<Vec<_>>>()?;
    assemble_distdrift(spec, grid, seed, seeds, sims)
}

pub fn assemble_distdrift(
    spec: &DriftSpec,
    grid: TimeGrid,
    master_seed: u64,
    seeds: Vec<u64>,
    sims: Vec<SimulatedPath>,
) -> Result<PathEnsemble> {
    let merged = sims.iter().map(|s| s.merged_jumps).sum();
    let (paths, truths): (Vec<_>, Vec<_>) = sims.into_iter().map(|s| (s.path, s.truth)).unzip();
    let mut e = PathEnsemble::new(grid, paths, seeds, Some(truths))?;
    e.jump_model = spec.jumps.clone();
    e.meta = EnsembleMeta { master_seed, merged_jumps: merged, generator: "distdrift" };
    Ok(e)
}

/// Stabilization of `int_0^t L f_N(X_s) ds` along a cutoff sequence `f_N -> Id`.
#[derive(Debug, Clone, PartialEq)]
pub struct Stabilization {
    pub levels: Vec<f64>,
    /// Sup over paths and times between successive levels.
    pub distances: Vec<f64>,
    pub tol: f64,
    pub stabilized: bool,
    /// Sup over paths and times between the last level and the decomposition
    /// residual `X - x0 - X^c - sum dX + k * nu`.
    pub residual_gap: f64,
}

/// `int_0^t_j L f_N(X_s) ds` by left-point sums.
pub fn drift_integral(ht: &HTransform, sigma: &dyn Fn(f64) -> f64, path: &SamplePath, level: f64) -> Result<Vec<f64>> {
    let f = Cutoff::new(level);
    let dt = path.grid().dt();
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(path.values().len());
    out.push(0.0);
    for &x in &path.values()[..path.values().len() - 1] {
        acc += apply_l_cutoff(ht, sigma, &f, x)? * dt;
        out.push(acc);
    }
    Ok(out)
}

pub fn tg_stabilization(
    spec: &DriftSpec,
    ht: &HTransform,
    ensemble: &PathEnsemble,
    levels: &[f64],
    tol: f64,
) -> Result<Stabilization> {
    if levels.len() < 2 || levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("levels", "need at least 2 strictly increasing cutoff levels"));
    }
    let (lo, hi) = ht.range();
    if levels.last().unwrap() + 1.0 > hi.min(-lo) {
        return Err(invalid("levels", "cutoff support must stay inside the working interval"));
    }
    let dt = ensemble.grid.dt();
    let breaks = spec.truncation.breakpoints();
    let mut distances = alloc::vec![0.0f64; levels.len() - 1];
    let mut gap = 0.0f64;
    for (i, p) in ensemble.paths.iter().enumerate() {
        let mut prev: Option<Vec<f64>> = None;
        for (k, &lv) in levels.iter().enumerate() {
            let cur = drift_integral(ht, &*spec.sigma, p, lv)?;
            if let Some(pr) = &prev {
                let d = pr.iter().zip(&cur).map(|(a, b)| libm::fabs(a - b)).fold(0.0, f64::max);
                distances[k - 1] = distances[k - 1].max(d);
            }
            prev = Some(cur);
        }
        let last = prev.unwrap();
        let truth = ensemble.truth(i)?;
        let xc = truth.continuous_martingale.as_ref().ok_or(Error::MissingGroundTruth("continuous_martingale"))?;
        let v = p.values();
        let mut jsum = 0.0;
        let mut knu = 0.0;
        let mut jumps = p.jumps().iter().peekable();
        for j in 0..v.len() {
            if j > 0 {
                if let Some(jm) = &spec.jumps {
                    let k = &spec.truncation;
                    knu += jm.integrate(ensemble.grid.time(j - 1), v[j - 1], |z| k.eval(z), &breaks)? * dt;
                }
            }
            while let Some(jp) = jumps.peek() {
                if jp.index == j {
                    jsum += jp.size;
                    jumps.next();
                } else {
                    break;
                }
            }
            let residual = v[j] - v[0] - xc.values()[j] - jsum + knu;
            gap = gap.max(libm::fabs(residual - last[j]));
        }
    }
    let stabilized = *distances.last().unwrap() < 5.0 * tol;
    Ok(Stabilization { levels: levels.to_vec(), distances, tol, stabilized, residual_gap: gap })
}

/// Rows `(x, Sigma, h, h_inv)`; `h_inv` is evaluated at `y = x` when `x` lies
/// in the image of `h`, otherwise `NaN`.
pub fn export_rows(ht: &HTransform) -> Vec<[f64; 4]> {
    ht.h
        .nodes()
        .zip(ht.sigma.values.iter().zip(&ht.h.values))
        .map(|(x, (s, h))| [x, *s, *h, ht.inverse(x).unwrap_or(f64::NAN)])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats;
    use alloc::vec;

    fn f1<F: Fn(f64) -> f64 + Send + Sync + 'static>(f: F) -> Fn1 {
        Arc::new(f)
    }

    fn linear_spec() -> DriftSpec {
        DriftSpec::new(f1(|x| x), f1(|_| 1.0), 0.5, vec![4.0, 8.0, 16.0, 32.0]).unwrap()
    }

    fn iv() -> Interval {
        Interval::new(3.0, 3000).unwrap()
    }

    #[test]
    fn sigma_linear_beta() {
        let s = build_sigma(&linear_spec(), iv(), 1e-6).unwrap();
        for (x, v) in s.table.nodes().zip(&s.table.values) {
            if x.abs() <= 2.0 {
                assert!((v - 2.0 * x).abs() < 1e-9, "{x} {v}");
            }
        }
        let ht = build_h(&s).unwrap();
        assert!((ht.d1(0.0).unwrap() - 1.0).abs() < 1e-12);
        let exact = (1.0 - libm::exp(-2.0)) / 2.0;
        assert!((ht.value(1.0).unwrap() - exact).abs() < 1e-8);
        assert!((ht.value(0.37).unwrap() - (1.0 - libm::exp(-0.74)) / 2.0).abs() < 1e-8);
        assert!((ht.inverse(ht.value(0.7).unwrap()).unwrap() - 0.7).abs() < 1e-8);
        for y in [-1.5, -0.2, 0.1, 0.4] {
            assert!((ht.value(ht.inverse(y).unwrap()).unwrap() - y).abs() < 1e-8);
        }
    }

    #[test]
    fn zero_drift_is_identity() {
        let spec = DriftSpec::new(f1(|_| 0.0), f1(|x| 1.0 + 0.5 * libm::sin(x)), 0.4, vec![2.0, 4.0, 8.0]).unwrap();
        let s = build_sigma(&spec, iv(), 1e-9).unwrap();
        assert!(s.table.values.iter().all(|v| *v == 0.0));
        let ht = build_h(&s).unwrap();
        for x in [-2.5, 0.3, 1.9] {
            assert!((ht.value(x).unwrap() - x).abs() < 1e-12);
        }
    }

    #[test]
    fn nonsmooth_beta_is_mollifier_independent() {
        let tol = 0.02;
        let base = DriftSpec::new(f1(libm::fabs), f1(|_| 1.0), 0.5, vec![8.0, 16.0, 32.0, 64.0, 128.0, 256.0]).unwrap();
        let ivf = Interval::new(2.5, 10_000).unwrap();
        let g = build_sigma(&base, ivf, tol).unwrap();
        let b = build_sigma(&base.clone().with_mollifier(Mollifier::Bump), ivf, tol).unwrap();
        assert!(g.table.sup_distance(&b.table) < 3.0 * tol);
        // Sigma = 2|x| up to the O(1/n) mollification bias
        for (x, v) in g.table.nodes().zip(&g.table.values) {
            assert!((v - 2.0 * x.abs()).abs() < 0.01, "{x}");
        }
    }

    #[test]
    fn non_cauchy_schedule_is_rejected() {
        // beta' = cos(10^4 x) averages out only at bandwidths far above the schedule
        let spec = DriftSpec::new(f1(|x| libm::sin(1e4 * x) * 1e-4 * 1e4), f1(|_| 1.0), 0.5, vec![1.0e3, 2.0e3, 4.0e3])
            .unwrap();
        let e = build_sigma(&spec, Interval::new(1.0, 200).unwrap(), 1e-6).unwrap_err();
        assert!(alloc::format!("{e}").contains("not numerically verified"));
    }

    #[test]
    fn operator_identities() {
        let s = build_sigma(&linear_spec(), iv(), 1e-6).unwrap();
        let ht = build_h(&s).unwrap();
        let sigma = |x: f64| 1.0 + 0.3 * libm::cos(x);
        let quad = Quadrature::default();
        // f = h: phi = 1, L h = 0
        for x in [-1.0, 0.2, 1.4] {
            assert_eq!(apply_l(&ht, &sigma, &|_| 0.0, x).unwrap(), 0.0);
        }
        // L(f^2) - 2 f L f = (sigma f')^2 with phi(x) = 1 + x + x^2
        let phi = |x: f64| 1.0 + x + x * x;
        let dphi = |x: f64| 1.0 + 2.0 * x;
        for k in 0..=20 {
            let x = -2.0 + 0.2 * k as f64;
            let f = ht.primitive(&phi, x, &quad).unwrap();
            let fp = ht.d1(x).unwrap() * phi(x);
            // f^2 has phi_2 = 2 f phi, phi_2' = 2 f' phi + 2 f phi'
            let dphi2 = |y: f64| 2.0 * (ht.d1(y).unwrap() * phi(y)) * phi(y) + 2.0 * f * dphi(y);
            let l2 = apply_l(&ht, &sigma, &dphi2, x).unwrap();
            let lf = apply_l(&ht, &sigma, &dphi, x).unwrap();
            let lhs = l2 - 2.0 * f * lf;
            let rhs = (sigma(x) * fp) * (sigma(x) * fp);
            assert!((lhs - rhs).abs() < 1e-10 * (1.0 + rhs.abs()), "{x}");
        }
        // Sigma = 0, f = x^2: phi = 2x, L f = sigma^2
        let flat = build_h(&SigmaTable {
            table: Table { lo: -1.0, dx: 0.5, values: vec![0.0; 5], slopes: vec![0.0; 5] },
            distances: vec![],
            tol: 1.0,
            bandwidth: 1.0,
        })
        .unwrap();
        assert!((apply_l(&flat, &sigma, &|_| 2.0, 0.3).unwrap() - sigma(0.3).powi(2)).abs() < 1e-15);
    }

    #[test]
    fn zero_drift_matches_bm() {
        let spec = DriftSpec::new(f1(|_| 0.0), f1(|_| 1.0), 0.5, vec![1.0, 2.0, 4.0]).unwrap();
        let ht = build_h(&build_sigma(&spec, Interval::new(10.0, 200).unwrap(), 1e-9).unwrap()).unwrap();
        let g = TimeGrid::new(1.0, 100).unwrap();
        let e = simulate_distdrift(&spec, &ht, 0.0, g, 10_000, 17).unwrap();
        let bm = crate::simulate::gen_bm(g, 10_000, 99, 1.0).unwrap();
        assert!(stats::ks_distance(&e.terminal_values(), &bm.terminal_values()) < 0.05);
    }

    #[test]
    fn linear_beta_decomposition() {
        let spec = linear_spec();
        let ht = build_h(&build_sigma(&spec, Interval::new(8.0, 4000).unwrap(), 1e-6).unwrap()).unwrap();
        let g = TimeGrid::new(1.0, 1000).unwrap();
        let e = simulate_distdrift(&spec, &ht, 0.0, g, 200, 3).unwrap();
        // drift beta' = 1: X = W + t
        let m = stats::mean(&e.terminal_values());
        assert!((m - 1.0).abs() < 4.0 / libm::sqrt(200.0));
        let st = tg_stabilization(&spec, &ht, &e, &[5.0, 6.0, 7.0], 1e-6).unwrap();
        assert!(st.stabilized, "{st:?}");
        // Euler in h-coordinates leaves sum(dW^2 - dt), sd sqrt(2n) dt per path
        assert!(st.residual_gap < 0.25, "{st:?}");
        // bracket of X^c is T when sigma = 1
        let qv: Vec<f64> =
            e.paths.iter().map(|p| crate::brackets::ucp_bracket_idx(p, p, 10, g.n_steps()).unwrap()).collect();
        assert!((stats::mean(&qv) - 1.0).abs() < 0.05);
    }

    #[test]
    fn unit_jumps_count() {
        let spec = DriftSpec::new(f1(|_| 0.0), f1(|_| 1.0), 0.5, vec![1.0, 2.0, 4.0])
            .unwrap()
            .with_jumps(crate::simulate::unit_jumps(1.0).unwrap());
        let ht = build_h(&build_sigma(&spec, Interval::new(15.0, 300).unwrap(), 1e-9).unwrap()).unwrap();
        let g = TimeGrid::new(2.0, 1000).unwrap();
        let e = simulate_distdrift(&spec, &ht, 0.0, g, 2000, 8).unwrap();
        let counts: Vec<f64> = e.paths.iter().map(|p| p.jumps().len() as f64).collect();
        assert!((stats::mean(&counts) - 2.0).abs() < 4.0 * libm::sqrt(2.0 / 2000.0) + 0.01);
    }

    #[test]
    fn exit_is_an_error() {
        let spec = DriftSpec::new(f1(|_| 0.0), f1(|_| 1.0), 0.5, vec![1.0, 2.0, 4.0]).unwrap();
        let ht = build_h(&build_sigma(&spec, Interval::new(0.05, 10).unwrap(), 1e-9).unwrap()).unwrap();
        let g = TimeGrid::new(1.0, 100).unwrap();
        assert!(matches!(simulate_distdrift(&spec, &ht, 0.0, g, 5, 1), Err(Error::ExitedInterval { .. })));
    }
}
