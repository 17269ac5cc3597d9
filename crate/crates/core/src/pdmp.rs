//! Piecewise deterministic Markov processes on `[0, 1]` with local
//! characteristics `(h, lambda, Q)` and active boundary `{0, 1}`.
//!
//! Between jumps the state follows `g' = h(g)` (RK4, four sub-steps per grid
//! step). In each grid step, candidate events arrive at rate `lambda_bar`
//! at uniform times in the step and are accepted with probability
//! `lambda(X_j) / lambda_bar`. A boundary crossing is located by bisection;
//! the state is then held at the boundary and a forced jump drawn from
//! `Q(b, .)` happens at the next grid point, where `p*` increases by one.
//! All jumps sit on grid points; the post-jump state is not flowed further
//! within its step.

use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::func::TestFn;
use crate::kernel::{SizeKernel, SizeLaw};
use crate::mtgcheck::{Domain, Gamma, Lambda, OperatorPair, OperatorSpec, StoppedPath};
use crate::path::{EnsembleMeta, GroundTruth, Jump, PathEnsemble, SamplePath, TimeGrid};
use crate::quad::Quadrature;
use crate::rng::{path_rng, path_seeds, PathRng};
use crate::simulate::poisson;

/// Real function of the state.
pub type Fn1 = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Distance to `{0, 1}` below which a state counts as on the boundary.
pub const BOUNDARY_TOL: f64 = 1e-12;

/// Sub-steps of the RK4 flow per grid step.
pub const FLOW_SUBSTEPS: usize = 4;

/// Local characteristics `(h, lambda, Q)`.
#[derive(Clone)]
pub struct PdmpSpec {
    pub flow: Fn1,
    pub hazard: Fn1,
    /// `sup lambda` on `]0, 1[`, the thinning bound.
    pub hazard_bound: f64,
    /// Declared Lipschitz constant of `h`.
    pub lipschitz: f64,
    /// Post-jump law: [`SizeKernel::PostJump`] or [`SizeKernel::Reflect`].
    pub kernel: SizeKernel,
    pub quad: Quadrature,
}

impl core::fmt::Debug for PdmpSpec {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("PdmpSpec")
            .field("hazard_bound", &self.hazard_bound)
            .field("lipschitz", &self.lipschitz)
            .field("kernel", &self.kernel)
            .finish()
    }
}

pub fn on_boundary(y: f64) -> Option<f64> {
    if libm::fabs(y) <= BOUNDARY_TOL {
        Some(0.0)
    } else if libm::fabs(y - 1.0) <= BOUNDARY_TOL {
        Some(1.0)
    } else {
        None
    }
}

impl PdmpSpec {
    pub fn new(flow: Fn1, hazard: Fn1, hazard_bound: f64, lipschitz: f64, kernel: SizeKernel) -> Result<Self> {
        let s = Self { flow, hazard, hazard_bound, lipschitz, kernel, quad: Quadrature::default() };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.hazard_bound >= 0.0 && self.hazard_bound.is_finite()) {
            return Err(invalid("hazard_bound", "must be finite and nonnegative"));
        }
        if !(self.lipschitz >= 0.0 && self.lipschitz.is_finite()) {
            return Err(invalid("lipschitz", "must be finite and nonnegative"));
        }
        match &self.kernel {
            SizeKernel::Reflect => Ok(()),
            SizeKernel::PostJump(law) => {
                law.validate()?;
                let inside = |v: f64| v > 0.0 && v < 1.0;
                let ok = match law {
                    SizeLaw::PointMass(v) => inside(*v),
                    SizeLaw::Atoms { values, .. } => values.iter().all(|v| inside(*v)),
                    SizeLaw::Uniform { lo, hi } => *lo >= 0.0 && *hi <= 1.0,
                    SizeLaw::Beta { .. } => true,
                    _ => false,
                };
                if ok {
                    Ok(())
                } else {
                    Err(invalid("Q", "post-jump law must live on ]0, 1["))
                }
            }
            SizeKernel::Size(_) => Err(invalid("Q", "must be a post-jump state law or reflection")),
        }
    }

    /// `lambda` extended by zero to the boundary.
    pub fn rate(&self, y: f64) -> f64 {
        if on_boundary(y).is_some() {
            0.0
        } else {
            (self.hazard)(y)
        }
    }

    /// `int (v(s, y + x) - v(s, y)) Q~(y, dx)`.
    pub fn jump_term(&self, v: &dyn TestFn, s: f64, y: f64) -> Result<f64> {
        let base = v.value(s, y);
        self.kernel.expect(y, |z| v.value(s, y + z) - base, &[], &self.quad)
    }

    /// `Lambda_1 v(s, y)`; on the boundary only `dv/ds` is left.
    pub fn lambda1(&self, v: &dyn TestFn, s: f64, y: f64) -> Result<f64> {
        let dt = v.dt(s, y).ok_or_else(|| Error::OutsideDomain("v must be C^1 in time".into()))?;
        if on_boundary(y).is_some() {
            return Ok(dt);
        }
        let lam = (self.hazard)(y);
        let jump = if lam == 0.0 { 0.0 } else { lam * self.jump_term(v, s, y)? };
        Ok(dt + (self.flow)(y) * v.dx(s, y) + jump)
    }

    /// `Lambda_2 v(s, y)` for `y` in `{0, 1}`.
    pub fn lambda2(&self, v: &dyn TestFn, s: f64, y: f64) -> Result<f64> {
        let b = on_boundary(y).unwrap_or(y);
        self.jump_term(v, s, b)
    }
}

/// Extended generator as a two-pair operator: `(Lambda_1, ds)` and `(Lambda_2, dp*)`.
pub fn pdmp_generator(spec: &PdmpSpec) -> OperatorSpec {
    let s1 = spec.clone();
    let s2 = spec.clone();
    let l1: Lambda = Arc::new(move |v: &dyn TestFn, s, eta: &StoppedPath<'_>| s1.lambda1(v, s, eta.current()));
    let l2: Lambda = Arc::new(move |v: &dyn TestFn, s, eta: &StoppedPath<'_>| s2.lambda2(v, s, eta.current()));
    OperatorSpec {
        pairs: alloc::vec![
            OperatorPair { lambda: l1, gamma: Gamma::Lebesgue },
            OperatorPair { lambda: l2, gamma: Gamma::BoundaryCounter },
        ],
        domain: Domain { needs_dt: true, needs_dxx: false },
    }
}

/// One PDMP trajectory with its boundary counter.
#[derive(Debug, Clone, PartialEq)]
pub struct PdmpPath {
    pub path: SamplePath,
    /// `p*` on the grid.
    pub boundary_counter: SamplePath,
    /// Grid indices of boundary-forced jumps.
    pub hits: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct PdmpEnsemble {
    pub grid: TimeGrid,
    pub paths: Vec<PdmpPath>,
    pub seeds: Vec<u64>,
    pub truth: Vec<GroundTruth>,
    pub meta: EnsembleMeta,
}

impl PdmpEnsemble {
    pub fn sample_paths(&self) -> Vec<SamplePath> {
        self.paths.iter().map(|p| p.path.clone()).collect()
    }

    pub fn hits(&self) -> Vec<Vec<usize>> {
        self.paths.iter().map(|p| p.hits.clone()).collect()
    }

    pub fn into_path_ensemble(self) -> Result<PathEnsemble> {
        let mut e = PathEnsemble::new(
            self.grid,
            self.paths.into_iter().map(|p| p.path).collect(),
            self.seeds,
            Some(self.truth),
        )?;
        e.meta = self.meta;
        Ok(e)
    }
}

fn rk4(h: &Fn1, x: f64, dt: f64) -> f64 {
    let k1 = h(x);
    let k2 = h(x + 0.5 * dt * k1);
    let k3 = h(x + 0.5 * dt * k2);
    let k4 = h(x + dt * k3);
    x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

/// Result of flowing for a while.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowOutcome {
    pub end: f64,
    /// `(elapsed time, boundary)` of the first boundary hit.
    pub hit: Option<(f64, f64)>,
}

/// `Phi(duration, x)` with sub-step `sub`, stopping at the boundary.
pub fn flow_for(h: &Fn1, x: f64, duration: f64, sub: f64) -> Result<FlowOutcome> {
    if let Some(b) = on_boundary(x) {
        return Ok(FlowOutcome { end: b, hit: Some((0.0, b)) });
    }
    let mut y = x;
    let mut elapsed = 0.0;
    while elapsed < duration {
        let d = sub.min(duration - elapsed);
        let next = rk4(h, y, d);
        if !next.is_finite() {
            return Err(Error::FlowEscaped { t: elapsed + d, state: next });
        }
        if next <= BOUNDARY_TOL || next >= 1.0 - BOUNDARY_TOL {
            let b = if next <= 0.5 { 0.0 } else { 1.0 };
            // bisection on the sub-step length: rk4(y, lo) is inside, rk4(y, hi) is not
            let (mut lo, mut hi) = (0.0, d);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                let z = rk4(h, y, mid);
                if libm::fabs(z - b) <= BOUNDARY_TOL {
                    hi = mid;
                    break;
                }
                if (b == 0.0 && z > 0.0) || (b == 1.0 && z < 1.0) {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= 1e-15 * (1.0 + d) {
                    break;
                }
            }
            let reached = rk4(h, y, hi);
            if libm::fabs(reached - b) > 1e-9 && !((b == 0.0 && reached < 0.0) || (b == 1.0 && reached > 1.0)) {
                return Err(Error::FlowEscaped { t: elapsed + hi, state: reached });
            }
            return Ok(FlowOutcome { end: b, hit: Some((elapsed + hi, b)) });
        }
        y = next;
        elapsed += d;
    }
    Ok(FlowOutcome { end: y, hit: None })
}

fn post_jump_state<R: Rng + ?Sized>(kernel: &SizeKernel, y: f64, rng: &mut R) -> f64 {
    y + kernel.sample(y, rng)
}

fn pdmp_path(spec: &PdmpSpec, x0: f64, grid: &TimeGrid, rng: &mut PathRng) -> Result<(PdmpPath, GroundTruth, usize)> {
    let n = grid.n_steps();
    let dt = grid.dt();
    let sub = dt / FLOW_SUBSTEPS as f64;
    let bound = spec.hazard_bound;
    let mut x = x0;
    let mut values = Vec::with_capacity(n + 1);
    let mut counter = Vec::with_capacity(n + 1);
    let mut lam_path = Vec::with_capacity(n);
    let mut comp = Vec::with_capacity(n + 1);
    let mut jumps = Vec::new();
    let mut hits = Vec::new();
    let mut merged = 0usize;
    let (mut pstar, mut cc) = (0.0, 0.0);
    values.push(x);
    counter.push(0.0);
    comp.push(0.0);
    for j in 0..n {
        let t = grid.time(j);
        let lam = spec.rate(x);
        if !(lam >= 0.0) || lam > bound * (1.0 + 1e-12) {
            return Err(Error::RateBoundExceeded { t, state: x, rate: lam, bound });
        }
        // earliest accepted candidate time within the step
        let mut theta: Option<f64> = None;
        let mut accepted = 0usize;
        for _ in 0..poisson(bound * dt, rng) {
            let u: f64 = rng.random();
            let a: f64 = rng.random();
            if a * bound < lam {
                accepted += 1;
                theta = Some(theta.map_or(u, |th: f64| th.min(u)));
            }
        }
        let fl = flow_for(&spec.flow, x, dt, sub)?;
        let interior_first = match (theta, fl.hit) {
            (Some(th), Some((tau, _))) => th * dt < tau,
            (Some(_), None) => true,
            _ => false,
        };
        let mut next = fl.end;
        let mut pre = fl.end;
        let mut boundary_jump = false;
        if interior_first {
            pre = if fl.hit.is_some() { flow_for(&spec.flow, x, theta.unwrap() * dt, sub)?.end } else { fl.end };
            let mut state = pre;
            for _ in 0..accepted {
                state = post_jump_state(&spec.kernel, state, rng);
            }
            if accepted > 1 {
                merged += accepted - 1;
            }
            next = state;
        } else if let Some((_, b)) = fl.hit {
            pre = b;
            next = post_jump_state(&spec.kernel, b, rng);
            boundary_jump = true;
        }
        let size = next - pre;
        if boundary_jump {
            pstar += 1.0;
            hits.push(j + 1);
            jumps.push(Jump { index: j + 1, size });
        } else if interior_first && size != 0.0 {
            jumps.push(Jump { index: j + 1, size });
        }
        if !(0.0..=1.0).contains(&next) {
            return Err(Error::FlowEscaped { t: grid.time(j + 1), state: next });
        }
        lam_path.push(lam);
        cc += lam * dt;
        x = next;
        values.push(x);
        counter.push(pstar);
        comp.push(cc + pstar);
    }
    let g = *grid;
    let path = SamplePath::new(g, values, jumps)?;
    let truth = GroundTruth {
        continuous_martingale: Some(SamplePath::constant(g, 0.0)),
        intensity: Some(lam_path),
        compensator: Some(SamplePath::from_parts_unchecked(g, comp, Some(Vec::new()))),
        ..Default::default()
    };
    let pp = PdmpPath {
        path,
        boundary_counter: SamplePath::from_parts_unchecked(g, counter, None),
        hits,
    };
    Ok((pp, truth, merged))
}

/// One path from its seed.
pub fn simulate_pdmp_path(spec: &PdmpSpec, x0: f64, grid: &TimeGrid, seed: u64) -> Result<(PdmpPath, GroundTruth, usize)> {
    let mut rng = path_rng(seed);
    pdmp_path(spec, x0, grid, &mut rng)
}

pub fn simulate_pdmp(spec: &PdmpSpec, x0: f64, grid: TimeGrid, n_paths: usize, seed: u64) -> Result<PdmpEnsemble> {
    if !(0.0..=1.0).contains(&x0) {
        return Err(invalid("x0", "must lie in [0, 1]"));
    }
    if n_paths == 0 {
        return Err(invalid("n_paths", "must be at least 1"));
    }
    spec.validate()?;
    let seeds = path_seeds(seed, n_paths);
    let mut paths = Vec::with_capacity(n_paths);
    let mut truth = Vec::with_capacity(n_paths);
    let mut merged = 0;
    for &s in &seeds {
        let (p, t, m) = simulate_pdmp_path(spec, x0, &grid, s)?;
        paths.push(p);
        truth.push(t);
        merged += m;
    }
    Ok(PdmpEnsemble {
        grid,
        paths,
        seeds,
        truth,
        meta: EnsembleMeta { master_seed: seed, merged_jumps: merged, generator: "pdmp" },
    })
}
