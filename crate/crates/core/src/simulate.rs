//! Reference generators with known ground-truth decompositions.
//!
//! Every generator is a pure function of `(spec, grid, seed)` per path; an
//! ensemble is the map of [`GeneratorSpec::simulate_path`] over the seeds of
//! [`crate::rng::path_seeds`].
//!
//! Jump-diffusion step from `t_j` to `t_{j+1}` (Euler plus thinning):
//!
//! ```text
//! dW   = sqrt(dt) * Z
//! X^c  = X_j + b(t_j, X_j) dt + sigma(t_j, X_j) dW
//! K    ~ Poisson(lambda_bar dt)            candidate events in the step
//! each candidate accepted w.p. lambda(t_j, X_j) / lambda_bar
//! X_{j+1} = X^c + sum of accepted sizes    (placed at t_{j+1})
//! ```
//!
//! Several accepted events in one step are merged into one registered jump
//! and counted in [`EnsembleMeta::merged_jumps`].

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::func::{constant, Coef};
use crate::kernel::{JumpModel, SizeKernel, SizeLaw};
use crate::path::{EnsembleMeta, GroundTruth, Jump, PathEnsemble, SamplePath, TimeGrid};
use crate::rng::{path_rng, path_seeds, PathRng};
use crate::truncation::TruncationFn;

/// `dX = b dt + sigma dW + dJ` with state-dependent jumps.
#[derive(Clone)]
pub struct JumpDiffusionSpec {
    pub x0: f64,
    pub drift: Coef,
    pub diffusion: Coef,
    pub jumps: Option<JumpModel>,
    pub truncation: TruncationFn,
}

impl core::fmt::Debug for JumpDiffusionSpec {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("JumpDiffusionSpec")
            .field("x0", &self.x0)
            .field("jumps", &self.jumps)
            .field("truncation", &self.truncation)
            .finish()
    }
}

impl JumpDiffusionSpec {
    /// Constant coefficients, no jumps, `k(x) = x 1_{|x| <= 1}`.
    pub fn constant(x0: f64, drift: f64, vol: f64) -> Self {
        Self {
            x0,
            drift: constant(drift),
            diffusion: constant(vol),
            jumps: None,
            truncation: TruncationFn::Indicator { radius: 1.0 },
        }
    }

    pub fn with_jumps(mut self, jumps: JumpModel) -> Self {
        self.jumps = Some(jumps);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.x0.is_finite() {
            return Err(invalid("x0", "must be finite"));
        }
        if let Some(j) = &self.jumps {
            if !(j.bound >= 0.0 && j.bound.is_finite()) {
                return Err(invalid("rate_bound", "must be finite and nonnegative"));
            }
            j.sizes.validate()?;
        }
        self.truncation.check()
    }
}

/// What to simulate.
#[derive(Debug, Clone)]
pub enum GeneratorSpec {
    /// `X = x0 + vol W`.
    Bm { x0: f64, vol: f64 },
    /// Exact Poisson arrival times rounded up to the grid.
    CompoundPoisson { x0: f64, rate: f64, sizes: SizeLaw },
    JumpDiffusion(JumpDiffusionSpec),
    /// `X_t = int_0^t B_{t-s} dW_s` with independent Brownian motions `B`, `W`.
    Convolution,
}

/// One simulated path with its ground truth.
#[derive(Debug, Clone)]
pub struct SimulatedPath {
    pub path: SamplePath,
    pub truth: GroundTruth,
    pub merged_jumps: usize,
}

impl GeneratorSpec {
    pub fn name(&self) -> &'static str {
        match self {
            GeneratorSpec::Bm { .. } => "bm",
            GeneratorSpec::CompoundPoisson { .. } => "compound_poisson",
            GeneratorSpec::JumpDiffusion(_) => "jump_diffusion",
            GeneratorSpec::Convolution => "convolution",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            GeneratorSpec::Bm { x0, vol } => {
                if !x0.is_finite() {
                    return Err(invalid("x0", "must be finite"));
                }
                if !(*vol >= 0.0 && vol.is_finite()) {
                    return Err(invalid("vol", "must be finite and nonnegative"));
                }
                Ok(())
            }
            GeneratorSpec::CompoundPoisson { x0, rate, sizes } => {
                if !x0.is_finite() {
                    return Err(invalid("x0", "must be finite"));
                }
                if !(*rate >= 0.0 && rate.is_finite()) {
                    return Err(invalid("rate", "must be finite and nonnegative"));
                }
                sizes.validate()
            }
            GeneratorSpec::JumpDiffusion(s) => s.validate(),
            GeneratorSpec::Convolution => Ok(()),
        }
    }

    /// Jump compensator kernel of the generated process.
    pub fn jump_model(&self) -> Option<JumpModel> {
        match self {
            GeneratorSpec::CompoundPoisson { rate, sizes, .. } => JumpModel::constant(*rate, sizes.clone()).ok(),
            GeneratorSpec::JumpDiffusion(s) => s.jumps.clone(),
            _ => None,
        }
    }

    pub fn simulate_path(&self, grid: &TimeGrid, seed: u64) -> Result<SimulatedPath> {
        let mut rng = path_rng(seed);
        match self {
            GeneratorSpec::Bm { x0, vol } => {
                jump_diffusion_path(&JumpDiffusionSpec::constant(*x0, 0.0, *vol), grid, &mut rng)
            }
            GeneratorSpec::JumpDiffusion(s) => jump_diffusion_path(s, grid, &mut rng),
            GeneratorSpec::CompoundPoisson { x0, rate, sizes } => {
                compound_poisson_path(*x0, *rate, sizes, grid, &mut rng)
            }
            GeneratorSpec::Convolution => convolution_path(grid, &mut rng),
        }
    }
}

/// Assemble an ensemble from per-path results produced in seed order.
pub fn assemble(
    spec: &GeneratorSpec,
    grid: TimeGrid,
    master_seed: u64,
    seeds: Vec<u64>,
    sims: Vec<SimulatedPath>,
) -> Result<PathEnsemble> {
    let merged = sims.iter().map(|s| s.merged_jumps).sum();
    let (paths, truths): (Vec<_>, Vec<_>) = sims.into_iter().map(|s| (s.path, s.truth)).unzip();
    let mut e = PathEnsemble::new(grid, paths, seeds, Some(truths))?;
    e.jump_model = spec.jump_model();
    e.meta = EnsembleMeta { master_seed, merged_jumps: merged, generator: spec.name() };
    Ok(e)
}

/// Sequential ensemble generation. Path `i` uses seed `path_seed(master_seed, i)`.
pub fn seeded_ensemble(
    spec: &GeneratorSpec,
    grid: TimeGrid,
    n_paths: usize,
    master_seed: u64,
) -> Result<PathEnsemble> {
    if n_paths == 0 {
        return Err(invalid("n_paths", "must be at least 1"));
    }
    spec.validate()?;
    let seeds = path_seeds(master_seed, n_paths);
    let sims = seeds.iter().map(|&s| spec.simulate_path(&grid, s)).collect::<Result<Vec<_>>>()?;
    assemble(spec, grid, master_seed, seeds, sims)
}

pub fn gen_bm(grid: TimeGrid, n_paths: usize, seed: u64, vol: f64) -> Result<PathEnsemble> {
    seeded_ensemble(&GeneratorSpec::Bm { x0: 0.0, vol }, grid, n_paths, seed)
}

pub fn gen_compound_poisson(
    grid: TimeGrid,
    n_paths: usize,
    seed: u64,
    rate: f64,
    sizes: SizeLaw,
) -> Result<PathEnsemble> {
    seeded_ensemble(&GeneratorSpec::CompoundPoisson { x0: 0.0, rate, sizes }, grid, n_paths, seed)
}

pub fn gen_jump_diffusion(
    spec: JumpDiffusionSpec,
    grid: TimeGrid,
    n_paths: usize,
    seed: u64,
) -> Result<PathEnsemble> {
    seeded_ensemble(&GeneratorSpec::JumpDiffusion(spec), grid, n_paths, seed)
}

pub fn gen_convolution_example(grid: TimeGrid, n_paths: usize, seed: u64) -> Result<PathEnsemble> {
    seeded_ensemble(&GeneratorSpec::Convolution, grid, n_paths, seed)
}

/// Poisson variate by sequential inversion (small means only).
pub(crate) fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    let u: f64 = rng.random();
    let mut p = libm::exp(-mean);
    let mut cdf = p;
    let mut k = 0usize;
    while u > cdf && k < 10_000 {
        k += 1;
        p *= mean / k as f64;
        cdf += p;
        if p == 0.0 {
            break;
        }
    }
    k
}

fn jump_diffusion_path(spec: &JumpDiffusionSpec, grid: &TimeGrid, rng: &mut PathRng) -> Result<SimulatedPath> {
    let n = grid.n_steps();
    let dt = grid.dt();
    let sqrt_dt = libm::sqrt(dt);
    let mut x = spec.x0;
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
        let z: f64 = StandardNormal.sample(rng);
        let dw = sqrt_dt * z;
        let b = (spec.drift)(t, x);
        let s = (spec.diffusion)(t, x);
        let mut next = x + b * dt + s * dw;
        wc += dw;
        xcc += s * dw;
        sig.push(s);
        let mut lam = 0.0;
        if let Some(jm) = &spec.jumps {
            lam = jm.rate(t, x);
            if !(lam >= 0.0) || lam > jm.bound * (1.0 + 1e-12) {
                return Err(Error::RateBoundExceeded { t, state: x, rate: lam, bound: jm.bound });
            }
            let k = poisson(jm.bound * dt, rng);
            let mut total = 0.0;
            let mut accepted = 0usize;
            for _ in 0..k {
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

fn compound_poisson_path(
    x0: f64,
    rate: f64,
    sizes: &SizeLaw,
    grid: &TimeGrid,
    rng: &mut PathRng,
) -> Result<SimulatedPath> {
    let n = grid.n_steps();
    let horizon = grid.horizon();
    let mut incr = alloc::vec![0.0; n + 1];
    let mut hit = alloc::vec![0u32; n + 1];
    if rate > 0.0 {
        let mut t = 0.0;
        loop {
            let u: f64 = rng.random();
            t += -libm::log1p(-u) / rate;
            if t > horizon {
                break;
            }
            let size = sizes.sample(rng);
            if size == 0.0 {
                continue;
            }
            let j = grid.ceil_index(t).max(1);
            incr[j] += size;
            hit[j] += 1;
        }
    }
    let mut values = Vec::with_capacity(n + 1);
    let mut jumps = Vec::new();
    let mut merged = 0usize;
    let mut x = x0;
    values.push(x);
    for j in 1..=n {
        if hit[j] > 1 {
            merged += hit[j] as usize - 1;
        }
        if incr[j] != 0.0 {
            x += incr[j];
            jumps.push(Jump { index: j, size: incr[j] });
        }
        values.push(x);
    }
    let g = *grid;
    let dt = grid.dt();
    let path = SamplePath::new(g, values, jumps)?;
    let truth = GroundTruth {
        continuous_martingale: Some(SamplePath::constant(g, 0.0)),
        driver: None,
        diffusion: Some(alloc::vec![0.0; n]),
        intensity: Some(alloc::vec![rate; n]),
        compensator: Some(SamplePath::from_parts_unchecked(
            g,
            (0..=n).map(|j| rate * j as f64 * dt).collect(),
            Some(Vec::new()),
        )),
    };
    Ok(SimulatedPath { path, truth, merged_jumps: merged })
}

fn convolution_path(grid: &TimeGrid, rng: &mut PathRng) -> Result<SimulatedPath> {
    let n = grid.n_steps();
    let sqrt_dt = libm::sqrt(grid.dt());
    let mut b = Vec::with_capacity(n + 1);
    b.push(0.0);
    let mut acc = 0.0;
    for _ in 0..n {
        let z: f64 = StandardNormal.sample(rng);
        acc += sqrt_dt * z;
        b.push(acc);
    }
    let dw: Vec<f64> = (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            sqrt_dt * z
        })
        .collect();
    let mut values = Vec::with_capacity(n + 1);
    values.push(0.0);
    for j in 1..=n {
        // X_{t_j} = sum_{i<j} B_{t_j - t_i} dW_i
        let s: f64 = (0..j).map(|i| b[j - i] * dw[i]).sum();
        values.push(s);
    }
    let mut w = Vec::with_capacity(n + 1);
    let mut wc = 0.0;
    w.push(0.0);
    for d in &dw {
        wc += d;
        w.push(wc);
    }
    let g = *grid;
    let truth = GroundTruth {
        continuous_martingale: Some(SamplePath::constant(g, 0.0)),
        driver: Some(SamplePath::from_parts_unchecked(g, w, Some(Vec::new()))),
        ..Default::default()
    };
    Ok(SimulatedPath { path: SamplePath::continuous(g, values)?, truth, merged_jumps: 0 })
}

/// Convenience constructor for unit-size jumps with constant intensity.
pub fn unit_jumps(rate: f64) -> Result<JumpModel> {
    JumpModel::constant(rate, SizeLaw::PointMass(1.0))
}

/// State-dependent kernel with a declared bound.
pub fn jump_model(intensity: Coef, bound: f64, sizes: SizeKernel) -> Result<JumpModel> {
    JumpModel::new(intensity, bound, sizes)
}
