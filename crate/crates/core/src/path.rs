//! Cadlag paths on uniform grids, jump registries and ensembles.

use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::kernel::JumpModel;

/// Uniform time grid `t_j = j * dt` on `[0, horizon]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, n_steps: usize) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(invalid("horizon", "must be positive and finite"));
        }
        if n_steps == 0 {
            return Err(invalid("n_steps", "must be at least 1"));
        }
        Ok(Self { horizon, n_steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn len(&self) -> usize {
        self.n_steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    #[inline]
    pub fn time(&self, j: usize) -> f64 {
        j as f64 * self.dt()
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|j| self.time(j)).collect()
    }

    /// Grid index of `t`; `t` must be a grid point up to a relative `1e-9`.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let r = t / self.dt();
        let j = libm::round(r);
        if !(0.0..=self.n_steps as f64).contains(&j) || libm::fabs(r - j) > 1e-9 * j.max(1.0) {
            return Err(Error::OffGrid { t });
        }
        Ok(j as usize)
    }

    /// Index of the first grid point `>= t` (sub-grid events are rounded up).
    pub fn ceil_index(&self, t: f64) -> usize {
        let r = t / self.dt();
        let near = libm::round(r);
        let j = if libm::fabs(r - near) <= 1e-9 * near.max(1.0) { near } else { libm::ceil(r) };
        (j.max(0.0) as usize).min(self.n_steps)
    }

    /// `eps` as a multiple `m >= 1` of `dt`.
    pub fn eps_multiple(&self, eps: f64) -> Result<usize> {
        let r = eps / self.dt();
        let m = libm::round(r);
        if m < 1.0 || libm::fabs(r - m) > 1e-9 * m {
            return Err(invalid("epsilon", "must be a positive integer multiple of dt"));
        }
        Ok(m as usize)
    }
}

/// Registered jump `X_{t_j} - X_{t_j-}` at grid index `index >= 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jump {
    pub index: usize,
    pub size: f64,
}

/// One trajectory on a [`TimeGrid`]; `values[j] = X_{t_j}`.
///
/// `registry` holds the exact jumps when the path comes from a simulator
/// (or from a CSV file carrying `is_jump` flags). Paths built from plain
/// values have no registry and rely on threshold detection.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    grid: TimeGrid,
    values: Vec<f64>,
    registry: Option<Vec<Jump>>,
}

impl SamplePath {
    pub fn new(grid: TimeGrid, values: Vec<f64>, jumps: Vec<Jump>) -> Result<Self> {
        let p = Self { grid, values, registry: Some(jumps) };
        p.validate()?;
        Ok(p)
    }

    pub fn without_registry(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        let p = Self { grid, values, registry: None };
        p.validate()?;
        Ok(p)
    }

    /// Continuous path: empty registry.
    pub fn continuous(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        Self::new(grid, values, Vec::new())
    }

    pub fn constant(grid: TimeGrid, value: f64) -> Self {
        Self { grid, values: alloc::vec![value; grid.len()], registry: Some(Vec::new()) }
    }

    pub(crate) fn from_parts_unchecked(
        grid: TimeGrid,
        values: Vec<f64>,
        registry: Option<Vec<Jump>>,
    ) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values, registry }
    }

    fn validate(&self) -> Result<()> {
        if self.values.len() != self.grid.len() {
            return Err(invalid("values", "length must be n_steps + 1"));
        }
        if let Some(reg) = &self.registry {
            let mut last = 0usize;
            for jump in reg {
                if jump.index == 0 || jump.index > self.grid.n_steps() {
                    return Err(invalid("jumps", "jump index must lie in 1..=n_steps"));
                }
                if jump.index <= last {
                    return Err(invalid("jumps", "jump indices must be strictly increasing"));
                }
                if jump.size == 0.0 || !jump.size.is_finite() {
                    return Err(invalid("jumps", "jump sizes must be finite and nonzero"));
                }
                last = jump.index;
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn registry(&self) -> Option<&[Jump]> {
        self.registry.as_deref()
    }

    pub fn jumps(&self) -> &[Jump] {
        self.registry.as_deref().unwrap_or(&[])
    }

    pub fn first(&self) -> f64 {
        self.values[0]
    }

    pub fn last(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// Registered jump at index `j`, zero when none.
    pub fn jump_at(&self, j: usize) -> f64 {
        let reg = self.jumps();
        match reg.binary_search_by_key(&j, |jp| jp.index) {
            Ok(k) => reg[k].size,
            Err(_) => 0.0,
        }
    }

    /// `X_{t_j-}` from the registry.
    pub fn left_limit(&self, j: usize) -> f64 {
        self.values[j] - self.jump_at(j)
    }

    pub fn same_grid(&self, other: &SamplePath) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    /// Pointwise linear combination `a*self + b*other`, registries combined.
    pub fn lin_comb(&self, a: f64, other: &SamplePath, b: f64) -> Result<SamplePath> {
        self.same_grid(other)?;
        let values = self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect();
        let registry = match (&self.registry, &other.registry) {
            (Some(_), Some(_)) => {
                let mut idx: Vec<usize> =
                    self.jumps().iter().chain(other.jumps()).map(|j| j.index).collect();
                idx.sort_unstable();
                idx.dedup();
                Some(
                    idx.into_iter()
                        .map(|i| Jump { index: i, size: a * self.jump_at(i) + b * other.jump_at(i) })
                        .filter(|j| j.size != 0.0)
                        .collect(),
                )
            }
            _ => None,
        };
        Ok(SamplePath { grid: self.grid, values, registry })
    }

    pub fn scaled(&self, a: f64) -> SamplePath {
        SamplePath {
            grid: self.grid,
            values: self.values.iter().map(|x| a * x).collect(),
            registry: self.registry.as_ref().map(|r| {
                r.iter()
                    .map(|j| Jump { index: j.index, size: a * j.size })
                    .filter(|j| j.size != 0.0)
                    .collect()
            }),
        }
    }
}

/// Atom `(t, size)` of the jump measure of one path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub index: usize,
    pub time: f64,
    pub size: f64,
}

/// Integer-valued random measure `sum_s delta_{(s, dX_s)}` of one path.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct JumpMeasure {
    pub atoms: Vec<Atom>,
    /// True when atoms were detected from increments, not read from a registry.
    pub detected: bool,
}

impl JumpMeasure {
    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn sizes(&self) -> impl Iterator<Item = f64> + '_ {
        self.atoms.iter().map(|a| a.size)
    }
}

/// Atoms of `path` with `|size| > threshold`.
///
/// Uses the registry when there is one; otherwise every grid increment above
/// the threshold is reported as a detected jump.
pub fn extract_jumps(path: &SamplePath, threshold: f64) -> JumpMeasure {
    let grid = path.grid();
    match path.registry() {
        Some(reg) => JumpMeasure {
            atoms: reg
                .iter()
                .filter(|j| libm::fabs(j.size) > threshold)
                .map(|j| Atom { index: j.index, time: grid.time(j.index), size: j.size })
                .collect(),
            detected: false,
        },
        None => JumpMeasure {
            atoms: path
                .values()
                .windows(2)
                .enumerate()
                .filter_map(|(i, w)| {
                    let d = w[1] - w[0];
                    (libm::fabs(d) > threshold && d != 0.0)
                        .then(|| Atom { index: i + 1, time: grid.time(i + 1), size: d })
                })
                .collect(),
            detected: true,
        },
    }
}

/// `Y_t = v(t, X_t)` with jumps `v(t, X_{t-} + dX) - v(t, X_{t-})`.
pub fn map_path<V: Fn(f64, f64) -> f64 + ?Sized>(path: &SamplePath, v: &V) -> SamplePath {
    let grid = *path.grid();
    let values: Vec<f64> =
        path.values().iter().enumerate().map(|(j, &x)| v(grid.time(j), x)).collect();
    let registry = path.registry().map(|reg| {
        reg.iter()
            .filter_map(|jp| {
                let t = grid.time(jp.index);
                let pre = path.values()[jp.index] - jp.size;
                let size = values[jp.index] - v(t, pre);
                (size != 0.0 && size.is_finite()).then_some(Jump { index: jp.index, size })
            })
            .collect()
    });
    SamplePath { grid, values, registry }
}

/// Simulator-provided components of one path.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruth {
    /// Continuous local martingale part `X^c` (starts at 0).
    pub continuous_martingale: Option<SamplePath>,
    /// Driving Brownian motion `W`.
    pub driver: Option<SamplePath>,
    /// `sigma(t_j, X_{t_j})`, the integrand of `X^c` against `W`, per step.
    pub diffusion: Option<Vec<f64>>,
    /// Jump intensity at the left point of each step.
    pub intensity: Option<Vec<f64>>,
    /// Running compensator of the jump counter, `int_0^t lambda ds`.
    pub compensator: Option<SamplePath>,
}

/// Bookkeeping shared by all paths of an ensemble.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EnsembleMeta {
    pub master_seed: u64,
    /// Sub-grid events rounded up onto a grid point that already carried one.
    pub merged_jumps: usize,
    /// Name of the generator.
    pub generator: &'static str,
}

/// `N` independent paths on one grid with per-path seeds.
#[derive(Debug, Clone)]
pub struct PathEnsemble {
    pub grid: TimeGrid,
    pub paths: Vec<SamplePath>,
    pub seeds: Vec<u64>,
    pub ground_truth: Option<Vec<GroundTruth>>,
    /// Jump compensator kernel, when the generator has one.
    pub jump_model: Option<JumpModel>,
    pub meta: EnsembleMeta,
}

impl PathEnsemble {
    pub fn new(
        grid: TimeGrid,
        paths: Vec<SamplePath>,
        seeds: Vec<u64>,
        ground_truth: Option<Vec<GroundTruth>>,
    ) -> Result<Self> {
        let e = Self { grid, paths, seeds, ground_truth, jump_model: None, meta: Default::default() };
        e.validate()?;
        Ok(e)
    }

    pub fn validate(&self) -> Result<()> {
        if self.paths.is_empty() {
            return Err(Error::Empty("ensemble"));
        }
        if self.paths.iter().any(|p| *p.grid() != self.grid) {
            return Err(Error::GridMismatch);
        }
        if self.seeds.len() != self.paths.len() {
            return Err(invalid("seeds", "one seed per path required"));
        }
        let mut s = self.seeds.clone();
        s.sort_unstable();
        if s.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid("seeds", "per-path seeds must be pairwise distinct"));
        }
        if let Some(gt) = &self.ground_truth {
            if gt.len() != self.paths.len() {
                return Err(invalid("ground_truth", "one entry per path required"));
            }
            for g in gt {
                for p in [&g.continuous_martingale, &g.driver, &g.compensator].into_iter().flatten() {
                    if *p.grid() != self.grid {
                        return Err(Error::GridMismatch);
                    }
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn truth(&self, i: usize) -> Result<&GroundTruth> {
        self.ground_truth
            .as_ref()
            .map(|g| &g[i])
            .ok_or(Error::MissingGroundTruth("ensemble has no ground truth"))
    }

    /// Terminal values `X_T` of every path.
    pub fn terminal_values(&self) -> Vec<f64> {
        self.paths.iter().map(|p| p.last()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn grid() -> TimeGrid {
        TimeGrid::new(1.0, 10).unwrap()
    }

    #[test]
    fn grid_indexing() {
        let g = grid();
        assert_eq!(g.index_of(0.3).unwrap(), 3);
        assert!(g.index_of(0.35).is_err());
        assert_eq!(g.ceil_index(0.31), 4);
        assert_eq!(g.ceil_index(0.3), 3);
        assert_eq!(g.eps_multiple(0.2).unwrap(), 2);
        assert!(g.eps_multiple(0.05).is_err());
    }

    #[test]
    fn registry_validation() {
        let g = grid();
        let vals = vec![0.0; 11];
        assert!(SamplePath::new(g, vals.clone(), vec![Jump { index: 0, size: 1.0 }]).is_err());
        assert!(SamplePath::new(g, vals.clone(), vec![Jump { index: 3, size: 0.0 }]).is_err());
        assert!(SamplePath::new(
            g,
            vals.clone(),
            vec![Jump { index: 3, size: 1.0 }, Jump { index: 3, size: 1.0 }]
        )
        .is_err());
        assert!(SamplePath::new(g, vals[..5].to_vec(), vec![]).is_err());
    }

    #[test]
    fn constant_path_has_no_jumps() {
        let p = SamplePath::constant(grid(), 2.0);
        assert!(extract_jumps(&p, 0.0).is_empty());
        let q = SamplePath::without_registry(grid(), vec![2.0; 11]).unwrap();
        assert!(extract_jumps(&q, 0.0).is_empty());
    }

    #[test]
    fn poisson_registry_is_copied() {
        let g = grid();
        let mut vals = vec![0.0; 11];
        for (j, v) in vals.iter_mut().enumerate() {
            *v = (j >= 3) as u8 as f64 + (j >= 7) as u8 as f64;
        }
        let p = SamplePath::new(g, vals, vec![Jump { index: 3, size: 1.0 }, Jump { index: 7, size: 1.0 }])
            .unwrap();
        let m = extract_jumps(&p, 0.5);
        assert_eq!(m.len(), 2);
        assert!((m.atoms[0].time - 0.3).abs() < 1e-15 && m.atoms[0].size == 1.0);
        assert!((m.atoms[1].time - 0.7).abs() < 1e-15 && m.atoms[1].size == 1.0);
        assert!(!m.detected);
    }

    #[test]
    fn detection_without_registry() {
        let g = grid();
        let vals = vec![0.0, 0.1, 0.1, 2.1, 2.0, 2.0, 2.0, 2.0, 2.0, 2.0, 2.0];
        let p = SamplePath::without_registry(g, vals).unwrap();
        let m = extract_jumps(&p, 0.5);
        assert!(m.detected);
        assert_eq!(m.len(), 1);
        assert_eq!(m.atoms[0].index, 3);
    }

    #[test]
    fn map_square_jump() {
        // X_{t-} = 1, dX = 2 so dY = 9 - 1
        let g = grid();
        let mut vals = vec![1.0; 11];
        for v in vals.iter_mut().skip(5) {
            *v = 3.0;
        }
        let p = SamplePath::new(g, vals, vec![Jump { index: 5, size: 2.0 }]).unwrap();
        let y = map_path(&p, &|_t, x| x * x);
        assert_eq!(y.jumps(), &[Jump { index: 5, size: 8.0 }]);
        let id = map_path(&p, &|_t, x| x);
        assert_eq!(id, p);
    }

    #[test]
    fn map_continuous_keeps_empty_registry() {
        let g = grid();
        let p = SamplePath::continuous(g, (0..11).map(|j| (j as f64).sqrt()).collect()).unwrap();
        let y = map_path(&p, &|_t, x| libm::sin(x));
        assert!(y.jumps().is_empty());
        assert!(y.registry().is_some());
    }

    #[test]
    fn ensemble_rejects_duplicate_seeds() {
        let g = grid();
        let p = SamplePath::constant(g, 0.0);
        assert!(PathEnsemble::new(g, vec![p.clone(), p.clone()], vec![1, 1], None).is_err());
        assert!(PathEnsemble::new(g, vec![p.clone(), p], vec![1, 2], None).is_ok());
    }
}
