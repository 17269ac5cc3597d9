//! Martingale problems `M^v_t = v(t, X_t) - v(0, x0) - int A v(ds, X)` and a
//! Monte Carlo test of the martingale property.
//!
//! An operator is a list of pairs `(Lambda_i, gamma_i)` with
//! `A v(ds, eta) = sum_i (Lambda_i v)(s, eta) gamma_i(ds, eta)`. Every
//! `Lambda_i` receives a [`StoppedPath`], which exposes the path up to `s`
//! and nothing after it.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::func::{Frozen, SpaceFn, TestFn};
use crate::path::SamplePath;
use crate::stats;
use crate::verdict::Verdict;

/// Path stopped at time `s`: the values strictly before `s` plus the state
/// used at `s` (`X_s` for Lebesgue sums, `X_{s-}` for jump-driven measures).
#[derive(Debug, Clone, Copy)]
pub struct StoppedPath<'a> {
    past: &'a [f64],
    current: f64,
    time: f64,
}

impl<'a> StoppedPath<'a> {
    pub fn new(past: &'a [f64], current: f64, time: f64) -> Self {
        Self { past, current, time }
    }

    /// Path stopped at grid index `j`, with `X_{t_j}` as current state.
    pub fn at(path: &'a SamplePath, j: usize) -> Self {
        Self { past: &path.values()[..j], current: path.values()[j], time: path.grid().time(j) }
    }

    /// Path stopped just before grid index `j`, with `X_{t_j-}` as current state.
    pub fn before(path: &'a SamplePath, j: usize) -> Self {
        Self { past: &path.values()[..j], current: path.left_limit(j), time: path.grid().time(j) }
    }

    pub fn current(&self) -> f64 {
        self.current
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Grid values strictly before the stopping time.
    pub fn past(&self) -> &[f64] {
        self.past
    }

    pub fn sup(&self) -> f64 {
        self.past.iter().copied().fold(self.current, f64::max)
    }
}

/// `(v, s, eta) -> (Lambda v)(s, eta)`.
pub type Lambda = Arc<dyn Fn(&dyn TestFn, f64, &StoppedPath<'_>) -> Result<f64> + Send + Sync>;

/// Homogeneous operator `(f, eta) -> (L f)(eta)` on space functions.
pub type HomOp = Arc<dyn Fn(&dyn SpaceFn, &StoppedPath<'_>) -> Result<f64> + Send + Sync>;

/// Integrator `gamma_i(ds)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Gamma {
    /// `ds`, as a left-point Riemann sum.
    Lebesgue,
    /// `dp*_s`: one unit at every boundary-forced jump, evaluated at `X_{s-}`.
    BoundaryCounter,
    /// Fixed atoms `(grid index, weight)`, evaluated at `X_{s-}`.
    Atoms(Vec<(usize, f64)>),
}

#[derive(Clone)]
pub struct OperatorPair {
    pub lambda: Lambda,
    pub gamma: Gamma,
}

/// Which derivatives of `v` an operator reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Domain {
    pub needs_dt: bool,
    pub needs_dxx: bool,
}

#[derive(Clone)]
pub struct OperatorSpec {
    pub pairs: Vec<OperatorPair>,
    pub domain: Domain,
}

impl core::fmt::Debug for OperatorSpec {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("OperatorSpec")
            .field("gammas", &self.pairs.iter().map(|p| &p.gamma).collect::<Vec<_>>())
            .field("domain", &self.domain)
            .finish()
    }
}

impl OperatorSpec {
    pub fn zero() -> Self {
        Self { pairs: Vec::new(), domain: Domain::default() }
    }

    /// `Lambda v` of every pair at `(s, eta)`.
    pub fn eval(&self, v: &dyn TestFn, s: f64, eta: &StoppedPath<'_>) -> Result<Vec<f64>> {
        self.pairs.iter().map(|p| (p.lambda)(v, s, eta)).collect()
    }

    fn check_domain(&self, v: &dyn TestFn, t: f64, x: f64) -> Result<()> {
        if self.domain.needs_dt && v.dt(t, x).is_none() {
            return Err(Error::OutsideDomain("operator needs the time derivative of v".into()));
        }
        if self.domain.needs_dxx && v.dxx(t, x).is_none() {
            return Err(Error::OutsideDomain("operator needs the second space derivative of v".into()));
        }
        Ok(())
    }
}

/// `Lambda v = dv/dt + L v(s, .)` with `gamma = ds`.
pub fn homogeneous_to_inhomogeneous(l: HomOp, needs_dxx: bool) -> OperatorSpec {
    let lambda: Lambda = Arc::new(move |v: &dyn TestFn, s: f64, eta: &StoppedPath<'_>| {
        let dt = v
            .dt(s, eta.current())
            .ok_or_else(|| Error::OutsideDomain("v must be C^1 in time".into()))?;
        Ok(dt + l(&Frozen { v, s }, eta)?)
    });
    OperatorSpec {
        pairs: alloc::vec![OperatorPair { lambda, gamma: Gamma::Lebesgue }],
        domain: Domain { needs_dt: true, needs_dxx },
    }
}

/// `L f = b f' + 1/2 sigma^2 f''` with constant coefficients.
pub fn diffusion_generator(b: f64, sigma: f64) -> HomOp {
    Arc::new(move |f: &dyn SpaceFn, eta: &StoppedPath<'_>| {
        let x = eta.current();
        Ok(b * f.d1(x) + 0.5 * sigma * sigma * f.d2(x))
    })
}

/// `M^v` along one path. `boundary_hits` lists the grid indices of
/// boundary-forced jumps (needed by [`Gamma::BoundaryCounter`]).
pub fn build_mv(
    op: &OperatorSpec,
    v: &dyn TestFn,
    path: &SamplePath,
    boundary_hits: Option<&[usize]>,
    x0: f64,
) -> Result<SamplePath> {
    let grid = *path.grid();
    let n = grid.n_steps();
    let dt = grid.dt();
    if libm::fabs(path.first() - x0) > 1e-12 {
        return Err(Error::StartMismatch { expected: x0, found: path.first() });
    }
    op.check_domain(v, 0.0, x0)?;
    let mut integral = alloc::vec![0.0; n + 1];
    for pair in &op.pairs {
        match &pair.gamma {
            Gamma::Lebesgue => {
                let mut acc = 0.0;
                for j in 0..n {
                    acc += (pair.lambda)(v, grid.time(j), &StoppedPath::at(path, j))? * dt;
                    integral[j + 1] += acc;
                }
            }
            Gamma::BoundaryCounter => {
                let hits = boundary_hits.ok_or(Error::MissingGroundTruth("boundary counter p*"))?;
                let mut inc = alloc::vec![0.0; n + 1];
                for &i in hits {
                    if i == 0 || i > n {
                        return Err(invalid("boundary_hits", "indices must lie in 1..=n_steps"));
                    }
                    inc[i] += (pair.lambda)(v, grid.time(i), &StoppedPath::before(path, i))?;
                }
                let mut acc = 0.0;
                for j in 1..=n {
                    acc += inc[j];
                    integral[j] += acc;
                }
            }
            Gamma::Atoms(atoms) => {
                let mut inc = alloc::vec![0.0; n + 1];
                for &(i, w) in atoms {
                    if i == 0 || i > n {
                        return Err(invalid("gamma.atoms", "indices must lie in 1..=n_steps"));
                    }
                    inc[i] += w * (pair.lambda)(v, grid.time(i), &StoppedPath::before(path, i))?;
                }
                let mut acc = 0.0;
                for j in 1..=n {
                    acc += inc[j];
                    integral[j] += acc;
                }
            }
        }
    }
    let v0 = v.value(0.0, x0);
    let values =
        (0..=n).map(|j| v.value(grid.time(j), path.values()[j]) - v0 - integral[j]).collect();
    SamplePath::without_registry(grid, values)
}

/// Adapted weight `g(eta^s)`.
#[derive(Clone)]
pub struct Weight {
    pub name: String,
    pub f: Arc<dyn Fn(&StoppedPath<'_>) -> f64 + Send + Sync>,
}

impl Weight {
    pub fn new<F: Fn(&StoppedPath<'_>) -> f64 + Send + Sync + 'static>(name: &str, f: F) -> Self {
        Self { name: name.into(), f: Arc::new(f) }
    }
}

/// `{1, X_s, tanh(X_s), sup_{u<=s} X_u}`.
pub fn default_weights() -> Vec<Weight> {
    alloc::vec![
        Weight::new("1", |_| 1.0),
        Weight::new("X_s", |e| e.current()),
        Weight::new("tanh(X_s)", |e| libm::tanh(e.current())),
        Weight::new("sup X", |e| e.sup()),
    ]
}

/// `{(0, T/2), (T/2, T), (0, T)}` as grid indices.
pub fn default_checkpoints(n_steps: usize) -> Vec<(usize, usize)> {
    let h = n_steps / 2;
    alloc::vec![(0, h), (h, n_steps), (0, n_steps)]
}

#[derive(Clone)]
pub struct MtgTestConfig {
    pub checkpoints: Vec<(usize, usize)>,
    pub weights: Vec<Weight>,
    pub alpha: f64,
}

impl MtgTestConfig {
    pub fn defaults(n_steps: usize) -> Self {
        Self { checkpoints: default_checkpoints(n_steps), weights: default_weights(), alpha: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MtgRow {
    pub v_id: String,
    pub g_id: String,
    pub s: f64,
    pub t: f64,
    pub stat: f64,
    pub se: f64,
    pub z: f64,
    pub reject: bool,
    /// Zero-variance product; excluded from the Bonferroni count.
    pub degenerate: bool,
}

/// Fixed footer carried by every martingale test report.
pub const CAVEAT: &str = "Caveat: this test checks E[(M_t - M_s) g] = 0 on the sampled grid, \
i.e. the martingale property of M^v for bounded test functions. A finite-sample test cannot \
distinguish a local martingale from a true martingale.";

#[derive(Debug, Clone, PartialEq)]
pub struct MtgTestReport {
    pub rows: Vec<MtgRow>,
    pub alpha: f64,
    /// Bonferroni-corrected two-sided critical value.
    pub z_crit: f64,
    /// Number of non-degenerate tests.
    pub n_tests: usize,
    pub reject: bool,
    pub caveat: &'static str,
}

impl MtgTestReport {
    pub fn verdict(&self) -> Verdict {
        Verdict::from_bool(!self.reject)
    }

    pub fn max_abs_z(&self) -> f64 {
        self.rows.iter().filter(|r| !r.degenerate).map(|r| libm::fabs(r.z)).fold(0.0, f64::max)
    }
}

/// `M^v` paths of one test function, labelled.
#[derive(Debug, Clone)]
pub struct MvEnsemble {
    pub v_id: String,
    pub paths: Vec<SamplePath>,
}

/// Tests `E[(M_t - M_s) g(X^s)] = 0` for every test function, checkpoint
/// and weight, with a Bonferroni correction over all non-degenerate tests.
pub fn martingale_test(ms: &[MvEnsemble], xs: &[SamplePath], cfg: &MtgTestConfig) -> Result<MtgTestReport> {
    if ms.is_empty() || cfg.weights.is_empty() || cfg.checkpoints.is_empty() {
        return Err(Error::Empty("martingale test dictionary"));
    }
    if xs.len() < 100 {
        return Err(invalid("n_paths", "the martingale test needs at least 100 paths"));
    }
    if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
        return Err(invalid("alpha", "must lie in (0, 1)"));
    }
    let grid = *xs[0].grid();
    let n = grid.n_steps();
    for &(s, t) in &cfg.checkpoints {
        if !(s < t && t <= n) {
            return Err(invalid("checkpoints", "need s < t <= n_steps"));
        }
    }
    for m in ms {
        if m.paths.len() != xs.len() {
            return Err(invalid("M", "one M path per X path required"));
        }
    }
    let np = xs.len() as f64;
    let mut rows = Vec::new();
    for m in ms {
        for &(s, t) in &cfg.checkpoints {
            for w in &cfg.weights {
                let prod: Vec<f64> = m
                    .paths
                    .iter()
                    .zip(xs)
                    .map(|(mp, xp)| {
                        let g = (w.f)(&StoppedPath::at(xp, s));
                        (mp.values()[t] - mp.values()[s]) * g
                    })
                    .collect();
                let stat = stats::mean(&prod);
                let sd = stats::std_dev(&prod);
                let se = sd / libm::sqrt(np);
                let degenerate = !(sd > 1e-12 * (1.0 + libm::fabs(stat)));
                let z = if degenerate { 0.0 } else { stat / se };
                rows.push(MtgRow {
                    v_id: m.v_id.clone(),
                    g_id: w.name.clone(),
                    s: grid.time(s),
                    t: grid.time(t),
                    stat,
                    se,
                    z,
                    reject: degenerate && libm::fabs(stat) > 1e-10,
                    degenerate,
                });
            }
        }
    }
    let n_tests = rows.iter().filter(|r| !r.degenerate).count();
    let z_crit = if n_tests > 0 { stats::normal_isf(cfg.alpha / (2.0 * n_tests as f64)) } else { f64::INFINITY };
    for r in rows.iter_mut().filter(|r| !r.degenerate) {
        r.reject = libm::fabs(r.z) > z_crit;
    }
    let reject = rows.iter().any(|r| r.reject);
    Ok(MtgTestReport { rows, alpha: cfg.alpha, z_crit, n_tests, reject, caveat: CAVEAT })
}

/// Builds `M^v` on every path for each labelled test function.
pub fn build_mv_ensembles(
    op: &OperatorSpec,
    vs: &[(String, Arc<dyn TestFn>)],
    xs: &[SamplePath],
    hits: Option<&[Vec<usize>]>,
    x0: f64,
) -> Result<Vec<MvEnsemble>> {
    vs.iter()
        .map(|(id, v)| {
            let paths = xs
                .iter()
                .enumerate()
                .map(|(i, p)| build_mv(op, &**v, p, hits.map(|h| h[i].as_slice()), x0))
                .collect::<Result<Vec<_>>>()?;
            Ok(MvEnsemble { v_id: id.clone(), paths })
        })
        .collect()
}

/// Human-readable summary line of a report.
pub fn summary(report: &MtgTestReport) -> String {
    format!(
        "{} tests, z_crit {:.3}, max |z| {:.3}: {}",
        report.n_tests,
        report.z_crit,
        report.max_abs_z(),
        if report.reject { "reject" } else { "accept" }
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::func::FnTest;
    use crate::path::TimeGrid;
    use crate::simulate::{gen_bm, gen_jump_diffusion, JumpDiffusionSpec};
    use alloc::vec;
    use proptest::prelude::*;

    fn bm_op() -> OperatorSpec {
        homogeneous_to_inhomogeneous(diffusion_generator(0.0, 1.0), true)
    }

    #[test]
    fn zero_operator_constant_v() {
        let g = TimeGrid::new(1.0, 50).unwrap();
        let e = gen_bm(g, 3, 1, 1.0).unwrap();
        let c = FnTest::space(|_| 2.0, |_| 0.0, |_| 0.0);
        for p in &e.paths {
            let m = build_mv(&OperatorSpec::zero(), &c, p, None, 0.0).unwrap();
            assert!(m.values().iter().all(|v| *v == 0.0));
        }
        let ms: Vec<SamplePath> =
            e.paths.iter().map(|p| build_mv(&OperatorSpec::zero(), &c, p, None, 0.0).unwrap()).collect();
        let xs: Vec<SamplePath> = (0..100).map(|i| e.paths[i % 3].clone()).collect();
        let mv = MvEnsemble { v_id: "c".into(), paths: (0..100).map(|i| ms[i % 3].clone()).collect() };
        let r = martingale_test(&[mv], &xs, &MtgTestConfig::defaults(50)).unwrap();
        assert!(!r.reject);
        assert!(r.rows.iter().all(|row| row.z == 0.0 && row.degenerate));
    }

    #[test]
    fn ito_square_mean_zero() {
        let g = TimeGrid::new(1.0, 200).unwrap();
        let e = gen_bm(g, 4000, 2, 1.0).unwrap();
        let v = FnTest::space(|x| x * x, |x| 2.0 * x, |_| 2.0);
        let op = bm_op();
        let mt: Vec<f64> = e.paths.iter().map(|p| build_mv(&op, &v, p, None, 0.0).unwrap().last()).collect();
        assert!(stats::mean(&mt).abs() < 3.5 * stats::std_error(&mt));
    }

    #[test]
    fn passage_formula() {
        // v = a(t) f(x): Lambda = a' f + a L f
        let op = bm_op();
        let v = FnTest::full(
            |t, x| libm::exp(t) * x * x,
            |t, x| libm::exp(t) * x * x,
            |t, x| 2.0 * libm::exp(t) * x,
            |t, _| 2.0 * libm::exp(t),
        );
        let past = [0.0, 0.1];
        for (s, x) in [(0.2, 0.7), (0.9, -1.3)] {
            let eta = StoppedPath::new(&past, x, s);
            let lam = op.eval(&v, s, &eta).unwrap()[0];
            let expect = libm::exp(s) * x * x + libm::exp(s);
            assert!((lam - expect).abs() < 1e-12);
        }
        let c01 = FnTest::c01(|_, x| x, |_, _| 1.0);
        let g = TimeGrid::new(1.0, 4).unwrap();
        let p = SamplePath::constant(g, 0.0);
        assert!(matches!(build_mv(&op, &c01, &p, None, 0.0), Err(Error::OutsideDomain(_))));
        assert!(matches!(build_mv(&op, &FnTest::identity(), &p, None, 1.0), Err(Error::StartMismatch { .. })));
    }

    #[test]
    fn time_independent_reduces_to_l() {
        let op = bm_op();
        let l = diffusion_generator(0.0, 1.0);
        let v = FnTest::space(libm::sin, libm::cos, |x| -libm::sin(x));
        let eta = StoppedPath::new(&[], 0.4, 0.3);
        let a = op.eval(&v, 0.3, &eta).unwrap()[0];
        let b = l(&Frozen { v: &v, s: 0.3 }, &eta).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn wrong_drift_is_rejected() {
        let g = TimeGrid::new(1.0, 50).unwrap();
        let e = gen_jump_diffusion(JumpDiffusionSpec::constant(0.0, 0.5, 1.0), g, 2000, 3).unwrap();
        let vs: Vec<(String, Arc<dyn TestFn>)> = vec![("x".into(), Arc::new(FnTest::identity()))];
        let ms = build_mv_ensembles(&bm_op(), &vs, &e.paths, None, 0.0).unwrap();
        let r = martingale_test(&ms, &e.paths, &MtgTestConfig::defaults(50)).unwrap();
        assert!(r.reject);
        assert_eq!(r.caveat, CAVEAT);
    }

    #[test]
    fn non_anticipation() {
        let g = TimeGrid::new(1.0, 40).unwrap();
        let e = gen_bm(g, 1, 9, 1.0).unwrap();
        let p = &e.paths[0];
        let sup_op: Lambda = Arc::new(|v: &dyn TestFn, s, eta: &StoppedPath<'_>| Ok(v.dx(s, eta.sup())));
        let v = FnTest::space(|x| x * x, |x| 2.0 * x, |_| 2.0);
        for s in [0usize, 5, 20, 39] {
            let before = sup_op(&v, g.time(s), &StoppedPath::at(p, s)).unwrap();
            let mut vals = p.values().to_vec();
            vals[s + 1..].reverse();
            vals[s + 1..].iter_mut().for_each(|x| *x += 100.0);
            let q = SamplePath::without_registry(g, vals).unwrap();
            assert_eq!(before, sup_op(&v, g.time(s), &StoppedPath::at(&q, s)).unwrap());
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn mv_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, seed in 0u64..500) {
            let g = TimeGrid::new(1.0, 30).unwrap();
            let e = gen_bm(g, 1, seed, 1.0).unwrap();
            let op = bm_op();
            let v = FnTest::space(libm::sin, libm::cos, |x| -libm::sin(x));
            let w = FnTest::full(|t, x| t * x * x, |_, x| x * x, |t, x| 2.0 * t * x, |t, _| 2.0 * t);
            let mv = build_mv(&op, &v, &e.paths[0], None, 0.0).unwrap();
            let mw = build_mv(&op, &w, &e.paths[0], None, 0.0).unwrap();
            let mc = build_mv(&op, &v.lin_comb(a, &w, b), &e.paths[0], None, 0.0).unwrap();
            for j in 0..=30 {
                let rhs = a * mv.values()[j] + b * mw.values()[j];
                prop_assert!((mc.values()[j] - rhs).abs() < 1e-12 * (1.0 + rhs.abs()));
            }
        }
    }
}
