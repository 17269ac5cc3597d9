//! Weak Dirichlet decompositions on simulated ensembles.
//!
//! All checks compare ensemble means of covariation estimates with the
//! three-valued band of [`Verdict::from_band`], using the tolerance
//! `3 * (MC standard error) + c * eps`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::brackets::ucp_bracket_idx;
use crate::error::{invalid, Error, Result};
use crate::func::TestFn;
use crate::path::{map_path, PathEnsemble, SamplePath};
use crate::stats;
use crate::truncation::TruncationFn;
use crate::verdict::Verdict;

/// Continuous martingale `N = int eta dW` on each path of an ensemble.
#[derive(Debug, Clone)]
pub struct TestMartingale {
    pub name: String,
    pub paths: Vec<SamplePath>,
    /// Integrand `eta_j` per step and path, when known.
    pub eta: Option<Vec<Vec<f64>>>,
}

/// Default dictionary `{W, int X_{s-} dW}` from the ensemble's ground truth.
pub fn default_dictionary(ensemble: &PathEnsemble) -> Result<Vec<TestMartingale>> {
    let n = ensemble.grid.n_steps();
    let mut w_paths = Vec::with_capacity(ensemble.len());
    let mut xw_paths = Vec::with_capacity(ensemble.len());
    let mut w_eta = Vec::with_capacity(ensemble.len());
    let mut xw_eta = Vec::with_capacity(ensemble.len());
    for (i, p) in ensemble.paths.iter().enumerate() {
        let w = ensemble
            .truth(i)?
            .driver
            .as_ref()
            .ok_or(Error::MissingGroundTruth("driving Brownian motion"))?;
        let (wv, xv) = (w.values(), p.values());
        let mut acc = 0.0;
        let mut xw = Vec::with_capacity(n + 1);
        xw.push(0.0);
        for j in 0..n {
            acc += xv[j] * (wv[j + 1] - wv[j]);
            xw.push(acc);
        }
        w_paths.push(w.clone());
        xw_paths.push(SamplePath::continuous(ensemble.grid, xw)?);
        w_eta.push(alloc::vec![1.0; n]);
        xw_eta.push(xv[..n].to_vec());
    }
    Ok(alloc::vec![
        TestMartingale { name: "W".into(), paths: w_paths, eta: Some(w_eta) },
        TestMartingale { name: "int X dW".into(), paths: xw_paths, eta: Some(xw_eta) },
    ])
}

/// Epsilon sweep and the `c` of the `c * eps` tolerance term.
#[derive(Debug, Clone, PartialEq)]
pub struct BandConfig {
    pub multiples: Vec<usize>,
    pub c: f64,
}

impl Default for BandConfig {
    fn default() -> Self {
        Self { multiples: alloc::vec![1, 2, 5, 10], c: 10.0 }
    }
}

/// One line of a decomposition report.
#[derive(Debug, Clone, PartialEq)]
pub struct StatRow {
    pub statistic: String,
    pub value: f64,
    pub se: f64,
    /// Consistency threshold `3 se + c eps`.
    pub band: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecompReport {
    pub rows: Vec<StatRow>,
    pub verdict: Verdict,
}

impl DecompReport {
    fn from_rows(rows: Vec<StatRow>) -> Self {
        let verdict = Verdict::all(rows.iter().map(|r| r.verdict));
        Self { rows, verdict }
    }
}

fn band_row(statistic: String, samples: &[f64], slack: f64) -> StatRow {
    let value = stats::mean(samples);
    let se = stats::std_error(samples);
    StatRow { statistic, value, se, band: 3.0 * se + slack, verdict: Verdict::from_band(value, se, slack) }
}

fn check_dict(a: &[SamplePath], dict: &[TestMartingale]) -> Result<()> {
    if dict.is_empty() {
        return Err(Error::Empty("test martingale dictionary"));
    }
    if a.is_empty() {
        return Err(Error::Empty("ensemble"));
    }
    for d in dict {
        if d.paths.len() != a.len() {
            return Err(invalid("dictionary", "one martingale path per ensemble path required"));
        }
    }
    Ok(())
}

/// `[A, N]^ucp_eps(T) ~ 0` for every `N` of the dictionary.
pub fn orthogonality_test(a: &[SamplePath], dict: &[TestMartingale], cfg: &BandConfig) -> Result<DecompReport> {
    check_dict(a, dict)?;
    let grid = *a[0].grid();
    let n = grid.n_steps();
    let mut rows = Vec::new();
    for d in dict {
        for &m in &cfg.multiples {
            let vals =
                a.iter().zip(&d.paths).map(|(x, y)| ucp_bracket_idx(x, y, m, n)).collect::<Result<Vec<_>>>()?;
            let eps = m as f64 * grid.dt();
            rows.push(band_row(format!("[A,{}] eps={}", d.name, eps), &vals, cfg.c * eps));
        }
    }
    Ok(DecompReport::from_rows(rows))
}

/// `D_N = [Y, N]^ucp_eps(T) - sum_j dv/dx(t_j, X_j) d[X^c, N]_j` with
/// `Y = v(t, X)` and `d[X^c, N]_j = sigma_j eta_j dt`.
pub fn chain_rule_check(
    ensemble: &PathEnsemble,
    v: &dyn TestFn,
    dict: &[TestMartingale],
    cfg: &BandConfig,
) -> Result<DecompReport> {
    check_dict(&ensemble.paths, dict)?;
    let grid = ensemble.grid;
    let n = grid.n_steps();
    let dt = grid.dt();
    let ys: Vec<SamplePath> = ensemble.paths.iter().map(|p| map_path(p, &|t, x| v.value(t, x))).collect();
    let mut rows = Vec::new();
    for d in dict {
        let eta = d.eta.as_ref().ok_or(Error::MissingGroundTruth("integrand of the test martingale"))?;
        // ground-truth bracket term, independent of eps
        let mut truth = Vec::with_capacity(ensemble.len());
        for (i, p) in ensemble.paths.iter().enumerate() {
            let sig = ensemble
                .truth(i)?
                .diffusion
                .as_ref()
                .ok_or(Error::MissingGroundTruth("diffusion coefficient along the path"))?;
            let xv = p.values();
            let s: f64 = (0..n).map(|j| v.dx(grid.time(j), xv[j]) * sig[j] * eta[i][j] * dt).sum();
            truth.push(s);
        }
        for &m in &cfg.multiples {
            let mut diffs = Vec::with_capacity(ensemble.len());
            for (i, y) in ys.iter().enumerate() {
                diffs.push(ucp_bracket_idx(y, &d.paths[i], m, n)? - truth[i]);
            }
            let eps = m as f64 * dt;
            rows.push(band_row(format!("D[{}] eps={}", d.name, eps), &diffs, cfg.c * eps));
        }
    }
    Ok(DecompReport::from_rows(rows))
}

/// Integrability of the big-jump sum `S = sum_{s<=T} |dv| 1_{|dX| > a}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpecialWdReport {
    pub mean: f64,
    pub median: f64,
    pub q99: f64,
    pub mean_first_half: f64,
    /// `mean / mean_first_half`; 1 when both vanish.
    pub doubling_ratio: f64,
    /// Hill estimate of the tail index of positive `S` values, when enough exist.
    pub tail_index: Option<f64>,
    pub verdict: Verdict,
}

/// Minimum tail index for the sample to be treated as integrable.
pub const TAIL_INDEX_GUARD: f64 = 1.5;

pub fn big_jump_sums(ensemble: &PathEnsemble, v: &dyn Fn(f64, f64) -> f64, a: f64) -> Vec<f64> {
    let grid = ensemble.grid;
    ensemble
        .paths
        .iter()
        .map(|p| {
            p.jumps()
                .iter()
                .filter(|j| libm::fabs(j.size) > a)
                .map(|j| {
                    let t = grid.time(j.index);
                    let pre = p.left_limit(j.index);
                    libm::fabs(v(t, pre + j.size) - v(t, pre))
                })
                .sum()
        })
        .collect()
}

pub fn special_wd_check(ensemble: &PathEnsemble, v: &dyn Fn(f64, f64) -> f64, a: f64) -> Result<SpecialWdReport> {
    if !(a > 0.0) {
        return Err(invalid("a", "must be positive"));
    }
    let s = big_jump_sums(ensemble, v, a);
    special_wd_from_sums(&s)
}

pub fn special_wd_from_sums(s: &[f64]) -> Result<SpecialWdReport> {
    if s.len() < 2 {
        return Err(invalid("n_paths", "need at least two paths"));
    }
    let mean = stats::mean(s);
    let half = stats::mean(&s[..s.len() / 2]);
    let ratio = if mean == 0.0 && half == 0.0 { 1.0 } else { mean / half };
    let q99 = stats::quantile(s, 0.99);
    let positive = s.iter().filter(|x| **x > 0.0).count();
    let k = libm::sqrt(positive as f64) as usize;
    let tail_index = if k >= 10 { stats::hill_tail_index(s, k) } else { None };
    let ok = q99.is_finite()
        && mean.is_finite()
        && (0.5..=2.0).contains(&ratio)
        && tail_index.is_none_or(|al| al >= TAIL_INDEX_GUARD);
    Ok(SpecialWdReport {
        mean,
        median: stats::quantile(s, 0.5),
        q99,
        mean_first_half: half,
        doubling_ratio: ratio,
        tail_index,
        verdict: Verdict::from_bool(ok),
    })
}

/// Estimates of `Gamma^k(v)` along every path:
///
/// ```text
/// G_J = Y_J - Y_0 - sum_{j<J} dv/dx(t_j, X_j) dX^c_j - sum_{s <= t_J} dY_s
///       + sum_{j<J} lambda_j dt E[(v(t_j, X_j + Z) - v(t_j, X_j)) k(Z)/Z]
/// ```
///
/// The jump sum is the split `dv k(dX)/dX + dv (dX - k(dX))/dX`; the last
/// line is the compensator of the truncated part.
pub fn gamma_k_residual(ensemble: &PathEnsemble, v: &dyn TestFn, k: &TruncationFn) -> Result<Vec<SamplePath>> {
    let grid = ensemble.grid;
    let n = grid.n_steps();
    let dt = grid.dt();
    let breaks = k.breakpoints();
    let mut out = Vec::with_capacity(ensemble.len());
    for (i, p) in ensemble.paths.iter().enumerate() {
        let gt = ensemble.truth(i)?;
        let xc = gt
            .continuous_martingale
            .as_ref()
            .ok_or(Error::MissingGroundTruth("continuous martingale part"))?
            .values();
        let comp = match &ensemble.jump_model {
            Some(jm) => Some((jm, gt.intensity.as_ref().ok_or(Error::MissingGroundTruth("jump intensity"))?)),
            None => None,
        };
        let xv = p.values();
        let y0 = v.value(0.0, xv[0]);
        let mut vals = Vec::with_capacity(n + 1);
        vals.push(0.0);
        let (mut yc, mut jumps, mut compensator) = (0.0, 0.0, 0.0);
        for j in 0..n {
            let t = grid.time(j);
            yc += v.dx(t, xv[j]) * (xc[j + 1] - xc[j]);
            if let Some((jm, lam)) = comp {
                if lam[j] != 0.0 {
                    let base = v.value(t, xv[j]);
                    let e = jm.sizes.expect(
                        xv[j],
                        |z| if z == 0.0 { 0.0 } else { (v.value(t, xv[j] + z) - base) * k.ratio(z) },
                        &breaks,
                        &jm.quad,
                    )?;
                    compensator += lam[j] * dt * e;
                }
            }
            let dj = p.jump_at(j + 1);
            if dj != 0.0 {
                let tj = grid.time(j + 1);
                let pre = xv[j + 1] - dj;
                jumps += v.value(tj, xv[j + 1]) - v.value(tj, pre);
            }
            let y = v.value(grid.time(j + 1), xv[j + 1]);
            vals.push(y - y0 - yc - jumps + compensator);
        }
        out.push(SamplePath::continuous(grid, vals)?);
    }
    Ok(out)
}
