//! Epsilon-regularized covariations and weak quadratic variation diagnostics.
//!
//! On a grid with step `dt` and `eps = m dt`,
//!
//! ```text
//! [X,Y]^ucp_eps(t_J) = (1/m) sum_{j<J} (X_{(j+m)^J} - X_j)(Y_{(j+m)^J} - Y_j)
//! C_eps(X,Y)(t_J)    = (1/m) sum_{j<J} (X_{(j+m)^n} - X_j)(Y_{(j+m)^n} - Y_j)
//! ```
//!
//! where `a^b = min(a, b)`. The second form reads past `t_J` and extends the
//! path constantly after the horizon.

use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::path::{PathEnsemble, SamplePath};
use crate::stats;
use crate::verdict::Verdict;

/// Default epsilon sweep in units of `dt`.
pub const DEFAULT_EPS_MULTIPLES: [usize; 6] = [1, 2, 5, 10, 20, 50];

fn check_m(m: usize) -> Result<()> {
    if m == 0 {
        return Err(invalid("epsilon", "must be at least one grid step"));
    }
    Ok(())
}

/// `[X,Y]^ucp_eps(t_J)` with `eps = m dt`.
pub fn ucp_bracket_idx(x: &SamplePath, y: &SamplePath, m: usize, big_j: usize) -> Result<f64> {
    x.same_grid(y)?;
    check_m(m)?;
    if big_j > x.grid().n_steps() {
        return Err(crate::Error::OffGrid { t: x.grid().time(big_j) });
    }
    let (xv, yv) = (x.values(), y.values());
    let s: f64 = (0..big_j)
        .map(|j| {
            let k = (j + m).min(big_j);
            (xv[k] - xv[j]) * (yv[k] - yv[j])
        })
        .sum();
    Ok(s / m as f64)
}

/// `[X,Y]^ucp_eps(t)`; `eps` and `t` must sit on the grid.
pub fn ucp_bracket(x: &SamplePath, y: &SamplePath, eps: f64, t: f64) -> Result<f64> {
    let g = x.grid();
    ucp_bracket_idx(x, y, g.eps_multiple(eps)?, g.index_of(t)?)
}

/// `C_eps(X,Y)(t_J)` with `eps = m dt`.
pub fn c_eps_bracket_idx(x: &SamplePath, y: &SamplePath, m: usize, big_j: usize) -> Result<f64> {
    x.same_grid(y)?;
    check_m(m)?;
    let n = x.grid().n_steps();
    if big_j > n {
        return Err(crate::Error::OffGrid { t: x.grid().time(big_j) });
    }
    let (xv, yv) = (x.values(), y.values());
    let s: f64 = (0..big_j)
        .map(|j| {
            let k = (j + m).min(n);
            (xv[k] - xv[j]) * (yv[k] - yv[j])
        })
        .sum();
    Ok(s / m as f64)
}

pub fn c_eps_bracket(x: &SamplePath, y: &SamplePath, eps: f64, t: f64) -> Result<f64> {
    let g = x.grid();
    c_eps_bracket_idx(x, y, g.eps_multiple(eps)?, g.index_of(t)?)
}

/// `t_J -> [X,Y]^ucp_eps(t_J)` for all `J`, in `O(n m)`.
pub fn ucp_bracket_path(x: &SamplePath, y: &SamplePath, m: usize) -> Result<Vec<f64>> {
    x.same_grid(y)?;
    check_m(m)?;
    let n = x.grid().n_steps();
    let (xv, yv) = (x.values(), y.values());
    // prefix sums of the unclamped products a_j = dX_j dY_j over windows of m
    let mut prefix = Vec::with_capacity(n + 2);
    prefix.push(0.0);
    let mut acc = 0.0;
    for j in 0..=n {
        if j + m <= n {
            acc += (xv[j + m] - xv[j]) * (yv[j + m] - yv[j]);
        }
        prefix.push(acc);
    }
    let inv = 1.0 / m as f64;
    let mut out = Vec::with_capacity(n + 1);
    for big_j in 0..=n {
        // unclamped terms: j + m <= J, i.e. j <= J - m
        let full = if big_j >= m { prefix[big_j - m + 1] } else { 0.0 };
        let lo = (big_j + 1).saturating_sub(m);
        let mut clamp = 0.0;
        for j in lo..big_j {
            clamp += (xv[big_j] - xv[j]) * (yv[big_j] - yv[j]);
        }
        out.push((full + clamp) * inv);
    }
    Ok(out)
}

/// `t_J -> C_eps(X,Y)(t_J)` for all `J`.
pub fn c_eps_bracket_path(x: &SamplePath, y: &SamplePath, m: usize) -> Result<Vec<f64>> {
    x.same_grid(y)?;
    check_m(m)?;
    let n = x.grid().n_steps();
    let (xv, yv) = (x.values(), y.values());
    let inv = 1.0 / m as f64;
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for j in 0..n {
        let k = (j + m).min(n);
        acc += (xv[k] - xv[j]) * (yv[k] - yv[j]);
        out.push(acc * inv);
    }
    Ok(out)
}

/// `sum_{s <= t_J} |dX_s|^2` from the registry.
pub fn jump_square_sum_idx(x: &SamplePath, big_j: usize) -> f64 {
    x.jumps().iter().take_while(|j| j.index <= big_j).map(|j| j.size * j.size).sum()
}

pub fn jump_square_sum(x: &SamplePath, t: f64) -> Result<f64> {
    Ok(jump_square_sum_idx(x, x.grid().index_of(t)?))
}

/// `[X,X]^ucp_eps(t) - sum_{s<=t} |dX_s|^2`.
pub fn continuous_bracket(x: &SamplePath, eps: f64, t: f64) -> Result<f64> {
    Ok(ucp_bracket(x, x, eps, t)? - jump_square_sum(x, t)?)
}

/// Bracket values at the horizon over an epsilon sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct BracketCurve {
    pub eps: Vec<f64>,
    pub multiples: Vec<usize>,
    pub values: Vec<f64>,
    /// Full time paths, one per epsilon, when requested.
    pub paths: Option<Vec<Vec<f64>>>,
}

pub fn bracket_curve(x: &SamplePath, y: &SamplePath, multiples: &[usize], with_paths: bool) -> Result<BracketCurve> {
    check_sweep(multiples)?;
    let g = x.grid();
    let n = g.n_steps();
    let mut values = Vec::with_capacity(multiples.len());
    let mut paths = with_paths.then(Vec::new);
    for &m in multiples {
        if let Some(p) = paths.as_mut() {
            let full = ucp_bracket_path(x, y, m)?;
            values.push(full[n]);
            p.push(full);
        } else {
            values.push(ucp_bracket_idx(x, y, m, n)?);
        }
    }
    Ok(BracketCurve {
        eps: multiples.iter().map(|&m| m as f64 * g.dt()).collect(),
        multiples: multiples.to_vec(),
        values,
        paths,
    })
}

fn check_sweep(multiples: &[usize]) -> Result<()> {
    if multiples.is_empty() {
        return Err(crate::Error::Empty("epsilon list"));
    }
    if multiples[0] == 0 || multiples.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("epsilon", "multiples must be positive and strictly increasing"));
    }
    Ok(())
}

/// Settings of the weak finite quadratic variation diagnostic.
#[derive(Debug, Clone, PartialEq)]
pub struct WeakQvConfig {
    pub multiples: Vec<usize>,
    /// The quantile level is `1 - delta`.
    pub delta: f64,
    pub slack: f64,
}

impl Default for WeakQvConfig {
    fn default() -> Self {
        Self { multiples: DEFAULT_EPS_MULTIPLES.to_vec(), delta: 0.05, slack: 2.0 }
    }
}

/// Tightness proxy for the laws of `[X,X]^ucp_eps(T)` over an epsilon sweep.
///
/// The verdict is a heuristic: consistent when the `(1 - delta)`-quantile at
/// every epsilon is at most `slack` times its value at the largest epsilon.
#[derive(Debug, Clone, PartialEq)]
pub struct WeakQvReport {
    pub eps: Vec<f64>,
    pub mean: Vec<f64>,
    pub quantile: Vec<f64>,
    /// Mean over paths of `sup_eps [X,X]^ucp_eps(T)`.
    pub per_path_sup_mean: f64,
    pub sup_mean: f64,
    pub sup_quantile: f64,
    pub delta: f64,
    pub slack: f64,
    pub verdict: Verdict,
}

impl WeakQvReport {
    pub fn tight_consistent(&self) -> bool {
        self.verdict.is_consistent()
    }
}

/// Per-path bracket values at the horizon; `out[i][e]` for path `i`, epsilon `e`.
pub fn horizon_brackets(x: &SamplePath, multiples: &[usize]) -> Result<Vec<f64>> {
    let n = x.grid().n_steps();
    multiples.iter().map(|&m| ucp_bracket_idx(x, x, m, n)).collect()
}

/// Report from precomputed per-path values (see [`horizon_brackets`]).
pub fn weak_qv_from_values(eps: Vec<f64>, per_path: &[Vec<f64>], cfg: &WeakQvConfig) -> Result<WeakQvReport> {
    if eps.len() < 2 {
        return Err(invalid("epsilon", "the diagnostic needs at least two epsilon values"));
    }
    if per_path.is_empty() {
        return Err(crate::Error::Empty("ensemble"));
    }
    if !(cfg.delta > 0.0 && cfg.delta < 1.0) || !(cfg.slack >= 1.0) {
        return Err(invalid("delta", "need 0 < delta < 1 and slack >= 1"));
    }
    let ne = eps.len();
    let mut mean = Vec::with_capacity(ne);
    let mut quantile = Vec::with_capacity(ne);
    for e in 0..ne {
        let col: Vec<f64> = per_path.iter().map(|r| r[e]).collect();
        mean.push(stats::mean(&col));
        quantile.push(stats::quantile(&col, 1.0 - cfg.delta));
    }
    let sups: Vec<f64> = per_path.iter().map(|r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect();
    let q_last = quantile[ne - 1];
    let ok = quantile.iter().all(|q| q.is_finite() && *q <= cfg.slack * q_last);
    Ok(WeakQvReport {
        per_path_sup_mean: stats::mean(&sups),
        sup_mean: mean.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        sup_quantile: quantile.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        eps,
        mean,
        quantile,
        delta: cfg.delta,
        slack: cfg.slack,
        verdict: Verdict::from_bool(ok),
    })
}

pub fn weak_qv_diagnostic(ensemble: &PathEnsemble, cfg: &WeakQvConfig) -> Result<WeakQvReport> {
    check_sweep(&cfg.multiples)?;
    let per_path =
        ensemble.paths.iter().map(|p| horizon_brackets(p, &cfg.multiples)).collect::<Result<Vec<_>>>()?;
    let dt = ensemble.grid.dt();
    weak_qv_from_values(cfg.multiples.iter().map(|&m| m as f64 * dt).collect(), &per_path, cfg)
}
