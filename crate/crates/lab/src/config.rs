//! Experiment configuration, schema version 1.
//!
//! A config names one generator and a list of analyses run on its ensemble.
//! Coefficients are expression strings in the core expression language
//! (variables `t`, `x`). Unknown fields are rejected.

use std::sync::Arc;

use dlab_core::distdrift::{DriftSpec, Interval, Mollifier};
use dlab_core::expr::{Expr, Var};
use dlab_core::func::{SpaceFn, TestFn};
use dlab_core::kernel::{JumpModel, SizeKernel, SizeLaw};
use dlab_core::path::TimeGrid;
use dlab_core::pdmp::PdmpSpec;
use dlab_core::simulate::{GeneratorSpec, JumpDiffusionSpec};
use dlab_core::truncation::TruncationFn;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Context, LabError, LabResult};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub schema_version: u32,
    pub id: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub expected_runtime: String,
    pub master_seed: u64,
    pub grid: GridCfg,
    pub n_paths: usize,
    pub generator: GeneratorCfg,
    #[serde(default)]
    pub analyses: Vec<AnalysisCfg>,
    #[serde(default)]
    pub plots: bool,
    /// Number of leading paths written to `paths.csv`.
    #[serde(default)]
    pub export_paths: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridCfg {
    pub horizon: f64,
    pub n_steps: usize,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeneratorCfg {
    Bm {
        #[serde(default)]
        x0: f64,
        #[serde(default = "one")]
        vol: f64,
    },
    CompoundPoisson {
        #[serde(default)]
        x0: f64,
        rate: f64,
        sizes: LawCfg,
    },
    JumpDiffusion {
        #[serde(default)]
        x0: f64,
        drift: String,
        diffusion: String,
        #[serde(default)]
        jumps: Option<JumpsCfg>,
        #[serde(default)]
        truncation: Option<TruncCfg>,
    },
    Convolution {},
    Pdmp {
        x0: f64,
        flow: String,
        hazard: String,
        hazard_bound: f64,
        #[serde(default)]
        lipschitz: f64,
        q: QCfg,
    },
    Distdrift {
        #[serde(default)]
        x0: f64,
        beta: String,
        sigma: String,
        sigma_floor: f64,
        schedule: Vec<f64>,
        #[serde(default)]
        mollifier: MollifierCfg,
        radius: f64,
        cells: usize,
        tol: f64,
        #[serde(default)]
        jumps: Option<JumpsCfg>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MollifierCfg {
    #[default]
    Gaussian,
    Bump,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum LawCfg {
    PointMass { value: f64 },
    Atoms { values: Vec<f64>, probs: Vec<f64> },
    Uniform { lo: f64, hi: f64 },
    Normal { mean: f64, sd: f64 },
    Cauchy { loc: f64, scale: f64 },
    Beta { a: f64, b: f64 },
}

impl LawCfg {
    pub fn build(&self, path: &str) -> LabResult<SizeLaw> {
        let law = match self {
            LawCfg::PointMass { value } => SizeLaw::PointMass(*value),
            LawCfg::Atoms { values, probs } => SizeLaw::Atoms { values: values.clone(), probs: probs.clone() },
            LawCfg::Uniform { lo, hi } => SizeLaw::Uniform { lo: *lo, hi: *hi },
            LawCfg::Normal { mean, sd } => SizeLaw::Normal { mean: *mean, sd: *sd },
            LawCfg::Cauchy { loc, scale } => SizeLaw::Cauchy { loc: *loc, scale: *scale },
            LawCfg::Beta { a, b } => SizeLaw::Beta { a: *a, b: *b },
        };
        law.validate().at(path)?;
        Ok(law)
    }
}

/// PDMP post-jump law: a named family string (`"uniform"`, `"uniform(a,b)"`,
/// `"point_mass(v)"`, `"beta(a,b)"`, `"reflect"`) or a [`LawCfg`] object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum QCfg {
    Named(String),
    Law(LawCfg),
}

fn parse_call(s: &str) -> Option<(&str, Vec<f64>)> {
    let s = s.trim();
    match s.find('(') {
        None => Some((s, Vec::new())),
        Some(i) => {
            let inner = s[i + 1..].strip_suffix(')')?;
            let args = inner.split(',').map(|a| a.trim().parse::<f64>().ok()).collect::<Option<Vec<_>>>()?;
            Some((s[..i].trim(), args))
        }
    }
}

impl QCfg {
    pub fn build(&self, path: &str) -> LabResult<SizeKernel> {
        let law = match self {
            QCfg::Law(l) => l.build(path)?,
            QCfg::Named(s) => {
                let bad = || config_err(path, format!("unknown post-jump family `{s}`"));
                let (name, args) = parse_call(s).ok_or_else(bad)?;
                match (name, args.as_slice()) {
                    ("reflect", []) => return Ok(SizeKernel::Reflect),
                    ("uniform", []) => SizeLaw::Uniform { lo: 0.0, hi: 1.0 },
                    ("uniform", [a, b]) => SizeLaw::Uniform { lo: *a, hi: *b },
                    ("point_mass", [v]) => SizeLaw::PointMass(*v),
                    ("beta", [a, b]) => SizeLaw::Beta { a: *a, b: *b },
                    _ => return Err(bad()),
                }
            }
        };
        Ok(SizeKernel::PostJump(law))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpsCfg {
    pub intensity: String,
    pub bound: f64,
    pub sizes: LawCfg,
}

impl JumpsCfg {
    fn build(&self, path: &str) -> LabResult<JumpModel> {
        let lam = expr(&self.intensity, &format!("{path}.intensity"))?;
        let law = self.sizes.build(&format!("{path}.sizes"))?;
        JumpModel::new(lam.into_coef(), self.bound, SizeKernel::Size(law)).at(path)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncCfg {
    pub identity_radius: f64,
    pub support_radius: f64,
}

impl TruncCfg {
    fn build(&self, path: &str) -> LabResult<TruncationFn> {
        TruncationFn::from_radii(self.identity_radius, self.support_radius).at(path)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestFnCfg {
    pub id: String,
    pub v: String,
}

fn default_qv_multiple() -> usize {
    10
}
fn default_rel_tol() -> f64 {
    0.02
}
fn default_split_multiple() -> usize {
    5
}
fn default_split_rel() -> f64 {
    0.05
}
fn default_split_abs() -> f64 {
    10.0
}
fn default_fraction() -> f64 {
    0.95
}
fn default_alpha() -> f64 {
    0.05
}
fn default_true() -> bool {
    true
}
fn default_delta() -> f64 {
    0.05
}
fn default_slack() -> f64 {
    2.0
}
fn default_band_c() -> f64 {
    10.0
}
fn default_n0() -> f64 {
    1.0
}
fn default_route_tol() -> f64 {
    1e-9
}
fn default_levels() -> usize {
    12
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AnalysisCfg {
    /// Ensemble mean of `[X,X]^ucp_eps(T)` against an expected value.
    Qv {
        #[serde(default = "default_qv_multiple")]
        eps_multiple: usize,
        #[serde(default)]
        target: Option<f64>,
        #[serde(default = "default_rel_tol")]
        rel_tol: f64,
    },
    /// Tightness of the bracket over an epsilon sweep.
    WeakQv {
        #[serde(default)]
        multiples: Option<Vec<usize>>,
        #[serde(default = "default_delta")]
        delta: f64,
        #[serde(default = "default_slack")]
        slack: f64,
        #[serde(default = "default_true")]
        expect_tight: bool,
    },
    /// Per-path `[X,X]^ucp_eps` against the sum of squared jumps.
    JumpSplit {
        #[serde(default = "default_split_multiple")]
        eps_multiple: usize,
        #[serde(default = "default_split_rel")]
        rel_tol: f64,
        #[serde(default = "default_split_abs")]
        eps_factor: f64,
        #[serde(default = "default_fraction")]
        min_fraction: f64,
    },
    /// `Y^c = int v_x dX^c` tested against the default dictionary.
    ChainRule {
        v: String,
        #[serde(default)]
        multiples: Option<Vec<usize>>,
        #[serde(default = "default_band_c")]
        c: f64,
    },
    /// Martingale test of `M^v` for a generator.
    Martingale {
        operator: OperatorCfg,
        test_fns: Vec<TestFnCfg>,
        #[serde(default = "default_alpha")]
        alpha: f64,
    },
    /// Cross-method check of the h-transformed drift characteristic on one path.
    Htransform {
        h: String,
        #[serde(default)]
        path: usize,
        #[serde(default = "default_n0")]
        n0: f64,
        #[serde(default = "default_route_tol")]
        tol: f64,
        #[serde(default = "default_levels")]
        max_levels: usize,
    },
    /// Sigma/h tables and stabilization of the drift term.
    DistdriftCheck { levels: Vec<f64>, tol: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorCfg {
    /// `dv/dt + b v_x + 1/2 sigma^2 v_xx` with constant coefficients.
    Diffusion { drift: f64, vol: f64 },
    /// `(Lambda_1, ds)` and `(Lambda_2, dp*)` of the configured PDMP.
    Pdmp {},
}

impl AnalysisCfg {
    pub fn name(&self) -> &'static str {
        match self {
            AnalysisCfg::Qv { .. } => "qv",
            AnalysisCfg::WeakQv { .. } => "weak_qv",
            AnalysisCfg::JumpSplit { .. } => "jump_split",
            AnalysisCfg::ChainRule { .. } => "chain_rule",
            AnalysisCfg::Martingale { .. } => "martingale",
            AnalysisCfg::Htransform { .. } => "htransform",
            AnalysisCfg::DistdriftCheck { .. } => "distdrift_check",
        }
    }
}

pub fn expr(src: &str, path: &str) -> LabResult<Expr> {
    Expr::parse(src).map_err(|e| config_err(path, e.to_string()))
}

fn state_fn(src: &str, path: &str) -> LabResult<Arc<dyn Fn(f64) -> f64 + Send + Sync>> {
    let e = expr(src, path)?;
    if e.depends_on(Var::T) {
        return Err(config_err(path, "must not depend on t"));
    }
    Ok(Arc::new(move |x| e.eval(0.0, x)))
}

pub fn test_fn(src: &str, path: &str) -> LabResult<Arc<dyn TestFn>> {
    Ok(Arc::new(expr(src, path)?.into_test_fn()))
}

/// A space function with symbolic derivatives.
pub struct ExprSpace {
    v: Expr,
    d1: Expr,
    d2: Expr,
}

impl ExprSpace {
    pub fn parse(src: &str, path: &str) -> LabResult<Self> {
        let v = expr(src, path)?;
        if v.depends_on(Var::T) {
            return Err(config_err(path, "must not depend on t"));
        }
        let d1 = v.derivative(Var::X);
        let d2 = d1.derivative(Var::X);
        Ok(Self { v, d1, d2 })
    }
}

impl SpaceFn for ExprSpace {
    fn value(&self, x: f64) -> f64 {
        self.v.eval(0.0, x)
    }
    fn d1(&self, x: f64) -> f64 {
        self.d1.eval(0.0, x)
    }
    fn d2(&self, x: f64) -> f64 {
        self.d2.eval(0.0, x)
    }
}

/// The simulator a config resolves to.
#[derive(Clone)]
pub enum Generator {
    Path(GeneratorSpec),
    Pdmp { spec: PdmpSpec, x0: f64 },
    Distdrift { spec: DriftSpec, x0: f64, interval: Interval, tol: f64 },
}

impl Generator {
    pub fn name(&self) -> &'static str {
        match self {
            Generator::Path(g) => g.name(),
            Generator::Pdmp { .. } => "pdmp",
            Generator::Distdrift { .. } => "distdrift",
        }
    }

    pub fn x0(&self) -> f64 {
        match self {
            Generator::Path(GeneratorSpec::Bm { x0, .. }) | Generator::Path(GeneratorSpec::CompoundPoisson { x0, .. }) => {
                *x0
            }
            Generator::Path(GeneratorSpec::JumpDiffusion(s)) => s.x0,
            Generator::Path(GeneratorSpec::Convolution) => 0.0,
            Generator::Pdmp { x0, .. } | Generator::Distdrift { x0, .. } => *x0,
        }
    }
}

impl GeneratorCfg {
    pub fn build(&self) -> LabResult<Generator> {
        let p = "generator";
        let at = |f: &str| format!("{p}.{f}");
        let g = match self {
            GeneratorCfg::Bm { x0, vol } => Generator::Path(GeneratorSpec::Bm { x0: *x0, vol: *vol }),
            GeneratorCfg::CompoundPoisson { x0, rate, sizes } => Generator::Path(GeneratorSpec::CompoundPoisson {
                x0: *x0,
                rate: *rate,
                sizes: sizes.build(&at("sizes"))?,
            }),
            GeneratorCfg::JumpDiffusion { x0, drift, diffusion, jumps, truncation } => {
                let mut spec = JumpDiffusionSpec {
                    x0: *x0,
                    drift: expr(drift, &at("drift"))?.into_coef(),
                    diffusion: expr(diffusion, &at("diffusion"))?.into_coef(),
                    jumps: None,
                    truncation: TruncationFn::Clamp { radius: 1.0 },
                };
                if let Some(j) = jumps {
                    spec.jumps = Some(j.build(&at("jumps"))?);
                }
                if let Some(t) = truncation {
                    spec.truncation = t.build(&at("truncation"))?;
                }
                Generator::Path(GeneratorSpec::JumpDiffusion(spec))
            }
            GeneratorCfg::Convolution {} => Generator::Path(GeneratorSpec::Convolution),
            GeneratorCfg::Pdmp { x0, flow, hazard, hazard_bound, lipschitz, q } => {
                if !(0.0..=1.0).contains(x0) {
                    return Err(config_err(at("x0"), "must lie in [0, 1]"));
                }
                let spec = PdmpSpec::new(
                    state_fn(flow, &at("flow"))?,
                    state_fn(hazard, &at("hazard"))?,
                    *hazard_bound,
                    *lipschitz,
                    q.build(&at("q"))?,
                )
                .at(p)?;
                Generator::Pdmp { spec, x0: *x0 }
            }
            GeneratorCfg::Distdrift { x0, beta, sigma, sigma_floor, schedule, mollifier, radius, cells, tol, jumps } => {
                let mut spec =
                    DriftSpec::new(state_fn(beta, &at("beta"))?, state_fn(sigma, &at("sigma"))?, *sigma_floor, schedule.clone())
                        .at(p)?
                        .with_mollifier(match mollifier {
                            MollifierCfg::Gaussian => Mollifier::Gaussian,
                            MollifierCfg::Bump => Mollifier::Bump,
                        });
                if let Some(j) = jumps {
                    spec = spec.with_jumps(j.build(&at("jumps"))?);
                }
                let interval = Interval::new(*radius, *cells).at(p)?;
                if !(*tol > 0.0) {
                    return Err(config_err(at("tol"), "must be positive"));
                }
                if !(x0.abs() < *radius) {
                    return Err(config_err(at("x0"), "must lie inside the working interval"));
                }
                Generator::Distdrift { spec, x0: *x0, interval, tol: *tol }
            }
        };
        if let Generator::Path(spec) = &g {
            spec.validate().at(p)?;
        }
        Ok(g)
    }
}

impl Config {
    /// Parses and validates; JSON errors carry line and column.
    pub fn from_json(text: &str) -> LabResult<Config> {
        let cfg: Config = serde_json::from_str(text).map_err(|e| LabError::Parse {
            line: e.line(),
            column: e.column(),
            msg: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn grid(&self) -> LabResult<TimeGrid> {
        TimeGrid::new(self.grid.horizon, self.grid.n_steps).at("grid")
    }

    pub fn validate(&self) -> LabResult<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(config_err("schema_version", format!("expected {SCHEMA_VERSION}, found {}", self.schema_version)));
        }
        if self.id.is_empty() || !self.id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
            return Err(config_err("id", "must be a non-empty [A-Za-z0-9_-] identifier"));
        }
        let grid = self.grid()?;
        if self.n_paths == 0 {
            return Err(config_err("n_paths", "must be at least 1"));
        }
        let gen = self.generator.build()?;
        for (i, a) in self.analyses.iter().enumerate() {
            a.validate(&format!("analyses[{i}]"), &gen, &grid, self.n_paths)?;
        }
        Ok(())
    }
}

impl AnalysisCfg {
    fn validate(&self, path: &str, gen: &Generator, grid: &TimeGrid, n_paths: usize) -> LabResult<()> {
        let at = |f: &str| format!("{path}.{f}");
        let check_m = |m: usize, f: &str| {
            if m == 0 || m > grid.n_steps() {
                Err(config_err(at(f), "epsilon multiple must lie in 1..=n_steps"))
            } else {
                Ok(())
            }
        };
        match self {
            AnalysisCfg::Qv { eps_multiple, rel_tol, .. } => {
                check_m(*eps_multiple, "eps_multiple")?;
                if !(*rel_tol >= 0.0) {
                    return Err(config_err(at("rel_tol"), "must be nonnegative"));
                }
            }
            AnalysisCfg::WeakQv { multiples, delta, .. } => {
                for m in multiples.iter().flatten() {
                    check_m(*m, "multiples")?;
                }
                if !(*delta > 0.0 && *delta < 1.0) {
                    return Err(config_err(at("delta"), "must lie in ]0, 1["));
                }
            }
            AnalysisCfg::JumpSplit { eps_multiple, min_fraction, .. } => {
                check_m(*eps_multiple, "eps_multiple")?;
                if !(0.0..=1.0).contains(min_fraction) {
                    return Err(config_err(at("min_fraction"), "must lie in [0, 1]"));
                }
            }
            AnalysisCfg::ChainRule { v, multiples, .. } => {
                expr(v, &at("v"))?;
                for m in multiples.iter().flatten() {
                    check_m(*m, "multiples")?;
                }
                if !matches!(gen, Generator::Path(GeneratorSpec::JumpDiffusion(_)) | Generator::Path(GeneratorSpec::Bm { .. }))
                {
                    return Err(config_err(at("kind"), "chain_rule needs a bm or jump_diffusion generator"));
                }
            }
            AnalysisCfg::Martingale { operator, test_fns, alpha } => {
                if test_fns.is_empty() {
                    return Err(config_err(at("test_fns"), "must not be empty"));
                }
                for (i, t) in test_fns.iter().enumerate() {
                    expr(&t.v, &at(&format!("test_fns[{i}].v")))?;
                }
                if !(*alpha > 0.0 && *alpha < 1.0) {
                    return Err(config_err(at("alpha"), "must lie in ]0, 1["));
                }
                if n_paths < 100 {
                    return Err(config_err("n_paths", "the martingale test needs at least 100 paths"));
                }
                if matches!(operator, OperatorCfg::Pdmp {}) && !matches!(gen, Generator::Pdmp { .. }) {
                    return Err(config_err(at("operator"), "pdmp operator needs a pdmp generator"));
                }
            }
            AnalysisCfg::Htransform { h, .. } => {
                ExprSpace::parse(h, &at("h"))?;
                if !matches!(gen, Generator::Path(GeneratorSpec::JumpDiffusion(_))) {
                    return Err(config_err(at("kind"), "htransform needs a jump_diffusion generator"));
                }
            }
            AnalysisCfg::DistdriftCheck { levels, tol } => {
                if !matches!(gen, Generator::Distdrift { .. }) {
                    return Err(config_err(at("kind"), "distdrift_check needs a distdrift generator"));
                }
                if levels.len() < 2 {
                    return Err(config_err(at("levels"), "needs at least 2 cutoff levels"));
                }
                if !(*tol > 0.0) {
                    return Err(config_err(at("tol"), "must be positive"));
                }
            }
        }
        Ok(())
    }
}
