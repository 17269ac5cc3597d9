//! Runs one experiment: simulate, analyse, write artifacts and a manifest.
//!
//! Exit policy: 0 when no analysis is inconsistent (inconclusive counts as
//! passing), 2 when any analysis is inconsistent, 1 on execution errors
//! (reported by the caller).

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use dlab_core::brackets::{self, WeakQvConfig, DEFAULT_EPS_MULTIPLES};
use dlab_core::characteristics::{b_via_cutoff, transform_b_htransform, CharTriplet};
use dlab_core::decompose::{chain_rule_check, default_dictionary, BandConfig};
use dlab_core::distdrift::{build_h, build_sigma, tg_stabilization, HTransform};
use dlab_core::func::SpaceFn;
use dlab_core::mtgcheck::{
    build_mv, diffusion_generator, homogeneous_to_inhomogeneous, martingale_test, summary, MtgTestConfig, MvEnsemble,
    OperatorSpec,
};
use dlab_core::path::PathEnsemble;
use dlab_core::pdmp::pdmp_generator;
use dlab_core::simulate::GeneratorSpec;
use dlab_core::{stats, Verdict};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::config::{test_fn, AnalysisCfg, Config, ExprSpace, Generator, OperatorCfg};
use crate::csvio;
use crate::error::{io_err, Context, LabResult};
use crate::parallel::{self, par_map};
use crate::svg::{line_chart, Series};

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub workers: Option<usize>,
    pub seed_override: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisOutcome {
    pub name: String,
    pub verdict: Verdict,
    pub summary: String,
    pub files: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub analyses: Vec<AnalysisOutcome>,
    pub verdict: Verdict,
    pub exit_code: i32,
}

pub fn exit_code(v: Verdict) -> i32 {
    match v {
        Verdict::Inconsistent => 2,
        _ => 0,
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// The simulated ensemble plus what some analyses need besides paths.
pub struct Simulated {
    pub ensemble: PathEnsemble,
    pub hits: Option<Vec<Vec<usize>>>,
    pub htransform: Option<HTransform>,
}

pub fn simulate(cfg: &Config, gen: &Generator, seed: u64, workers: Option<usize>) -> LabResult<Simulated> {
    let grid = cfg.grid()?;
    let n = cfg.n_paths;
    Ok(match gen {
        Generator::Path(spec) => Simulated {
            ensemble: parallel::ensemble(spec, grid, n, seed, workers).at("generator")?,
            hits: None,
            htransform: None,
        },
        Generator::Pdmp { spec, x0 } => {
            let e = parallel::pdmp_ensemble(spec, *x0, grid, n, seed, workers).at("generator")?;
            let hits = e.hits();
            Simulated { ensemble: e.into_path_ensemble().at("generator")?, hits: Some(hits), htransform: None }
        }
        Generator::Distdrift { spec, x0, interval, tol } => {
            let sigma = build_sigma(spec, *interval, *tol).at("generator")?;
            let ht = build_h(&sigma).at("generator")?;
            let e = parallel::distdrift_ensemble(spec, &ht, *x0, grid, n, seed, workers).at("generator")?;
            Simulated { ensemble: e, hits: None, htransform: Some(ht) }
        }
    })
}

struct Ctx<'a> {
    dir: &'a Path,
    plots: bool,
    workers: Option<usize>,
}

impl Ctx<'_> {
    fn file(&self, name: &str) -> LabResult<fs::File> {
        let p = self.dir.join(name);
        fs::File::create(&p).map_err(io_err(p))
    }

    fn write(&self, name: &str, text: &str) -> LabResult<()> {
        let p = self.dir.join(name);
        fs::write(&p, text).map_err(io_err(p))
    }
}

fn outcome(name: &str, verdict: Verdict, summary: String, files: Vec<String>) -> AnalysisOutcome {
    AnalysisOutcome { name: name.to_string(), verdict, summary, files }
}

fn mtg_operator(op: &OperatorCfg, gen: &Generator) -> OperatorSpec {
    match (op, gen) {
        (OperatorCfg::Pdmp {}, Generator::Pdmp { spec, .. }) => pdmp_generator(spec),
        (OperatorCfg::Diffusion { drift, vol }, _) => {
            homogeneous_to_inhomogeneous(diffusion_generator(*drift, *vol), true)
        }
        // excluded by validation
        (OperatorCfg::Pdmp {}, _) => OperatorSpec::zero(),
    }
}

fn run_analysis(
    idx: usize,
    a: &AnalysisCfg,
    gen: &Generator,
    sim: &Simulated,
    ctx: &Ctx<'_>,
) -> LabResult<AnalysisOutcome> {
    let e = &sim.ensemble;
    let grid = e.grid;
    let n = grid.n_steps();
    let dt = grid.dt();
    let at = format!("analyses[{idx}]");
    let stem = format!("{idx:02}_{}", a.name());
    match a {
        AnalysisCfg::Qv { eps_multiple, target, rel_tol } => {
            let m = *eps_multiple;
            let vals = par_map(ctx.workers, e.len(), |i| brackets::ucp_bracket_idx(&e.paths[i], &e.paths[i], m, n))
                .at(&at)?;
            let (mean, se) = (stats::mean(&vals), stats::std_error(&vals));
            let (verdict, tgt) = match target {
                Some(t) => (Verdict::from_band(mean - t, se, rel_tol * t.abs()), *t),
                None => (Verdict::Consistent, f64::NAN),
            };
            let name = format!("{stem}.csv");
            csvio::write_table(ctx.file(&name)?, &["epsilon", "mean", "se", "target"], &[vec![m as f64 * dt, mean, se, tgt]])?;
            let s = format!("mean [X,X]^ucp_eps(T) at eps={} is {mean:.5} (se {se:.5}), target {tgt}", m as f64 * dt);
            Ok(outcome(a.name(), verdict, s, vec![name]))
        }
        AnalysisCfg::WeakQv { multiples, delta, slack, expect_tight } => {
            let wc = WeakQvConfig {
                multiples: multiples.clone().unwrap_or_else(|| DEFAULT_EPS_MULTIPLES.to_vec()),
                delta: *delta,
                slack: *slack,
            };
            let per_path =
                par_map(ctx.workers, e.len(), |i| brackets::horizon_brackets(&e.paths[i], &wc.multiples)).at(&at)?;
            let eps = wc.multiples.iter().map(|&m| m as f64 * dt).collect();
            let r = brackets::weak_qv_from_values(eps, &per_path, &wc).at(&at)?;
            let mut files = vec![format!("{stem}.csv")];
            csvio::write_weak_qv(ctx.file(&files[0])?, &r)?;
            if ctx.plots {
                let name = format!("{stem}.svg");
                let series = [
                    Series { name: format!("q{:.0}", 100.0 * (1.0 - delta)), points: r.eps.iter().copied().zip(r.quantile.iter().copied()).collect() },
                    Series { name: "mean".into(), points: r.eps.iter().copied().zip(r.mean.iter().copied()).collect() },
                ];
                ctx.write(&name, &line_chart("[X,X]^ucp_eps(T) over eps", "eps", "bracket", &series))?;
                files.push(name);
            }
            let tight = r.tight_consistent();
            let s = format!("tight-consistent: {tight} (expected {expect_tight}), sup-mean {:.5}", r.sup_mean);
            Ok(outcome(a.name(), Verdict::from_bool(tight == *expect_tight), s, files))
        }
        AnalysisCfg::JumpSplit { eps_multiple, rel_tol, eps_factor, min_fraction } => {
            let m = *eps_multiple;
            let eps = m as f64 * dt;
            let rows = par_map(ctx.workers, e.len(), |i| {
                let p = &e.paths[i];
                let b = brackets::ucp_bracket_idx(p, p, m, n)?;
                let s = brackets::jump_square_sum_idx(p, n);
                let ok = (b - s).abs() < rel_tol * s + eps_factor * eps;
                Ok(vec![i as f64, b, s, f64::from(u8::from(ok))])
            })
            .at(&at)?;
            let frac = rows.iter().filter(|r| r[3] == 1.0).count() as f64 / rows.len() as f64;
            let name = format!("{stem}.csv");
            csvio::write_table(ctx.file(&name)?, &["path", "ucp_bracket", "jump_square_sum", "ok"], &rows)?;
            let s = format!("fraction of paths with |[X,X]^ucp - sum dX^2| within tolerance: {frac:.4} (need {min_fraction})");
            Ok(outcome(a.name(), Verdict::from_bool(frac >= *min_fraction), s, vec![name]))
        }
        AnalysisCfg::ChainRule { v, multiples, c } => {
            let v = test_fn(v, &format!("{at}.v"))?;
            let dict = default_dictionary(e).at(&at)?;
            let bc = BandConfig { multiples: multiples.clone().unwrap_or_else(|| BandConfig::default().multiples), c: *c };
            let r = chain_rule_check(e, &*v, &dict, &bc).at(&at)?;
            let name = format!("{stem}.csv");
            csvio::write_decomp(ctx.file(&name)?, &r)?;
            let worst = r.rows.iter().map(|r| r.value.abs() / r.band.max(f64::MIN_POSITIVE)).fold(0.0, f64::max);
            let s = format!("{} statistics, worst |value|/band {worst:.3}: {}", r.rows.len(), r.verdict);
            Ok(outcome(a.name(), r.verdict, s, vec![name]))
        }
        AnalysisCfg::Martingale { operator, test_fns, alpha } => {
            let op = mtg_operator(operator, gen);
            let x0 = gen.x0();
            let mut ms = Vec::new();
            for (i, t) in test_fns.iter().enumerate() {
                let v = test_fn(&t.v, &format!("{at}.test_fns[{i}].v"))?;
                let hits = sim.hits.as_deref();
                let paths = par_map(ctx.workers, e.len(), |k| {
                    build_mv(&op, &*v, &e.paths[k], hits.map(|h| h[k].as_slice()), x0)
                })
                .at(&at)?;
                ms.push(MvEnsemble { v_id: t.id.clone(), paths });
            }
            let mut mc = MtgTestConfig::defaults(n);
            mc.alpha = *alpha;
            let r = martingale_test(&ms, &e.paths, &mc).at(&at)?;
            let name = format!("{stem}.csv");
            csvio::write_mtg(ctx.file(&name)?, &r)?;
            Ok(outcome(a.name(), r.verdict(), summary(&r), vec![name]))
        }
        AnalysisCfg::Htransform { h, path, n0, tol, max_levels } => {
            let Generator::Path(GeneratorSpec::JumpDiffusion(spec)) = gen else {
                unreachable!("validated")
            };
            let x = e.paths.get(*path).ok_or_else(|| crate::error::config_err(format!("{at}.path"), "index beyond n_paths"))?;
            let hf: Arc<dyn SpaceFn + Send + Sync> = Arc::new(ExprSpace::parse(h, &format!("{at}.h"))?);
            let tr = CharTriplet::from_jump_diffusion(spec, x).at(&at)?;
            let direct = transform_b_htransform(&tr, hf.clone(), x).at(&at)?;
            let route = b_via_cutoff(&tr, hf, x, *n0, *tol, *max_levels).at(&at)?;
            let (bd, br) = (direct.b.values(), route.b.values());
            let sup = bd.iter().zip(br).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let bound = 10.0 * dt + 1e-6;
            let rows: Vec<Vec<f64>> = (0..=n).map(|j| vec![grid.time(j), bd[j], br[j]]).collect();
            let mut files = vec![format!("{stem}.csv")];
            csvio::write_table(ctx.file(&files[0])?, &["t", "b_direct", "b_cutoff"], &rows)?;
            if ctx.plots {
                let name = format!("{stem}.svg");
                let ts = grid.times();
                let series = [
                    Series { name: "direct".into(), points: ts.iter().copied().zip(bd.iter().copied()).collect() },
                    Series { name: "cutoff route".into(), points: ts.iter().copied().zip(br.iter().copied()).collect() },
                ];
                ctx.write(&name, &line_chart("B of h(X), two routes", "t", "B", &series))?;
                files.push(name);
            }
            let s = format!("sup |B_direct - B_cutoff| = {sup:.3e} (bound {bound:.3e}), levels {:?}", route.levels);
            Ok(outcome(a.name(), Verdict::from_bool(sup < bound), s, files))
        }
        AnalysisCfg::DistdriftCheck { levels, tol } => {
            let (Generator::Distdrift { spec, .. }, Some(ht)) = (gen, sim.htransform.as_ref()) else {
                unreachable!("validated")
            };
            let table = format!("{stem}_sigma.csv");
            csvio::write_sigma_table(ctx.file(&table)?, ht)?;
            let st = tg_stabilization(spec, ht, e, levels, *tol).at(&at)?;
            let name = format!("{stem}.csv");
            let rows: Vec<Vec<f64>> =
                st.levels.iter().skip(1).zip(&st.distances).map(|(l, d)| vec![*l, *d]).collect();
            csvio::write_table(ctx.file(&name)?, &["level", "sup_distance_to_previous"], &rows)?;
            let s = format!(
                "drift integral stabilized: {} (distances {:?}, 5*tol {}), residual gap {:.4}",
                st.stabilized,
                st.distances,
                5.0 * tol,
                st.residual_gap
            );
            Ok(outcome(a.name(), Verdict::from_bool(st.stabilized), s, vec![table, name]))
        }
    }
}

/// Runs a validated config; `config_text` is hashed into the manifest.
pub fn run_experiment(cfg: &Config, config_text: &str, opts: &RunOptions) -> LabResult<RunOutcome> {
    let start = Instant::now();
    cfg.validate()?;
    let gen = cfg.generator.build()?;
    let seed = opts.seed_override.unwrap_or(cfg.master_seed);
    let dir = opts.out_dir.join(&cfg.id);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let sim = simulate(cfg, &gen, seed, opts.workers)?;
    let ctx = Ctx { dir: &dir, plots: cfg.plots, workers: opts.workers };
    let mut analyses = Vec::new();
    for (i, a) in cfg.analyses.iter().enumerate() {
        analyses.push(run_analysis(i, a, &gen, &sim, &ctx)?);
    }
    let e = &sim.ensemble;
    let mut extra = Vec::new();
    if cfg.export_paths > 0 {
        let k = cfg.export_paths.min(e.len());
        let ids: Vec<u64> = (0..k as u64).collect();
        csvio::write_paths(ctx.file("paths.csv")?, &ids, &e.paths[..k])?;
        extra.push("paths.csv".to_string());
        if cfg.plots {
            let ts = e.grid.times();
            let series: Vec<Series> = e.paths[..k]
                .iter()
                .enumerate()
                .map(|(i, p)| Series { name: format!("path {i}"), points: ts.iter().copied().zip(p.values().iter().copied()).collect() })
                .collect();
            ctx.write("paths.svg", &line_chart(&cfg.id, "t", "X", &series))?;
            extra.push("paths.svg".to_string());
        }
    }
    let verdict = Verdict::all(analyses.iter().map(|a| a.verdict));
    let code = exit_code(verdict);

    let mut report = format!("experiment {} ({}), generator {}, {} paths, seed {seed}\n", cfg.id, cfg.description, gen.name(), e.len());
    for a in &analyses {
        report.push_str(&format!("[{}] {}: {}\n", a.verdict, a.name, a.summary));
    }
    report.push_str(&format!("overall: {verdict} (exit {code})\n"));
    if cfg.analyses.iter().any(|a| matches!(a, AnalysisCfg::Martingale { .. })) {
        report.push_str(dlab_core::mtgcheck::CAVEAT);
        report.push('\n');
    }
    if e.meta.merged_jumps > 0 {
        report.push_str(&format!("note: {} sub-step events merged onto occupied grid points\n", e.meta.merged_jumps));
    }
    ctx.write("report.txt", &report)?;

    let mut artifacts = serde_json::Map::new();
    let mut names: Vec<String> = analyses.iter().flat_map(|a| a.files.iter().cloned()).chain(extra).collect();
    names.push("report.txt".into());
    for f in &names {
        let p = dir.join(f);
        let bytes = fs::read(&p).map_err(io_err(p))?;
        artifacts.insert(f.clone(), json!(sha256_hex(&bytes)));
    }
    let seed_bytes: Vec<u8> = e.seeds.iter().flat_map(|s| s.to_le_bytes()).collect();
    let manifest = json!({
        "schema_version": crate::config::SCHEMA_VERSION,
        "id": cfg.id,
        "config_sha256": sha256_hex(config_text.as_bytes()),
        "master_seed": seed,
        "seed_rule": "seed_i = splitmix64(master_seed + 0x9E3779B97F4A7C15 * (i + 1)), ChaCha8 per path",
        "n_paths": e.len(),
        "seeds_sha256": sha256_hex(&seed_bytes),
        "first_seeds": e.seeds.iter().take(4).collect::<Vec<_>>(),
        "grid": { "horizon": e.grid.horizon(), "n_steps": e.grid.n_steps() },
        "generator": gen.name(),
        "merged_jumps": e.meta.merged_jumps,
        "versions": { "dirichlet_lab": env!("CARGO_PKG_VERSION"), "dlab_core": dlab_core::VERSION },
        "workers": opts.workers,
        "wall_time_s": start.elapsed().as_secs_f64(),
        "analyses": analyses.iter().map(|a| json!({
            "name": a.name, "verdict": a.verdict.as_str(), "summary": a.summary, "files": a.files,
        })).collect::<Vec<_>>(),
        "verdict": verdict.as_str(),
        "exit_code": code,
        "artifacts": artifacts,
    });
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    ctx.write("manifest.json", &text)?;
    Ok(RunOutcome { dir, analyses, verdict, exit_code: code })
}
