//! Path-parallel simulation. Path `i` depends only on its own seed, and
//! results are collected in seed order, so outputs do not depend on the
//! worker count.

use dlab_core::distdrift::{self, DriftSpec, HTransform};
use dlab_core::path::{PathEnsemble, TimeGrid};
use dlab_core::pdmp::{self, PdmpEnsemble, PdmpSpec};
use dlab_core::path::EnsembleMeta;
use dlab_core::rng::path_seeds;
use dlab_core::simulate::{assemble, GeneratorSpec};
use dlab_core::Error;
use rayon::prelude::*;

fn pool(workers: Option<usize>) -> rayon::ThreadPool {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        b = b.num_threads(w.max(1));
    }
    b.build().expect("thread pool")
}

/// Maps `f` over `0..n` on `workers` threads, keeping index order.
pub fn par_map<T, F>(workers: Option<usize>, n: usize, f: F) -> Result<Vec<T>, Error>
where
    T: Send,
    F: Fn(usize) -> Result<T, Error> + Sync + Send,
{
    pool(workers).install(|| (0..n).into_par_iter().map(f).collect())
}

pub fn ensemble(
    spec: &GeneratorSpec,
    grid: TimeGrid,
    n_paths: usize,
    master_seed: u64,
    workers: Option<usize>,
) -> Result<PathEnsemble, Error> {
    spec.validate()?;
    let seeds = path_seeds(master_seed, n_paths);
    let sims = par_map(workers, n_paths, |i| spec.simulate_path(&grid, seeds[i]))?;
    assemble(spec, grid, master_seed, seeds, sims)
}

pub fn pdmp_ensemble(
    spec: &PdmpSpec,
    x0: f64,
    grid: TimeGrid,
    n_paths: usize,
    master_seed: u64,
    workers: Option<usize>,
) -> Result<PdmpEnsemble, Error> {
    spec.validate()?;
    let seeds = path_seeds(master_seed, n_paths);
    let sims = par_map(workers, n_paths, |i| pdmp::simulate_pdmp_path(spec, x0, &grid, seeds[i]))?;
    let merged = sims.iter().map(|s| s.2).sum();
    let (paths, truth) = sims.into_iter().map(|(p, t, _)| (p, t)).unzip();
    Ok(PdmpEnsemble {
        grid,
        paths,
        seeds,
        truth,
        meta: EnsembleMeta { master_seed, merged_jumps: merged, generator: "pdmp" },
    })
}

pub fn distdrift_ensemble(
    spec: &DriftSpec,
    ht: &HTransform,
    x0: f64,
    grid: TimeGrid,
    n_paths: usize,
    master_seed: u64,
    workers: Option<usize>,
) -> Result<PathEnsemble, Error> {
    spec.validate()?;
    let seeds = path_seeds(master_seed, n_paths);
    let sims = par_map(workers, n_paths, |i| distdrift::simulate_distdrift_path(spec, ht, x0, &grid, seeds[i]))?;
    distdrift::assemble_distdrift(spec, grid, master_seed, seeds, sims)
}
