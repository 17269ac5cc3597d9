use dirichlet_lab::catalog;
use dirichlet_lab::csvio::{read_paths, write_paths};
use dirichlet_lab::{run_experiment, Config, RunOptions};
use dlab_core::kernel::SizeLaw;
use dlab_core::path::TimeGrid;
use dlab_core::simulate::gen_compound_poisson;

fn artifacts(dir: &std::path::Path) -> serde_json::Value {
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    m["artifacts"].clone()
}

fn small(id: &str, n_paths: usize) -> (Config, String) {
    let mut v: serde_json::Value = serde_json::from_str(catalog::bundled(id).unwrap()).unwrap();
    v["n_paths"] = n_paths.into();
    let text = v.to_string();
    (Config::from_json(&text).unwrap(), text)
}

#[test]
fn outputs_do_not_depend_on_worker_count() {
    for (id, n) in [("poisson_qv", 60), ("pdmp_generator", 120), ("convolution_qv", 40)] {
        let (cfg, text) = small(id, n);
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let ra = run_experiment(&cfg, &text, &RunOptions { out_dir: a.path().into(), workers: Some(1), seed_override: None }).unwrap();
        let rb = run_experiment(&cfg, &text, &RunOptions { out_dir: b.path().into(), workers: Some(4), seed_override: None }).unwrap();
        assert_eq!(ra.analyses, rb.analyses, "{id}");
        assert_eq!(artifacts(&ra.dir), artifacts(&rb.dir), "{id}");
    }
}

#[test]
fn seed_override_changes_the_run() {
    let (cfg, text) = small("poisson_qv", 30);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = run_experiment(&cfg, &text, &RunOptions { out_dir: a.path().into(), workers: None, seed_override: None }).unwrap();
    let rb = run_experiment(&cfg, &text, &RunOptions { out_dir: b.path().into(), workers: None, seed_override: Some(5) }).unwrap();
    assert_ne!(artifacts(&ra.dir)["paths.csv"], artifacts(&rb.dir)["paths.csv"]);
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(rb.dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["master_seed"], 5);
    assert_eq!(m["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn paths_round_trip_through_csv() {
    let g = TimeGrid::new(1.0, 200).unwrap();
    let e = gen_compound_poisson(g, 5, 9, 4.0, SizeLaw::Normal { mean: 0.0, sd: 1.0 }).unwrap();
    let mut buf = Vec::new();
    write_paths(&mut buf, &[3, 4, 5, 6, 7], &e.paths).unwrap();
    let (ids, back) = read_paths(buf.as_slice()).unwrap();
    assert_eq!(ids, [3, 4, 5, 6, 7]);
    for (p, q) in e.paths.iter().zip(&back) {
        assert_eq!(p.values(), q.values());
        assert_eq!(p.jumps(), q.jumps());
        assert_eq!(p.grid(), q.grid());
    }
}

#[test]
fn malformed_path_csv_is_rejected() {
    assert!(read_paths("run,t,value\n".as_bytes()).is_err());
    let off_grid = "run_id,t,value,is_jump,jump_size\n0,0,0,0,0\n0,0.3,1,0,0\n0,1,2,0,0\n";
    assert!(read_paths(off_grid.as_bytes()).is_err());
}
