//! Cross-module checks on seeded ensembles.

use dlab_core::brackets::{continuous_bracket, jump_square_sum, ucp_bracket_idx};
use dlab_core::characteristics::{change_truncation, CharTriplet};
use dlab_core::func::{FnTest, TestFn};
use dlab_core::kernel::{JumpModel, SizeLaw};
use dlab_core::mtgcheck::{build_mv, diffusion_generator, homogeneous_to_inhomogeneous};
use dlab_core::path::{SamplePath, TimeGrid};
use dlab_core::simulate::{gen_jump_diffusion, seeded_ensemble, GeneratorSpec, JumpDiffusionSpec};
use dlab_core::stats;
use dlab_core::truncation::TruncationFn;
use proptest::prelude::*;

fn grid(n: usize) -> TimeGrid {
    TimeGrid::new(1.0, n).unwrap()
}

fn jd_spec() -> JumpDiffusionSpec {
    JumpDiffusionSpec::constant(0.0, 0.2, 1.0)
        .with_jumps(JumpModel::constant(1.5, SizeLaw::Normal { mean: 0.0, sd: 0.8 }).unwrap())
}

#[test]
fn path_i_does_not_depend_on_ensemble_size() {
    let spec = GeneratorSpec::JumpDiffusion(jd_spec());
    let small = seeded_ensemble(&spec, grid(100), 5, 42).unwrap();
    let big = seeded_ensemble(&spec, grid(100), 12, 42).unwrap();
    for (a, b) in small.paths.iter().zip(&big.paths) {
        assert_eq!(a.values(), b.values());
        assert_eq!(a.jumps(), b.jumps());
    }
    assert_eq!(small.seeds[..], big.seeds[..5]);
}

#[test]
fn jump_diffusion_bracket_splits() {
    // [X,X]_1 = sigma^2 + sum dX^2 path by path
    let g = grid(4000);
    let e = gen_jump_diffusion(jd_spec(), g, 200, 7).unwrap();
    let m = 20;
    let eps = m as f64 * g.dt();
    let gaps: Vec<f64> = e
        .paths
        .iter()
        .map(|p| ucp_bracket_idx(p, p, m, g.n_steps()).unwrap() - jump_square_sum(p, 1.0).unwrap() - 1.0)
        .collect();
    assert!(stats::mean(&gaps).abs() < 3.0 * stats::std_error(&gaps) + 10.0 * eps);
    let cont: Vec<f64> = e.paths.iter().map(|p| continuous_bracket(p, eps, 1.0).unwrap()).collect();
    assert!((stats::mean(&cont) - 1.0).abs() < 3.0 * stats::std_error(&cont) + 10.0 * eps);
}

#[test]
fn ground_truth_rebuilds_the_path() {
    // X = x0 + int b ds + X^c + sum of jumps, exactly on the grid
    let g = grid(300);
    let e = gen_jump_diffusion(jd_spec(), g, 20, 8).unwrap();
    for (i, p) in e.paths.iter().enumerate() {
        let xc = e.truth(i).unwrap().continuous_martingale.as_ref().unwrap();
        let mut jumps = 0.0;
        for j in 0..=g.n_steps() {
            jumps += p.jump_at(j);
            let rebuilt = 0.2 * g.time(j) + xc.values()[j] + jumps;
            assert!((p.values()[j] - rebuilt).abs() < 1e-10);
        }
    }
}

#[test]
fn space_time_harmonic_v_gives_an_exact_martingale() {
    // v = exp(x - t/2) solves d_t v + v_xx / 2 = 0, so M^v = v(t, W_t) - 1
    let g = grid(50);
    let e = gen_jump_diffusion(JumpDiffusionSpec::constant(0.0, 0.0, 1.0), g, 1, 3).unwrap();
    let op = homogeneous_to_inhomogeneous(diffusion_generator(0.0, 1.0), true);
    let v = FnTest::full(|t, x| (x - t / 2.0).exp(), |t, x| -0.5 * (x - t / 2.0).exp(), |t, x| (x - t / 2.0).exp(), |t, x| (x - t / 2.0).exp());
    let m = build_mv(&op, &v, &e.paths[0], None, 0.0).unwrap();
    for (j, mv) in m.values().iter().enumerate() {
        let direct = v.value(g.time(j), e.paths[0].values()[j]) - 1.0;
        assert!((mv - direct).abs() < 1e-12);
    }
}

fn triplet(law: SizeLaw, k: TruncationFn) -> CharTriplet {
    let spec = JumpDiffusionSpec {
        x0: 0.0,
        drift: dlab_core::func::constant(0.3),
        diffusion: dlab_core::func::constant(0.5),
        jumps: Some(JumpModel::constant(2.0, law).unwrap()),
        truncation: k,
    };
    CharTriplet::from_jump_diffusion(&spec, &SamplePath::constant(grid(20), 0.0)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn truncation_change_round_trips(r1 in 0.2f64..2.0, r2 in 0.2f64..2.0, w in 0.1f64..1.0, mean in -1.0f64..1.0) {
        let k1 = TruncationFn::indicator(r1).unwrap();
        let k2 = TruncationFn::ramp(r2, r2 + w).unwrap();
        let tr = triplet(SizeLaw::Normal { mean, sd: 1.0 }, k1);
        let back = change_truncation(&change_truncation(&tr, k2).unwrap(), k1).unwrap();
        for (a, b) in tr.b.values().iter().zip(back.b.values()) {
            prop_assert!((a - b).abs() < 1e-10);
        }
        prop_assert_eq!(back.c.values(), tr.c.values());
    }

    #[test]
    fn brackets_scale_quadratically(a in -3.0f64..3.0, seed in 0u64..200) {
        let g = grid(200);
        let e = gen_jump_diffusion(jd_spec(), g, 1, seed).unwrap();
        let p = &e.paths[0];
        let s = p.scaled(a);
        let lhs = ucp_bracket_idx(&s, &s, 5, 200).unwrap();
        let rhs = a * a * ucp_bracket_idx(p, p, 5, 200).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
    }
}
