mod common;

use common::*;
use proptest::prelude::*;
use rand::Rng;

use starseg::config::{Model, PriorConfig, RunConfig};
use starseg::constraint::{build_constraint_blocks, ConstraintEntry, ConstraintSpec, Polygon, Region};
use starseg::grid::ImageGrid;
use starseg::imageio::{make_synthetic, Shape};
use starseg::multilevel::{
    build_pyramid, dice, downsample, level_problem, phase_setup, prolong_field, prolong_state, run_multilevel,
};
use starseg::solver::{admm_level_solve, SolverState};
use starseg::Error;

/// 1-D weights of cell-centered linear interpolation from `nc` to `2 nc`
/// cells, written out case by case.
fn weights_1d(i: usize, nc: usize) -> [(usize, f64); 2] {
    let nf = 2 * nc;
    if i == 0 {
        [(0, 1.25), (1, -0.25)]
    } else if i == nf - 1 {
        [(nc - 2, -0.25), (nc - 1, 1.25)]
    } else if i % 2 == 0 {
        [(i / 2 - 1, 0.25), (i / 2, 0.75)]
    } else {
        [((i - 1) / 2, 0.75), ((i + 1) / 2, 0.25)]
    }
}

fn oracle_prolong(coarse: &[f64], nc: usize) -> Vec<f64> {
    let nf = 2 * nc;
    let mut out = vec![0.0; nf * nf];
    for j in 0..nf {
        for i in 0..nf {
            let mut v = 0.0;
            for (ci, wi) in weights_1d(i, nc) {
                for (cj, wj) in weights_1d(j, nc) {
                    v += wi * wj * coarse[ci + cj * nc];
                }
            }
            out[i + j * nf] = v;
        }
    }
    out
}

#[test]
fn prolongation_matches_scalar_oracle() {
    let mut r = rng(1);
    for nc in [2, 4, 8] {
        let coarse: Vec<f64> = (0..nc * nc).map(|_| r.gen_range(-1.0..1.0)).collect();
        let fine = ImageGrid::blank(2 * nc).unwrap();
        let got = prolong_field(&coarse, nc, &fine).unwrap();
        let want = oracle_prolong(&coarse, nc);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn prolong_state_interpolates_displacement_and_projects_q() {
    let mut r = rng(2);
    let coarse = ImageGrid::blank(4).unwrap();
    let fine = ImageGrid::blank(8).unwrap();
    let lc = coarse.len();
    let u: Vec<f64> = (0..2 * lc).map(|_| r.gen_range(-0.05..0.05)).collect();
    let y: Vec<f64> = coarse.identity().iter().zip(&u).map(|(x, d)| x + d).collect();
    let q = vec![(0..lc).map(|_| r.gen_range(-0.3..0.1)).collect::<Vec<f64>>()];
    let spec = ConstraintSpec {
        entries: vec![ConstraintEntry {
            center: [0.5, 0.5],
            region: Region::Polygon(Polygon::new(vec![[0.0, 0.0], [0.6, 0.0], [0.6, 1.0], [0.0, 1.0]]).unwrap()),
        }],
        landmarks: Vec::new(),
    };
    let blocks = build_constraint_blocks(&fine, &spec).unwrap();
    let (yf, qf) = prolong_state(&coarse, &y, &q, &fine, &blocks).unwrap();

    let lf = fine.len();
    let u1 = oracle_prolong(&u[..lc], 4);
    let u2 = oracle_prolong(&u[lc..], 4);
    let qo = oracle_prolong(&q[0], 4);
    for k in 0..lf {
        assert!((yf[k] - fine.x1()[k] - u1[k]).abs() < 1e-12);
        assert!((yf[k + lf] - fine.x2()[k] - u2[k]).abs() < 1e-12);
        let want = if blocks[0].mask[k] { qo[k].min(0.0) } else { 0.0 };
        assert!((qf[0][k] - want).abs() < 1e-12);
    }
}

#[test]
fn pyramid_shapes() {
    let g = ImageGrid::new(16, (0..256).map(|k| k as f64 / 255.0).collect()).unwrap();
    let p = build_pyramid(&g, 3).unwrap();
    let sizes: Vec<usize> = p.levels.iter().map(|l| l.n()).collect();
    assert_eq!(sizes, vec![4, 8, 16]);
    assert_eq!(p.finest(), &g);
    assert_eq!(build_pyramid(&g, 4).unwrap().levels[0].n(), 2);
    assert!(build_pyramid(&g, 5).is_err());
    assert!(build_pyramid(&g, 0).is_err());
}

proptest! {
    #[test]
    fn prolongation_reproduces_affine_fields(
        a in -2.0f64..2.0, b in -2.0f64..2.0, c in -2.0f64..2.0, nc in prop::sample::select(vec![2usize, 4, 8, 16]),
    ) {
        let coarse_grid = ImageGrid::blank(nc).unwrap();
        let fine = ImageGrid::blank(2 * nc).unwrap();
        let coarse: Vec<f64> = (0..coarse_grid.len())
            .map(|k| a + b * coarse_grid.x1()[k] + c * coarse_grid.x2()[k])
            .collect();
        let f = prolong_field(&coarse, nc, &fine).unwrap();
        for k in 0..fine.len() {
            let want = a + b * fine.x1()[k] + c * fine.x2()[k];
            prop_assert!((f[k] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn downsampling_preserves_mean_and_range(seed in any::<u64>(), half in prop::sample::select(vec![2usize, 4, 8])) {
        let mut r = rng(seed);
        let n = 2 * half;
        let g = ImageGrid::new(n, (0..n * n).map(|_| r.gen_range(0.0..1.0)).collect()).unwrap();
        let d = downsample(&g).unwrap();
        prop_assert_eq!(d.n(), half);
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        prop_assert!((mean(d.intensity()) - mean(g.intensity())).abs() < 1e-12);
        let (lo, hi) = g.intensity().iter().fold((f64::MAX, f64::MIN), |(l, h), v| (l.min(*v), h.max(*v)));
        prop_assert!(d.intensity().iter().all(|v| *v >= lo - 1e-15 && *v <= hi + 1e-15));
    }

    #[test]
    fn prolonged_q_is_nonpositive(seed in any::<u64>()) {
        let mut r = rng(seed);
        let coarse = ImageGrid::blank(4).unwrap();
        let fine = ImageGrid::blank(8).unwrap();
        let q = vec![(0..16).map(|_| r.gen_range(-1.0..1.0)).collect::<Vec<f64>>()];
        let blocks = build_constraint_blocks(&fine, &ConstraintSpec::single([0.5, 0.5])).unwrap();
        let (_, qf) = prolong_state(&coarse, &coarse.identity(), &q, &fine, &blocks).unwrap();
        prop_assert!(qf[0].iter().all(|v| *v <= 0.0));
    }
}

fn disk_config(size: usize, levels: usize) -> RunConfig {
    let mut cfg = RunConfig::basic(PriorConfig { center: [0.5, 0.5], radius: 0.15 }, [0.5, 0.5]);
    cfg.size = size;
    cfg.levels = levels;
    cfg
}

#[test]
fn single_level_matches_direct_solve() {
    let syn = make_synthetic(Shape::Disk, 16, 0.1, 3).unwrap();
    let cfg = disk_config(16, 1);
    let res = run_multilevel(&syn.grid, &cfg, &mut |_| true).unwrap();

    let setup = phase_setup(&syn.grid, &cfg).unwrap();
    let problem = level_problem(&syn.grid, &cfg, &setup).unwrap();
    let mut state = SolverState::initial(&problem, &cfg.solver());
    let out = admm_level_solve(&problem, &mut state, &cfg.solver(), 0, &mut |_| true).unwrap();
    assert_eq!(res.y, state.y);
    assert_eq!(res.q, state.q);
    assert_eq!(res.traces, out.traces);
}

#[test]
fn partial_with_whole_domain_equals_basic() {
    let syn = make_synthetic(Shape::Star5, 32, 0.1, 4).unwrap();
    let basic = disk_config(32, 2);
    let mut partial = basic.clone();
    partial.model = Model::Partial;
    partial.constraints[0].region =
        Region::Polygon(Polygon::new(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]).unwrap());
    let a = run_multilevel(&syn.grid, &basic, &mut |_| true).unwrap();
    let b = run_multilevel(&syn.grid, &partial, &mut |_| true).unwrap();
    assert_eq!(a.y, b.y);
    assert_eq!(a.masks, b.masks);
    assert_eq!(a.traces, b.traces);
}

#[test]
fn noise_free_disk_is_recovered() {
    let syn = make_synthetic(Shape::Disk, 32, 0.0, 0).unwrap();
    let res = run_multilevel(&syn.grid, &disk_config(32, 2), &mut |_| true).unwrap();
    assert!(!res.stalled);
    assert_eq!(res.levels.len(), 2);
    assert!(dice(&res.masks[0], &syn.truth) > 0.95);
    assert!(res.star_reports[0].is_star);
    assert_eq!(res.contours[0].contours.len(), 1);
    let levels: Vec<usize> = res.traces.iter().map(|t| t.level).collect();
    assert!(levels.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn run_rejects_size_mismatch_and_propagates_cancel() {
    let syn = make_synthetic(Shape::Disk, 16, 0.0, 0).unwrap();
    let cfg = disk_config(32, 2);
    assert!(matches!(run_multilevel(&syn.grid, &cfg, &mut |_| true), Err(Error::Validation { .. })));
    let cfg = disk_config(16, 2);
    assert!(matches!(run_multilevel(&syn.grid, &cfg, &mut |_| false), Err(Error::Cancelled)));
}
