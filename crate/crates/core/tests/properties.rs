mod common;

use common::*;
use proptest::prelude::*;
use rand::Rng;

use starseg::config::{Model, PriorConfig, RunConfig};
use starseg::constraint::{verify_star_shape, ConstraintEntry, Landmark, Region};
use starseg::grid::ImageGrid;
use starseg::imageio::{extract_contours, load_mask_bytes, mask_png_bytes};
use starseg::levelset::LevelSetPrior;
use starseg::region_force::{kmeans_means, region_forces, RegionForceConfig};
use starseg::solver::{admm_level_solve, newton_solve, NewtonConfig, SolverConfig, SolverState};

fn point_in_polygon(p: [f64; 2], v: &[[f64; 2]]) -> bool {
    let mut inside = false;
    let mut j = v.len() - 1;
    for i in 0..v.len() {
        let (a, b) = (v[i], v[j]);
        if (a[1] > p[1]) != (b[1] > p[1]) && p[0] < (b[0] - a[0]) * (p[1] - a[1]) / (b[1] - a[1]) + a[0] {
            inside = !inside;
        }
        j = i;
    }
    inside
}

fn regular_star(c: [f64; 2], outer: f64, inner: f64, points: usize, phase: f64) -> Vec<[f64; 2]> {
    (0..2 * points)
        .map(|i| {
            let t = phase + std::f64::consts::PI * i as f64 / points as f64;
            let r = if i % 2 == 0 { outer } else { inner };
            [c[0] + r * t.cos(), c[1] + r * t.sin()]
        })
        .collect()
}

fn raster(n: usize, inside: impl Fn([f64; 2]) -> bool) -> Vec<bool> {
    let g = ImageGrid::blank(n).unwrap();
    (0..g.len()).map(|k| inside(g.center(k))).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn regular_star_polygons_are_star_shaped(
        points in 3usize..8,
        ratio in 0.5f64..0.9,
        phase in 0.0f64..1.0,
        cx in 0.45f64..0.55,
        cy in 0.45f64..0.55,
    ) {
        let n = 64;
        let poly = regular_star([cx, cy], 0.35, 0.35 * ratio, points, phase);
        let mask = raster(n, |p| point_in_polygon(p, &poly));
        let report = verify_star_shape(&mask, n, [cx, cy]).unwrap();
        prop_assert!(report.is_star, "{} violating cells", report.violating_cells.len());
    }

    #[test]
    fn annuli_are_not_star_shaped(r_in in 0.08f64..0.2, width in 0.08f64..0.15, angle in 0.0f64..6.28) {
        let n = 64;
        let c = [0.5, 0.5];
        let mask = raster(n, |p| {
            let d = (p[0] - c[0]).hypot(p[1] - c[1]);
            d >= r_in && d <= r_in + width
        });
        let rm = r_in + 0.5 * width;
        let center = [c[0] + rm * angle.cos(), c[1] + rm * angle.sin()];
        let g = ImageGrid::blank(n).unwrap();
        prop_assume!(mask[g.cell_of(center)]);
        prop_assert!(!verify_star_shape(&mask, n, center).unwrap().is_star);
    }

    #[test]
    fn region_forces_normalized_coherent_deterministic(seed in any::<u64>(), tau in 0.05f64..5.0) {
        let mut r = rng(seed);
        let img: Vec<f64> = (0..256).map(|_| r.gen_range(0.0..1.0)).collect();
        let km = kmeans_means(&img, 2).unwrap();
        prop_assume!(!km.degenerate);
        let cfg = RegionForceConfig { k: 2, tau, ..RegionForceConfig::default() };
        let a = region_forces(&img, &km.means, &cfg).unwrap();
        let b = region_forces(&img, &kmeans_means(&img, 2).unwrap().means, &cfg).unwrap();
        prop_assert_eq!(&a, &b);
        let p = starseg::region_force::probabilities(&img, &km.means, tau).unwrap();
        for k in 0..img.len() {
            prop_assert!((p[0][k] + p[1][k] - 1.0).abs() <= 1e-12);
            let closer0 = (img[k] - km.means[0]).abs() < (img[k] - km.means[1]).abs();
            let tie = (img[k] - km.means[0]).abs() == (img[k] - km.means[1]).abs();
            if !tie {
                prop_assert_eq!(a.forces[0][k] < a.forces[1][k], closer0);
            }
        }
    }

    #[test]
    fn mask_png_roundtrip(seed in any::<u64>(), n in 1usize..40) {
        let mut r = rng(seed);
        let mask: Vec<bool> = (0..n * n).map(|_| r.gen_bool(0.5)).collect();
        let (back, m) = load_mask_bytes(&mask_png_bytes(&mask, n).unwrap()).unwrap();
        prop_assert_eq!(m, n);
        prop_assert_eq!(back, mask);
    }

    #[test]
    fn disk_contours_run_counterclockwise(
        cx in 0.3f64..0.7, cy in 0.3f64..0.7, radius in 0.05f64..0.25, n in prop::sample::select(vec![16usize, 32, 64]),
    ) {
        let g = ImageGrid::blank(n).unwrap();
        let prior = LevelSetPrior::disk([cx, cy], radius).unwrap();
        let field: Vec<f64> = (0..g.len()).map(|k| prior.value(g.center(k))).collect();
        let set = extract_contours(&field, n).unwrap();
        prop_assume!(!set.empty);
        prop_assert_eq!(set.contours.len(), 1);
        let area = set.contours[0].signed_area();
        prop_assert!(area > 0.0);
        prop_assert!((area - std::f64::consts::PI * radius * radius).abs() < 4.0 * radius / n as f64 + 1.0 / (n * n) as f64);
    }

    #[test]
    fn config_roundtrip_is_idempotent(
        alpha in 1e-5f64..1.0,
        eps in 1e-3f64..0.1,
        levels in 1usize..4,
        cx in 0.2f64..0.8,
        cy in 0.2f64..0.8,
        radius in 0.05f64..0.15,
        landmark in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let mut cfg = RunConfig::basic(PriorConfig { center: [cx, cy], radius }, [cx, cy]);
        cfg.alpha = alpha;
        cfg.epsilon = eps;
        cfg.levels = levels;
        cfg.size = 64;
        cfg.seed = seed;
        if landmark {
            cfg.model = Model::Landmark;
            cfg.landmarks.push(Landmark { p: [0.5, 0.5], q: [cx + radius, cy] });
        }
        cfg.constraints = vec![ConstraintEntry { center: [cx, cy], region: Region::All }];
        let text = cfg.to_json();
        let back = RunConfig::from_json(&text).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.to_json(), text);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn armijo_certificate_holds(seed in any::<u64>(), v in 0usize..5) {
        let inst = random_instance(VARIANTS[v], 8, seed);
        let cfg = NewtonConfig::default();
        let mut y = inst.y.clone();
        let out = newton_solve(&inst.problem, &inst.penalty(), &mut y, &cfg).unwrap();
        for s in &out.steps {
            prop_assert!(s.slope <= 0.0);
            prop_assert!(s.f_after <= s.f_before + cfg.armijo_c * s.step * s.slope);
        }
    }

    #[test]
    fn q_feasible_and_sigma_monotone_each_iteration(seed in any::<u64>(), v in 0usize..5) {
        let inst = random_instance(VARIANTS[v], 8, seed);
        let p = &inst.problem;
        let one = SolverConfig { max_outer_iters: 1, residual_tol: 0.0, ..SolverConfig::default() };
        let mut state = SolverState::initial(p, &one);
        let mut sigma = state.sigma;
        for _ in 0..6 {
            admm_level_solve(p, &mut state, &one, 0, &mut |_| true).unwrap();
            for (q, b) in state.q.iter().zip(&p.blocks) {
                for (v, m) in q.iter().zip(&b.mask) {
                    let ok = if *m { *v <= 0.0 } else { *v == 0.0 };
                    prop_assert!(ok);
                }
            }
            prop_assert!(state.sigma >= sigma);
            sigma = state.sigma;
        }
        // sigma within one uninterrupted level solve
        let full = SolverConfig { max_outer_iters: 20, ..SolverConfig::default() };
        let mut state = SolverState::initial(p, &full);
        let out = admm_level_solve(p, &mut state, &full, 0, &mut |_| true).unwrap();
        prop_assert!(out.traces.windows(2).all(|w| w[1].sigma >= w[0].sigma));
    }
}
