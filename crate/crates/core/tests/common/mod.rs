#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use starseg::constraint::{build_constraint_blocks, ConstraintEntry, ConstraintSpec, Landmark, Polygon, Region};
use starseg::grid::ImageGrid;
use starseg::levelset::LevelSetPrior;
use starseg::solver::{LevelProblem, Penalty, PhaseTerm};

pub const VARIANTS: [Variant; 5] = [
    Variant::Basic,
    Variant::Partial,
    Variant::Multicenter,
    Variant::Selective,
    Variant::Landmark,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Basic,
    Partial,
    Multicenter,
    Selective,
    Landmark,
}

/// A level problem together with an owned penalty state and evaluation point.
pub struct Instance {
    pub problem: LevelProblem,
    pub y: Vec<f64>,
    pub q: Vec<Vec<f64>>,
    pub lambda: Vec<Vec<f64>>,
    pub sigma: f64,
    pub lm_mult: Vec<[f64; 2]>,
    pub lm_weight: f64,
}

impl Instance {
    pub fn penalty(&self) -> Penalty<'_> {
        Penalty {
            q: &self.q,
            lambda: &self.lambda,
            sigma: self.sigma,
            lm_mult: &self.lm_mult,
            lm_weight: self.lm_weight,
        }
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn polygon(v: &[[f64; 2]]) -> Region {
    Region::Polygon(Polygon::new(v.to_vec()).unwrap())
}

/// Random instance of the given model variant on an `n x n` grid. The prior
/// is a disk near the middle, the transformation a perturbed identity, and
/// forces, auxiliary variables and multipliers are random.
pub fn random_instance(variant: Variant, n: usize, seed: u64) -> Instance {
    let mut r = rng(seed);
    let intensity: Vec<f64> = (0..n * n).map(|_| r.gen_range(0.0..1.0)).collect();
    let grid = ImageGrid::new(n, intensity).unwrap();
    let len = grid.len();

    let b = [r.gen_range(0.4..0.6), r.gen_range(0.4..0.6)];
    let radius = r.gen_range(0.2..0.35);
    let prior = LevelSetPrior::disk(b, radius).unwrap();
    let c = [r.gen_range(0.4..0.6), r.gen_range(0.4..0.6)];

    let entries = match variant {
        Variant::Partial => vec![ConstraintEntry {
            center: c,
            region: polygon(&[[0.1, 0.1], [0.9, 0.2], [0.8, 0.9], [0.2, 0.7]]),
        }],
        Variant::Multicenter => vec![
            ConstraintEntry {
                center: [0.3, 0.5],
                region: polygon(&[[0.0, 0.0], [0.5, 0.0], [0.5, 1.0], [0.0, 1.0]]),
            },
            ConstraintEntry {
                center: [0.7, 0.5],
                region: polygon(&[[0.5, 0.0], [1.0, 0.0], [1.0, 1.0], [0.5, 1.0]]),
            },
        ],
        _ => vec![ConstraintEntry {
            center: c,
            region: Region::All,
        }],
    };
    let landmarks = if variant == Variant::Landmark {
        (0..2)
            .map(|i| {
                let t = r.gen_range(0.0..std::f64::consts::TAU) + i as f64;
                Landmark {
                    p: [r.gen_range(0.2..0.8), r.gen_range(0.2..0.8)],
                    q: [b[0] + radius * t.cos(), b[1] + radius * t.sin()],
                }
            })
            .collect()
    } else {
        Vec::new()
    };
    let spec = ConstraintSpec { entries, landmarks: landmarks.clone() };
    let blocks = build_constraint_blocks(&grid, &spec).unwrap();

    let mut rand_field = |lo: f64, hi: f64| -> Vec<f64> { (0..len).map(|_| r.gen_range(lo..hi)).collect() };
    let mut phases = vec![PhaseTerm { prior, s: rand_field(-1.0, 1.0) }];
    if variant == Variant::Selective {
        let prior2 = LevelSetPrior::disk([0.85, 0.85], 0.1).unwrap();
        phases.push(PhaseTerm { prior: prior2, s: rand_field(-1.0, 1.0) });
    }
    let base = rand_field(-0.5, 0.5);
    let problem = LevelProblem::new(grid, phases, base, 1e-3, 0.01, blocks, &landmarks).unwrap();

    let mut y = problem.grid.identity();
    for v in y.iter_mut() {
        *v += r.gen_range(-0.03..0.03);
    }
    let q = problem
        .blocks
        .iter()
        .map(|b| b.mask.iter().map(|m| if *m { -r.gen_range(0.0..0.2) } else { 0.0 }).collect())
        .collect();
    let lambda = problem
        .blocks
        .iter()
        .map(|b| b.mask.iter().map(|m| if *m { r.gen_range(-0.5..0.5) } else { 0.0 }).collect())
        .collect();
    let lm_mult = (0..problem.landmarks.len())
        .map(|_| [r.gen_range(-0.1..0.1), r.gen_range(-0.1..0.1)])
        .collect();
    Instance {
        sigma: r.gen_range(0.5..20.0),
        lm_weight: r.gen_range(1.0..50.0),
        problem,
        y,
        q,
        lambda,
        lm_mult,
    }
}

/// Central-difference gradient of the total subproblem objective.
pub fn fd_gradient(inst: &Instance, step: f64) -> Vec<f64> {
    let pen = inst.penalty();
    let mut y = inst.y.clone();
    (0..y.len())
        .map(|i| {
            let orig = y[i];
            y[i] = orig + step;
            let fp = inst.problem.objective(&y, &pen).unwrap().total();
            y[i] = orig - step;
            let fm = inst.problem.objective(&y, &pen).unwrap().total();
            y[i] = orig;
            (fp - fm) / (2.0 * step)
        })
        .collect()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(b).max(1e-300)
}
