//! Coarse-to-fine driver: image pyramid, prolongation between levels and the
//! full segmentation pipeline.

use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::config::{Model, RunConfig};
use crate::constraint::{
    build_constraint_blocks, verify_star_shape_in, ConstraintBlock, StarReport,
};
use crate::error::{check_len, Error, Result};
use crate::grid::{bilinear_stencil, ImageGrid};
use crate::imageio::{extract_contours, ContourSet};
use crate::levelset::LevelSetPrior;
use crate::region_force::{kmeans_means, region_forces};
use crate::solver::{admm_level_solve, LevelOutcome, LevelProblem, PhaseTerm, SolverState, TraceRow};

/// Image pyramid, coarsest level first.
#[derive(Debug, Clone, PartialEq)]
pub struct Pyramid {
    pub levels: Vec<ImageGrid>,
}

impl Pyramid {
    pub fn finest(&self) -> &ImageGrid {
        self.levels.last().expect("pyramid has at least one level")
    }
}

/// Halves the resolution by averaging each 2x2 block.
pub fn downsample(grid: &ImageGrid) -> Result<ImageGrid> {
    let n = grid.n();
    if n % 2 != 0 || n < 4 {
        return Err(Error::validation("size", format!("cannot halve a {n}x{n} grid")));
    }
    let m = n / 2;
    let f = grid.intensity();
    let mut out = Vec::with_capacity(m * m);
    for j in 0..m {
        for i in 0..m {
            let k = 2 * i + 2 * j * n;
            out.push(0.25 * (f[k] + f[k + 1] + f[k + n] + f[k + n + 1]));
        }
    }
    ImageGrid::new(m, out)
}

pub fn build_pyramid(finest: &ImageGrid, levels: usize) -> Result<Pyramid> {
    if levels == 0 {
        return Err(Error::validation("levels", "must be at least 1"));
    }
    let mut out = vec![finest.clone()];
    for _ in 1..levels {
        let next = downsample(out.last().unwrap())?;
        out.push(next);
    }
    out.reverse();
    Ok(Pyramid { levels: out })
}

/// Bilinear interpolation of a cell-centered coarse field at the fine cell
/// centers, extrapolating linearly next to the boundary.
pub fn prolong_field(coarse: &[f64], nc: usize, fine: &ImageGrid) -> Result<Vec<f64>> {
    check_len("coarse field", nc * nc, coarse.len())?;
    if nc < 2 {
        return Err(Error::validation("size", "coarse grid too small"));
    }
    Ok((0..fine.len())
        .map(|k| {
            bilinear_stencil(nc, fine.center(k))
                .iter()
                .map(|&(c, w)| w * coarse[c])
                .sum()
        })
        .collect())
}

/// Initial fine-level `(Y, Q)` from a coarse solution: the displacement
/// `Y - X` and `Q` are interpolated, and `Q` is projected back onto the
/// nonpositive orthant on the rows of each fine block.
pub fn prolong_state(
    coarse: &ImageGrid,
    y: &[f64],
    q: &[Vec<f64>],
    fine: &ImageGrid,
    fine_blocks: &[ConstraintBlock],
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let (nc, lc) = (coarse.n(), coarse.len());
    check_len("coarse Y", 2 * lc, y.len())?;
    check_len("Q blocks", fine_blocks.len(), q.len())?;
    let u1: Vec<f64> = (0..lc).map(|k| y[k] - coarse.x1()[k]).collect();
    let u2: Vec<f64> = (0..lc).map(|k| y[k + lc] - coarse.x2()[k]).collect();
    let f1 = prolong_field(&u1, nc, fine)?;
    let f2 = prolong_field(&u2, nc, fine)?;
    let mut yf = Vec::with_capacity(2 * fine.len());
    yf.extend(f1.iter().zip(fine.x1()).map(|(u, x)| x + u));
    yf.extend(f2.iter().zip(fine.x2()).map(|(u, x)| x + u));

    let mut qf = Vec::with_capacity(q.len());
    for (qb, block) in q.iter().zip(fine_blocks) {
        let interp = prolong_field(qb, nc, fine)?;
        qf.push(
            interp
                .iter()
                .zip(&block.mask)
                .map(|(v, m)| if *m { v.min(0.0) } else { 0.0 })
                .collect(),
        );
    }
    Ok((yf, qf))
}

/// Cluster means from the finest image and the cluster used by each phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSetup {
    pub means: Vec<f64>,
    /// `[object, background]` or `[star object, second object, background]`.
    pub clusters: Vec<usize>,
    pub kmeans_degenerate: bool,
}

/// Runs k-means on the finest image and assigns clusters to phases. Without
/// an explicit assignment, the object phase takes the cluster closest to the
/// mean intensity inside the prior disk (the second prior picks among the
/// remaining clusters for the selective model).
pub fn phase_setup(grid: &ImageGrid, cfg: &RunConfig) -> Result<PhaseSetup> {
    let k = cfg.k();
    let km = kmeans_means(grid.intensity(), k)?;
    let clusters = match &cfg.phase_clusters {
        Some(pc) => pc.clone(),
        None => {
            let mut remaining: Vec<usize> = (0..k).collect();
            let mut chosen = Vec::new();
            for prior in cfg.priors()? {
                let target = mean_inside(grid, &prior).unwrap_or(0.5);
                let pos = remaining
                    .iter()
                    .enumerate()
                    .min_by(|a, b| {
                        let da = (km.means[*a.1] - target).abs();
                        let db = (km.means[*b.1] - target).abs();
                        da.total_cmp(&db)
                    })
                    .map(|(i, _)| i)
                    .unwrap();
                chosen.push(remaining.remove(pos));
            }
            chosen.extend(remaining);
            chosen
        }
    };
    Ok(PhaseSetup {
        means: km.means,
        clusters,
        kmeans_degenerate: km.degenerate,
    })
}

fn mean_inside(grid: &ImageGrid, prior: &LevelSetPrior) -> Option<f64> {
    let (mut sum, mut count) = (0.0, 0usize);
    for k in 0..grid.len() {
        if prior.value(grid.center(k)) >= 0.0 {
            sum += grid.intensity()[k];
            count += 1;
        }
    }
    (count > 0).then(|| sum / count as f64)
}

/// Builds the transformation subproblem for one pyramid level.
pub fn level_problem(grid: &ImageGrid, cfg: &RunConfig, setup: &PhaseSetup) -> Result<LevelProblem> {
    let forces = region_forces(grid.intensity(), &setup.means, &cfg.region_force())?.forces;
    let priors = cfg.priors()?;
    let bg = &forces[*setup.clusters.last().unwrap()];
    let phases = priors
        .into_iter()
        .zip(&setup.clusters)
        .map(|(prior, &c)| PhaseTerm {
            prior,
            s: forces[c].iter().zip(bg).map(|(a, b)| a - b).collect(),
        })
        .collect();
    let blocks = build_constraint_blocks(grid, &cfg.constraint_spec())?;
    LevelProblem::new(
        grid.clone(),
        phases,
        bg.clone(),
        cfg.alpha,
        cfg.epsilon,
        blocks,
        &cfg.landmarks,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub level: usize,
    pub n: usize,
    pub iterations: usize,
    pub converged: bool,
    pub final_residual: f64,
    pub final_landmark_err: f64,
    pub newton_stalls: usize,
    pub final_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkReport {
    pub p: [f64; 2],
    pub q: [f64; 2],
    pub error: [f64; 2],
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationResult {
    pub n: usize,
    pub model: Model,
    /// Transformation at the finest level, `[y1; y2]`.
    pub y: Vec<f64>,
    pub q: Vec<Vec<f64>>,
    /// Deformed level set `phi0_m o Y` per phase.
    pub phi: Vec<Vec<f64>>,
    /// `{phi_m >= 0}` per phase.
    pub masks: Vec<Vec<bool>>,
    pub contours: Vec<ContourSet>,
    /// One report per constraint entry, checked on the first phase inside
    /// the entry's region.
    pub star_reports: Vec<StarReport>,
    pub landmark_errors: Vec<LandmarkReport>,
    pub traces: Vec<TraceRow>,
    pub levels: Vec<LevelSummary>,
    pub setup: PhaseSetup,
    /// Some level stopped at `max_outer_iters` without meeting the stopping
    /// rule.
    pub stalled: bool,
    pub notes: Vec<String>,
    pub runtime_secs: f64,
}

/// Runs the configured model on `image` (already at the configured size)
/// from the coarsest pyramid level to the finest.
///
/// `monitor` receives every trace row; returning `false` cancels the run.
pub fn run_multilevel(
    image: &ImageGrid,
    cfg: &RunConfig,
    monitor: &mut dyn FnMut(&TraceRow) -> bool,
) -> Result<SegmentationResult> {
    let start = Instant::now();
    cfg.validate()?;
    if image.n() != cfg.size {
        return Err(Error::validation(
            "size",
            format!("image is {0}x{0}, config expects {1}", image.n(), cfg.size),
        ));
    }
    let solver_cfg = cfg.solver();
    let pyramid = build_pyramid(image, cfg.levels)?;
    let setup = phase_setup(image, cfg)?;
    let mut notes = Vec::new();
    if setup.kmeans_degenerate {
        notes.push("k-means clustering is degenerate; region forces are unreliable".to_string());
    }

    let mut traces = Vec::new();
    let mut summaries = Vec::new();
    let mut prev: Option<(ImageGrid, SolverState)> = None;
    let mut finest: Option<(LevelProblem, SolverState)> = None;
    for (level, grid) in pyramid.levels.iter().enumerate() {
        let problem = level_problem(grid, cfg, &setup)?;
        let mut state = match &prev {
            None => SolverState::initial(&problem, &solver_cfg),
            Some((coarse, cs)) => {
                let (y, q) = prolong_state(coarse, &cs.y, &cs.q, grid, &problem.blocks)?;
                SolverState::with(&problem, &solver_cfg, y, q)
            }
        };
        let outcome: LevelOutcome = admm_level_solve(&problem, &mut state, &solver_cfg, level, monitor)?;
        info!(
            "level {level} (n={}): {} iterations, residual {:.3e}, converged {}",
            grid.n(),
            outcome.iterations,
            outcome.final_residual,
            outcome.converged
        );
        if !outcome.converged {
            warn!("level {level} hit the outer iteration cap");
        }
        summaries.push(LevelSummary {
            level,
            n: grid.n(),
            iterations: outcome.iterations,
            converged: outcome.converged,
            final_residual: outcome.final_residual,
            final_landmark_err: outcome.final_landmark_err,
            newton_stalls: outcome.newton_stalls,
            final_sigma: state.sigma,
        });
        traces.extend(outcome.traces);
        if level + 1 == pyramid.levels.len() {
            finest = Some((problem, state));
        } else {
            prev = Some((grid.clone(), state));
        }
    }
    let (problem, state) = finest.expect("at least one level");

    let n = image.n();
    let len = image.len();
    let phi: Vec<Vec<f64>> = problem
        .phases
        .iter()
        .map(|ph| (0..len).map(|k| ph.prior.value([state.y[k], state.y[k + len]])).collect())
        .collect();
    let masks: Vec<Vec<bool>> = phi.iter().map(|f| f.iter().map(|v| *v >= 0.0).collect()).collect();
    let contours = phi
        .iter()
        .map(|f| extract_contours(f, n))
        .collect::<Result<Vec<_>>>()?;

    let mut star_reports = Vec::new();
    for (i, block) in problem.blocks.iter().enumerate() {
        match verify_star_shape_in(&masks[0], n, block.center, Some(&block.mask)) {
            Ok(r) => star_reports.push(r),
            Err(Error::CenterOutsideMask(..)) => {
                notes.push(format!("constraints[{i}]: center lies outside the segmented region"));
                star_reports.push(StarReport {
                    center: block.center,
                    is_star: false,
                    violating_cells: Vec::new(),
                });
            }
            Err(e) => return Err(e),
        }
    }

    let landmark_errors = problem
        .landmarks
        .iter()
        .zip(problem.landmark_errors(&state.y))
        .map(|(t, e)| LandmarkReport {
            p: t.landmark.p,
            q: t.landmark.q,
            error: e,
            distance: e[0].hypot(e[1]),
        })
        .collect();

    let stalled = summaries.iter().any(|s| !s.converged);
    Ok(SegmentationResult {
        n,
        model: cfg.model,
        y: state.y,
        q: state.q,
        phi,
        masks,
        contours,
        star_reports,
        landmark_errors,
        traces,
        levels: summaries,
        setup,
        stalled,
        notes,
        runtime_secs: start.elapsed().as_secs_f64(),
    })
}

/// Dice overlap `2|A and B| / (|A| + |B|)`; 1 for two empty masks.
pub fn dice(a: &[bool], b: &[bool]) -> f64 {
    let inter = a.iter().zip(b).filter(|(x, y)| **x && **y).count();
    let total = a.iter().filter(|x| **x).count() + b.iter().filter(|x| **x).count();
    if total == 0 {
        1.0
    } else {
        2.0 * inter as f64 / total as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn pyramid_sizes_and_constants() {
        let g = ImageGrid::new(16, vec![0.3; 256]).unwrap();
        let p = build_pyramid(&g, 3).unwrap();
        let sizes: Vec<usize> = p.levels.iter().map(|l| l.n()).collect();
        assert_eq!(sizes, vec![4, 8, 16]);
        for l in &p.levels {
            assert!(l.intensity().iter().all(|v| (*v - 0.3).abs() < 1e-15));
        }
        assert!(build_pyramid(&ImageGrid::new(6, vec![0.0; 36]).unwrap(), 3).is_err());
    }

    #[test]
    fn checkerboard_averages_to_half() {
        let f: Vec<f64> = (0..16).map(|k| ((k % 4 + k / 4) % 2) as f64).collect();
        let g = ImageGrid::new(4, f).unwrap();
        let c = downsample(&g).unwrap();
        assert_eq!(c.intensity(), &[0.5; 4]);
    }

    #[test]
    fn random_block_mean_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let f: Vec<f64> = (0..64).map(|_| rng.gen_range(0.0..1.0)).collect();
        let g = ImageGrid::new(8, f.clone()).unwrap();
        let c = downsample(&g).unwrap();
        for cj in 0..4 {
            for ci in 0..4 {
                let mut s = 0.0;
                for (di, dj) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                    s += f[(2 * ci + di) + (2 * cj + dj) * 8];
                }
                assert!((c.intensity()[ci + 4 * cj] - s / 4.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn prolongation_preserves_identity_and_translation() {
        let coarse = ImageGrid::blank(4).unwrap();
        let fine = ImageGrid::blank(8).unwrap();
        let (y, q) = prolong_state(&coarse, &coarse.identity(), &[], &fine, &[]).unwrap();
        assert!(q.is_empty());
        for (a, b) in y.iter().zip(fine.identity()) {
            assert!((a - b).abs() < 1e-15);
        }
        let t = [0.031, -0.017];
        let mut yc = coarse.identity();
        let lc = coarse.len();
        for k in 0..lc {
            yc[k] += t[0];
            yc[k + lc] += t[1];
        }
        let (y, _) = prolong_state(&coarse, &yc, &[], &fine, &[]).unwrap();
        let lf = fine.len();
        for k in 0..lf {
            assert!((y[k] - fine.x1()[k] - t[0]).abs() < 1e-14);
            assert!((y[k + lf] - fine.x2()[k] - t[1]).abs() < 1e-14);
        }
    }

    #[test]
    fn dice_basics() {
        assert_eq!(dice(&[true, false], &[true, false]), 1.0);
        assert_eq!(dice(&[true, false], &[false, true]), 0.0);
        assert_eq!(dice(&[false], &[false]), 1.0);
    }
}
