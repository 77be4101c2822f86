use serde::{Deserialize, Serialize};

use super::newton::{newton_solve, NewtonOutcome};
use super::problem::{LevelProblem, Penalty};
use super::SolverConfig;
use crate::constraint::residual_inf;
use crate::error::{Error, Result};

/// Landmark errors below this fraction of the grid spacing count as met.
const LANDMARK_TOL_CELLS: f64 = 0.5;

/// One outer iteration as exported to trace files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub level: usize,
    pub iter: usize,
    /// Fidelity plus regularizer at the new iterate.
    pub energy: f64,
    pub residual_inf: f64,
    /// Penalty used during this iteration.
    pub sigma: f64,
    pub newton_iters: usize,
    /// Largest landmark error, zero without landmarks.
    pub landmark_err: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub y: Vec<f64>,
    pub q: Vec<Vec<f64>>,
    pub lambda: Vec<Vec<f64>>,
    pub sigma: f64,
    pub lm_mult: Vec<[f64; 2]>,
    pub lm_weight: f64,
}

impl SolverState {
    /// Identity transformation, zero auxiliary variables and multipliers.
    pub fn initial(problem: &LevelProblem, cfg: &SolverConfig) -> Self {
        let len = problem.len();
        Self::with(problem, cfg, problem.grid.identity(), vec![vec![0.0; len]; problem.blocks.len()])
    }

    /// Given transformation and auxiliary variables, fresh multipliers.
    pub fn with(problem: &LevelProblem, cfg: &SolverConfig, y: Vec<f64>, q: Vec<Vec<f64>>) -> Self {
        let len = problem.len();
        SolverState {
            y,
            q,
            lambda: vec![vec![0.0; len]; problem.blocks.len()],
            sigma: cfg.sigma0,
            lm_mult: vec![[0.0; 2]; problem.landmarks.len()],
            lm_weight: cfg.landmark_weight0,
        }
    }

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

/// Componentwise `min(v, 0)`.
pub fn project_nonpositive(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| x.min(0.0)).collect()
}

/// Closed-form minimizer of the auxiliary subproblem:
/// `Q_b = min(W_b (phi0 o Y) + Lambda_b / sigma, 0)` on masked rows.
pub fn q_update(problem: &LevelProblem, state: &SolverState) -> Result<Vec<Vec<f64>>> {
    if !(state.sigma > 0.0) {
        return Err(Error::validation("sigma", "must be positive"));
    }
    let phi = problem.phi(&state.y);
    Ok(problem
        .constraint_values(&phi)
        .into_iter()
        .zip(&problem.blocks)
        .zip(&state.lambda)
        .map(|((wv, b), l)| {
            wv.iter()
                .zip(l)
                .zip(&b.mask)
                .map(|((w, l), m)| if *m { (w + l / state.sigma).min(0.0) } else { 0.0 })
                .collect()
        })
        .collect())
}

/// `Lambda += sigma * r`.
pub fn multiplier_update(lambda: &mut [Vec<f64>], r: &[Vec<f64>], sigma: f64) {
    for (l, r) in lambda.iter_mut().zip(r) {
        for (l, r) in l.iter_mut().zip(r) {
            *l += sigma * r;
        }
    }
}

/// Grows the penalty by `growth` when the residual failed to drop below
/// `trigger` times its previous value.
pub fn sigma_update(sigma: f64, r_new: f64, r_old: f64, growth: f64, trigger: f64) -> f64 {
    if r_new >= trigger * r_old {
        growth * sigma
    } else {
        sigma
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelOutcome {
    pub iterations: usize,
    pub converged: bool,
    pub final_residual: f64,
    pub final_landmark_err: f64,
    pub newton_stalls: usize,
    pub newton: Vec<NewtonOutcome>,
    pub traces: Vec<TraceRow>,
}

/// Runs ADMM on one level until `||r||_inf <= residual_tol` (and every
/// landmark is within half a cell) or `max_outer_iters` is reached.
///
/// `monitor` sees every trace row; returning `false` cancels the solve.
pub fn admm_level_solve(
    problem: &LevelProblem,
    state: &mut SolverState,
    cfg: &SolverConfig,
    level: usize,
    monitor: &mut dyn FnMut(&TraceRow) -> bool,
) -> Result<LevelOutcome> {
    cfg.validate()?;
    let lm_tol = LANDMARK_TOL_CELLS * problem.grid.h();
    let max_err = |errs: &[[f64; 2]]| errs.iter().map(|e| e[0].hypot(e[1])).fold(0.0, f64::max);

    let phi = problem.phi(&state.y);
    let r0 = residuals(problem, &phi, &state.q);
    let mut r_prev = residual_inf(&problem.blocks, &r0);
    let mut lm_prev = max_err(&problem.landmark_errors(&state.y));

    let mut out = LevelOutcome {
        iterations: 0,
        converged: false,
        final_residual: r_prev,
        final_landmark_err: lm_prev,
        newton_stalls: 0,
        newton: Vec::new(),
        traces: Vec::new(),
    };

    for iter in 0..cfg.max_outer_iters {
        let mut y = std::mem::take(&mut state.y);
        let newton = newton_solve(problem, &state.penalty(), &mut y, &cfg.newton);
        state.y = y;
        let newton = newton?;
        if newton.stalled {
            out.newton_stalls += 1;
        }
        let newton_iters = newton.iterations;
        out.newton.push(newton);

        state.q = q_update(problem, state)?;
        let phi = problem.phi(&state.y);
        let r = residuals(problem, &phi, &state.q);
        multiplier_update(&mut state.lambda, &r, state.sigma);
        let rinf = residual_inf(&problem.blocks, &r);

        let errs = problem.landmark_errors(&state.y);
        for (m, e) in state.lm_mult.iter_mut().zip(&errs) {
            m[0] += state.lm_weight * e[0];
            m[1] += state.lm_weight * e[1];
        }
        let lm_err = max_err(&errs);

        let energy = problem.objective(&state.y, &state.penalty())?.model();
        let row = TraceRow {
            level,
            iter,
            energy,
            residual_inf: rinf,
            sigma: state.sigma,
            newton_iters,
            landmark_err: lm_err,
        };
        out.traces.push(row);
        out.iterations = iter + 1;
        out.final_residual = rinf;
        out.final_landmark_err = lm_err;
        if !monitor(&row) {
            return Err(Error::Cancelled);
        }

        if rinf <= cfg.residual_tol && lm_err <= lm_tol {
            out.converged = true;
            break;
        }
        state.sigma = sigma_update(state.sigma, rinf, r_prev, cfg.sigma_growth, cfg.sigma_trigger);
        if lm_err > lm_tol {
            state.lm_weight =
                sigma_update(state.lm_weight, lm_err, lm_prev, cfg.sigma_growth, cfg.sigma_trigger);
        }
        r_prev = rinf;
        lm_prev = lm_err;
    }
    Ok(out)
}

/// `W_b phi - Q_b` on masked rows.
fn residuals(problem: &LevelProblem, phi: &[f64], q: &[Vec<f64>]) -> Vec<Vec<f64>> {
    problem
        .constraint_values(phi)
        .into_iter()
        .zip(&problem.blocks)
        .zip(q)
        .map(|((mut wv, b), q)| {
            for k in 0..wv.len() {
                wv[k] = if b.mask[k] { wv[k] - q[k] } else { 0.0 };
            }
            wv
        })
        .collect()
}
