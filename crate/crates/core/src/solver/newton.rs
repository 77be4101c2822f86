use log::debug;

use super::problem::{LevelProblem, Penalty};
use super::NewtonConfig;
use crate::error::Result;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOutcome {
    pub iterations: usize,
    pub rel_residual: f64,
}

/// Conjugate gradients for `H x = b` with `H` symmetric positive
/// semidefinite, started from zero. Stops on relative residual, on the
/// iteration cap, or when a direction of nonpositive curvature appears.
pub fn conjugate_gradient(
    apply: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    rel_tol: f64,
    max_iters: usize,
) -> (Vec<f64>, CgOutcome) {
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut hp = vec![0.0; n];
    let b_norm = norm(b);
    let mut rs = dot(&r, &r);
    let mut iterations = 0;
    if b_norm == 0.0 {
        return (x, CgOutcome { iterations, rel_residual: 0.0 });
    }
    while iterations < max_iters && rs.sqrt() > rel_tol * b_norm {
        apply(&p, &mut hp);
        let php = dot(&p, &hp);
        if php <= 0.0 || !php.is_finite() {
            break;
        }
        let step = rs / php;
        for i in 0..n {
            x[i] += step * p[i];
            r[i] -= step * hp[i];
        }
        let rs_new = dot(&r, &r);
        let beta = rs_new / rs;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rs = rs_new;
        iterations += 1;
    }
    (
        x,
        CgOutcome {
            iterations,
            rel_residual: rs.sqrt() / b_norm,
        },
    )
}

/// One accepted (or attempted) Newton step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    /// `p^t d_F` of the direction that was line-searched.
    pub slope: f64,
    pub step: f64,
    pub f_before: f64,
    pub f_after: f64,
    pub steepest_descent: bool,
    pub cg_iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonOutcome {
    pub iterations: usize,
    pub stalled: bool,
    pub grad_norm0: f64,
    pub grad_norm: f64,
    pub steps: Vec<StepRecord>,
}

enum Search {
    Accepted { step: f64, f: f64 },
    Failed,
}

fn armijo(
    problem: &LevelProblem,
    pen: &Penalty,
    y: &[f64],
    dir: &[f64],
    f0: f64,
    slope: f64,
    cfg: &NewtonConfig,
) -> Result<Search> {
    let mut step = 1.0;
    let mut trial = vec![0.0; y.len()];
    while step >= cfg.min_step {
        for i in 0..y.len() {
            trial[i] = y[i] + step * dir[i];
        }
        // a non-finite trial point counts as insufficient decrease
        if let Ok(e) = problem.objective(&trial, pen) {
            let f = e.total();
            if f <= f0 + cfg.armijo_c * step * slope {
                return Ok(Search::Accepted { step, f });
            }
        }
        step *= cfg.backtrack;
    }
    Ok(Search::Failed)
}

/// Modified Newton iterations on the transformation subproblem.
///
/// Stops after `max_iters` steps, once the gradient norm has dropped by the
/// factor `grad_rel`, or once it falls below `grad_abs`. A failed line
/// search along the Newton direction is retried along `-d_F`; if that fails
/// too the current iterate is kept and the outcome is flagged as stalled.
pub fn newton_solve(
    problem: &LevelProblem,
    pen: &Penalty,
    y: &mut [f64],
    cfg: &NewtonConfig,
) -> Result<NewtonOutcome> {
    let mut f = problem.objective(y, pen)?.total();
    let mut out = NewtonOutcome {
        iterations: 0,
        stalled: false,
        grad_norm0: 0.0,
        grad_norm: 0.0,
        steps: Vec::new(),
    };
    while out.iterations < cfg.max_iters {
        let d = problem.gradient(y, pen)?;
        let gn = norm(&d);
        if out.iterations == 0 {
            out.grad_norm0 = gn;
        }
        out.grad_norm = gn;
        if gn <= cfg.grad_abs || (out.iterations > 0 && gn <= cfg.grad_rel * out.grad_norm0) {
            break;
        }

        let hess = problem.hessian(y, pen)?;
        let rhs: Vec<f64> = d.iter().map(|v| -v).collect();
        let (mut dir, cg) = conjugate_gradient(|p, o| hess.apply(p, o), &rhs, cfg.cg_rel_tol, cfg.cg_max);
        let mut slope = dot(&dir, &d);
        let mut steepest = false;
        if !(slope < 0.0 && slope.is_finite()) {
            dir = rhs.clone();
            slope = -gn * gn;
            steepest = true;
        }
        let mut search = armijo(problem, pen, y, &dir, f, slope, cfg)?;
        if matches!(search, Search::Failed) && !steepest {
            debug!("newton direction failed the line search, trying steepest descent");
            dir = rhs;
            slope = -gn * gn;
            steepest = true;
            search = armijo(problem, pen, y, &dir, f, slope, cfg)?;
        }
        match search {
            Search::Accepted { step, f: f_new } => {
                for i in 0..y.len() {
                    y[i] += step * dir[i];
                }
                out.steps.push(StepRecord {
                    slope,
                    step,
                    f_before: f,
                    f_after: f_new,
                    steepest_descent: steepest,
                    cg_iterations: cg.iterations,
                });
                f = f_new;
                out.iterations += 1;
            }
            Search::Failed => {
                out.stalled = true;
                break;
            }
        }
    }
    Ok(out)
}
