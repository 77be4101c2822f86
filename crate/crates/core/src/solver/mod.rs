//! Single-level ADMM solver for the star-shape constrained registration
//! problem.
//!
//! Each outer iteration runs a few modified Newton steps on the smoothed
//! transformation subproblem, projects the auxiliary variable onto the
//! nonpositive orthant, updates the multipliers and adapts the penalty.

mod admm;
mod newton;
mod problem;

pub use admm::{
    admm_level_solve, multiplier_update, project_nonpositive, q_update, sigma_update, LevelOutcome,
    SolverState, TraceRow,
};
pub use newton::{conjugate_gradient, newton_solve, CgOutcome, NewtonOutcome, StepRecord};
pub use problem::{Energy, LandmarkTerm, LevelProblem, ModifiedHessian, Penalty, PhaseTerm};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NewtonConfig {
    pub max_iters: usize,
    /// Stop once `||d_F|| <= grad_rel * ||d_F^0||`.
    pub grad_rel: f64,
    /// Stop once `||d_F|| <= grad_abs`.
    pub grad_abs: f64,
    pub armijo_c: f64,
    pub backtrack: f64,
    pub min_step: f64,
    pub cg_rel_tol: f64,
    pub cg_max: usize,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig {
            max_iters: 5,
            grad_rel: 0.1,
            grad_abs: 1e-3,
            armijo_c: 1e-4,
            backtrack: 0.5,
            min_step: 1.0 / 1024.0,
            cg_rel_tol: 1e-8,
            cg_max: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub alpha: f64,
    pub epsilon: f64,
    pub sigma0: f64,
    pub residual_tol: f64,
    pub sigma_growth: f64,
    pub sigma_trigger: f64,
    pub newton: NewtonConfig,
    pub max_outer_iters: usize,
    pub landmark_weight0: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            alpha: 1e-3,
            epsilon: 0.01,
            sigma0: 1.0,
            residual_tol: 1e-2,
            sigma_growth: 10.0,
            sigma_trigger: 0.95,
            newton: NewtonConfig::default(),
            max_outer_iters: 500,
            landmark_weight0: 10.0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("alpha", self.alpha),
            ("epsilon", self.epsilon),
            ("sigma0", self.sigma0),
            ("sigma_growth", self.sigma_growth),
            ("landmark_weight0", self.landmark_weight0),
            ("newton.grad_rel", self.newton.grad_rel),
            ("newton.grad_abs", self.newton.grad_abs),
            ("newton.armijo_c", self.newton.armijo_c),
            ("newton.min_step", self.newton.min_step),
            ("newton.cg_rel_tol", self.newton.cg_rel_tol),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::validation(name, format!("must be positive, got {v}")));
            }
        }
        if !(self.residual_tol.is_finite() && self.residual_tol >= 0.0) {
            return Err(Error::validation("stop_residual", "must be >= 0"));
        }
        if !(self.sigma_trigger > 0.0 && self.sigma_trigger < 1.0) {
            return Err(Error::validation("sigma_trigger", "must lie in (0, 1)"));
        }
        if !(self.newton.backtrack > 0.0 && self.newton.backtrack < 1.0) {
            return Err(Error::validation("newton.backtrack", "must lie in (0, 1)"));
        }
        if self.newton.max_iters == 0 || self.newton.cg_max == 0 || self.max_outer_iters == 0 {
            return Err(Error::validation("iteration caps", "must be >= 1"));
        }
        Ok(())
    }
}
