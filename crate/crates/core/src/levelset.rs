//! Analytic prior level sets and the arctangent-smoothed Heaviside.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Level set of a disk: `r^2 - |x - b|^2`, positive inside.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiskPrior {
    pub center: [f64; 2],
    pub radius: f64,
}

impl DiskPrior {
    pub fn new(center: [f64; 2], radius: f64) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::validation("prior.radius", "must be positive and finite"));
        }
        if !center.iter().all(|c| c.is_finite()) {
            return Err(Error::validation("prior.center", "must be finite"));
        }
        Ok(DiskPrior { center, radius })
    }

    #[inline]
    pub fn value(&self, y: [f64; 2]) -> f64 {
        let d1 = y[0] - self.center[0];
        let d2 = y[1] - self.center[1];
        self.radius * self.radius - d1 * d1 - d2 * d2
    }

    #[inline]
    pub fn gradient(&self, y: [f64; 2]) -> [f64; 2] {
        [-2.0 * (y[0] - self.center[0]), -2.0 * (y[1] - self.center[1])]
    }

    /// Constant second partials `(d11, d12, d22)`.
    pub fn hessian(&self) -> [f64; 3] {
        [-2.0, 0.0, -2.0]
    }

    /// Whether two disks overlap (share interior points).
    pub fn overlaps(&self, other: &DiskPrior) -> bool {
        let d = (self.center[0] - other.center[0]).hypot(self.center[1] - other.center[1]);
        d < self.radius + other.radius
    }
}

/// Closed set of supported priors. The Hessian modification used by the
/// Newton solver is only valid for the disk form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LevelSetPrior {
    Disk(DiskPrior),
}

impl LevelSetPrior {
    pub fn disk(center: [f64; 2], radius: f64) -> Result<Self> {
        DiskPrior::new(center, radius).map(LevelSetPrior::Disk)
    }

    pub fn as_disk(&self) -> Result<&DiskPrior> {
        match self {
            LevelSetPrior::Disk(d) => Ok(d),
        }
    }

    pub fn value(&self, y: [f64; 2]) -> f64 {
        match self {
            LevelSetPrior::Disk(d) => d.value(y),
        }
    }

    pub fn gradient(&self, y: [f64; 2]) -> [f64; 2] {
        match self {
            LevelSetPrior::Disk(d) => d.gradient(y),
        }
    }

    pub fn hessian(&self) -> [f64; 3] {
        match self {
            LevelSetPrior::Disk(d) => d.hessian(),
        }
    }
}

/// Prior evaluated at every cell of a transformation `Y = (Y1, Y2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LsfEval {
    pub value: Vec<f64>,
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
    /// `(d11, d12, d22)`, constant for the disk prior.
    pub hessian: [f64; 3],
}

/// Evaluates `phi0 o Y` and its partials. `y` is the stacked transformation.
pub fn lsf_eval(prior: &LevelSetPrior, y: &[f64]) -> LsfEval {
    let len = y.len() / 2;
    let (y1, y2) = y.split_at(len);
    let mut value = Vec::with_capacity(len);
    let mut d1 = Vec::with_capacity(len);
    let mut d2 = Vec::with_capacity(len);
    for (a, b) in y1.iter().zip(y2) {
        let p = [*a, *b];
        let g = prior.gradient(p);
        value.push(prior.value(p));
        d1.push(g[0]);
        d2.push(g[1]);
    }
    LsfEval {
        value,
        d1,
        d2,
        hessian: prior.hessian(),
    }
}

/// `H(v) = 1/2 (1 + 2/pi atan(v / eps))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothedHeaviside {
    eps: f64,
}

impl SmoothedHeaviside {
    pub fn new(eps: f64) -> Result<Self> {
        if !(eps.is_finite() && eps > 0.0) {
            return Err(Error::validation("epsilon", format!("must be > 0, got {eps}")));
        }
        Ok(SmoothedHeaviside { eps })
    }

    pub fn epsilon(&self) -> f64 {
        self.eps
    }

    #[inline]
    pub fn value(&self, v: f64) -> f64 {
        0.5 * (1.0 + (2.0 / PI) * (v / self.eps).atan())
    }

    #[inline]
    pub fn d1(&self, v: f64) -> f64 {
        (self.eps / PI) / (v * v + self.eps * self.eps)
    }

    #[inline]
    pub fn d2(&self, v: f64) -> f64 {
        let den = v * v + self.eps * self.eps;
        (self.eps / PI) * (-2.0 * v) / (den * den)
    }
}
