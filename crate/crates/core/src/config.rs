//! Run configuration shared by the CLI and the HTTP service.

use serde::{Deserialize, Serialize};

use crate::constraint::{ConstraintEntry, ConstraintSpec, Landmark, Region};
use crate::error::{Error, Result};
use crate::grid::interpolable;
use crate::levelset::{DiskPrior, LevelSetPrior};
use crate::region_force::RegionForceConfig;
use crate::solver::{NewtonConfig, SolverConfig};

pub const DEFAULT_PRIOR_RADIUS: f64 = 0.15;
pub const MAX_LEVELS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    Basic,
    Partial,
    Multicenter,
    Selective,
    Landmark,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    pub center: [f64; 2],
    #[serde(default = "default_radius")]
    pub radius: f64,
}

fn default_radius() -> f64 {
    DEFAULT_PRIOR_RADIUS
}

impl PriorConfig {
    pub fn disk(&self) -> Result<DiskPrior> {
        DiskPrior::new(self.center, self.radius)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: Model,
    #[serde(default = "d_alpha")]
    pub alpha: f64,
    #[serde(default = "d_epsilon")]
    pub epsilon: f64,
    #[serde(default = "d_levels")]
    pub levels: usize,
    /// Side length of the finest grid; input images are resampled to it.
    #[serde(default = "d_size")]
    pub size: usize,
    #[serde(default = "d_sigma0")]
    pub sigma0: f64,
    pub prior: PriorConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior2: Option<PriorConfig>,
    #[serde(default)]
    pub constraints: Vec<ConstraintEntry>,
    #[serde(default)]
    pub landmarks: Vec<Landmark>,
    /// Number of intensity clusters; defaults to 3 for the selective model
    /// and 2 otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kmeans_k: Option<usize>,
    #[serde(default = "d_tau")]
    pub tau: f64,
    #[serde(default = "d_stop")]
    pub stop_residual: f64,
    #[serde(default = "d_max_outer")]
    pub max_outer_iters: usize,
    #[serde(default)]
    pub newton: NewtonConfig,
    #[serde(default)]
    pub seed: u64,
    /// Cluster index (means sorted ascending) assigned to each phase:
    /// `[object, background]`, or `[star object, second object, background]`
    /// for the selective model. Chosen from the prior placement when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase_clusters: Option<Vec<usize>>,
}

fn d_alpha() -> f64 {
    1e-3
}
fn d_epsilon() -> f64 {
    0.01
}
fn d_levels() -> usize {
    4
}
fn d_size() -> usize {
    256
}
fn d_sigma0() -> f64 {
    1.0
}
fn d_tau() -> f64 {
    1.0
}
fn d_stop() -> f64 {
    1e-2
}
fn d_max_outer() -> usize {
    500
}

impl RunConfig {
    /// Config with defaults for the given model, prior and one center.
    pub fn basic(prior: PriorConfig, center: [f64; 2]) -> Self {
        RunConfig {
            model: Model::Basic,
            alpha: d_alpha(),
            epsilon: d_epsilon(),
            levels: d_levels(),
            size: d_size(),
            sigma0: d_sigma0(),
            prior,
            prior2: None,
            constraints: vec![ConstraintEntry {
                center,
                region: Region::All,
            }],
            landmarks: Vec::new(),
            kmeans_k: None,
            tau: d_tau(),
            stop_residual: d_stop(),
            max_outer_iters: d_max_outer(),
            newton: NewtonConfig::default(),
            seed: 0,
            phase_clusters: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn k(&self) -> usize {
        self.kmeans_k
            .unwrap_or(if self.model == Model::Selective { 3 } else { 2 })
    }

    pub fn solver(&self) -> SolverConfig {
        SolverConfig {
            alpha: self.alpha,
            epsilon: self.epsilon,
            sigma0: self.sigma0,
            residual_tol: self.stop_residual,
            newton: self.newton,
            max_outer_iters: self.max_outer_iters,
            ..SolverConfig::default()
        }
    }

    pub fn region_force(&self) -> RegionForceConfig {
        RegionForceConfig {
            k: self.k(),
            tau: self.tau,
            ..RegionForceConfig::default()
        }
    }

    pub fn constraint_spec(&self) -> ConstraintSpec {
        ConstraintSpec {
            entries: self.constraints.clone(),
            landmarks: self.landmarks.clone(),
        }
    }

    pub fn priors(&self) -> Result<Vec<LevelSetPrior>> {
        let mut out = vec![LevelSetPrior::Disk(self.prior.disk()?)];
        if let Some(p2) = &self.prior2 {
            out.push(LevelSetPrior::Disk(p2.disk()?));
        }
        Ok(out)
    }

    /// Checks every field and the cross-field rules of the chosen model.
    pub fn validate(&self) -> Result<()> {
        self.solver().validate()?;
        self.region_force().validate()?;
        if !(1..=MAX_LEVELS).contains(&self.levels) {
            return Err(Error::validation("levels", format!("must be 1..={MAX_LEVELS}")));
        }
        let coarse = self.size >> (self.levels - 1);
        if self.size < 4 || coarse << (self.levels - 1) != self.size || coarse < 4 {
            return Err(Error::validation(
                "size",
                format!("{} must be divisible by 2^(levels-1) with a coarsest grid of at least 4", self.size),
            ));
        }
        let prior = LevelSetPrior::Disk(self.prior.disk()?);
        self.constraint_spec().validate(&prior)?;
        for (i, l) in self.landmarks.iter().enumerate() {
            if !interpolable(coarse, l.p) {
                return Err(Error::validation(
                    format!("landmarks[{i}].p"),
                    format!("must lie in [h/2, 1-h/2]^2 of the coarsest {coarse}x{coarse} grid"),
                ));
            }
        }

        let all_regions = self.constraints.iter().all(|c| c.region == Region::All);
        match self.model {
            Model::Basic | Model::Landmark | Model::Selective => {
                if self.constraints.len() != 1 || !all_regions {
                    return Err(Error::validation(
                        "constraints",
                        "this model takes exactly one center with region \"all\"",
                    ));
                }
            }
            Model::Partial => {
                if self.constraints.len() != 1 {
                    return Err(Error::validation("constraints", "partial model takes exactly one center"));
                }
            }
            Model::Multicenter => {}
        }
        if self.model == Model::Landmark && self.landmarks.is_empty() {
            return Err(Error::validation("landmarks", "landmark model requires at least one landmark"));
        }
        match (self.model, &self.prior2) {
            (Model::Selective, None) => {
                return Err(Error::validation("prior2", "selective model requires a second prior"));
            }
            (Model::Selective, Some(p2)) => {
                if p2.disk()?.overlaps(&self.prior.disk()?) {
                    return Err(Error::validation("prior2", "must be disjoint from prior"));
                }
                if self.k() != 3 {
                    return Err(Error::validation("kmeans_k", "selective model needs 3 clusters"));
                }
            }
            (_, Some(_)) => {
                return Err(Error::validation("prior2", "only used by the selective model"));
            }
            (_, None) => {
                if self.k() != 2 {
                    return Err(Error::validation("kmeans_k", "two-phase models need 2 clusters"));
                }
            }
        }
        if let Some(pc) = &self.phase_clusters {
            let k = self.k();
            let mut seen = vec![false; k];
            if pc.len() != k || pc.iter().any(|&c| c >= k || std::mem::replace(&mut seen[c], true)) {
                return Err(Error::validation(
                    "phase_clusters",
                    format!("must be a permutation of 0..{k}"),
                ));
            }
        }
        Ok(())
    }
}
