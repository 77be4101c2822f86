use crate::constraint::{ConstraintBlock, Landmark};
use crate::error::{check_len, Error, Result};
use crate::grid::{bilinear_stencil, DiffOperators, ImageGrid};
use crate::levelset::{DiskPrior, LevelSetPrior, SmoothedHeaviside};

/// One deformed level set in the fidelity term, weighted per cell by
/// `s = f_phase - f_background`.
#[derive(Debug, Clone)]
pub struct PhaseTerm {
    pub prior: LevelSetPrior,
    pub s: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LandmarkTerm {
    pub landmark: Landmark,
    pub stencil: [(usize, f64); 4],
}

/// Everything the transformation subproblem needs at one pyramid level.
///
/// The fidelity is `h^2 sum_k [ sum_m s_m H(phi_m(y_k)) + base_k ]`. The
/// star-shape constraint acts on the first phase's level set.
#[derive(Debug, Clone)]
pub struct LevelProblem {
    pub grid: ImageGrid,
    pub ops: DiffOperators,
    pub heaviside: SmoothedHeaviside,
    pub alpha: f64,
    pub phases: Vec<PhaseTerm>,
    pub base: Vec<f64>,
    pub blocks: Vec<ConstraintBlock>,
    pub landmarks: Vec<LandmarkTerm>,
}

/// Penalty-side variables held fixed during a transformation update.
#[derive(Debug, Clone, Copy)]
pub struct Penalty<'a> {
    pub q: &'a [Vec<f64>],
    pub lambda: &'a [Vec<f64>],
    pub sigma: f64,
    pub lm_mult: &'a [[f64; 2]],
    pub lm_weight: f64,
}

/// Decomposition of the subproblem objective.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Energy {
    pub fidelity: f64,
    pub regularizer: f64,
    pub augmented: f64,
    pub landmark: f64,
}

impl Energy {
    pub fn total(&self) -> f64 {
        self.fidelity + self.regularizer + self.augmented + self.landmark
    }

    /// Model energy without the augmented-Lagrangian and landmark penalties.
    pub fn model(&self) -> f64 {
        self.fidelity + self.regularizer
    }
}

impl LevelProblem {
    /// Two-phase problem from forces of the object and background phases.
    pub fn two_phase(
        grid: ImageGrid,
        prior: LevelSetPrior,
        f_object: &[f64],
        f_background: &[f64],
        alpha: f64,
        epsilon: f64,
        blocks: Vec<ConstraintBlock>,
        landmarks: &[Landmark],
    ) -> Result<Self> {
        let s = f_object.iter().zip(f_background).map(|(a, b)| a - b).collect();
        Self::new(
            grid,
            vec![PhaseTerm { prior, s }],
            f_background.to_vec(),
            alpha,
            epsilon,
            blocks,
            landmarks,
        )
    }

    pub fn new(
        grid: ImageGrid,
        phases: Vec<PhaseTerm>,
        base: Vec<f64>,
        alpha: f64,
        epsilon: f64,
        blocks: Vec<ConstraintBlock>,
        landmarks: &[Landmark],
    ) -> Result<Self> {
        let len = grid.len();
        if phases.is_empty() {
            return Err(Error::validation("phases", "need at least one level set"));
        }
        for p in &phases {
            check_len("phase force", len, p.s.len())?;
            p.prior.as_disk()?;
        }
        check_len("base force", len, base.len())?;
        for b in &blocks {
            check_len("constraint mask", len, b.mask.len())?;
        }
        let n = grid.n();
        let landmarks = landmarks
            .iter()
            .map(|l| LandmarkTerm {
                landmark: *l,
                stencil: bilinear_stencil(n, l.p),
            })
            .collect();
        Ok(LevelProblem {
            ops: DiffOperators::new(n)?,
            heaviside: SmoothedHeaviside::new(epsilon)?,
            grid,
            alpha,
            phases,
            base,
            blocks,
            landmarks,
        })
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Disk prior carrying the star-shape constraint.
    pub fn constrained_prior(&self) -> Result<&DiskPrior> {
        self.phases[0].prior.as_disk()
    }

    /// Values of the constrained level set composed with `y`.
    pub fn phi(&self, y: &[f64]) -> Vec<f64> {
        let len = self.len();
        let prior = &self.phases[0].prior;
        (0..len).map(|k| prior.value([y[k], y[k + len]])).collect()
    }

    /// `W_b (phi0 o Y)` for every block.
    pub fn constraint_values(&self, phi: &[f64]) -> Vec<Vec<f64>> {
        self.blocks.iter().map(|b| b.apply_vec(&self.ops, phi)).collect()
    }

    pub fn landmark_errors(&self, y: &[f64]) -> Vec<[f64; 2]> {
        let len = self.len();
        self.landmarks
            .iter()
            .map(|t| {
                let mut e = [-t.landmark.q[0], -t.landmark.q[1]];
                for &(k, w) in &t.stencil {
                    e[0] += w * y[k];
                    e[1] += w * y[k + len];
                }
                e
            })
            .collect()
    }

    /// `sigma * S_b = sigma (W_b phi - Q_b) + Lambda_b` on masked rows.
    fn scaled_slack(&self, phi: &[f64], pen: &Penalty) -> Vec<Vec<f64>> {
        self.constraint_values(phi)
            .into_iter()
            .zip(&self.blocks)
            .zip(pen.q.iter().zip(pen.lambda))
            .map(|((mut wv, b), (q, l))| {
                for k in 0..wv.len() {
                    wv[k] = if b.mask[k] { pen.sigma * (wv[k] - q[k]) + l[k] } else { 0.0 };
                }
                wv
            })
            .collect()
    }

    fn check_penalty(&self, y: &[f64], pen: &Penalty) -> Result<()> {
        check_len("Y", 2 * self.len(), y.len())?;
        check_len("Q blocks", self.blocks.len(), pen.q.len())?;
        check_len("Lambda blocks", self.blocks.len(), pen.lambda.len())?;
        check_len("landmark multipliers", self.landmarks.len(), pen.lm_mult.len())?;
        Ok(())
    }

    pub fn objective(&self, y: &[f64], pen: &Penalty) -> Result<Energy> {
        self.check_penalty(y, pen)?;
        let len = self.len();
        let h2 = self.grid.h() * self.grid.h();
        let (y1, y2) = y.split_at(len);

        let mut fid = 0.0;
        for k in 0..len {
            let mut cell = self.base[k];
            for ph in &self.phases {
                cell += ph.s[k] * self.heaviside.value(ph.prior.value([y1[k], y2[k]]));
            }
            fid += cell;
        }
        let fidelity = h2 * fid;
        finite(fidelity, "fidelity")?;

        let u1: Vec<f64> = y1.iter().zip(self.grid.x1()).map(|(a, b)| a - b).collect();
        let u2: Vec<f64> = y2.iter().zip(self.grid.x2()).map(|(a, b)| a - b).collect();
        let regularizer =
            0.5 * self.alpha * h2 * (self.ops.gradient_energy(&u1)? + self.ops.gradient_energy(&u2)?);
        finite(regularizer, "regularizer")?;

        let augmented = if pen.sigma > 0.0 && !self.blocks.is_empty() {
            let phi = self.phi(y);
            let s2: f64 = self
                .scaled_slack(&phi, pen)
                .iter()
                .flat_map(|s| s.iter().map(|v| v * v))
                .sum();
            0.5 * h2 * s2 / pen.sigma
        } else {
            0.0
        };
        finite(augmented, "augmented")?;

        let landmark = if pen.lm_weight > 0.0 {
            self.landmark_errors(y)
                .iter()
                .zip(pen.lm_mult)
                .map(|(e, m)| {
                    let a = pen.lm_weight * e[0] + m[0];
                    let b = pen.lm_weight * e[1] + m[1];
                    (a * a + b * b) / (2.0 * pen.lm_weight)
                })
                .sum()
        } else {
            0.0
        };
        finite(landmark, "landmark")?;

        Ok(Energy {
            fidelity,
            regularizer,
            augmented,
            landmark,
        })
    }

    /// Exact gradient of [`objective`](Self::objective).
    pub fn gradient(&self, y: &[f64], pen: &Penalty) -> Result<Vec<f64>> {
        self.check_penalty(y, pen)?;
        let len = self.len();
        let h2 = self.grid.h() * self.grid.h();
        let (y1, y2) = y.split_at(len);
        let mut g = vec![0.0; 2 * len];

        for ph in &self.phases {
            let d = ph.prior.as_disk()?;
            for k in 0..len {
                let p = [y1[k], y2[k]];
                let c = h2 * ph.s[k] * self.heaviside.d1(d.value(p));
                let grad = d.gradient(p);
                g[k] += c * grad[0];
                g[k + len] += c * grad[1];
            }
        }

        for (axis, x) in [self.grid.x1(), self.grid.x2()].into_iter().enumerate() {
            let u: Vec<f64> = y[axis * len..(axis + 1) * len].iter().zip(x).map(|(a, b)| a - b).collect();
            let lap = self.ops.laplacian_like(&u)?;
            for k in 0..len {
                g[axis * len + k] += self.alpha * h2 * lap[k];
            }
        }

        if pen.sigma > 0.0 && !self.blocks.is_empty() {
            let d = self.constrained_prior()?;
            let phi = self.phi(y);
            let mut t = vec![0.0; len];
            let mut tmp = vec![0.0; len];
            let mut scratch = vec![0.0; 2 * len];
            for (b, s) in self.blocks.iter().zip(self.scaled_slack(&phi, pen)) {
                b.apply_t(&self.ops, &s, &mut tmp, &mut scratch);
                for k in 0..len {
                    t[k] += tmp[k];
                }
            }
            for k in 0..len {
                let grad = d.gradient([y1[k], y2[k]]);
                g[k] += h2 * grad[0] * t[k];
                g[k + len] += h2 * grad[1] * t[k];
            }
        }

        if pen.lm_weight > 0.0 {
            for ((t, e), m) in self.landmarks.iter().zip(self.landmark_errors(y)).zip(pen.lm_mult) {
                let a = pen.lm_weight * e[0] + m[0];
                let b = pen.lm_weight * e[1] + m[1];
                for &(k, w) in &t.stencil {
                    g[k] += w * a;
                    g[k + len] += w * b;
                }
            }
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { component: "gradient" });
        }
        Ok(g)
    }

    /// Positive semidefinite model of the Hessian at `y`.
    ///
    /// Per cell the fidelity block is
    /// `4 max(s H'', 0) (y - b)(y - b)^t + 2 max(-s, 0) H' I`, i.e. the exact
    /// fidelity Hessian with each indefinite contribution clamped at zero.
    /// The augmented term keeps only its Gauss-Newton part
    /// `Diag(v) W^t W Diag(v)` with `v = grad phi0(y)`.
    pub fn hessian(&self, y: &[f64], pen: &Penalty) -> Result<ModifiedHessian<'_>> {
        self.check_penalty(y, pen)?;
        let len = self.len();
        let h2 = self.grid.h() * self.grid.h();
        let (y1, y2) = y.split_at(len);
        let mut fid = vec![[0.0; 3]; len];
        for ph in &self.phases {
            let d = ph.prior.as_disk()?;
            for k in 0..len {
                let p = [y1[k], y2[k]];
                let v = d.value(p);
                let s = ph.s[k];
                let curv = 4.0 * (s * self.heaviside.d2(v)).max(0.0);
                let iso = 2.0 * (-s).max(0.0) * self.heaviside.d1(v);
                let r = [p[0] - d.center[0], p[1] - d.center[1]];
                fid[k][0] += h2 * (curv * r[0] * r[0] + iso);
                fid[k][1] += h2 * curv * r[0] * r[1];
                fid[k][2] += h2 * (curv * r[1] * r[1] + iso);
            }
        }
        let (v1, v2) = if pen.sigma > 0.0 && !self.blocks.is_empty() {
            let d = self.constrained_prior()?;
            (0..len)
                .map(|k| {
                    let g = d.gradient([y1[k], y2[k]]);
                    (g[0], g[1])
                })
                .unzip()
        } else {
            (Vec::new(), Vec::new())
        };
        if fid.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { component: "hessian" });
        }
        Ok(ModifiedHessian {
            problem: self,
            fid,
            v1,
            v2,
            sigma_h2: pen.sigma * h2,
            lm_weight: pen.lm_weight.max(0.0),
        })
    }
}

fn finite(v: f64, component: &'static str) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite { component })
    }
}

/// Matrix-free application of the modified Hessian.
pub struct ModifiedHessian<'a> {
    problem: &'a LevelProblem,
    fid: Vec<[f64; 3]>,
    v1: Vec<f64>,
    v2: Vec<f64>,
    sigma_h2: f64,
    lm_weight: f64,
}

impl ModifiedHessian<'_> {
    pub fn apply(&self, p: &[f64], out: &mut [f64]) {
        let pr = self.problem;
        let len = pr.len();
        let h2 = pr.grid.h() * pr.grid.h();
        let (p1, p2) = p.split_at(len);
        let (o1, o2) = out.split_at_mut(len);

        let l1 = pr.ops.laplacian_like(p1).expect("length checked");
        let l2 = pr.ops.laplacian_like(p2).expect("length checked");
        let ah2 = pr.alpha * h2;
        for k in 0..len {
            let m = &self.fid[k];
            o1[k] = m[0] * p1[k] + m[1] * p2[k] + ah2 * l1[k];
            o2[k] = m[1] * p1[k] + m[2] * p2[k] + ah2 * l2[k];
        }

        if !self.v1.is_empty() {
            let z: Vec<f64> = (0..len).map(|k| self.v1[k] * p1[k] + self.v2[k] * p2[k]).collect();
            let mut wz = vec![0.0; len];
            let mut wtwz = vec![0.0; len];
            let mut t = vec![0.0; len];
            let mut scratch = vec![0.0; 2 * len];
            for b in &pr.blocks {
                b.apply(&pr.ops, &z, &mut wz, &mut scratch);
                b.apply_t(&pr.ops, &wz, &mut wtwz, &mut scratch);
                for k in 0..len {
                    t[k] += wtwz[k];
                }
            }
            for k in 0..len {
                o1[k] += self.sigma_h2 * self.v1[k] * t[k];
                o2[k] += self.sigma_h2 * self.v2[k] * t[k];
            }
        }

        if self.lm_weight > 0.0 {
            for term in &pr.landmarks {
                let (mut a, mut b) = (0.0, 0.0);
                for &(k, w) in &term.stencil {
                    a += w * p1[k];
                    b += w * p2[k];
                }
                for &(k, w) in &term.stencil {
                    o1[k] += self.lm_weight * w * a;
                    o2[k] += self.lm_weight * w * b;
                }
            }
        }
    }

    pub fn apply_vec(&self, p: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; p.len()];
        self.apply(p, &mut out);
        out
    }
}
