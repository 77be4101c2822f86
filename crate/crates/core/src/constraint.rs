//! Star-shape constraint operators, residuals, landmark residuals and a
//! discrete visibility check for output masks.
//!
//! For a center `c` the constraint row at cell `k` reads
//! `(W v)_k = (x1_k - c1) (A1 v)_k + (x2_k - c2) (A2 v)_k <= 0`, enforced on
//! the cells whose centers fall inside the entry's region.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::grid::{bilinear_eval, interpolable, DenseMatrix, DiffOperators, ImageGrid};
use crate::levelset::LevelSetPrior;

/// Maximum `|phi0(q)|` accepted for a landmark target.
pub const LANDMARK_TARGET_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RegionRepr", into = "RegionRepr")]
pub enum Region {
    All,
    Polygon(Polygon),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RegionRepr {
    Name(String),
    Polygon(PolygonRepr),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolygonRepr {
    polygon: Vec<[f64; 2]>,
}

impl TryFrom<RegionRepr> for Region {
    type Error = String;

    fn try_from(r: RegionRepr) -> std::result::Result<Self, String> {
        match r {
            RegionRepr::Name(s) if s == "all" => Ok(Region::All),
            RegionRepr::Name(s) => Err(format!("unknown region `{s}`, expected \"all\" or {{\"polygon\": ...}}")),
            RegionRepr::Polygon(p) => Ok(Region::Polygon(Polygon { vertices: p.polygon })),
        }
    }
}

impl From<Region> for RegionRepr {
    fn from(r: Region) -> Self {
        match r {
            Region::All => RegionRepr::Name("all".into()),
            Region::Polygon(p) => RegionRepr::Polygon(PolygonRepr { polygon: p.vertices }),
        }
    }
}

impl Region {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        match self {
            Region::All => true,
            Region::Polygon(poly) => poly.contains(p),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    pub vertices: Vec<[f64; 2]>,
}

impl Polygon {
    pub fn new(vertices: Vec<[f64; 2]>) -> Result<Self> {
        let p = Polygon { vertices };
        p.validate("polygon")?;
        Ok(p)
    }

    pub fn validate(&self, field: &str) -> Result<()> {
        let v = &self.vertices;
        if v.len() < 3 {
            return Err(Error::validation(field, format!("need >= 3 vertices, got {}", v.len())));
        }
        if let Some(p) = v.iter().find(|p| !in_unit_square(**p)) {
            return Err(Error::validation(field, format!("vertex {p:?} outside [0,1]^2")));
        }
        let m = v.len();
        for a in 0..m {
            for b in a + 1..m {
                let adjacent = b == a + 1 || (a == 0 && b == m - 1);
                if !adjacent && segments_intersect(v[a], v[(a + 1) % m], v[b], v[(b + 1) % m]) {
                    return Err(Error::validation(field, "polygon is self-intersecting"));
                }
            }
        }
        Ok(())
    }

    /// Even-odd point-in-polygon test.
    pub fn contains(&self, p: [f64; 2]) -> bool {
        let v = &self.vertices;
        let mut inside = false;
        let mut j = v.len() - 1;
        for i in 0..v.len() {
            let (a, b) = (v[i], v[j]);
            if (a[1] > p[1]) != (b[1] > p[1]) {
                let x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
                if p[0] < x {
                    inside = !inside;
                }
            }
            j = i;
        }
        inside
    }
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn segments_intersect(p1: [f64; 2], p2: [f64; 2], q1: [f64; 2], q2: [f64; 2]) -> bool {
    let d1 = cross(q1, q2, p1);
    let d2 = cross(q1, q2, p2);
    let d3 = cross(p1, p2, q1);
    let d4 = cross(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    let on = |a: [f64; 2], b: [f64; 2], p: [f64; 2], d: f64| {
        d == 0.0
            && p[0] >= a[0].min(b[0])
            && p[0] <= a[0].max(b[0])
            && p[1] >= a[1].min(b[1])
            && p[1] <= a[1].max(b[1])
    };
    on(q1, q2, p1, d1) || on(q1, q2, p2, d2) || on(p1, p2, q1, d3) || on(p1, p2, q2, d4)
}

fn in_unit_square(p: [f64; 2]) -> bool {
    p.iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintEntry {
    pub center: [f64; 2],
    #[serde(default = "region_all")]
    pub region: Region,
}

fn region_all() -> Region {
    Region::All
}

/// Landmark pair: the transformation should map image point `p` onto `q`,
/// a point on the prior's zero level set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Landmark {
    pub p: [f64; 2],
    pub q: [f64; 2],
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSpec {
    pub entries: Vec<ConstraintEntry>,
    pub landmarks: Vec<Landmark>,
}

impl ConstraintSpec {
    pub fn single(center: [f64; 2]) -> Self {
        ConstraintSpec {
            entries: vec![ConstraintEntry {
                center,
                region: Region::All,
            }],
            landmarks: Vec::new(),
        }
    }

    pub fn validate(&self, prior: &LevelSetPrior) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::validation("constraints", "at least one center is required"));
        }
        for (i, e) in self.entries.iter().enumerate() {
            if !in_unit_square(e.center) {
                return Err(Error::validation(
                    format!("constraints[{i}].center"),
                    "must lie in [0,1]^2",
                ));
            }
            if let Region::Polygon(p) = &e.region {
                p.validate(&format!("constraints[{i}].region"))?;
            }
        }
        for (i, l) in self.landmarks.iter().enumerate() {
            if !in_unit_square(l.p) || !in_unit_square(l.q) {
                return Err(Error::validation(format!("landmarks[{i}]"), "points must lie in [0,1]^2"));
            }
            let v = prior.value(l.q);
            if v.abs() > LANDMARK_TARGET_TOL {
                return Err(Error::validation(
                    format!("landmarks[{i}].q"),
                    format!("not on the prior boundary (phi0(q) = {v:.3e})"),
                ));
            }
        }
        Ok(())
    }
}

/// One center's constraint rows, restricted to a region.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintBlock {
    pub center: [f64; 2],
    pub mask: Vec<bool>,
    coef1: Vec<f64>,
    coef2: Vec<f64>,
}

impl ConstraintBlock {
    pub fn new(grid: &ImageGrid, center: [f64; 2], region: &Region) -> Self {
        let mask: Vec<bool> = (0..grid.len()).map(|k| region.contains(grid.center(k))).collect();
        let coef = |x: &[f64], c: f64| -> Vec<f64> {
            x.iter().zip(&mask).map(|(x, m)| if *m { x - c } else { 0.0 }).collect()
        };
        ConstraintBlock {
            center,
            coef1: coef(grid.x1(), center[0]),
            coef2: coef(grid.x2(), center[1]),
            mask,
        }
    }

    pub fn masked_rows(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    /// `out = W v`. `scratch` must hold two fields of the grid size.
    pub fn apply(&self, ops: &DiffOperators, v: &[f64], out: &mut [f64], scratch: &mut [f64]) {
        let (s1, s2) = scratch.split_at_mut(v.len());
        ops.a1_into(v, s1);
        ops.a2_into(v, s2);
        for k in 0..v.len() {
            out[k] = self.coef1[k] * s1[k] + self.coef2[k] * s2[k];
        }
    }

    /// `out = W^t r`.
    pub fn apply_t(&self, ops: &DiffOperators, r: &[f64], out: &mut [f64], scratch: &mut [f64]) {
        let len = r.len();
        let (s1, rest) = scratch.split_at_mut(len);
        let s2 = &mut rest[..len];
        for k in 0..len {
            s1[k] = self.coef1[k] * r[k];
        }
        ops.a1t_into(s1, out);
        for k in 0..len {
            s1[k] = self.coef2[k] * r[k];
        }
        ops.a2t_into(s1, s2);
        for k in 0..len {
            out[k] += s2[k];
        }
    }

    pub fn apply_vec(&self, ops: &DiffOperators, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        let mut scratch = vec![0.0; 2 * v.len()];
        self.apply(ops, v, &mut out, &mut scratch);
        out
    }

    pub fn apply_t_vec(&self, ops: &DiffOperators, r: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; r.len()];
        let mut scratch = vec![0.0; 2 * r.len()];
        self.apply_t(ops, r, &mut out, &mut scratch);
        out
    }

    /// Dense factors `(Diag(d1), Diag(d2))` with `W = Diag(d1) A1 + Diag(d2) A2`.
    pub fn dense_factors(&self) -> (DenseMatrix, DenseMatrix) {
        (DenseMatrix::diag(&self.coef1), DenseMatrix::diag(&self.coef2))
    }
}

pub fn build_constraint_blocks(grid: &ImageGrid, spec: &ConstraintSpec) -> Result<Vec<ConstraintBlock>> {
    for (i, e) in spec.entries.iter().enumerate() {
        if !in_unit_square(e.center) {
            return Err(Error::validation(format!("constraints[{i}].center"), "must lie in [0,1]^2"));
        }
        if let Region::Polygon(p) = &e.region {
            p.validate(&format!("constraints[{i}].region"))?;
        }
    }
    Ok(spec
        .entries
        .iter()
        .map(|e| ConstraintBlock::new(grid, e.center, &e.region))
        .collect())
}

/// `r_b = W_b (phi0 o Y) - Q_b` on masked rows of each block, zero elsewhere.
pub fn constraint_residual(
    blocks: &[ConstraintBlock],
    ops: &DiffOperators,
    phi: &[f64],
    q: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    check_len("q blocks", blocks.len(), q.len())?;
    blocks
        .iter()
        .zip(q)
        .map(|(b, qb)| {
            check_len("phi", b.mask.len(), phi.len())?;
            check_len("q", b.mask.len(), qb.len())?;
            let mut r = b.apply_vec(ops, phi);
            for ((r, q), m) in r.iter_mut().zip(qb).zip(&b.mask) {
                *r = if *m { *r - q } else { 0.0 };
            }
            Ok(r)
        })
        .collect()
}

/// Infinity norm over all masked rows of all blocks.
pub fn residual_inf(blocks: &[ConstraintBlock], r: &[Vec<f64>]) -> f64 {
    blocks
        .iter()
        .zip(r)
        .flat_map(|(b, r)| r.iter().zip(&b.mask).filter(|(_, m)| **m).map(|(v, _)| v.abs()))
        .fold(0.0, f64::max)
}

/// Per-landmark `y(p_k) - q_k` with `y(p_k)` bilinearly interpolated.
pub fn landmark_residual(y: &[f64], n: usize, landmarks: &[Landmark]) -> Result<Vec<[f64; 2]>> {
    check_len("Y", 2 * n * n, y.len())?;
    let (y1, y2) = y.split_at(n * n);
    landmarks
        .iter()
        .enumerate()
        .map(|(i, l)| {
            if !interpolable(n, l.p) {
                return Err(Error::validation(
                    format!("landmarks[{i}].p"),
                    format!("{:?} outside the interpolable box [h/2, 1-h/2]^2", l.p),
                ));
            }
            Ok([bilinear_eval(y1, n, l.p) - l.q[0], bilinear_eval(y2, n, l.p) - l.q[1]])
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StarReport {
    pub center: [f64; 2],
    pub is_star: bool,
    /// Cells (as `[i, j]`) that are not visible from the center or that lie
    /// outside the center's connected component.
    pub violating_cells: Vec<[usize; 2]>,
}

/// Discrete visibility check: every in-mask cell `x` must see the center,
/// meaning every cell whose center lies within `h/2` of the segment `[c, x]`
/// is in the mask. Cells outside the center's 8-connected component are
/// violations as well.
pub fn verify_star_shape(mask: &[bool], n: usize, center: [f64; 2]) -> Result<StarReport> {
    verify_star_shape_in(mask, n, center, None)
}

/// As [`verify_star_shape`], checking only in-mask cells where `within` holds.
pub fn verify_star_shape_in(
    mask: &[bool],
    n: usize,
    center: [f64; 2],
    within: Option<&[bool]>,
) -> Result<StarReport> {
    check_len("mask", n * n, mask.len())?;
    let grid = ImageGrid::blank(n)?;
    let c_cell = grid.cell_of(center);
    if !mask[c_cell] {
        return Err(Error::CenterOutsideMask(center[0], center[1]));
    }
    let h = grid.h();
    let component = connected_component(mask, n, c_cell);
    let mut violating = Vec::new();
    for k in 0..mask.len() {
        if !mask[k] || within.is_some_and(|w| !w[k]) {
            continue;
        }
        if !component[k] || !visible(mask, &grid, center, grid.center(k), h) {
            let (i, j) = grid.decode(k);
            violating.push([i, j]);
        }
    }
    Ok(StarReport {
        center,
        is_star: violating.is_empty(),
        violating_cells: violating,
    })
}

fn visible(mask: &[bool], grid: &ImageGrid, c: [f64; 2], x: [f64; 2], h: f64) -> bool {
    let n = grid.n() as isize;
    let len = (x[0] - c[0]).hypot(x[1] - c[1]);
    let steps = (len / (0.5 * h)).ceil().max(1.0) as usize;
    let tol2 = 0.25 * h * h;
    for s in 0..=steps {
        let t = s as f64 / steps as f64;
        let p = [c[0] + t * (x[0] - c[0]), c[1] + t * (x[1] - c[1])];
        let (ci, cj) = grid.decode(grid.cell_of(p));
        for dj in -1..=1isize {
            for di in -1..=1isize {
                let (i, j) = (ci as isize + di, cj as isize + dj);
                if i < 0 || j < 0 || i >= n || j >= n {
                    continue;
                }
                let k = grid.index(i as usize, j as usize);
                if !mask[k] && dist2_to_segment(grid.center(k), c, x) <= tol2 {
                    return false;
                }
            }
        }
    }
    true
}

pub(crate) fn dist2_to_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let l2 = d[0] * d[0] + d[1] * d[1];
    let t = if l2 == 0.0 {
        0.0
    } else {
        (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / l2).clamp(0.0, 1.0)
    };
    let e = [a[0] + t * d[0] - p[0], a[1] + t * d[1] - p[1]];
    e[0] * e[0] + e[1] * e[1]
}

fn connected_component(mask: &[bool], n: usize, seed: usize) -> Vec<bool> {
    let mut seen = vec![false; mask.len()];
    let mut stack = vec![seed];
    seen[seed] = true;
    while let Some(k) = stack.pop() {
        let (i, j) = ((k % n) as isize, (k / n) as isize);
        for dj in -1..=1isize {
            for di in -1..=1isize {
                let (a, b) = (i + di, j + dj);
                if a < 0 || b < 0 || a >= n as isize || b >= n as isize {
                    continue;
                }
                let m = a as usize + b as usize * n;
                if mask[m] && !seen[m] {
                    seen[m] = true;
                    stack.push(m);
                }
            }
        }
    }
    seen
}
