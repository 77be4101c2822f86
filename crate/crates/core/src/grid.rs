//! Cell-centered discretization of the unit square and forward-difference
//! gradient operators with a Neumann boundary.
//!
//! Fields are stored in lexicographic order `k = i + j * n` (0-based), where
//! `i` indexes the first coordinate `x1` and `j` the second coordinate `x2`.
//! Cell `(i, j)` has center `((i + 1/2) h, (j + 1/2) h)` with `h = 1 / n`.

use crate::error::{check_len, Error, Result};

/// Largest `n` for which dense operator assembly is allowed.
pub const DENSE_MAX_N: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    n: usize,
    h: f64,
    x1: Vec<f64>,
    x2: Vec<f64>,
    intensity: Vec<f64>,
}

impl ImageGrid {
    /// Builds a grid of `n x n` cells carrying the given intensities.
    pub fn new(n: usize, intensity: Vec<f64>) -> Result<Self> {
        if n < 2 {
            return Err(Error::validation("n", format!("need n >= 2, got {n}")));
        }
        check_len("intensity", n * n, intensity.len())?;
        if let Some((k, v)) = intensity
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::validation(
                format!("intensity[{k}]"),
                format!("value {v} outside [0, 1]"),
            ));
        }
        let (x1, x2) = cell_centers(n);
        Ok(ImageGrid {
            n,
            h: 1.0 / n as f64,
            x1,
            x2,
            intensity,
        })
    }

    /// Grid with every intensity set to zero; used where only geometry matters.
    pub fn blank(n: usize) -> Result<Self> {
        Self::new(n, vec![0.0; n * n])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn x1(&self) -> &[f64] {
        &self.x1
    }

    pub fn x2(&self) -> &[f64] {
        &self.x2
    }

    pub fn intensity(&self) -> &[f64] {
        &self.intensity
    }

    /// Stacked identity transformation `X = (X1, X2)`.
    pub fn identity(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.len());
        out.extend_from_slice(&self.x1);
        out.extend_from_slice(&self.x2);
        out
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i + j * self.n
    }

    pub fn decode(&self, k: usize) -> (usize, usize) {
        (k % self.n, k / self.n)
    }

    pub fn center(&self, k: usize) -> [f64; 2] {
        [self.x1[k], self.x2[k]]
    }

    /// Index of the cell containing `p`, clamped to the grid.
    pub fn cell_of(&self, p: [f64; 2]) -> usize {
        let clamp = |v: f64| ((v * self.n as f64).floor().max(0.0) as usize).min(self.n - 1);
        self.index(clamp(p[0]), clamp(p[1]))
    }
}

fn cell_centers(n: usize) -> (Vec<f64>, Vec<f64>) {
    let h = 1.0 / n as f64;
    let mut x1 = Vec::with_capacity(n * n);
    let mut x2 = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            x1.push((i as f64 + 0.5) * h);
            x2.push((j as f64 + 0.5) * h);
        }
    }
    (x1, x2)
}

/// Bilinear interpolation stencil of a cell-centered field at `p`.
///
/// Outside the box spanned by the outermost cell centers the stencil extends
/// the boundary cells linearly, so affine fields are reproduced exactly
/// everywhere.
pub fn bilinear_stencil(n: usize, p: [f64; 2]) -> [(usize, f64); 4] {
    let axis = |v: f64| {
        let s = v * n as f64 - 0.5;
        let i0 = (s.floor().max(0.0) as usize).min(n - 2);
        (i0, s - i0 as f64)
    };
    let (i0, t) = axis(p[0]);
    let (j0, u) = axis(p[1]);
    let k = i0 + j0 * n;
    [
        (k, (1.0 - t) * (1.0 - u)),
        (k + 1, t * (1.0 - u)),
        (k + n, (1.0 - t) * u),
        (k + n + 1, t * u),
    ]
}

pub fn bilinear_eval(field: &[f64], n: usize, p: [f64; 2]) -> f64 {
    bilinear_stencil(n, p)
        .iter()
        .map(|&(k, w)| w * field[k])
        .sum()
}

/// True when `p` lies in the box spanned by the outermost cell centers.
pub fn interpolable(n: usize, p: [f64; 2]) -> bool {
    let h = 1.0 / n as f64;
    let (lo, hi) = (0.5 * h, 1.0 - 0.5 * h);
    p.iter().all(|v| (lo..=hi).contains(v))
}

/// Matrix-free forward differences `A1`, `A2` and their adjoints.
///
/// The last difference along each axis is zero (Neumann boundary). Each
/// application accumulates terms in ascending column order so that results
/// agree bit-for-bit with a dense row-by-row product.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffOperators {
    n: usize,
    inv_h: f64,
}

impl DiffOperators {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::validation("n", format!("need n >= 2, got {n}")));
        }
        Ok(DiffOperators {
            n,
            inv_h: n as f64,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Difference along the first axis (`i`, stride 1).
    pub fn a1_into(&self, v: &[f64], out: &mut [f64]) {
        self.forward(v, out, 1, |k| k % self.n);
    }

    /// Difference along the second axis (`j`, stride `n`).
    pub fn a2_into(&self, v: &[f64], out: &mut [f64]) {
        self.forward(v, out, self.n, |k| k / self.n);
    }

    pub fn a1t_into(&self, g: &[f64], out: &mut [f64]) {
        self.adjoint(g, out, 1, |k| k % self.n);
    }

    pub fn a2t_into(&self, g: &[f64], out: &mut [f64]) {
        self.adjoint(g, out, self.n, |k| k / self.n);
    }

    fn forward(&self, v: &[f64], out: &mut [f64], stride: usize, pos: impl Fn(usize) -> usize) {
        let last = self.n - 1;
        for (k, o) in out.iter_mut().enumerate() {
            *o = if pos(k) < last {
                let mut acc = 0.0;
                acc += -self.inv_h * v[k];
                acc += self.inv_h * v[k + stride];
                acc
            } else {
                0.0
            };
        }
    }

    fn adjoint(&self, g: &[f64], out: &mut [f64], stride: usize, pos: impl Fn(usize) -> usize) {
        let last = self.n - 1;
        for (k, o) in out.iter_mut().enumerate() {
            let p = pos(k);
            let mut acc = 0.0;
            if p > 0 {
                acc += self.inv_h * g[k - stride];
            }
            if p < last {
                acc += -self.inv_h * g[k];
            }
            *o = acc;
        }
    }

    /// `(A1 v, A2 v)`.
    pub fn gradient(&self, field: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let len = self.n * self.n;
        check_len("field", len, field.len())?;
        let mut g1 = vec![0.0; len];
        let mut g2 = vec![0.0; len];
        self.a1_into(field, &mut g1);
        self.a2_into(field, &mut g2);
        Ok((g1, g2))
    }

    /// `A1^t g1 + A2^t g2`.
    pub fn gradient_adjoint(&self, g1: &[f64], g2: &[f64]) -> Result<Vec<f64>> {
        let len = self.n * self.n;
        check_len("g1", len, g1.len())?;
        check_len("g2", len, g2.len())?;
        let mut out = vec![0.0; len];
        let mut tmp = vec![0.0; len];
        self.a1t_into(g1, &mut out);
        self.a2t_into(g2, &mut tmp);
        for (o, t) in out.iter_mut().zip(&tmp) {
            *o += t;
        }
        Ok(out)
    }

    /// `A^t A u` for a single scalar field `u`.
    pub fn laplacian_like(&self, u: &[f64]) -> Result<Vec<f64>> {
        let (g1, g2) = self.gradient(u)?;
        self.gradient_adjoint(&g1, &g2)
    }

    /// `||A1 u||^2 + ||A2 u||^2` for a scalar field.
    pub fn gradient_energy(&self, u: &[f64]) -> Result<f64> {
        let (g1, g2) = self.gradient(u)?;
        Ok(g1.iter().chain(&g2).map(|v| v * v).sum())
    }

    /// Dense `A1` (`n <= 16` only).
    pub fn dense_a1(&self) -> Result<DenseMatrix> {
        self.dense(|op, v, out| op.a1_into(v, out))
    }

    /// Dense `A2` (`n <= 16` only).
    pub fn dense_a2(&self) -> Result<DenseMatrix> {
        self.dense(|op, v, out| op.a2_into(v, out))
    }

    fn dense(&self, apply: impl Fn(&Self, &[f64], &mut [f64])) -> Result<DenseMatrix> {
        if self.n > DENSE_MAX_N {
            return Err(Error::validation(
                "n",
                format!("dense assembly limited to n <= {DENSE_MAX_N}"),
            ));
        }
        let len = self.n * self.n;
        let mut m = DenseMatrix::zeros(len, len);
        let mut e = vec![0.0; len];
        let mut col = vec![0.0; len];
        for c in 0..len {
            e[c] = 1.0;
            apply(self, &e, &mut col);
            for r in 0..len {
                m.set(r, c, col[r]);
            }
            e[c] = 0.0;
        }
        Ok(m)
    }
}

/// Row-major dense matrix for small test-scale assemblies.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn diag(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (k, v) in d.iter().enumerate() {
            m.set(k, k, *v);
        }
        m
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.set(c, r, self.get(r, c));
            }
        }
        t
    }

    /// Row-by-row product, summing in ascending column order.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|r| {
                let row = &self.data[r * self.cols..(r + 1) * self.cols];
                let mut acc = 0.0;
                for (a, x) in row.iter().zip(v) {
                    if *a != 0.0 {
                        acc += a * x;
                    }
                }
                acc
            })
            .collect()
    }

    /// Kronecker product `self (x) other`.
    pub fn kron(&self, other: &DenseMatrix) -> Self {
        let mut out = Self::zeros(self.rows * other.rows, self.cols * other.cols);
        for r1 in 0..self.rows {
            for c1 in 0..self.cols {
                let a = self.get(r1, c1);
                if a == 0.0 {
                    continue;
                }
                for r2 in 0..other.rows {
                    for c2 in 0..other.cols {
                        out.set(r1 * other.rows + r2, c1 * other.cols + c2, a * other.get(r2, c2));
                    }
                }
            }
        }
        out
    }

    pub fn identity(n: usize) -> Self {
        Self::diag(&vec![1.0; n])
    }

    /// Numerical rank by Gaussian elimination with partial pivoting.
    pub fn rank(&self, tol: f64) -> usize {
        let mut m = self.clone();
        let mut rank = 0;
        for c in 0..m.cols {
            if rank == m.rows {
                break;
            }
            let (piv, best) = (rank..m.rows)
                .map(|r| (r, m.get(r, c).abs()))
                .fold((rank, 0.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if best <= tol {
                continue;
            }
            for k in 0..m.cols {
                m.data.swap(rank * m.cols + k, piv * m.cols + k);
            }
            for r in rank + 1..m.rows {
                let f = m.get(r, c) / m.get(rank, c);
                if f != 0.0 {
                    for k in c..m.cols {
                        let v = m.get(r, k) - f * m.get(rank, k);
                        m.set(r, k, v);
                    }
                }
            }
            rank += 1;
        }
        rank
    }
}
