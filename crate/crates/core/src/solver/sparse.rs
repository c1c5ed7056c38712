//! Sparse symmetric matrices on the mesh node graph, incomplete Cholesky and
//! preconditioned conjugate gradients.

use crate::mesh::{Grid, MAX_DIM};
use crate::scalar::Real;

/// CSR pattern of the P1 stiffness matrix plus, per element, the positions
/// of its `(n+1)^2` local entries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StiffnessPattern {
    pub rows: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<u32>,
    pub diag: Vec<usize>,
    pub local: usize,
    pub elem_pos: Vec<u32>,
}

impl StiffnessPattern {
    /// Nodes sharing an element with `row`, including `row` itself.
    pub fn neighbours(&self, row: usize) -> &[u32] {
        &self.cols[self.row_ptr[row]..self.row_ptr[row + 1]]
    }

    pub fn build(grid: &Grid) -> Self {
        let rows = grid.node_count();
        let local = grid.dim() + 1;
        let mut adj: Vec<Vec<u32>> = (0..rows).map(|i| vec![i as u32]).collect();
        for e in 0..grid.element_count() {
            let el = grid.element(e);
            for a in 0..local {
                for b in 0..local {
                    if a != b {
                        adj[el.nodes[a]].push(el.nodes[b] as u32);
                    }
                }
            }
        }
        let mut row_ptr = Vec::with_capacity(rows + 1);
        let mut cols = Vec::new();
        let mut diag = Vec::with_capacity(rows);
        row_ptr.push(0);
        for (i, mut list) in adj.into_iter().enumerate() {
            list.sort_unstable();
            list.dedup();
            let start = cols.len();
            diag.push(start + list.binary_search(&(i as u32)).expect("diagonal"));
            cols.extend(list);
            row_ptr.push(cols.len());
        }
        let mut elem_pos = Vec::with_capacity(grid.element_count() * local * local);
        for e in 0..grid.element_count() {
            let el = grid.element(e);
            for a in 0..local {
                let (lo, hi) = (row_ptr[el.nodes[a]], row_ptr[el.nodes[a] + 1]);
                for b in 0..local {
                    let off = cols[lo..hi].binary_search(&(el.nodes[b] as u32)).expect("pattern entry");
                    elem_pos.push((lo + off) as u32);
                }
            }
        }
        Self { rows, row_ptr, cols, diag, local, elem_pos }
    }

    #[inline]
    pub fn element_positions(&self, e: usize) -> &[u32] {
        let k = self.local * self.local;
        &self.elem_pos[e * k..(e + 1) * k]
    }
}

/// Symmetric matrix with a [`StiffnessPattern`].
#[derive(Debug, Clone)]
pub struct CsrMatrix<'a, T> {
    pub pattern: &'a StiffnessPattern,
    pub values: Vec<T>,
}

impl<'a, T: Real> CsrMatrix<'a, T> {
    pub fn zeros(pattern: &'a StiffnessPattern) -> Self {
        Self { pattern, values: vec![T::zero(); pattern.cols.len()] }
    }

    pub fn clear(&mut self) {
        self.values.iter_mut().for_each(|v| *v = T::zero());
    }

    pub fn add_diagonal(&mut self, i: usize, v: T) {
        self.values[self.pattern.diag[i]] += v;
    }

    pub fn diagonal(&self, i: usize) -> T {
        self.values[self.pattern.diag[i]]
    }

    /// Replaces rows and columns flagged in `mask` by those of the identity.
    pub fn mask_identity(&mut self, mask: &[bool]) {
        let p = self.pattern;
        for i in 0..p.rows {
            for k in p.row_ptr[i]..p.row_ptr[i + 1] {
                let j = p.cols[k] as usize;
                if mask[i] || mask[j] {
                    self.values[k] = if i == j { T::one() } else { T::zero() };
                }
            }
        }
    }

    pub fn matvec(&self, x: &[T], y: &mut [T]) {
        let p = self.pattern;
        for i in 0..p.rows {
            let mut acc = T::zero();
            for k in p.row_ptr[i]..p.row_ptr[i + 1] {
                acc += self.values[k] * x[p.cols[k] as usize];
            }
            y[i] = acc;
        }
    }
}

/// Preconditioner `M ≈ A`, applied as `z = M^{-1} r`.
pub enum Preconditioner<T> {
    /// Incomplete Cholesky factor stored on the lower part of the pattern.
    Ic0(Vec<T>),
    Jacobi(Vec<T>),
}

/// Zero-fill incomplete Cholesky of `a + shift·diag(a)`; `None` on breakdown.
fn ic0<T: Real>(a: &CsrMatrix<T>, shift: T) -> Option<Vec<T>> {
    let p = a.pattern;
    let mut l = vec![T::zero(); a.values.len()];
    for i in 0..p.rows {
        let (lo, d) = (p.row_ptr[i], p.diag[i]);
        for kk in lo..d {
            let k = p.cols[kk] as usize;
            // Σ_{j<k} L[i,j] L[k,j] over the shared lower pattern
            let mut s = a.values[kk];
            let (mut x, mut y) = (lo, p.row_ptr[k]);
            let (xe, ye) = (kk, p.diag[k]);
            while x < xe && y < ye {
                let (cx, cy) = (p.cols[x], p.cols[y]);
                if cx == cy {
                    s -= l[x] * l[y];
                    x += 1;
                    y += 1;
                } else if cx < cy {
                    x += 1;
                } else {
                    y += 1;
                }
            }
            l[kk] = s / l[p.diag[k]];
        }
        let mut dv = a.values[d] * (T::one() + shift);
        for kk in lo..d {
            dv -= l[kk] * l[kk];
        }
        if !(dv > T::zero()) || !dv.is_finite() {
            return None;
        }
        l[d] = dv.sqrt();
    }
    Some(l)
}

impl<T: Real> Preconditioner<T> {
    /// IC(0) with diagonal shifts on breakdown, Jacobi as the last resort.
    pub fn build(a: &CsrMatrix<T>) -> Self {
        let mut shift = T::zero();
        for _ in 0..6 {
            if let Some(l) = ic0(a, shift) {
                return Preconditioner::Ic0(l);
            }
            shift = if shift == T::zero() { T::lit(1e-3) } else { shift * T::lit(10.0) };
        }
        let p = a.pattern;
        Preconditioner::Jacobi((0..p.rows).map(|i| T::one() / a.values[p.diag[i]].max(T::min_positive_value())).collect())
    }

    pub fn apply(&self, pattern: &StiffnessPattern, r: &[T], z: &mut [T]) {
        match self {
            Preconditioner::Jacobi(d) => {
                for i in 0..r.len() {
                    z[i] = d[i] * r[i];
                }
            }
            Preconditioner::Ic0(l) => {
                let p = pattern;
                for i in 0..p.rows {
                    let mut s = r[i];
                    for k in p.row_ptr[i]..p.diag[i] {
                        s -= l[k] * z[p.cols[k] as usize];
                    }
                    z[i] = s / l[p.diag[i]];
                }
                for i in (0..p.rows).rev() {
                    let zi = z[i] / l[p.diag[i]];
                    z[i] = zi;
                    for k in p.row_ptr[i]..p.diag[i] {
                        z[p.cols[k] as usize] -= l[k] * zi;
                    }
                }
            }
        }
    }
}

/// Outcome of [`pcg`].
#[derive(Debug, Clone, Copy)]
pub struct CgOutcome<T> {
    pub iterations: usize,
    pub residual: T,
    pub converged: bool,
}

/// Solves `a x = b` from `x = 0` until `‖r‖ <= rel_tol ‖b‖`.
pub fn pcg<T: Real>(
    a: &CsrMatrix<T>,
    pre: &Preconditioner<T>,
    b: &[T],
    x: &mut [T],
    rel_tol: T,
    max_iter: usize,
) -> CgOutcome<T> {
    let n = b.len();
    x.iter_mut().for_each(|v| *v = T::zero());
    let dot = |u: &[T], v: &[T]| u.iter().zip(v).map(|(&a, &b)| a * b).sum::<T>();
    let bnorm = dot(b, b).sqrt();
    if bnorm == T::zero() {
        return CgOutcome { iterations: 0, residual: T::zero(), converged: true };
    }
    let mut r = b.to_vec();
    let mut z = vec![T::zero(); n];
    pre.apply(a.pattern, &r, &mut z);
    let mut d = z.clone();
    let mut q = vec![T::zero(); n];
    let mut rz = dot(&r, &z);
    let target = rel_tol * bnorm;
    let mut rnorm = bnorm;
    for it in 0..max_iter {
        a.matvec(&d, &mut q);
        let dq = dot(&d, &q);
        if !(dq > T::zero()) {
            return CgOutcome { iterations: it, residual: rnorm, converged: false };
        }
        let step = rz / dq;
        for i in 0..n {
            x[i] += step * d[i];
            r[i] -= step * q[i];
        }
        rnorm = dot(&r, &r).sqrt();
        if rnorm <= target {
            return CgOutcome { iterations: it + 1, residual: rnorm, converged: true };
        }
        pre.apply(a.pattern, &r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            d[i] = z[i] + beta * d[i];
        }
    }
    CgOutcome { iterations: max_iter, residual: rnorm, converged: false }
}

/// Local `(n+1)×(n+1)` matrix `B^T H B` of an element whose gradient map is
/// `g[π(m-1)] = (u_m - u_{m-1}) / h`, for a symmetric `n×n` block `H`.
#[inline]
pub fn element_matrix<T: Real>(
    n: usize,
    perm: &[usize; MAX_DIM],
    inv_h: T,
    h: &[[T; MAX_DIM]; MAX_DIM],
    out: &mut [T],
) {
    let k = n + 1;
    out[..k * k].iter_mut().for_each(|v| *v = T::zero());
    // column c of B: dg/du_c; node m contributes +1/h to row π(m-1), -1/h to row π(m)
    for a in 1..=n {
        for b in 1..=n {
            let hv = h[perm[a - 1]][perm[b - 1]] * inv_h * inv_h;
            // (e_a - e_{a-1}) (e_b - e_{b-1})^T
            out[a * k + b] += hv;
            out[(a - 1) * k + b] -= hv;
            out[a * k + (b - 1)] -= hv;
            out[(a - 1) * k + (b - 1)] += hv;
        }
    }
}
