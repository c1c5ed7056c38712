//! Piecewise-linear finite elements on the Kuhn (Freudenthal) simplicial
//! split of the unit box, with quadrature, norms, hole realization and
//! grid-function I/O.
//!
//! Nodes are numbered with the first coordinate fastest. Each cube of the
//! grid is split into `n!` simplices, one per permutation `π`; the simplex
//! for `π` is the chain `v_0 = corner`, `v_m = v_{m-1} + h e_{π(m-1)}`, so the
//! gradient of a nodal function is `g[π(m-1)] = (u(v_m) - u(v_{m-1})) / h`.

use std::io::{Read, Write};
use std::sync::{Arc, OnceLock};

use crate::capacity::{condenser_capacity, radius_capacity, PExponent, Radius};
use crate::error::{Error, Result};
use crate::field::{holes_from_field, CapacityField, PerforationSpec};
use crate::quadrature::gauss_legendre_unit;
use crate::scalar::{abs_pow, Real};
use crate::solver::sparse::StiffnessPattern;
use crate::solver::{Coupling, CouplingKind};

pub const MAX_DIM: usize = 3;

/// Uniform grid with `N` subdivisions per side on `(0,1)^n`.
#[derive(Debug, Clone)]
pub struct Grid {
    n: usize,
    cells: usize,
    strides: [usize; MAX_DIM],
    perms: Vec<[usize; MAX_DIM]>,
    // node offsets of the chain v_0..v_n, per permutation
    offsets: Vec<[usize; MAX_DIM + 1]>,
    incident: Vec<u8>,
    elements: Vec<([u32; MAX_DIM + 1], u8)>,
    pattern: OnceLock<Arc<StiffnessPattern>>,
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.cells == other.cells
    }
}

impl Eq for Grid {}

/// One simplex: its nodes `v_0..v_n` (first `n + 1` entries) and permutation.
#[derive(Debug, Clone, Copy)]
pub struct Element {
    pub nodes: [usize; MAX_DIM + 1],
    pub perm: [usize; MAX_DIM],
}

fn permutations(n: usize) -> Vec<[usize; MAX_DIM]> {
    match n {
        2 => vec![[0, 1, 0], [1, 0, 0]],
        3 => vec![[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]],
        _ => unreachable!("dimension checked by Grid::new"),
    }
}

impl Grid {
    pub fn new(n: usize, cells: usize) -> Result<Self> {
        if !(n == 2 || n == 3) {
            return Err(Error::domain(format!("grid dimension must be 2 or 3, got {n}")));
        }
        if cells < 2 {
            return Err(Error::domain(format!("grid needs N >= 2 subdivisions, got {cells}")));
        }
        let side = cells + 1;
        let mut strides = [0; MAX_DIM];
        let mut s = 1;
        for stride in strides.iter_mut().take(n) {
            *stride = s;
            s *= side;
        }
        let perms = permutations(n);
        let offsets = perms
            .iter()
            .map(|perm| {
                let mut off = [0; MAX_DIM + 1];
                for m in 1..=n {
                    off[m] = off[m - 1] + strides[perm[m - 1]];
                }
                off
            })
            .collect();
        if (cells + 1).checked_pow(n as u32).is_none_or(|c| c > u32::MAX as usize) {
            return Err(Error::domain(format!("grid with N = {cells} in dimension {n} is too large")));
        }
        let mut grid = Self {
            n,
            cells,
            strides,
            perms,
            offsets,
            incident: Vec::new(),
            elements: Vec::new(),
            pattern: OnceLock::new(),
        };
        let mut incident = vec![0u8; grid.node_count()];
        let mut elements = Vec::with_capacity(grid.element_count());
        for e in 0..grid.element_count() {
            let (nodes, p) = grid.build_element(e);
            for &v in &nodes[..=n] {
                incident[v] += 1;
            }
            let mut compact = [0u32; MAX_DIM + 1];
            for (c, &v) in compact.iter_mut().zip(&nodes) {
                *c = v as u32;
            }
            elements.push((compact, p as u8));
        }
        grid.incident = incident;
        grid.elements = elements;
        Ok(grid)
    }

    fn build_element(&self, e: usize) -> ([usize; MAX_DIM + 1], usize) {
        let np = self.perms.len();
        let (mut cube, p) = (e / np, e % np);
        let mut base = 0;
        for d in 0..self.n {
            base += (cube % self.cells) * self.strides[d];
            cube /= self.cells;
        }
        let mut nodes = [0; MAX_DIM + 1];
        for m in 0..=self.n {
            nodes[m] = base + self.offsets[p][m];
        }
        (nodes, p)
    }

    /// Sparsity pattern of the stiffness matrix, built on first use.
    pub fn pattern(&self) -> &Arc<StiffnessPattern> {
        self.pattern.get_or_init(|| Arc::new(StiffnessPattern::build(self)))
    }

    pub fn shared(n: usize, cells: usize) -> Result<Arc<Self>> {
        Self::new(n, cells).map(Arc::new)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of subdivisions per side, `N`.
    #[inline]
    pub fn cells(&self) -> usize {
        self.cells
    }

    #[inline]
    pub fn spacing<T: Real>(&self) -> T {
        T::one() / T::from_count(self.cells)
    }

    #[inline]
    pub fn node_count(&self) -> usize {
        (self.cells + 1).pow(self.n as u32)
    }

    #[inline]
    pub fn element_count(&self) -> usize {
        self.cells.pow(self.n as u32) * self.perms.len()
    }

    /// Volume `h^n / n!` shared by all elements.
    pub fn element_volume<T: Real>(&self) -> T {
        let h: T = self.spacing();
        h.powi(self.n as i32) / T::from_count(self.perms.len())
    }

    pub fn node_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn node_multi_index(&self, mut node: usize) -> [usize; MAX_DIM] {
        let mut out = [0; MAX_DIM];
        for slot in out.iter_mut().take(self.n) {
            *slot = node % (self.cells + 1);
            node /= self.cells + 1;
        }
        out
    }

    pub fn coord<T: Real>(&self, node: usize, d: usize) -> T {
        T::from_count((node / self.strides[d]) % (self.cells + 1)) * self.spacing::<T>()
    }

    pub fn coords<T: Real>(&self, node: usize) -> Vec<T> {
        (0..self.n).map(|d| self.coord(node, d)).collect()
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        let idx = self.node_multi_index(node);
        idx[..self.n].iter().any(|&i| i == 0 || i == self.cells)
    }

    pub fn boundary_nodes(&self) -> Vec<usize> {
        (0..self.node_count()).filter(|&v| self.is_boundary(v)).collect()
    }

    pub fn interior_nodes(&self) -> Vec<usize> {
        (0..self.node_count()).filter(|&v| !self.is_boundary(v)).collect()
    }

    /// Lumped mass `∫ φ_i` of the hat function at `node`.
    pub fn lumped_mass<T: Real>(&self, node: usize) -> T {
        T::from_count(self.incident[node] as usize) * self.element_volume::<T>() / T::from_count(self.n + 1)
    }

    #[inline]
    pub fn element(&self, e: usize) -> Element {
        let (compact, p) = &self.elements[e];
        let mut nodes = [0; MAX_DIM + 1];
        for (v, &c) in nodes.iter_mut().zip(compact) {
            *v = c as usize;
        }
        Element { nodes, perm: self.perms[*p as usize] }
    }

    /// Gradient of the interpolant of `u` on element `el`.
    #[inline]
    pub fn element_gradient<T: Real>(&self, el: &Element, u: &[T]) -> [T; MAX_DIM] {
        let inv_h = T::from_count(self.cells);
        let mut g = [T::zero(); MAX_DIM];
        for m in 1..=self.n {
            g[el.perm[m - 1]] = (u[el.nodes[m]] - u[el.nodes[m - 1]]) * inv_h;
        }
        g
    }

    /// Adds the nodal derivative of `∫_el q · ∇u` (q constant) to `out`.
    #[inline]
    pub fn scatter_flux<T: Real>(&self, el: &Element, q: &[T; MAX_DIM], scale: T, out: &mut [T]) {
        let c = scale * T::from_count(self.cells);
        for m in 1..=self.n {
            let qm = q[el.perm[m - 1]] * c;
            out[el.nodes[m]] += qm;
            out[el.nodes[m - 1]] -= qm;
        }
    }

    /// Physical coordinates of barycentric point `lambda` in `el`.
    pub fn element_point<T: Real>(&self, el: &Element, lambda: &[T]) -> [T; MAX_DIM] {
        let h: T = self.spacing();
        let corner = self.node_multi_index(el.nodes[0]);
        let mut x = [T::zero(); MAX_DIM];
        for d in 0..self.n {
            x[d] = T::from_count(corner[d]) * h;
        }
        // vertex v_m is corner + h (e_{π(0)} + … + e_{π(m-1)})
        let mut tail = T::zero();
        for m in (1..=self.n).rev() {
            tail += lambda[m];
            x[el.perm[m - 1]] += h * tail;
        }
        x
    }

    /// Node nearest to `x`.
    pub fn nearest_node<T: Real>(&self, x: &[T]) -> usize {
        let idx: Vec<usize> = x
            .iter()
            .map(|&c| {
                let i = (c * T::from_count(self.cells)).round().to_i64().unwrap_or(0);
                i.clamp(0, self.cells as i64) as usize
            })
            .collect();
        self.node_index(&idx)
    }

    /// Locates `x` in the closed box: element and barycentric coordinates.
    pub fn locate<T: Real>(&self, x: &[T]) -> (Element, [T; MAX_DIM + 1]) {
        let nf = T::from_count(self.cells);
        let mut corner = [0usize; MAX_DIM];
        let mut local = [T::zero(); MAX_DIM];
        for d in 0..self.n {
            let s = (x[d] * nf).max(T::zero()).min(nf);
            let c = s.floor().to_usize().unwrap_or(0).min(self.cells - 1);
            corner[d] = c;
            local[d] = s - T::from_count(c);
        }
        // the simplex is the permutation sorting the local coordinates downwards
        let mut order = [0usize, 1, 2];
        order[..self.n].sort_by(|&a, &b| local[b].partial_cmp(&local[a]).unwrap_or(std::cmp::Ordering::Equal));
        let p = self.perms.iter().position(|q| q[..self.n] == order[..self.n]).expect("permutation");
        let mut cube = 0;
        let mut mult = 1;
        for d in 0..self.n {
            cube += corner[d] * mult;
            mult *= self.cells;
        }
        let el = self.element(cube * self.perms.len() + p);
        let mut lambda = [T::zero(); MAX_DIM + 1];
        lambda[0] = T::one() - local[order[0]];
        for m in 1..self.n {
            lambda[m] = local[order[m - 1]] - local[order[m]];
        }
        lambda[self.n] = local[order[self.n - 1]];
        (el, lambda)
    }

    /// `∫_D f` with the given simplex rule.
    pub fn integrate<T: Real, F: FnMut(&[T]) -> T>(&self, rule: &SimplexRule<T>, mut f: F) -> T {
        let vol = self.element_volume::<T>();
        let mut total = T::zero();
        for e in 0..self.element_count() {
            let el = self.element(e);
            let mut acc = T::zero();
            for (lam, &w) in rule.points.iter().zip(&rule.weights) {
                let x = self.element_point(&el, lam);
                acc += w * f(&x[..self.n]);
            }
            total += acc * vol;
        }
        total
    }
}

/// Quadrature rule on the reference simplex: barycentric points, weights summing to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexRule<T> {
    pub points: Vec<Vec<T>>,
    pub weights: Vec<T>,
}

impl<T: Real> SimplexRule<T> {
    /// Collapsed-coordinate product Gauss rule with `m` points per direction;
    /// exact for polynomials of degree `2m - n`.
    pub fn collapsed(n: usize, m: usize) -> Self {
        let (x, w) = gauss_legendre_unit(m);
        let fact = if n == 2 { 2.0 } else { 6.0 };
        let mut points = Vec::new();
        let mut weights = Vec::new();
        let mut push = |xs: &[f64], weight: f64| {
            let mut lam = Vec::with_capacity(n + 1);
            lam.push(T::lit(1.0 - xs.iter().sum::<f64>()));
            lam.extend(xs.iter().map(|&v| T::lit(v)));
            points.push(lam);
            weights.push(T::lit(weight * fact));
        };
        for i in 0..m {
            for j in 0..m {
                let (u, v) = (x[i], x[j]);
                if n == 2 {
                    push(&[u, v * (1.0 - u)], w[i] * w[j] * (1.0 - u));
                } else {
                    for k in 0..m {
                        let t = x[k];
                        let jac = (1.0 - u) * (1.0 - u) * (1.0 - v);
                        push(&[u, v * (1.0 - u), t * (1.0 - u) * (1.0 - v)], w[i] * w[j] * w[k] * jac);
                    }
                }
            }
        }
        Self { points, weights }
    }

    /// Default element rule (exact to degree 4 in 2D, 3 in 3D).
    pub fn standard(n: usize) -> Self {
        Self::collapsed(n, 3)
    }
}

/// Nodal values on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction<T> {
    grid: Arc<Grid>,
    values: Vec<T>,
}

impl<T: Real> GridFunction<T> {
    pub fn new(grid: Arc<Grid>, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::domain(format!(
                "grid function needs {} values, got {}",
                grid.node_count(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("grid function values must be finite"));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let values = vec![T::zero(); grid.node_count()];
        Self { grid, values }
    }

    pub fn constant(grid: Arc<Grid>, c: T) -> Self {
        let values = vec![c; grid.node_count()];
        Self { grid, values }
    }

    /// Nodal interpolant of `f`.
    pub fn from_fn<F: FnMut(&[T]) -> T>(grid: Arc<Grid>, mut f: F) -> Self {
        let values = (0..grid.node_count()).map(|v| f(&grid.coords::<T>(v))).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn map<F: FnMut(T) -> T>(&self, f: F) -> Self {
        Self { grid: self.grid.clone(), values: self.values.iter().copied().map(f).collect() }
    }

    pub fn zip_map<F: FnMut(T, T) -> T>(&self, other: &Self, mut f: F) -> Self {
        assert!(Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid, "grid mismatch");
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Self { grid: self.grid.clone(), values }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, c: T) -> Self {
        self.map(|v| c * v)
    }

    pub fn max_value(&self) -> T {
        self.values.iter().copied().fold(T::neg_infinity(), T::max)
    }

    pub fn min_value(&self) -> T {
        self.values.iter().copied().fold(T::infinity(), T::min)
    }

    /// Element-wise constant gradients.
    pub fn gradient(&self) -> Gradients<T> {
        let n = self.grid.dim();
        let mut data = Vec::with_capacity(self.grid.element_count() * n);
        for e in 0..self.grid.element_count() {
            let g = self.grid.element_gradient(&self.grid.element(e), &self.values);
            data.extend_from_slice(&g[..n]);
        }
        Gradients { n, data }
    }

    /// Value of the piecewise-linear interpolant at `x`.
    pub fn eval_at(&self, x: &[T]) -> T {
        let (el, lambda) = self.grid.locate(x);
        (0..=self.grid.dim()).map(|m| lambda[m] * self.values[el.nodes[m]]).sum()
    }

    /// `∫_D f(x, u, ∇u)` with the given rule.
    pub fn integrate_with<F: FnMut(&[T], T, &[T]) -> T>(&self, rule: &SimplexRule<T>, mut f: F) -> T {
        let g = &self.grid;
        let n = g.dim();
        let vol = g.element_volume::<T>();
        let mut total = T::zero();
        for e in 0..g.element_count() {
            let el = g.element(e);
            let grad = g.element_gradient(&el, &self.values);
            let mut acc = T::zero();
            for (lam, &w) in rule.points.iter().zip(&rule.weights) {
                let x = g.element_point(&el, lam);
                let u: T = (0..=n).map(|m| lam[m] * self.values[el.nodes[m]]).sum();
                acc += w * f(&x[..n], u, &grad[..n]);
            }
            total += acc * vol;
        }
        total
    }

    /// `(∫_D |u|^p)^{1/p}`, by element quadrature.
    pub fn lp_norm(&self, p: T) -> T {
        let rule = SimplexRule::standard(self.grid.dim());
        self.integrate_with(&rule, |_, u, _| abs_pow(u, p)).powf(T::one() / p)
    }

    /// `(∫_D |∇u|^p)^{1/p}`, exact for the piecewise-linear interpolant.
    pub fn w1p_seminorm(&self, p: T) -> T {
        let g = &self.grid;
        let n = g.dim();
        let total: T = (0..g.element_count())
            .map(|e| abs_pow(norm(&g.element_gradient(&g.element(e), &self.values)[..n]), p))
            .sum();
        (total * g.element_volume::<T>()).powf(T::one() / p)
    }

    /// `(‖u‖_{L^p}, |u|_{W^{1,p}})`.
    pub fn norms(&self, p: T) -> (T, T) {
        (self.lp_norm(p), self.w1p_seminorm(p))
    }

    /// Nodal injection onto a coarser grid whose `N` divides this one's.
    pub fn restrict_to(&self, coarse: &Arc<Grid>) -> Result<Self> {
        let (nf, nc) = (self.grid.cells(), coarse.cells());
        if coarse.dim() != self.grid.dim() || nf % nc != 0 {
            return Err(Error::domain(format!("cannot restrict from N = {nf} to N = {nc}")));
        }
        let ratio = nf / nc;
        let values = (0..coarse.node_count())
            .map(|v| {
                let idx = coarse.node_multi_index(v);
                let fine: Vec<usize> = idx[..coarse.dim()].iter().map(|&i| i * ratio).collect();
                self.values[self.grid.node_index(&fine)]
            })
            .collect();
        Ok(Self { grid: coarse.clone(), values })
    }

    /// Interpolant of this function sampled at the nodes of `other`.
    pub fn interpolate_to(&self, other: &Arc<Grid>) -> Self {
        let values = (0..other.node_count()).map(|v| self.eval_at(&other.coords::<T>(v))).collect();
        Self { grid: other.clone(), values }
    }

    /// Writes the `PHGF1` binary format.
    pub fn write_phgf<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(b"PHGF1")?;
        w.write_all(&(self.grid.dim() as u32).to_le_bytes())?;
        w.write_all(&(self.grid.cells() as u32).to_le_bytes())?;
        w.write_all(&(self.values.len() as u64).to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_f64_lossy().to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the `PHGF1` binary format.
    pub fn read_phgf<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 5];
        r.read_exact(&mut magic)?;
        if &magic != b"PHGF1" {
            return Err(Error::Format("bad magic".into()));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let n = u32::from_le_bytes(b4) as usize;
        r.read_exact(&mut b4)?;
        let cells = u32::from_le_bytes(b4) as usize;
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let count = u64::from_le_bytes(b8) as usize;
        let grid = Grid::new(n, cells).map_err(|e| Error::Format(e.to_string()))?;
        if count != grid.node_count() {
            return Err(Error::Format(format!("count {count} does not match a grid with n = {n}, N = {cells}")));
        }
        let mut values = Vec::with_capacity(count);
        for _ in 0..count {
            r.read_exact(&mut b8)?;
            values.push(T::lit(f64::from_le_bytes(b8)));
        }
        Self::new(Arc::new(grid), values)
    }

    /// Writes `x1,…,xn,value` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let n = self.grid.dim();
        let mut header: Vec<String> = (1..=n).map(|d| format!("x{d}")).collect();
        header.push("value".into());
        w.write_record(&header)?;
        for (v, val) in self.values.iter().enumerate() {
            let mut row: Vec<String> = (0..n).map(|d| format!("{:e}", self.grid.coord::<f64>(v, d))).collect();
            row.push(format!("{val:e}"));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Euclidean norm of a short vector.
#[inline]
pub fn norm<T: Real>(x: &[T]) -> T {
    x.iter().map(|&v| v * v).sum::<T>().sqrt()
}

/// Per-element constant gradient vectors, `n` entries per element.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub n: usize,
    pub data: Vec<T>,
}

impl<T: Real> Gradients<T> {
    pub fn element(&self, e: usize) -> &[T] {
        &self.data[e * self.n..(e + 1) * self.n]
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.n
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Result of a reference one-node capacity problem: a single grid node acts
/// like a ball of radius `radius_factor · h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeCalibration<T> {
    pub radius_factor: T,
}

impl<T: Real> NodeCalibration<T> {
    pub fn equivalent_radius(&self, h: T) -> Radius<T> {
        Radius::from_value(self.radius_factor * h)
    }
}

/// How holes are carried by grid nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HoleStrategy<T> {
    /// All nodes within the hole radius; requires radius `>= h`.
    Resolved,
    /// The constraint is imposed at the nearest node only.
    NearestNode { calibration: Option<NodeCalibration<T>> },
    /// Resolved holes where `a >= h`, hard nearest node where the node's
    /// equivalent radius does not exceed `a`, and otherwise a capacity
    /// coupling between the hole and its node through the annulus `(a, ρ_h)`.
    Subgrid { calibration: NodeCalibration<T> },
}

impl<T> HoleStrategy<T> {
    pub fn name(&self) -> &'static str {
        match self {
            HoleStrategy::Resolved => "resolved",
            HoleStrategy::NearestNode { .. } => "nearest_node",
            HoleStrategy::Subgrid { .. } => "subgrid",
        }
    }
}

/// Nodes carrying one hole.
#[derive(Debug, Clone, PartialEq)]
pub struct HoleNodes<T> {
    pub nodes: Vec<usize>,
    /// Capacity of the annulus between the hole and its node's equivalent
    /// ball; present only for capacity-coupled holes, whose node is not
    /// constrained directly.
    pub coupling: Option<T>,
    /// Target capacity `γ ε^n`.
    pub target_capacity: T,
    /// Discrete capacity of the carrier when it is a single node and the
    /// node has been calibrated.
    pub node_capacity: Option<T>,
}

/// Discrete carrier of the hole set.
#[derive(Debug, Clone, PartialEq)]
pub struct HoleNodeSets<T> {
    pub strategy: HoleStrategy<T>,
    pub holes: Vec<HoleNodes<T>>,
}

impl<T: Real> HoleNodeSets<T> {
    pub fn empty(strategy: HoleStrategy<T>) -> Self {
        Self { strategy, holes: Vec::new() }
    }

    /// Nodes constrained directly (every hole without a coupling).
    pub fn constrained_nodes(&self) -> Vec<usize> {
        let mut out: Vec<usize> =
            self.holes.iter().filter(|h| h.coupling.is_none()).flat_map(|h| h.nodes.iter().copied()).collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// `(node, κ)` for every capacity-coupled hole.
    pub fn couplings(&self) -> Vec<(usize, T)> {
        self.holes.iter().filter_map(|h| h.coupling.map(|k| (h.nodes[0], k))).collect()
    }

    pub fn node_counts(&self) -> Vec<usize> {
        self.holes.iter().map(|h| h.nodes.len()).collect()
    }

    /// Largest ratio between the discrete node capacity and the target, over
    /// holes carried by a calibrated single node (both directions).
    pub fn worst_capacity_ratio(&self) -> Option<T> {
        self.holes
            .iter()
            .filter_map(|h| h.node_capacity.map(|c| (c / h.target_capacity).max(h.target_capacity / c)))
            .fold(None, |acc, r| Some(acc.map_or(r, |a: T| a.max(r))))
    }
}

fn nodes_within<T: Real>(grid: &Grid, center: &[T], radius: T) -> Vec<usize> {
    let nf = T::from_count(grid.cells());
    let n = grid.dim();
    let mut lo = [0usize; MAX_DIM];
    let mut hi = [0usize; MAX_DIM];
    for d in 0..n {
        lo[d] = ((center[d] - radius) * nf).ceil().max(T::zero()).to_usize().unwrap_or(0);
        hi[d] = ((center[d] + radius) * nf).floor().min(nf).to_usize().unwrap_or(0);
    }
    let mut out = Vec::new();
    let mut idx = lo;
    loop {
        let node = grid.node_index(&idx[..n]);
        let x = grid.coords::<T>(node);
        if crate::capacity::distance(&x, center) <= radius {
            out.push(node);
        }
        let mut d = 0;
        loop {
            if d == n {
                return out;
            }
            if idx[d] < hi[d] {
                idx[d] += 1;
                break;
            }
            idx[d] = lo[d];
            d += 1;
        }
    }
}

/// Maps each hole of `perforation` to grid nodes according to `strategy`.
pub fn realize_holes<T: Real>(
    grid: &Grid,
    perforation: &PerforationSpec<T>,
    strategy: HoleStrategy<T>,
) -> Result<HoleNodeSets<T>> {
    let h: T = grid.spacing();
    let pe = &perforation.pe;
    let scale = perforation.eps.powi(pe.n() as i32);
    let node_capacity = |cal: &NodeCalibration<T>| radius_capacity(cal.equivalent_radius(h), pe).ok();
    let mut holes = Vec::with_capacity(perforation.holes.len());
    for hole in &perforation.holes {
        let target_capacity = hole.gamma * scale;
        let a = hole.radius;
        let entry = match strategy {
            HoleStrategy::Resolved => {
                if a.value() < h {
                    let min_nodes = (T::one() / a.value()).ceil().to_usize().unwrap_or(usize::MAX);
                    return Err(Error::Resolution {
                        radius: a.value().to_f64_lossy(),
                        spacing: h.to_f64_lossy(),
                        min_nodes,
                    });
                }
                let nodes = nodes_within(grid, &hole.center, a.value());
                HoleNodes { nodes, coupling: None, target_capacity, node_capacity: None }
            }
            HoleStrategy::NearestNode { calibration } => HoleNodes {
                nodes: vec![grid.nearest_node(&hole.center)],
                coupling: None,
                target_capacity,
                node_capacity: calibration.as_ref().and_then(node_capacity),
            },
            HoleStrategy::Subgrid { calibration } => {
                let rho = calibration.equivalent_radius(h);
                let node = grid.nearest_node(&hole.center);
                if a.value() >= h {
                    HoleNodes {
                        nodes: nodes_within(grid, &hole.center, a.value()),
                        coupling: None,
                        target_capacity,
                        node_capacity: None,
                    }
                } else if a.ln() >= rho.ln() {
                    HoleNodes { nodes: vec![node], coupling: None, target_capacity, node_capacity: node_capacity(&calibration) }
                } else {
                    let kappa = condenser_capacity(a, rho, pe)?;
                    HoleNodes { nodes: vec![node], coupling: Some(kappa), target_capacity, node_capacity: None }
                }
            }
        };
        holes.push(entry);
    }
    Ok(HoleNodeSets { strategy, holes })
}

/// A perforation realized on a grid: the holes of `field` at cell size `ε`
/// and the nodes that carry them.
#[derive(Debug, Clone)]
pub struct PerforatedGrid<T> {
    pub grid: Arc<Grid>,
    pub perforation: PerforationSpec<T>,
    pub holes: HoleNodeSets<T>,
}

impl<T: Real> PerforatedGrid<T> {
    pub fn new(
        grid: Arc<Grid>,
        field: &CapacityField<T>,
        eps: T,
        pe: &PExponent<T>,
        strategy: HoleStrategy<T>,
    ) -> Result<Self> {
        let perforation = holes_from_field(field, eps, pe)?;
        Self::from_perforation(grid, perforation, strategy)
    }

    pub fn from_perforation(grid: Arc<Grid>, perforation: PerforationSpec<T>, strategy: HoleStrategy<T>) -> Result<Self> {
        if grid.dim() != perforation.pe.n() {
            return Err(Error::domain("grid dimension does not match the perforation"));
        }
        if grid.cells() % perforation.cells != 0 {
            return Err(Error::config(
                "N",
                format!("N = {} must be a multiple of 1/eps = {}", grid.cells(), perforation.cells),
            ));
        }
        let holes = realize_holes(&grid, &perforation, strategy)?;
        Ok(Self { grid, perforation, holes })
    }

    /// No holes at all.
    pub fn unperforated(grid: Arc<Grid>, cells: usize, pe: PExponent<T>) -> Self {
        Self { grid, perforation: PerforationSpec::empty(cells, pe), holes: HoleNodeSets::empty(HoleStrategy::Resolved) }
    }

    pub fn pe(&self) -> &PExponent<T> {
        &self.perforation.pe
    }

    pub fn eps(&self) -> T {
        self.perforation.eps
    }

    /// Capacity couplings of the sub-grid holes towards `target`.
    pub fn couplings(&self, target: T, kind: CouplingKind) -> Vec<Coupling<T>> {
        self.holes
            .couplings()
            .into_iter()
            .map(|(node, weight)| Coupling { node, weight, target, kind })
            .collect()
    }

    /// `Σ κ_k |target − v(x_k)|^p`: the `p`-Dirichlet energy of the sub-grid
    /// annuli when the holes carry `target`.
    pub fn annulus_energy(&self, v: &[T], target: T) -> T {
        let p = self.pe().p();
        self.holes.couplings().iter().map(|&(node, kappa)| kappa * abs_pow(target - v[node], p)).sum()
    }

    /// `∫|∇v|^p` over the grid plus the annuli, holes carrying `target`.
    pub fn dirichlet_p(&self, v: &GridFunction<T>, target: T) -> T {
        let p = self.pe().p();
        v.w1p_seminorm(p).powf(p) + self.annulus_energy(v.values(), target)
    }
}

/// Capacity of one hole as seen from its node, `cap(B_a, B_ρ)`.
pub fn coupling_capacity<T: Real>(a: Radius<T>, cal: &NodeCalibration<T>, h: T, pe: &PExponent<T>) -> Result<T> {
    condenser_capacity(a, cal.equivalent_radius(h), pe)
}
