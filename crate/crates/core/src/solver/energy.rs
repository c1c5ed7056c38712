//! Declarative energies and their discrete objectives.

use std::sync::Arc;

use crate::capacity::PExponent;
use crate::mesh::{Grid, GridFunction, MAX_DIM};
use crate::scalar::{abs_pow, neg, Real};
use crate::solver::sparse::{element_matrix, CsrMatrix};

/// Right-hand side `f` of `-∫ f v`.
#[derive(Debug, Clone, PartialEq)]
pub enum Load<T> {
    Zero,
    Constant(T),
    /// Nodal values of the piecewise-linear interpolant of `f`.
    Nodal(Vec<T>),
}

/// Nodal point mass `weight · δ_node`, contributing `-weight · v(node)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointMass<T> {
    pub node: usize,
    pub weight: T,
}

/// Shape of a capacity coupling between a node and a sub-grid hole.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CouplingKind {
    /// `(1/p) κ |target - v|^p`: the hole carries the value `target`.
    Anchor,
    /// `(1/p) κ ((target - v)_+)^p`: the hole carries the constraint `>= target`.
    Floor,
}

/// Energy of the annulus between a sub-grid hole and its carrier node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coupling<T> {
    pub node: usize,
    pub weight: T,
    pub target: T,
    pub kind: CouplingKind,
}

impl<T: Real> Coupling<T> {
    #[inline]
    fn gap(&self, v: T) -> T {
        match self.kind {
            CouplingKind::Anchor => self.target - v,
            CouplingKind::Floor => (self.target - v).max(T::zero()),
        }
    }
}

/// `∫ (1/p)((|∇v|² + δ²)^{p/2} - δ^p) - f v + α v + (α₀/p) v_-^p  -  Σ w_k v(x_k)  + couplings`.
///
/// The constant `-δ^p/p` only normalises the energy of `v = 0` to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergySpec<T> {
    pub pe: PExponent<T>,
    pub delta_reg: T,
    pub load: Load<T>,
    pub bulk_linear: T,
    pub neg_penalty: T,
    pub point_masses: Vec<PointMass<T>>,
    pub couplings: Vec<Coupling<T>>,
}

impl<T: Real> EnergySpec<T> {
    /// Plain `p`-Dirichlet energy; `δ_reg` defaults to `1e-8` for `p < 2`.
    pub fn dirichlet(pe: PExponent<T>) -> Self {
        let delta_reg = if pe.p() < T::lit(2.0) { T::lit(1e-8) } else { T::zero() };
        Self {
            pe,
            delta_reg,
            load: Load::Zero,
            bulk_linear: T::zero(),
            neg_penalty: T::zero(),
            point_masses: Vec::new(),
            couplings: Vec::new(),
        }
    }

    pub fn with_load(mut self, load: Load<T>) -> Self {
        self.load = load;
        self
    }

    pub fn with_bulk_linear(mut self, alpha: T) -> Self {
        self.bulk_linear = alpha;
        self
    }

    pub fn with_neg_penalty(mut self, alpha0: T) -> Self {
        self.neg_penalty = alpha0;
        self
    }

    pub fn with_delta(mut self, delta: T) -> Self {
        self.delta_reg = delta;
        self
    }

    pub fn with_point_masses(mut self, masses: Vec<PointMass<T>>) -> Self {
        self.point_masses = masses;
        self
    }

    pub fn with_couplings(mut self, couplings: Vec<Coupling<T>>) -> Self {
        self.couplings = couplings;
        self
    }
}

/// Consistent P1 load vector `b_i = ∫ f φ_i` of a nodal function.
pub fn consistent_load<T: Real>(grid: &Grid, f: &[T]) -> Vec<T> {
    let n = grid.dim();
    let vol = grid.element_volume::<T>();
    // local mass matrix vol/((n+1)(n+2)) (1 + δ_ij)
    let c = vol / T::from_count((n + 1) * (n + 2));
    let mut b = vec![T::zero(); grid.node_count()];
    for e in 0..grid.element_count() {
        let el = grid.element(e);
        let sum: T = el.nodes[..=n].iter().map(|&v| f[v]).sum();
        for &v in &el.nodes[..=n] {
            b[v] += c * (sum + f[v]);
        }
    }
    b
}

/// Separate parts of the energy at one state.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnergyTerms<T> {
    pub dirichlet: T,
    pub linear: T,
    pub penalty: T,
    pub coupling: T,
}

impl<T: Real> EnergyTerms<T> {
    pub fn total(&self) -> T {
        self.dirichlet + self.linear + self.penalty + self.coupling
    }
}

/// Assembled discrete objective: value, gradient and Hessian.
#[derive(Debug, Clone)]
pub struct Objective<T> {
    grid: Arc<Grid>,
    p: T,
    delta: T,
    /// Coefficients of every term linear in the nodal values.
    linear: Vec<T>,
    neg_penalty: T,
    mass: Vec<T>,
    couplings: Vec<Coupling<T>>,
}

/// Below this magnitude the curvature of `|x|^p` (`p < 2`) is frozen.
const CURVATURE_FLOOR: f64 = 1e-10;

/// Assembles `energy` on `grid`.
pub fn assemble<T: Real>(energy: &EnergySpec<T>, grid: &Arc<Grid>) -> Objective<T> {
    let nodes = grid.node_count();
    let mass: Vec<T> = (0..nodes).map(|v| grid.lumped_mass(v)).collect();
    let mut linear: Vec<T> = mass.iter().map(|&m| energy.bulk_linear * m).collect();
    match &energy.load {
        Load::Zero => {}
        Load::Constant(f) => {
            for (c, &m) in linear.iter_mut().zip(&mass) {
                *c -= *f * m;
            }
        }
        Load::Nodal(f) => {
            assert_eq!(f.len(), nodes, "nodal load has the wrong length");
            for (c, b) in linear.iter_mut().zip(consistent_load(grid, f)) {
                *c -= b;
            }
        }
    }
    for pm in &energy.point_masses {
        linear[pm.node] -= pm.weight;
    }
    Objective {
        grid: grid.clone(),
        p: energy.pe.p(),
        delta: energy.delta_reg,
        linear,
        neg_penalty: energy.neg_penalty,
        mass,
        couplings: energy.couplings.clone(),
    }
}

impl<T: Real> Objective<T> {
    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn p(&self) -> T {
        self.p
    }

    pub fn delta(&self) -> T {
        self.delta
    }

    pub fn mass(&self) -> &[T] {
        &self.mass
    }

    /// Copy with a different gradient regularisation.
    pub fn with_delta(&self, delta: T) -> Self {
        let mut o = self.clone();
        o.delta = delta;
        o
    }

    #[inline]
    fn density(&self, s: T) -> T {
        // (1/p)((s + δ²)^{p/2} - δ^p), s = |g|²
        let d2 = self.delta * self.delta;
        let half_p = self.p / T::lit(2.0);
        if self.delta == T::zero() {
            return if s == T::zero() { T::zero() } else { s.powf(half_p) / self.p };
        }
        // stable for s ≪ δ²: δ^p ((1 + s/δ²)^{p/2} - 1) = δ^p expm1((p/2) ln1p(s/δ²))
        d2.powf(half_p) * (half_p * (s / d2).ln_1p()).exp_m1() / self.p
    }

    pub fn terms(&self, v: &[T]) -> EnergyTerms<T> {
        let g = &self.grid;
        let n = g.dim();
        let mut dirichlet = T::zero();
        for e in 0..g.element_count() {
            let grad = g.element_gradient(&g.element(e), v);
            let s: T = grad[..n].iter().map(|&x| x * x).sum();
            dirichlet += self.density(s);
        }
        dirichlet *= g.element_volume::<T>();
        let linear = self.linear.iter().zip(v).map(|(&c, &x)| c * x).sum();
        let penalty = if self.neg_penalty == T::zero() {
            T::zero()
        } else {
            self.neg_penalty / self.p
                * self.mass.iter().zip(v).map(|(&m, &x)| m * abs_pow(neg(x), self.p)).sum::<T>()
        };
        let coupling =
            self.couplings.iter().map(|c| c.weight * abs_pow(c.gap(v[c.node]), self.p)).sum::<T>() / self.p;
        EnergyTerms { dirichlet, linear, penalty, coupling }
    }

    pub fn value(&self, v: &[T]) -> T {
        self.terms(v).total()
    }

    /// `|a + da|^p - |a|^p` without cancelling against `|a|^p`.
    fn pow_change(&self, a: T, da: T) -> T {
        let b = a + da;
        if a == T::zero() || b == T::zero() || a.signum() != b.signum() {
            return abs_pow(b, self.p) - abs_pow(a, self.p);
        }
        abs_pow(a, self.p) * (self.p * (da / a).ln_1p()).exp_m1()
    }

    /// Same for `(a)_+^p`.
    fn clamped_pow_change(&self, a: T, da: T) -> T {
        let b = a + da;
        if a > T::zero() && b > T::zero() {
            self.pow_change(a, da)
        } else {
            abs_pow(b.max(T::zero()), self.p) - abs_pow(a.max(T::zero()), self.p)
        }
    }

    /// `value(v + step) - value(v)`, summed term by term so the round-off is
    /// relative to the change and not to the size of the energy. Line searches
    /// on nearly flat plateaus depend on this.
    pub fn value_change(&self, v: &[T], step: &[T]) -> T {
        let g = &self.grid;
        let n = g.dim();
        let d2 = self.delta * self.delta;
        let half_p = self.p / T::lit(2.0);
        let mut dirichlet = T::zero();
        for e in 0..g.element_count() {
            let el = g.element(e);
            let dg = g.element_gradient(&el, step);
            let ds_sq: T = dg[..n].iter().map(|&x| x * x).sum();
            if ds_sq == T::zero() {
                continue;
            }
            let grad = g.element_gradient(&el, v);
            let mut ds = ds_sq;
            for d in 0..n {
                ds += T::lit(2.0) * grad[d] * dg[d];
            }
            let t = grad[..n].iter().map(|&x| x * x).sum::<T>() + d2;
            dirichlet += if t == T::zero() {
                ds.max(T::zero()).powf(half_p) / self.p
            } else {
                // (1/p) t^{p/2} ((1 + ds/t)^{p/2} - 1)
                t.powf(half_p) * (half_p * (ds / t).ln_1p()).exp_m1() / self.p
            };
        }
        let mut change = dirichlet * g.element_volume::<T>();
        change += self.linear.iter().zip(step).map(|(&c, &s)| c * s).sum::<T>();
        if self.neg_penalty != T::zero() {
            let mut pen = T::zero();
            for i in 0..v.len() {
                if step[i] != T::zero() {
                    pen += self.mass[i] * self.clamped_pow_change(-v[i], -step[i]);
                }
            }
            change += self.neg_penalty / self.p * pen;
        }
        for c in &self.couplings {
            let s = step[c.node];
            if s != T::zero() {
                let a = c.target - v[c.node];
                let d = match c.kind {
                    CouplingKind::Anchor => self.pow_change(a, -s),
                    CouplingKind::Floor => self.clamped_pow_change(a, -s),
                };
                change += c.weight * d / self.p;
            }
        }
        change
    }

    /// Writes the gradient into `out` and returns the value.
    pub fn value_and_gradient(&self, v: &[T], out: &mut [T]) -> T {
        let g = &self.grid;
        let n = g.dim();
        let vol = g.element_volume::<T>();
        out.copy_from_slice(&self.linear);
        let mut value: T = self.linear.iter().zip(v).map(|(&c, &x)| c * x).sum();
        let mut dirichlet = T::zero();
        let d2 = self.delta * self.delta;
        let e_pow = (self.p - T::lit(2.0)) / T::lit(2.0);
        for e in 0..g.element_count() {
            let el = g.element(e);
            let grad = g.element_gradient(&el, v);
            let s: T = grad[..n].iter().map(|&x| x * x).sum();
            dirichlet += self.density(s);
            let t = s + d2;
            if t == T::zero() {
                continue;
            }
            let k = t.powf(e_pow);
            let mut q = [T::zero(); MAX_DIM];
            for d in 0..n {
                q[d] = k * grad[d];
            }
            g.scatter_flux(&el, &q, vol, out);
        }
        value += dirichlet * vol;
        if self.neg_penalty != T::zero() {
            let pm1 = self.p - T::one();
            for i in 0..v.len() {
                let m = neg(v[i]);
                if m > T::zero() {
                    value += self.neg_penalty / self.p * self.mass[i] * m.powf(self.p);
                    out[i] -= self.neg_penalty * self.mass[i] * m.powf(pm1);
                }
            }
        }
        for c in &self.couplings {
            let gap = c.gap(v[c.node]);
            if gap != T::zero() {
                value += c.weight * abs_pow(gap, self.p) / self.p;
                out[c.node] -= c.weight * abs_pow(gap, self.p - T::one()) * gap.signum();
            }
        }
        value
    }

    pub fn gradient(&self, v: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); v.len()];
        self.value_and_gradient(v, &mut out);
        out
    }

    #[inline]
    fn curvature(&self, x: T) -> T {
        // second derivative of (1/p)|x|^p, frozen near 0 when p < 2
        let a = x.abs().max(T::lit(CURVATURE_FLOOR));
        (self.p - T::one()) * a.powf(self.p - T::lit(2.0))
    }

    /// Hessian of the objective. Exact wherever it exists; where `|∇v| = δ = 0`
    /// with `p > 2`, and for the `|x|^p` terms near 0, the curvature is floored so
    /// the matrix stays positive definite.
    pub fn hessian(&self, v: &[T], a: &mut CsrMatrix<'_, T>) {
        let g = &self.grid;
        let n = g.dim();
        let vol = g.element_volume::<T>();
        let inv_h = T::from_count(g.cells());
        let pattern = a.pattern;
        a.clear();
        let d2 = self.delta * self.delta;
        let mut hloc = [[T::zero(); MAX_DIM]; MAX_DIM];
        let mut local = [T::zero(); (MAX_DIM + 1) * (MAX_DIM + 1)];
        // keep the model positive definite where |∇v| = δ = 0 and p > 2; for
        // p < 2 a floor above δ² would understate the curvature of flat elements
        let floor = if self.p < T::lit(2.0) && d2 > T::zero() { T::zero() } else { T::lit(1e-12) };
        for e in 0..g.element_count() {
            let el = g.element(e);
            let grad = g.element_gradient(&el, v);
            let s: T = grad[..n].iter().map(|&x| x * x).sum();
            let t = (s + d2).max(floor);
            let k = t.powf((self.p - T::lit(2.0)) / T::lit(2.0));
            let k2 = (self.p - T::lit(2.0)) * t.powf((self.p - T::lit(4.0)) / T::lit(2.0));
            for r in 0..n {
                for c in 0..n {
                    hloc[r][c] = k2 * grad[r] * grad[c];
                }
                hloc[r][r] += k;
            }
            element_matrix(n, &el.perm, inv_h, &hloc, &mut local);
            for (pos, val) in pattern.element_positions(e).iter().zip(&local) {
                a.values[*pos as usize] += *val * vol;
            }
        }
        if self.neg_penalty != T::zero() {
            for i in 0..v.len() {
                if v[i] < T::zero() {
                    a.add_diagonal(i, self.neg_penalty * self.mass[i] * self.curvature(v[i]));
                }
            }
        }
        for c in &self.couplings {
            let gap = c.gap(v[c.node]);
            if c.kind == CouplingKind::Anchor || gap > T::zero() {
                a.add_diagonal(c.node, c.weight * self.curvature(gap));
            }
        }
    }
}

/// Evaluates `energy` at `v` (convenience for diagnostics).
pub fn energy_value<T: Real>(energy: &EnergySpec<T>, v: &GridFunction<T>) -> T {
    assemble(energy, v.grid()).value(v.values())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::site_uniform;
    use proptest::prelude::*;

    fn random(n: usize, seed: u64) -> Vec<f64> {
        (0..n).map(|i| site_uniform(seed, &[i as i64]) - 0.5).collect()
    }

    fn full_spec(p: f64, n: usize) -> (EnergySpec<f64>, Arc<Grid>) {
        let grid = Grid::shared(n, if n == 2 { 8 } else { 4 }).unwrap();
        let pe = PExponent::new(p, n).unwrap();
        let f: Vec<f64> = random(grid.node_count(), 99);
        let spec = EnergySpec::dirichlet(pe)
            .with_delta(1e-2)
            .with_load(Load::Nodal(f))
            .with_bulk_linear(0.7)
            .with_neg_penalty(1.3)
            .with_point_masses(vec![PointMass { node: 10, weight: 0.05 }])
            .with_couplings(vec![
                Coupling { node: 12, weight: 0.2, target: 1.0, kind: CouplingKind::Anchor },
                Coupling { node: 14, weight: 0.3, target: 0.0, kind: CouplingKind::Floor },
            ]);
        (spec, grid)
    }

    #[test]
    fn zero_state_has_zero_energy() {
        let grid = Grid::shared(2, 8).unwrap();
        let pe = PExponent::new(1.5, 2).unwrap();
        let obj = assemble(&EnergySpec::dirichlet(pe).with_delta(0.1), &grid);
        let v = vec![0.0; grid.node_count()];
        assert_eq!(obj.value(&v), 0.0);
        assert!(obj.gradient(&v).iter().all(|&g| g == 0.0));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for &(p, n) in &[(1.5, 2usize), (2.0, 2), (1.3, 3), (3.0, 3)] {
            let (spec, grid) = full_spec(p, n);
            let obj = assemble(&spec, &grid);
            let v = random(grid.node_count(), 4);
            let g = obj.gradient(&v);
            let h = 1e-6;
            let mut worst: f64 = 0.0;
            let scale = g.iter().map(|x| x.abs()).fold(0.0, f64::max);
            for i in (0..v.len()).step_by(3) {
                let mut vp = v.clone();
                vp[i] += h;
                let mut vm = v.clone();
                vm[i] -= h;
                let fd = (obj.value(&vp) - obj.value(&vm)) / (2.0 * h);
                worst = worst.max((fd - g[i]).abs() / scale);
            }
            assert!(worst <= 1e-6, "p={p} n={n}: {worst}");
        }
    }

    #[test]
    fn quadratic_case_matches_matrix_assembly() {
        // p = 2, δ = 0: value = ½ vᵀ A v with A the P1 stiffness matrix
        let grid = Grid::shared(2, 6).unwrap();
        let pe = PExponent::new(2.0, 2).unwrap();
        let obj = assemble(&EnergySpec::dirichlet(pe), &grid);
        let v = random(grid.node_count(), 8);
        let mut a = CsrMatrix::zeros(grid.pattern());
        obj.hessian(&v, &mut a);
        let mut av = vec![0.0; v.len()];
        a.matvec(&v, &mut av);
        let quad: f64 = 0.5 * v.iter().zip(&av).map(|(x, y)| x * y).sum::<f64>();
        assert!((quad - obj.value(&v)).abs() < 1e-12 * (1.0 + quad.abs()));
        // the oracle stiffness: 5-point Laplacian for the Kuhn split
        let c = grid.node_index(&[3, 3]);
        assert!((a.diagonal(c) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn hessian_matches_gradient_differences() {
        let (spec, grid) = full_spec(2.5, 3);
        let obj = assemble(&spec, &grid);
        let v = random(grid.node_count(), 21);
        let mut a = CsrMatrix::zeros(grid.pattern());
        obj.hessian(&v, &mut a);
        let dir = random(grid.node_count(), 22);
        let mut ad = vec![0.0; v.len()];
        a.matvec(&dir, &mut ad);
        let h = 1e-6;
        let vp: Vec<f64> = v.iter().zip(&dir).map(|(x, d)| x + h * d).collect();
        let vm: Vec<f64> = v.iter().zip(&dir).map(|(x, d)| x - h * d).collect();
        let (gp, gm) = (obj.gradient(&vp), obj.gradient(&vm));
        let scale = ad.iter().map(|x| x.abs()).fold(0.0, f64::max);
        for i in 0..v.len() {
            let fd = (gp[i] - gm[i]) / (2.0 * h);
            assert!((fd - ad[i]).abs() <= 1e-5 * scale, "{i}: {fd} vs {}", ad[i]);
        }
    }

    #[test]
    fn hessian_is_exact_where_gradients_are_near_delta() {
        // gradients far below the old curvature floor, where |∇v| ~ δ
        let grid = Grid::shared(2, 8).unwrap();
        let pe = PExponent::new(1.5, 2).unwrap();
        let obj = assemble(&EnergySpec::dirichlet(pe).with_delta(1e-8), &grid);
        let v: Vec<f64> = random(grid.node_count(), 5).iter().map(|x| 1e-9 * x).collect();
        let mut a = CsrMatrix::zeros(grid.pattern());
        obj.hessian(&v, &mut a);
        let dir = random(grid.node_count(), 6);
        let mut ad = vec![0.0; v.len()];
        a.matvec(&dir, &mut ad);
        let h = 1e-14;
        let vp: Vec<f64> = v.iter().zip(&dir).map(|(x, d)| x + h * d).collect();
        let vm: Vec<f64> = v.iter().zip(&dir).map(|(x, d)| x - h * d).collect();
        let (gp, gm) = (obj.gradient(&vp), obj.gradient(&vm));
        let scale = ad.iter().map(|x| x.abs()).fold(0.0, f64::max);
        for i in 0..v.len() {
            let fd = (gp[i] - gm[i]) / (2.0 * h);
            assert!((fd - ad[i]).abs() <= 1e-3 * scale, "{i}: {fd} vs {}", ad[i]);
        }
    }

    #[test]
    fn value_change_matches_difference_of_values() {
        for &(p, n) in &[(1.5, 2usize), (2.0, 2), (1.3, 3), (3.0, 3)] {
            let (spec, grid) = full_spec(p, n);
            let obj = assemble(&spec, &grid);
            let v = random(grid.node_count(), 11);
            let step = random(grid.node_count(), 12);
            let moved: Vec<f64> = v.iter().zip(&step).map(|(a, b)| a + b).collect();
            let direct = obj.value(&moved) - obj.value(&v);
            let change = obj.value_change(&v, &step);
            assert!((direct - change).abs() <= 1e-12 * (1.0 + direct.abs()), "p={p} n={n}: {direct} {change}");
        }
    }

    #[test]
    fn value_change_resolves_steps_below_roundoff_of_the_value() {
        let (spec, grid) = full_spec(1.5, 2);
        let obj = assemble(&spec, &grid);
        let v = random(grid.node_count(), 13);
        let g = obj.gradient(&v);
        let dir = random(grid.node_count(), 14);
        let slope: f64 = g.iter().zip(&dir).map(|(a, b)| a * b).sum();
        for &t in &[1e-12, 1e-15, 1e-18] {
            let step: Vec<f64> = dir.iter().map(|d| t * d).collect();
            let change = obj.value_change(&v, &step);
            assert!((change / (t * slope) - 1.0).abs() < 1e-6, "t={t}: {change} vs {}", t * slope);
        }
    }

    #[test]
    fn consistent_load_integrates_products() {
        // ∫ x1 · x2 on the unit square = 1/4 for the P1 interpolants of linear functions
        let grid = Grid::shared(2, 4).unwrap();
        let f: Vec<f64> = (0..grid.node_count()).map(|v| grid.coord(v, 0)).collect();
        let b = consistent_load(&grid, &f);
        let w: Vec<f64> = (0..grid.node_count()).map(|v| grid.coord(v, 1)).collect();
        let dot: f64 = b.iter().zip(&w).map(|(x, y)| x * y).sum();
        assert!((dot - 0.25).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn convexity(seed in 0u64..10_000, t in 0.01f64..0.99, p in 1.2f64..3.0) {
            let (spec, grid) = full_spec(p.min(3.0), 3);
            let obj = assemble(&spec, &grid);
            let v1 = random(grid.node_count(), seed);
            let v2 = random(grid.node_count(), seed + 1);
            let mix: Vec<f64> = v1.iter().zip(&v2).map(|(a, b)| t * a + (1.0 - t) * b).collect();
            prop_assert!(obj.value(&mix) <= t * obj.value(&v1) + (1.0 - t) * obj.value(&v2) + 1e-12);
        }

        #[test]
        fn p_monotonicity(x1 in -5.0f64..5.0, x2 in -5.0f64..5.0, y1 in -5.0f64..5.0, y2 in -5.0f64..5.0, p in 1.1f64..4.0) {
            let flux = |a: f64, b: f64| {
                let r = (a * a + b * b).sqrt();
                let k = if r == 0.0 { 0.0 } else { r.powf(p - 2.0) };
                (k * a, k * b)
            };
            let (fx, fy) = flux(x1, x2);
            let (gx, gy) = flux(y1, y2);
            let inner = (fx - gx) * (x1 - y1) + (fy - gy) * (x2 - y2);
            prop_assert!(inner >= -1e-12);
            if p >= 2.0 {
                // γ_lb = 2^{2-p} for the vector inequality
                let d = ((x1 - y1).powi(2) + (x2 - y2).powi(2)).sqrt();
                prop_assert!(inner >= 2f64.powf(2.0 - p) * d.powf(p) - 1e-9);
            }
        }
    }
}
