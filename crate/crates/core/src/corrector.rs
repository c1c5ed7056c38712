//! Correctors `w^ε`: `Δ_p w = α₀` off the holes, `w = 1` on the holes and
//! `w = 0` on the boundary, computed as the minimizer of
//! `∫ (1/p)|∇w|^p + α₀ ∫ w` under those constraints. Also the radial cutoff
//! `h^ε` and the test-function diagnostics of the corrector.
//!
//! Holes below the grid scale are carried by their centre node through the
//! annulus between the hole and the node's equivalent ball (see
//! [`HoleStrategy::Subgrid`]); every gradient integral below adds the exact
//! radial contribution of those annuli.

use std::io::Write;

use crate::capacity::PExponent;
use crate::capacity::{cutoff_profile, distance};
use crate::error::{Error, Result};
use crate::mesh::{GridFunction, HoleStrategy, PerforatedGrid, SimplexRule};
use crate::scalar::{abs_pow, Real};
use crate::solver::{assemble, minimize, ConstraintSpec, CouplingKind, EnergySpec, SolveReport, SolverConfig};

/// A solved corrector problem.
#[derive(Debug, Clone)]
pub struct CorrectorRun<T> {
    pub alpha0: T,
    /// Perturbation of the right-hand side: the run solves `Δ_p w = α₀ + δ`.
    pub delta: T,
    pub domain: PerforatedGrid<T>,
    pub w: GridFunction<T>,
    pub report: SolveReport<T>,
}

fn energy<T: Real>(domain: &PerforatedGrid<T>, rhs: T) -> EnergySpec<T> {
    EnergySpec::dirichlet(*domain.pe())
        .with_bulk_linear(rhs)
        .with_couplings(domain.couplings(T::one(), CouplingKind::Anchor))
}

fn constraints<T: Real>(domain: &PerforatedGrid<T>) -> ConstraintSpec<T> {
    let mut cons = ConstraintSpec::zero_trace(&domain.grid);
    for node in domain.holes.constrained_nodes() {
        cons.set_fixed(node, T::one());
    }
    cons
}

/// Solves for `w^ε` with right-hand side `α₀`.
pub fn solve_corrector<T: Real>(alpha0: T, domain: &PerforatedGrid<T>, config: &SolverConfig<T>) -> Result<CorrectorRun<T>> {
    solve_corrector_delta(T::zero(), alpha0, domain, config, None)
}

/// Solves for `w^ε_δ`, the corrector with right-hand side `α₀ + δ`.
pub fn solve_corrector_delta<T: Real>(
    delta: T,
    alpha0: T,
    domain: &PerforatedGrid<T>,
    config: &SolverConfig<T>,
    initial: Option<&[T]>,
) -> Result<CorrectorRun<T>> {
    if !(alpha0 >= T::zero()) || !alpha0.is_finite() {
        return Err(Error::config("alpha0", format!("must be finite and nonnegative, got {alpha0}")));
    }
    if !(delta >= T::zero()) || !delta.is_finite() {
        return Err(Error::config("delta", format!("must be finite and nonnegative, got {delta}")));
    }
    let obj = assemble(&energy(domain, alpha0 + delta), &domain.grid);
    let (w, report) = minimize(&obj, &constraints(domain), config, initial)?;
    Ok(CorrectorRun { alpha0, delta, domain: domain.clone(), w, report })
}

impl<T: Real> CorrectorRun<T> {
    pub fn p(&self) -> T {
        self.domain.pe().p()
    }

    pub fn eps(&self) -> T {
        self.domain.eps()
    }

    /// True when hole nodes hold exactly 1 and boundary nodes exactly 0.
    pub fn constraints_exact(&self) -> bool {
        let v = self.w.values();
        self.domain.holes.constrained_nodes().iter().all(|&i| v[i] == T::one())
            && self.domain.grid.boundary_nodes().iter().all(|&i| v[i] == T::zero())
    }

    /// `(min w, max w)`; the continuum corrector satisfies `w ≤ 1`.
    pub fn bounds(&self) -> (T, T) {
        (self.w.min_value(), self.w.max_value())
    }

    /// `∫|∇w|^p` including the sub-grid annuli.
    pub fn dirichlet_p(&self) -> T {
        self.domain.dirichlet_p(&self.w, T::one())
    }

    /// `(∫|∇w|^p)^{1/p}` including the sub-grid annuli.
    pub fn w1p_seminorm(&self) -> T {
        self.dirichlet_p().powf(T::one() / self.p())
    }

    pub fn lp_norm(&self) -> T {
        self.w.lp_norm(self.p())
    }
}

/// Nodal cutoff `h^ε`: 1 on the hole nodes, 0 outside the balls `B_{ε/2}(εk)`
/// and the radial profile in between. A capacity-coupled hole's node takes
/// the profile value at the node's equivalent radius.
pub fn cutoff_h<T: Real>(domain: &PerforatedGrid<T>) -> GridFunction<T> {
    let grid = &domain.grid;
    let pe = domain.pe();
    let eps = domain.eps();
    let half = eps / T::lit(2.0);
    let h: T = grid.spacing();
    let mut values = vec![T::zero(); grid.node_count()];
    let rho = match domain.holes.strategy {
        HoleStrategy::Subgrid { calibration } => Some(calibration.equivalent_radius(h).value()),
        _ => None,
    };
    // nodes within ε/2 of a hole centre
    let reach = (half / h).floor().to_usize().unwrap_or(0);
    for (hole, carrier) in domain.perforation.holes.iter().zip(&domain.holes.holes) {
        let centre = grid.nearest_node(&hole.center);
        let ci = grid.node_multi_index(centre);
        let n = grid.dim();
        let lo: Vec<usize> = (0..n).map(|d| ci[d].saturating_sub(reach)).collect();
        let hi: Vec<usize> = (0..n).map(|d| (ci[d] + reach).min(grid.cells())).collect();
        let mut idx = lo.clone();
        'scan: loop {
            let node = grid.node_index(&idx);
            let r = distance(&grid.coords::<T>(node), &hole.center);
            let value = if carrier.coupling.is_some() && node == carrier.nodes[0] {
                cutoff_profile(rho.unwrap_or(r), hole.radius, eps, pe)
            } else if r > T::zero() {
                cutoff_profile(r, hole.radius, eps, pe)
            } else {
                T::one()
            };
            values[node] = values[node].max(value);
            let mut d = 0;
            loop {
                if d == n {
                    break 'scan;
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
    for node in domain.holes.constrained_nodes() {
        values[node] = T::one();
    }
    for node in grid.boundary_nodes() {
        values[node] = T::zero();
    }
    GridFunction::new(grid.clone(), values).expect("finite cutoff")
}

/// Both sides of `∫|∇w|^p ≤ ∫|∇h|^p + p α₀ ∫|h − w|`, which follows from
/// the minimality of `w` against the admissible competitor `h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyBound<T> {
    pub corrector: T,
    pub cutoff: T,
    pub transport: T,
}

impl<T: Real> EnergyBound<T> {
    pub fn rhs(&self) -> T {
        self.cutoff + self.transport
    }

    /// `rhs − lhs`; nonnegative when the bound holds.
    pub fn margin(&self) -> T {
        self.rhs() - self.corrector
    }
}

pub fn energy_bound<T: Real>(run: &CorrectorRun<T>) -> EnergyBound<T> {
    let h = cutoff_h(&run.domain);
    let diff = h.sub(&run.w);
    EnergyBound {
        corrector: run.dirichlet_p(),
        cutoff: run.domain.dirichlet_p(&h, T::one()),
        transport: run.p() * (run.alpha0 + run.delta) * diff.lp_norm(T::one()),
    }
}

/// Tensor bump `Π_d b((x_d − c_d)/r)`, `b(t) = exp(1 − 1/(1 − t²))` on `|t| < 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Bump {
    pub id: usize,
    pub center: Vec<f64>,
    pub width: f64,
}

impl Bump {
    pub fn eval<T: Real>(&self, x: &[T]) -> T {
        let mut value = T::one();
        for (d, &xd) in x.iter().enumerate() {
            let t = (xd - T::lit(self.center[d])) / T::lit(self.width);
            let s = T::one() - t * t;
            if s <= T::zero() {
                return T::zero();
            }
            value *= (T::one() - T::one() / s).exp();
        }
        value
    }
}

/// The fixed witness family: three centres times two widths, all supported
/// inside the unit box.
pub fn bump_family(n: usize) -> Vec<Bump> {
    let centres: [[f64; 3]; 3] = [[0.5, 0.5, 0.5], [0.45, 0.55, 0.5], [0.55, 0.45, 0.5]];
    let widths = [0.3, 0.44];
    let mut out = Vec::new();
    for c in &centres {
        for &w in &widths {
            out.push(Bump { id: out.len(), center: c[..n].to_vec(), width: w });
        }
    }
    out
}

/// Smooth function paired against the corrector in diagnostic (c):
/// `Π_d sin(π x_d)`.
pub fn pairing_function<T: Real>(x: &[T]) -> T {
    x.iter().fold(T::one(), |acc, &c| acc * (T::PI() * c).sin())
}

/// Diagnostics of one corrector against one test function.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiDiagnostics<T> {
    pub phi_id: usize,
    /// `∫φ`.
    pub phi_integral: T,
    /// `(p′, ∫|∇w|^{p′} φ)`.
    pub grad_pprime: Vec<(T, T)>,
    /// `∫|∇w|^p φ`.
    pub grad_p: T,
    /// `∫|∇w|^{p−2}∇w·∇v^ε φ` with `v^ε = (1 − w) v`.
    pub pairing: T,
    /// `−α₀ ∫ v φ`.
    pub pairing_reference: T,
}

/// Integral diagnostics of one corrector run.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectorDiagnostics<T> {
    pub eps: T,
    pub seed: u64,
    pub delta: T,
    pub alpha0: T,
    pub p: T,
    pub lp_norm: T,
    pub w1p_seminorm: T,
    pub min: T,
    pub max: T,
    pub phis: Vec<PhiDiagnostics<T>>,
}

impl<T: Real> CorrectorDiagnostics<T> {
    /// `|∫|∇w|^p φ − α₀∫φ|` for the `i`-th test function.
    pub fn b_gap(&self, i: usize) -> T {
        let d = &self.phis[i];
        (d.grad_p - self.alpha0 * d.phi_integral).abs()
    }

    /// `∫|∇w|^p φ / ∫φ`, an estimate of `α₀`.
    pub fn b_ratio(&self, i: usize) -> T {
        self.phis[i].grad_p / self.phis[i].phi_integral
    }

    pub fn c_gap(&self, i: usize) -> T {
        (self.phis[i].pairing - self.phis[i].pairing_reference).abs()
    }

    /// `∫|∇w|^{p′}φ` for the `i`-th test function at `p′`.
    pub fn grad_pprime(&self, i: usize, p_prime: T) -> Option<T> {
        self.phis[i].grad_pprime.iter().find(|(q, _)| *q == p_prime).map(|&(_, v)| v)
    }

    /// Sum of a per-test-function quantity over the family.
    pub fn family_sum<F: Fn(&Self, usize) -> T>(&self, f: F) -> T {
        (0..self.phis.len()).map(|i| f(self, i)).sum()
    }

    pub const CSV_HEADER: [&'static str; 8] =
        ["eps", "seed", "delta", "phi_id", "quantity", "p_prime", "value", "reference_value"];

    /// CSV rows: global norms first (empty `phi_id`), then one row per
    /// test function and quantity.
    pub fn csv_rows(&self) -> Vec<Vec<String>> {
        let head = |phi: String, q: &str, pp: String, v: T, r: String| {
            vec![format!("{:e}", self.eps), self.seed.to_string(), format!("{:e}", self.delta), phi, q.to_string(), pp, format!("{v:e}"), r]
        };
        let mut rows = vec![
            head(String::new(), "lp_norm", String::new(), self.lp_norm, String::new()),
            head(String::new(), "w1p_seminorm", String::new(), self.w1p_seminorm, String::new()),
            head(String::new(), "min", String::new(), self.min, String::new()),
            head(String::new(), "max", String::new(), self.max, "1".into()),
        ];
        for d in &self.phis {
            let id = d.phi_id.to_string();
            for &(q, v) in &d.grad_pprime {
                rows.push(head(id.clone(), "grad_pprime", format!("{q:e}"), v, "0".into()));
            }
            rows.push(head(id.clone(), "grad_p", format!("{:e}", self.p), d.grad_p, format!("{:e}", self.alpha0 * d.phi_integral)));
            rows.push(head(id.clone(), "pairing", format!("{:e}", self.p), d.pairing, format!("{:e}", d.pairing_reference)));
        }
        rows
    }

    pub fn write_csv<W: Write>(all: &[Self], writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(Self::CSV_HEADER)?;
        for d in all {
            for row in d.csv_rows() {
                w.write_record(&row)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// `∫_a^ρ |u'|^q |∂B_r| dr` for the unit `p`-harmonic profile of an annulus
/// with capacity `κ`: `|u'| = (κ/|∂B_1|)^{1/(p−1)} r^{−(n−1)/(p−1)}`.
fn annulus_gradient_integral<T: Real>(kappa: T, ln_a: T, ln_rho: T, q: T, pe: &PExponent<T>) -> T {
    let (p, n) = (pe.p(), pe.dim());
    let area = pe.sphere_area();
    let c = (kappa / area).powf(T::one() / (p - T::one()));
    let e = n - q * (n - T::one()) / (p - T::one());
    let radial = if e.abs() < T::lit(1e-12) {
        ln_rho - ln_a
    } else {
        ((e * ln_rho).exp() - (e * ln_a).exp()) / e
    };
    area * c.powf(q) * radial
}

/// Evaluates the corrector integrals of `run` against the test functions
/// `phis` and the pairing function `v`.
pub fn diagnostics<T: Real>(
    run: &CorrectorRun<T>,
    seed: u64,
    phis: &[Bump],
    p_primes: &[T],
    v: &dyn Fn(&[T]) -> T,
) -> CorrectorDiagnostics<T> {
    let grid = &run.domain.grid;
    let n = grid.dim();
    let p = run.p();
    let alpha0 = run.alpha0;
    let w = run.w.values();
    let rule = SimplexRule::<T>::standard(n);
    let vol = grid.element_volume::<T>();
    let v_nodal: Vec<T> = (0..grid.node_count()).map(|i| v(&grid.coords::<T>(i))).collect();
    let v_eps: Vec<T> = w.iter().zip(&v_nodal).map(|(&wi, &vi)| (T::one() - wi) * vi).collect();
    let mut out: Vec<PhiDiagnostics<T>> = phis
        .iter()
        .map(|b| PhiDiagnostics {
            phi_id: b.id,
            phi_integral: T::zero(),
            grad_pprime: p_primes.iter().map(|&q| (q, T::zero())).collect(),
            grad_p: T::zero(),
            pairing: T::zero(),
            pairing_reference: T::zero(),
        })
        .collect();
    let mut phi_e = vec![T::zero(); phis.len()];
    let mut vphi_e = vec![T::zero(); phis.len()];
    for e in 0..grid.element_count() {
        let el = grid.element(e);
        phi_e.iter_mut().for_each(|x| *x = T::zero());
        vphi_e.iter_mut().for_each(|x| *x = T::zero());
        for (lam, &wq) in rule.points.iter().zip(&rule.weights) {
            let x = grid.element_point(&el, lam);
            let vx = v(&x[..n]);
            for (k, b) in phis.iter().enumerate() {
                let f = b.eval(&x[..n]);
                phi_e[k] += wq * f;
                vphi_e[k] += wq * f * vx;
            }
        }
        if phi_e.iter().all(|&x| x == T::zero()) {
            continue;
        }
        let gw = grid.element_gradient(&el, w);
        let gv = grid.element_gradient(&el, &v_eps);
        let s: T = gw[..n].iter().map(|&x| x * x).sum::<T>().sqrt();
        let dot: T = (0..n).map(|d| gw[d] * gv[d]).sum();
        let flux = if s > T::zero() { abs_pow(s, p - T::lit(2.0)) * dot } else { T::zero() };
        let sp = abs_pow(s, p);
        for (k, d) in out.iter_mut().enumerate() {
            let f = phi_e[k] * vol;
            d.phi_integral += f;
            d.pairing_reference -= alpha0 * vphi_e[k] * vol;
            d.grad_p += sp * f;
            d.pairing += flux * f;
            for (q, acc) in d.grad_pprime.iter_mut() {
                *acc += abs_pow(s, *q) * f;
            }
        }
    }
    if let HoleStrategy::Subgrid { calibration } = run.domain.holes.strategy {
        let ln_rho = calibration.equivalent_radius(grid.spacing()).ln();
        let pe = run.domain.pe();
        for (hole, carrier) in run.domain.perforation.holes.iter().zip(&run.domain.holes.holes) {
            let Some(kappa) = carrier.coupling else { continue };
            let node = carrier.nodes[0];
            let x = grid.coords::<T>(node);
            let gap = T::one() - w[node];
            for (k, d) in out.iter_mut().enumerate() {
                let f = phis[k].eval(&x);
                if f == T::zero() {
                    continue;
                }
                let energy = kappa * abs_pow(gap, p);
                d.grad_p += energy * f;
                d.pairing -= energy * v_nodal[node] * f;
                for (q, acc) in d.grad_pprime.iter_mut() {
                    *acc += abs_pow(gap, *q) * annulus_gradient_integral(kappa, hole.radius.ln(), ln_rho, *q, pe) * f;
                }
            }
        }
    }
    let (min, max) = run.bounds();
    CorrectorDiagnostics {
        eps: run.eps(),
        seed,
        delta: run.delta,
        alpha0,
        p,
        lp_norm: run.lp_norm(),
        w1p_seminorm: run.w1p_seminorm(),
        min,
        max,
        phis: out,
    }
}

/// `‖w_a − w_b‖_{W^{1,p}}` (full norm, annuli included) of two runs on the
/// same perforated grid.
pub fn w1p_distance<T: Real>(a: &CorrectorRun<T>, b: &CorrectorRun<T>) -> T {
    let p = a.p();
    let diff = a.w.sub(&b.w);
    let annuli: T = a
        .domain
        .holes
        .couplings()
        .iter()
        .map(|&(node, kappa)| kappa * abs_pow(diff.values()[node], p))
        .sum();
    (diff.lp_norm(p).powf(p) + diff.w1p_seminorm(p).powf(p) + annuli).powf(T::one() / p)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope<T: Real>(x: &[T], y: &[T]) -> Result<T> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::domain("a log-log fit needs at least two paired points"));
    }
    if x.iter().chain(y).any(|&v| !(v > T::zero())) {
        return Err(Error::domain("a log-log fit needs positive data"));
    }
    let lx: Vec<T> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<T> = y.iter().map(|v| v.ln()).collect();
    let m = T::from_count(x.len());
    let mx = lx.iter().copied().sum::<T>() / m;
    let my = ly.iter().copied().sum::<T>() / m;
    let sxy: T = lx.iter().zip(&ly).map(|(&a, &b)| (a - mx) * (b - my)).sum();
    let sxx: T = lx.iter().map(|&a| (a - mx) * (a - mx)).sum();
    if sxx == T::zero() {
        return Err(Error::domain("a log-log fit needs distinct abscissae"));
    }
    Ok(sxy / sxx)
}

/// `‖w^ε − w^ε_δ‖_{W^{1,p}}` over a list of `δ` and its fitted exponent.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaScaling<T> {
    pub deltas: Vec<T>,
    pub distances: Vec<T>,
    /// `‖w^ε_δ‖_{L^p}` per `δ`.
    pub lp_norms: Vec<T>,
    pub exponent: T,
}

/// Solves the perturbed correctors for every `δ` and fits `distance ~ δ^s`.
pub fn delta_scaling<T: Real>(
    base: &CorrectorRun<T>,
    deltas: &[T],
    config: &SolverConfig<T>,
) -> Result<DeltaScaling<T>> {
    let mut distances = Vec::with_capacity(deltas.len());
    let mut lp_norms = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        let run = solve_corrector_delta(delta, base.alpha0, &base.domain, config, Some(base.w.values()))?;
        run.report.require_converged()?;
        distances.push(w1p_distance(base, &run));
        lp_norms.push(run.lp_norm());
    }
    let exponent = log_log_slope(deltas, &distances)?;
    Ok(DeltaScaling { deltas: deltas.to_vec(), distances, lp_norms, exponent })
}

/// The smallest `s` the scaling bound allows: `min(1, 1/(p − 1))`.
pub fn delta_exponent_floor<T: Real>(p: T) -> T {
    T::one().min(T::one() / (p - T::one()))
}

/// True when every entry is strictly below its predecessor.
pub fn strictly_decreasing<T: Real>(values: &[T]) -> bool {
    values.windows(2).all(|w| w[1] < w[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::hole_strategy;
    use crate::capacity::{condenser_capacity, exact_radial_solution, Radius};
    use crate::field::{field_for_cells, Law};
    use crate::mesh::Grid;

    fn domain(p: f64, law: Law, seed: u64, cells: usize, nodes: usize) -> PerforatedGrid<f64> {
        let pe = PExponent::new(p, 2).unwrap();
        let field = field_for_cells(law, seed, 2, cells).unwrap();
        let strategy = hole_strategy("subgrid", &pe).unwrap();
        PerforatedGrid::new(Grid::shared(2, nodes).unwrap(), &field, 1.0 / cells as f64, &pe, strategy).unwrap()
    }

    fn empty(p: f64, nodes: usize) -> PerforatedGrid<f64> {
        PerforatedGrid::unperforated(Grid::shared(2, nodes).unwrap(), 4, PExponent::new(p, 2).unwrap())
    }

    #[test]
    fn no_holes_and_no_load_gives_zero() {
        let run = solve_corrector(0.0, &empty(1.5, 16), &SolverConfig::default()).unwrap();
        assert!(run.w.values().iter().all(|&x| x == 0.0));
        let d = diagnostics(&run, 0, &bump_family(2), &[0.75], &pairing_function);
        for i in 0..d.phis.len() {
            assert_eq!(d.b_gap(i), 0.0);
        }
    }

    #[test]
    fn no_holes_lies_between_radial_solutions() {
        // inscribed and circumscribed discs bracket the solution on the unit square
        let alpha = 1.0;
        for &p in &[1.5, 2.0] {
            let pe = PExponent::new(p, 2).unwrap();
            let run = solve_corrector(alpha, &empty(p, 64), &SolverConfig::default()).unwrap();
            run.report.require_converged().unwrap();
            let inner = exact_radial_solution(alpha, vec![0.5, 0.5], 0.5, pe).unwrap();
            let outer = exact_radial_solution(alpha, vec![0.5, 0.5], 0.5f64.sqrt(), pe).unwrap();
            let grid = &run.domain.grid;
            let slack = 2e-3;
            for i in 0..grid.node_count() {
                let x = grid.coords::<f64>(i);
                let w = run.w.values()[i];
                assert!(w <= slack, "p={p}: w = {w} > 0");
                if distance(&x, &[0.5, 0.5]) < 0.5 {
                    assert!(w <= inner.eval(&x).unwrap() + slack, "p={p} node {i}");
                }
                assert!(w >= outer.eval(&x).unwrap() - slack, "p={p} node {i}");
            }
        }
    }

    #[test]
    fn constraints_are_exact() {
        let d = domain(1.5, Law::Uniform { min: 0.5, max: 1.5 }, 3, 4, 32);
        let run = solve_corrector(1.0, &d, &SolverConfig::default()).unwrap();
        assert!(run.constraints_exact());
        assert!(run.bounds().1 <= 1.0);
    }

    #[test]
    fn zero_perturbation_is_the_plain_corrector() {
        let d = domain(1.5, Law::Constant(1.0), 0, 4, 32);
        let cfg = SolverConfig::default();
        let a = solve_corrector(1.0, &d, &cfg).unwrap();
        let b = solve_corrector_delta(0.0, 1.0, &d, &cfg, None).unwrap();
        assert_eq!(a.w.values(), b.w.values());
    }

    #[test]
    fn perturbed_corrector_lies_below_for_quadratic_case() {
        let d = domain(2.0, Law::Uniform { min: 0.5, max: 1.5 }, 1, 4, 32);
        let cfg = SolverConfig::default();
        let w = solve_corrector(1.0, &d, &cfg).unwrap();
        let wd = solve_corrector_delta(0.2, 1.0, &d, &cfg, None).unwrap();
        for (a, b) in w.w.values().iter().zip(wd.w.values()) {
            assert!(b <= &(a + 1e-12));
        }
        assert!(matches!(solve_corrector_delta(-0.1, 1.0, &d, &cfg, None), Err(Error::Config { .. })));
        assert!(solve_corrector(-1.0, &d, &cfg).is_err());
    }

    #[test]
    fn cutoff_vanishes_without_capacity_and_is_one_on_holes() {
        let d = domain(1.5, Law::Constant(0.0), 0, 4, 32);
        assert!(cutoff_h(&d).values().iter().all(|&x| x == 0.0));
        let d = domain(1.5, Law::Constant(1.0), 0, 4, 32);
        let h = cutoff_h(&d);
        for node in d.holes.constrained_nodes() {
            assert_eq!(h.values()[node], 1.0);
        }
        let eps = 0.25;
        for i in 0..d.grid.node_count() {
            let x = d.grid.coords::<f64>(i);
            let near = d.perforation.holes.iter().any(|hole| distance(&x, &hole.center) < eps / 2.0);
            let v = h.values()[i];
            assert!((0.0..=1.0).contains(&v));
            if !near {
                assert_eq!(v, 0.0, "node {i}");
            }
        }
    }

    #[test]
    fn energy_bound_holds() {
        let d = domain(1.5, Law::Constant(1.0), 0, 8, 64);
        let run = solve_corrector(1.0, &d, &SolverConfig::default()).unwrap();
        let b = energy_bound(&run);
        assert!(b.margin() >= -1e-10, "{b:?}");
        assert!(b.cutoff > 0.0 && b.transport > 0.0);
    }

    #[test]
    fn zero_corrector_diagnostics() {
        let d = domain(1.5, Law::Constant(1.0), 0, 4, 32);
        let mut run = solve_corrector(1.0, &d, &SolverConfig::default()).unwrap();
        // replace w by 0 on a grid without couplings: every gradient integral vanishes
        run.domain = empty(1.5, 32);
        run.w = GridFunction::constant(run.domain.grid.clone(), 0.0);
        let diag = diagnostics(&run, 0, &bump_family(2), &[0.75], &pairing_function);
        for (i, phi) in diag.phis.iter().enumerate() {
            assert_eq!(phi.grad_p, 0.0);
            assert_eq!(phi.pairing, 0.0);
            assert_eq!(diag.grad_pprime(i, 0.75), Some(0.0));
            assert!((diag.b_gap(i) - phi.phi_integral).abs() < 1e-15);
        }
    }

    #[test]
    fn bumps_are_supported_in_the_box() {
        for b in bump_family(2) {
            assert_eq!(b.eval(&b.center), 1.0);
            for d in 0..2 {
                assert!(b.center[d] - b.width > 0.0 && b.center[d] + b.width < 1.0);
            }
            assert_eq!(b.eval(&[b.center[0] + b.width, b.center[1]]), 0.0);
        }
        assert_eq!(bump_family(3).len(), 6);
    }

    #[test]
    fn annulus_integral_matches_quadrature() {
        // oracle: midpoint rule in ln r of |u'|^q |∂B_r|
        let pe = PExponent::new(1.5, 2).unwrap();
        let (kappa, a, rho) = (0.3f64, 1e-4f64, 2e-2f64);
        for &q in &[0.75, 1.5] {
            let exact = annulus_gradient_integral(kappa, a.ln(), rho.ln(), q, &pe);
            let k = 200_000;
            let step = (rho.ln() - a.ln()) / k as f64;
            let c = (kappa / (2.0 * std::f64::consts::PI)).powf(2.0);
            let mut sum = 0.0;
            for j in 0..k {
                let r = (a.ln() + (j as f64 + 0.5) * step).exp();
                let slope = c * r.powf(-2.0);
                sum += slope.powf(q) * 2.0 * std::f64::consts::PI * r * r * step;
            }
            assert!((sum / exact - 1.0).abs() < 1e-6, "q={q}: {sum} vs {exact}");
        }
        // with κ the condenser capacity, the q = p integral is the energy κ itself
        let cap = condenser_capacity(Radius::from_value(a), Radius::from_value(rho), &pe).unwrap();
        let full = annulus_gradient_integral(cap, a.ln(), rho.ln(), 1.5, &pe);
        assert!((full / cap - 1.0).abs() < 1e-12, "{full} vs {cap}");
    }

    #[test]
    fn log_log_slope_recovers_powers() {
        let x = [0.4, 0.2, 0.1, 0.05];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(1.7)).collect();
        assert!((log_log_slope(&x, &y).unwrap() - 1.7).abs() < 1e-12);
        assert!(log_log_slope(&x, &[1.0, 2.0]).is_err());
        assert!(log_log_slope(&[1.0, 1.0], &[1.0, 2.0]).is_err());
        assert!(log_log_slope(&[1.0, 2.0], &[0.0, 2.0]).is_err());
        assert_eq!(delta_exponent_floor(1.5), 1.0);
        assert_eq!(delta_exponent_floor(3.0), 0.5);
        assert!(strictly_decreasing(&[3.0, 2.0, 1.0]));
        assert!(!strictly_decreasing(&[3.0, 3.0, 1.0]));
    }

    #[test]
    fn delta_scaling_is_linear_for_quadratic_case() {
        let d = domain(2.0, Law::Uniform { min: 0.5, max: 1.5 }, 0, 4, 32);
        let cfg = SolverConfig::default();
        let base = solve_corrector(1.0, &d, &cfg).unwrap();
        let s = delta_scaling(&base, &[0.4, 0.2, 0.1, 0.05], &cfg).unwrap();
        assert!((s.exponent - 1.0).abs() < 1e-6, "{}", s.exponent);
        assert!(strictly_decreasing(&s.distances));
    }

    #[test]
    fn csv_has_one_row_per_quantity() {
        let d = domain(1.5, Law::Constant(1.0), 0, 4, 32);
        let run = solve_corrector(1.0, &d, &SolverConfig::default()).unwrap();
        let diag = diagnostics(&run, 7, &bump_family(2), &[0.75, 1.0], &pairing_function);
        let mut out = Vec::new();
        CorrectorDiagnostics::write_csv(&[diag], &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "eps,seed,delta,phi_id,quantity,p_prime,value,reference_value");
        // 4 global rows, then per φ: 2 p′ rows + grad_p + pairing
        assert_eq!(lines.len(), 1 + 4 + 6 * 4);
    }
}
