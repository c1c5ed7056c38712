//! Cell obstacle problems, their zero sets, Monte Carlo estimates of the
//! zero-set density `l(α)` and the bisection for the critical value `α₀`.
//!
//! The cell problem minimizes
//! `∫ (1/p)|∇v|^p + α ∫ v − Σ_k γ(k) ε^n v(εk)` over `v ≥ 0`, `v = 0` on the
//! boundary of the unit box; the Dirac sources sit on grid nodes.

use std::collections::HashMap;
use std::io::Write;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;

use crate::capacity::{barrier_g, distance, PExponent};
use crate::error::{Error, Result};
use crate::field::{field_for_cells, CapacityField, LatticeBox, Law};
use crate::mesh::{Grid, GridFunction};
use crate::scalar::Real;
use crate::solver::{assemble, minimize, ConstraintSpec, EnergySpec, PointMass, SolveReport, SolverConfig};

/// One cell obstacle problem on the unit box.
#[derive(Debug, Clone)]
pub struct CellProblem<T> {
    pub pe: PExponent<T>,
    pub alpha: T,
    /// `1/ε`.
    pub cells: usize,
    pub field: CapacityField<T>,
    pub grid: Arc<Grid>,
}

impl<T: Real> CellProblem<T> {
    pub fn new(pe: PExponent<T>, alpha: T, cells: usize, field: CapacityField<T>, grid: Arc<Grid>) -> Result<Self> {
        if cells == 0 || grid.cells() % cells != 0 {
            return Err(Error::config(
                "grid",
                format!("N = {} must be a multiple of 1/eps = {cells} so that sources sit on nodes", grid.cells()),
            ));
        }
        if grid.dim() != pe.n() || field.lattice_box.dim() != pe.n() {
            return Err(Error::domain("dimension mismatch between exponent, grid and field"));
        }
        if !alpha.is_finite() {
            return Err(Error::config("alpha", "must be finite"));
        }
        let problem = Self { pe, alpha, cells, field, grid };
        for k in problem.interior_sites().sites() {
            if problem.field.get(&k).is_none() {
                return Err(Error::domain(format!("field does not cover lattice site {k:?}")));
            }
        }
        Ok(problem)
    }

    pub fn eps(&self) -> T {
        T::one() / T::from_count(self.cells)
    }

    fn interior_sites(&self) -> LatticeBox {
        LatticeBox::cube(self.pe.n(), 1, self.cells as i64 - 1)
            .unwrap_or_else(|_| LatticeBox { lo: vec![1; self.pe.n()], hi: vec![0; self.pe.n()] })
    }

    /// Point masses `γ(k) ε^n` at the interior lattice nodes.
    pub fn sources(&self) -> Vec<PointMass<T>> {
        let stride = self.grid.cells() / self.cells;
        let weight = self.eps().powi(self.pe.n() as i32);
        self.interior_sites()
            .sites()
            .filter_map(|k| {
                let gamma = self.field.get(&k)?;
                if gamma <= T::zero() {
                    return None;
                }
                let idx: Vec<usize> = k.iter().map(|&c| c as usize * stride).collect();
                Some(PointMass { node: self.grid.node_index(&idx), weight: gamma * weight })
            })
            .collect()
    }

    pub fn energy(&self) -> EnergySpec<T> {
        EnergySpec::dirichlet(self.pe).with_bulk_linear(self.alpha).with_point_masses(self.sources())
    }

    pub fn constraints(&self) -> ConstraintSpec<T> {
        ConstraintSpec::zero_trace(&self.grid).with_global_lower(T::zero())
    }

    /// Nodal values of `Σ_k g^ε_{α,k}`, the barrier that dominates the
    /// solution for `α > 0`; `+∞` at the sources.
    pub fn barrier_envelope(&self) -> Result<Vec<T>> {
        if !(self.alpha > T::zero()) {
            return Err(Error::domain("the barrier needs alpha > 0"));
        }
        let eps = self.eps();
        let stride = self.grid.cells() / self.cells;
        let mut values = vec![T::zero(); self.grid.node_count()];
        for k in self.interior_sites().sites() {
            let gamma = self.field.get(&k).unwrap_or(T::zero());
            if gamma <= T::zero() {
                continue;
            }
            let center: Vec<T> = k.iter().map(|&c| T::from_count(c as usize * stride) * self.grid.spacing::<T>()).collect();
            for (node, value) in values.iter_mut().enumerate() {
                let r = distance(&self.grid.coords::<T>(node), &center);
                *value += barrier_g(r, gamma, eps, self.alpha, &self.pe)?;
            }
        }
        Ok(values)
    }
}

#[derive(Debug, Clone)]
pub struct CellSolution<T> {
    pub v: GridFunction<T>,
    pub report: SolveReport<T>,
}

/// Solves the cell obstacle problem, optionally from a warm start.
pub fn solve_cell<T: Real>(
    problem: &CellProblem<T>,
    config: &SolverConfig<T>,
    initial: Option<&[T]>,
) -> Result<CellSolution<T>> {
    let obj = assemble(&problem.energy(), &problem.grid);
    let (v, report) = minimize(&obj, &problem.constraints(), config, initial)?;
    Ok(CellSolution { v, report })
}

/// `tol_zero = rel · max(sup v, 1e-12)`.
pub fn default_tol_zero<T: Real>(v: &GridFunction<T>, rel: T) -> T {
    rel * v.max_value().max(T::lit(1e-12))
}

/// Volume fraction of elements on which `v ≤ tol_zero`.
///
/// Boundary nodes carry the imposed trace, not information about the zero
/// set, so an element is judged by its interior nodes. Elements with no
/// interior node (corners of the box) are judged by the interior nodes
/// adjacent to theirs.
pub fn zero_set_fraction<T: Real>(v: &GridFunction<T>, tol_zero: T) -> T {
    let grid = v.grid();
    let pattern = grid.pattern();
    let values = v.values();
    let low = |node: usize| values[node] <= tol_zero;
    let mut zero = 0usize;
    for e in 0..grid.element_count() {
        let el = grid.element(e);
        let nodes = &el.nodes[..=grid.dim()];
        let interior: Vec<usize> = nodes.iter().copied().filter(|&i| !grid.is_boundary(i)).collect();
        let is_zero = if interior.is_empty() {
            nodes
                .iter()
                .flat_map(|&i| pattern.neighbours(i).iter().map(|&j| j as usize))
                .filter(|&j| !grid.is_boundary(j))
                .all(low)
        } else {
            interior.into_iter().all(low)
        };
        if is_zero {
            zero += 1;
        }
    }
    T::from_count(zero) / T::from_count(grid.element_count())
}

/// Lumped-mass fraction of interior nodes with `v ≤ tol_zero`, normalised by
/// the interior mass.
pub fn nodal_zero_fraction<T: Real>(v: &GridFunction<T>, tol_zero: T) -> T {
    let grid = v.grid();
    let mut zero = T::zero();
    let mut total = T::zero();
    for node in grid.interior_nodes() {
        let m = grid.lumped_mass::<T>(node);
        total += m;
        if v.values()[node] <= tol_zero {
            zero += m;
        }
    }
    if total > T::zero() {
        zero / total
    } else {
        T::one()
    }
}

/// Two-sided 95% Student-t quantile.
pub fn t_quantile_95(df: usize) -> f64 {
    const TABLE: [f64; 30] = [
        12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228, 2.201, 2.179, 2.160, 2.145, 2.131,
        2.120, 2.110, 2.101, 2.093, 2.086, 2.080, 2.074, 2.069, 2.064, 2.060, 2.056, 2.052, 2.048, 2.045, 2.042,
    ];
    match df {
        0 => f64::INFINITY,
        1..=30 => TABLE[df - 1],
        // asymptotic in 1/df, exact to 1e-3 at df = 60 and 120
        _ => 1.960 + 2.46 / df as f64,
    }
}

/// Settings shared by every instance of an `l(α)` estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct LCurveConfig<T> {
    pub pe: PExponent<T>,
    pub law: Law,
    /// Values of `1/ε`.
    pub cells: Vec<usize>,
    pub seeds: Vec<u64>,
    /// Grid resolution per cell: `N = nodes_per_cell · (1/ε)`.
    pub nodes_per_cell: usize,
    /// `tol_zero` relative to `sup v`.
    pub tol_zero_rel: T,
    pub solver: SolverConfig<T>,
    /// Start each solve from the last solution of the same `(ε, seed)`.
    pub warm_start: bool,
}

impl<T: Real> LCurveConfig<T> {
    pub fn new(pe: PExponent<T>, law: Law) -> Self {
        Self {
            pe,
            law,
            cells: vec![8, 16],
            seeds: (0..5).collect(),
            nodes_per_cell: 8,
            tol_zero_rel: T::lit(1e-6),
            solver: SolverConfig::default(),
            warm_start: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.law.validate()?;
        let mut cells = self.cells.clone();
        cells.sort_unstable();
        cells.dedup();
        if cells.len() < 2 || cells.len() != self.cells.len() || cells[0] < 2 {
            return Err(Error::config("cells", "need at least two distinct values of 1/eps, each >= 2"));
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() < 3 || seeds.len() != self.seeds.len() {
            return Err(Error::config("seeds", "need at least three distinct seeds"));
        }
        if self.nodes_per_cell == 0 {
            return Err(Error::config("nodes_per_cell", "must be positive"));
        }
        if !(self.tol_zero_rel > T::zero()) {
            return Err(Error::config("tol_zero_rel", "must be positive"));
        }
        Ok(())
    }
}

/// One `(α, ε, seed)` instance.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSample<T> {
    pub alpha: T,
    pub cells: usize,
    pub seed: u64,
    pub fraction: T,
    pub nodal_fraction: T,
    pub tol_zero: T,
    pub iterations: usize,
    pub converged: bool,
    /// Solver failure, if any; failed samples are left out of the statistics.
    pub error: Option<String>,
}

impl<T: Real> CellSample<T> {
    pub fn eps(&self) -> T {
        T::one() / T::from_count(self.cells)
    }

    fn ok(&self) -> bool {
        self.error.is_none()
    }
}

/// Statistics of the fractions at one `ε`.
#[derive(Debug, Clone, PartialEq)]
pub struct EpsSummary<T> {
    pub cells: usize,
    pub count: usize,
    pub failures: usize,
    pub mean: T,
    /// Sample standard deviation.
    pub std: T,
    /// Half-width of the 95% confidence interval of the mean.
    pub ci: T,
}

impl<T: Real> EpsSummary<T> {
    pub fn eps(&self) -> T {
        T::one() / T::from_count(self.cells)
    }

    fn from_samples(cells: usize, samples: &[&CellSample<T>]) -> Self {
        let ok: Vec<T> = samples.iter().filter(|s| s.ok()).map(|s| s.fraction).collect();
        let count = ok.len();
        let failures = samples.len() - count;
        let (mean, std) = mean_std(&ok);
        let ci = if count >= 2 {
            T::lit(t_quantile_95(count - 1)) * std / T::from_count(count).sqrt()
        } else {
            T::infinity()
        };
        Self { cells, count, failures, mean, std, ci }
    }
}

fn mean_std<T: Real>(x: &[T]) -> (T, T) {
    if x.is_empty() {
        return (T::nan(), T::nan());
    }
    let n = T::from_count(x.len());
    let mean = x.iter().copied().sum::<T>() / n;
    if x.len() < 2 {
        return (mean, T::zero());
    }
    let var = x.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / (n - T::one());
    (mean, var.sqrt())
}

/// Estimate of `l(α)` at one `α`.
#[derive(Debug, Clone, PartialEq)]
pub struct LRow<T> {
    pub alpha: T,
    /// Ordered by decreasing `ε`.
    pub summaries: Vec<EpsSummary<T>>,
    /// Linear extrapolation to `ε = 0` through the two smallest `ε`,
    /// clamped to `[0, 1]`.
    pub extrapolated: T,
    /// Unclamped extrapolation.
    pub raw_extrapolated: T,
    /// CI half-width of the extrapolated value (propagated, independent `ε`).
    pub ci: T,
    /// Ordered by `(ε, seed)`.
    pub samples: Vec<CellSample<T>>,
}

/// Linear extrapolation to 0 through `(ε₁, m₁)`, `(ε₂, m₂)` with `ε₁ < ε₂`,
/// and the weights `(w₁, w₂)` it applies to `m₁`, `m₂`.
pub fn extrapolate_linear<T: Real>(e1: T, m1: T, e2: T, m2: T) -> (T, T, T) {
    let w1 = e2 / (e2 - e1);
    let w2 = -e1 / (e2 - e1);
    (w1 * m1 + w2 * m2, w1, w2)
}

impl<T: Real> LRow<T> {
    fn from_samples(alpha: T, mut samples: Vec<CellSample<T>>) -> Result<Self> {
        samples.sort_by(|a, b| a.cells.cmp(&b.cells).then(a.seed.cmp(&b.seed)));
        let failed = samples.iter().filter(|s| !s.ok()).count();
        if failed * 5 > samples.len() {
            let first = samples.iter().find_map(|s| s.error.clone()).unwrap_or_default();
            return Err(Error::TooManyFailures { failed, total: samples.len(), first });
        }
        let mut cells: Vec<usize> = samples.iter().map(|s| s.cells).collect();
        cells.dedup();
        let summaries: Vec<EpsSummary<T>> = cells
            .iter()
            .map(|&c| {
                let group: Vec<&CellSample<T>> = samples.iter().filter(|s| s.cells == c).collect();
                EpsSummary::from_samples(c, &group)
            })
            .collect();
        let k = summaries.len();
        let (fine, coarse) = (&summaries[k - 1], &summaries[k - 2]);
        let (raw, w1, w2) = extrapolate_linear(fine.eps(), fine.mean, coarse.eps(), coarse.mean);
        let ci = (w1 * w1 * fine.ci * fine.ci + w2 * w2 * coarse.ci * coarse.ci).sqrt();
        Ok(Self { alpha, extrapolated: raw.max(T::zero()).min(T::one()), raw_extrapolated: raw, ci, summaries, samples })
    }
}

/// Monte Carlo estimator of `l(α)` with optional warm starts.
pub struct LEstimator<T> {
    config: LCurveConfig<T>,
    grids: HashMap<usize, Arc<Grid>>,
    warm: Mutex<HashMap<(usize, u64), (T, Vec<T>)>>,
}

impl<T: Real> LEstimator<T> {
    pub fn new(config: LCurveConfig<T>) -> Result<Self> {
        config.validate()?;
        let mut grids = HashMap::new();
        for &m in &config.cells {
            grids.insert(m, Grid::shared(config.pe.n(), m * config.nodes_per_cell)?);
        }
        Ok(Self { config, grids, warm: Mutex::new(HashMap::new()) })
    }

    pub fn config(&self) -> &LCurveConfig<T> {
        &self.config
    }

    pub fn problem(&self, alpha: T, cells: usize, seed: u64) -> Result<CellProblem<T>> {
        let field = field_for_cells(self.config.law, seed, self.config.pe.n(), cells)?;
        let grid = match self.grids.get(&cells) {
            Some(g) => g.clone(),
            None => Grid::shared(self.config.pe.n(), cells * self.config.nodes_per_cell)?,
        };
        CellProblem::new(self.config.pe, alpha, cells, field, grid)
    }

    /// Solves one instance; solver failures are recorded in the sample.
    pub fn sample(&self, alpha: T, cells: usize, seed: u64) -> Result<CellSample<T>> {
        let problem = self.problem(alpha, cells, seed)?;
        // the closest previously solved alpha gives the best start
        let warm = if self.config.warm_start {
            self.warm.lock().expect("warm-start cache").get(&(cells, seed)).map(|(_, v)| v.clone())
        } else {
            None
        };
        match solve_cell(&problem, &self.config.solver, warm.as_deref()) {
            Ok(sol) => {
                let tol_zero = default_tol_zero(&sol.v, self.config.tol_zero_rel);
                let converged = sol.report.converged;
                let sample = CellSample {
                    alpha,
                    cells,
                    seed,
                    fraction: zero_set_fraction(&sol.v, tol_zero),
                    nodal_fraction: nodal_zero_fraction(&sol.v, tol_zero),
                    tol_zero,
                    iterations: sol.report.iterations,
                    converged,
                    error: (!converged).then(|| sol.report.require_converged().unwrap_err().to_string()),
                };
                if self.config.warm_start && converged {
                    self.warm.lock().expect("warm-start cache").insert((cells, seed), (alpha, sol.v.into_values()));
                }
                Ok(sample)
            }
            Err(e) if e.is_solver_failure() => Ok(CellSample {
                alpha,
                cells,
                seed,
                fraction: T::nan(),
                nodal_fraction: T::nan(),
                tol_zero: T::nan(),
                iterations: 0,
                converged: false,
                error: Some(e.to_string()),
            }),
            Err(e) => Err(e),
        }
    }

    /// All instances at `α`, in parallel; fails if more than 20% fail.
    pub fn estimate(&self, alpha: T) -> Result<LRow<T>> {
        let jobs: Vec<(usize, u64)> =
            self.config.cells.iter().flat_map(|&c| self.config.seeds.iter().map(move |&s| (c, s))).collect();
        let samples: Vec<CellSample<T>> =
            jobs.par_iter().map(|&(c, s)| self.sample(alpha, c, s)).collect::<Result<Vec<_>>>()?;
        LRow::from_samples(alpha, samples)
    }
}

/// `l(α)` estimate for a single `α` (no warm start across calls).
pub fn estimate_l<T: Real>(alpha: T, config: &LCurveConfig<T>) -> Result<LRow<T>> {
    LEstimator::new(config.clone())?.estimate(alpha)
}

/// Rows of an `l`-curve.
#[derive(Debug, Clone, PartialEq)]
pub struct LCurveEstimate<T> {
    pub rows: Vec<LRow<T>>,
}

impl<T: Real> LCurveEstimate<T> {
    /// Estimates every `α` of `alphas` (sorted ascending in the output).
    pub fn compute(alphas: &[T], config: &LCurveConfig<T>) -> Result<Self> {
        let est = LEstimator::new(config.clone())?;
        let mut sorted = alphas.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite alpha"));
        let rows = sorted.iter().map(|&a| est.estimate(a)).collect::<Result<Vec<_>>>()?;
        Ok(Self { rows })
    }

    pub fn sorted(mut self) -> Self {
        self.rows.sort_by(|a, b| a.alpha.partial_cmp(&b.alpha).expect("finite alpha"));
        self
    }

    /// Columns `alpha,eps,seed,fraction,nodal_fraction,tol_zero,solver_iters,converged`.
    pub fn write_samples_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["alpha", "eps", "seed", "fraction", "nodal_fraction", "tol_zero", "solver_iters", "converged"])?;
        for row in &self.rows {
            for s in &row.samples {
                w.write_record([
                    format!("{:e}", row.alpha),
                    format!("{:e}", s.eps()),
                    s.seed.to_string(),
                    format!("{:e}", s.fraction),
                    format!("{:e}", s.nodal_fraction),
                    format!("{:e}", s.tol_zero),
                    s.iterations.to_string(),
                    s.converged.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Columns `alpha,eps,count,failures,mean,std,ci95`, plus one row per `α`
    /// with `eps = 0` holding the extrapolation.
    pub fn write_summary_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["alpha", "eps", "count", "failures", "mean", "std", "ci95"])?;
        for row in &self.rows {
            for s in &row.summaries {
                w.write_record([
                    format!("{:e}", row.alpha),
                    format!("{:e}", s.eps()),
                    s.count.to_string(),
                    s.failures.to_string(),
                    format!("{:e}", s.mean),
                    format!("{:e}", s.std),
                    format!("{:e}", s.ci),
                ])?;
            }
            let count: usize = row.summaries.iter().map(|s| s.count).sum();
            let failures: usize = row.summaries.iter().map(|s| s.failures).sum();
            w.write_record([
                format!("{:e}", row.alpha),
                format!("{:e}", T::zero()),
                count.to_string(),
                failures.to_string(),
                format!("{:e}", row.extrapolated),
                String::new(),
                format!("{:e}", row.ci),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Outcome of the bisection for `α₀ = sup{α : l(α) = 0}`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaZeroResult<T> {
    pub alpha0: T,
    pub lo: T,
    pub hi: T,
    pub theta: T,
    pub tol: T,
    /// Every `(α, l(α))` evaluated, in order.
    pub history: Vec<(T, T)>,
    /// Full estimates behind `history`, when the estimator was the Monte Carlo one.
    pub curve: Option<LCurveEstimate<T>>,
}

impl<T: Real> AlphaZeroResult<T> {
    /// Columns `alpha0,lo,hi,theta,tol` then `step,alpha,l` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["quantity", "alpha", "value"])?;
        w.write_record(["alpha0".to_string(), format!("{:e}", self.alpha0), String::new()])?;
        w.write_record(["lo".to_string(), format!("{:e}", self.lo), String::new()])?;
        w.write_record(["hi".to_string(), format!("{:e}", self.hi), String::new()])?;
        w.write_record(["theta".to_string(), String::new(), format!("{:e}", self.theta)])?;
        w.write_record(["tol".to_string(), String::new(), format!("{:e}", self.tol)])?;
        for (a, l) in &self.history {
            w.write_record(["l".to_string(), format!("{a:e}"), format!("{l:e}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Bisection on the predicate `l(α) > θ`.
///
/// Requires `l(lo) ≤ θ < l(hi)`; otherwise [`Error::Bracket`] carries both
/// endpoint estimates.
pub fn find_alpha0<T: Real, F: FnMut(T) -> Result<T>>(
    mut estimator: F,
    bracket: (T, T),
    theta: T,
    tol: T,
) -> Result<AlphaZeroResult<T>> {
    let (mut lo, mut hi) = bracket;
    if !(lo < hi) || !(tol > T::zero()) {
        return Err(Error::config("bracket", "need lo < hi and tol > 0"));
    }
    let mut history = Vec::new();
    let l_lo = estimator(lo)?;
    history.push((lo, l_lo));
    let l_hi = estimator(hi)?;
    history.push((hi, l_hi));
    if !(l_lo <= theta && l_hi > theta) {
        return Err(Error::Bracket {
            lo: lo.to_f64_lossy(),
            hi: hi.to_f64_lossy(),
            l_lo: l_lo.to_f64_lossy(),
            l_hi: l_hi.to_f64_lossy(),
        });
    }
    while hi - lo > tol {
        let mid = (lo + hi) / T::lit(2.0);
        let l = estimator(mid)?;
        history.push((mid, l));
        if l > theta {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(AlphaZeroResult { alpha0: (lo + hi) / T::lit(2.0), lo, hi, theta, tol, history, curve: None })
}

/// [`find_alpha0`] driven by the Monte Carlo estimator, keeping every row.
pub fn find_alpha0_monte_carlo<T: Real>(
    config: &LCurveConfig<T>,
    bracket: (T, T),
    theta: T,
    tol: T,
) -> Result<AlphaZeroResult<T>> {
    let est = LEstimator::new(config.clone())?;
    let mut rows = Vec::new();
    let mut result = find_alpha0(
        |alpha| {
            let row = est.estimate(alpha)?;
            let l = row.extrapolated;
            rows.push(row);
            Ok(l)
        },
        bracket,
        theta,
        tol,
    )?;
    result.curve = Some(LCurveEstimate { rows }.sorted());
    Ok(result)
}
