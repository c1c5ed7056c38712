//! Finite-`ε` studies of the homogenized limit: `u^ε → u₀` for the hole
//! constraint `u ≥ 0` on `T_ε`, the oscillating obstacle `v ≥ ψ^ε`, the
//! recovery sequence `φ + φ_- w^ε` and the lower-semicontinuity margins.
//!
//! Every energy below is the unregularised one (`δ = 0`), so values from
//! different solves are comparable even though the solver itself
//! regularises for `p < 2`.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;

use crate::capacity::PExponent;
use crate::corrector::{solve_corrector, strictly_decreasing, CorrectorRun};
use crate::error::{Error, Result};
use crate::field::{field_for_cells, Law};
use crate::mesh::{Grid, GridFunction, HoleStrategy, PerforatedGrid};
use crate::scalar::{neg, Real};
use crate::solver::{assemble, minimize, ConstraintSpec, Coupling, CouplingKind, EnergySpec, Load, SolveReport, SolverConfig};

/// Value `ψ^ε` takes on the holes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObstacleOnHoles {
    /// `ψ^ε = 0` on `T_ε`, as literally defined.
    Zero,
    /// `ψ^ε = max(ψ, 0)` on `T_ε`.
    MaxZero,
}

/// `ψ(x) = base + amplitude · Π_d sin(2π x_d)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Obstacle<T> {
    pub base: T,
    pub amplitude: T,
    pub on_holes: ObstacleOnHoles,
}

impl<T: Real> Default for Obstacle<T> {
    /// `−0.2 + 0.1 sin(2πx₁) sin(2πx₂)`, negative everywhere so the
    /// capacity term acts on the whole domain.
    fn default() -> Self {
        Self { base: T::lit(-0.2), amplitude: T::lit(0.1), on_holes: ObstacleOnHoles::Zero }
    }
}

impl<T: Real> Obstacle<T> {
    pub fn eval(&self, x: &[T]) -> T {
        let two_pi = T::lit(2.0) * T::PI();
        self.base + self.amplitude * x.iter().fold(T::one(), |acc, &c| acc * (two_pi * c).sin())
    }

    /// `ψ^ε` at a hole located at `x`.
    pub fn on_hole(&self, x: &[T]) -> T {
        match self.on_holes {
            ObstacleOnHoles::Zero => T::zero(),
            ObstacleOnHoles::MaxZero => self.eval(x).max(T::zero()),
        }
    }
}

/// Smooth test functions for the recovery sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TestFunction<T> {
    /// `a · sin(2π x₁) · Π_{d>1} sin(π x_d)`: negative on half the domain.
    SignChanging(T),
    /// `a · Π_d sin(π x_d) ≥ 0`.
    Positive(T),
}

impl<T: Real> TestFunction<T> {
    pub fn eval(&self, x: &[T]) -> T {
        let pi = T::PI();
        let tail = x[1..].iter().fold(T::one(), |acc, &c| acc * (pi * c).sin());
        match *self {
            TestFunction::SignChanging(a) => a * (T::lit(2.0) * pi * x[0]).sin() * tail,
            TestFunction::Positive(a) => a * (pi * x[0]).sin() * tail,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TestFunction::SignChanging(_) => "sign_changing",
            TestFunction::Positive(_) => "positive",
        }
    }
}

/// How the grid resolution depends on `ε`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridPolicy {
    /// The same `N` for every `ε`.
    Common(usize),
    /// `N = k / ε`.
    PerCell(usize),
}

impl GridPolicy {
    pub fn cells(&self, lattice: usize) -> usize {
        match *self {
            GridPolicy::Common(n) => n,
            GridPolicy::PerCell(k) => k * lattice,
        }
    }
}

/// One convergence study.
#[derive(Debug, Clone, PartialEq)]
pub struct HomogenizationStudy<T> {
    pub pe: PExponent<T>,
    pub law: Law,
    /// Constant load `f`.
    pub load: T,
    /// `None` for the hole constraint `u ≥ 0` on `T_ε`, `Some` for `v ≥ ψ^ε`.
    pub obstacle: Option<Obstacle<T>>,
    /// Values of `1/ε`, strictly increasing.
    pub cells: Vec<usize>,
    pub seeds: Vec<u64>,
    pub alpha0: T,
    pub grid: GridPolicy,
    pub strategy: HoleStrategy<T>,
    pub solver: SolverConfig<T>,
    /// Test functions of the recovery check (hole-constraint studies only).
    pub recovery: Vec<TestFunction<T>>,
    /// Random feasible competitors per instance in the minimality check.
    pub competitors: usize,
}

impl<T: Real> HomogenizationStudy<T> {
    /// `f ≡ −1` (the constraint binds), `ε ∈ {1/4, 1/8, 1/16}`, five seeds,
    /// `N = 128` throughout.
    pub fn new(pe: PExponent<T>, law: Law, alpha0: T, strategy: HoleStrategy<T>) -> Self {
        Self {
            pe,
            law,
            load: -T::one(),
            obstacle: None,
            cells: vec![4, 8, 16],
            seeds: (0..5).collect(),
            alpha0,
            grid: GridPolicy::Common(128),
            strategy,
            solver: SolverConfig::default(),
            recovery: vec![TestFunction::SignChanging(T::lit(0.1))],
            competitors: 20,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.law.validate()?;
        if self.cells.is_empty() || self.cells[0] == 0 || !self.cells.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::config("cells", "1/eps values must be positive and strictly increasing"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "need at least one seed"));
        }
        if !(self.alpha0 >= T::zero()) || !self.alpha0.is_finite() {
            return Err(Error::config("alpha0", format!("must be finite and nonnegative, got {}", self.alpha0)));
        }
        if !self.load.is_finite() {
            return Err(Error::config("load", "must be finite"));
        }
        let finest = self.finest_cells();
        for &c in &self.cells {
            let n = self.grid.cells(c);
            if n == 0 || n % c != 0 {
                return Err(Error::config("N", format!("N = {n} must be a multiple of 1/eps = {c}")));
            }
            if finest % n != 0 {
                return Err(Error::config("N", format!("N = {n} must divide the finest N = {finest}")));
            }
        }
        Ok(())
    }

    /// `N` of the finest grid, where the limit problem is solved.
    pub fn finest_cells(&self) -> usize {
        self.cells.iter().map(|&c| self.grid.cells(c)).max().unwrap_or(0)
    }

    pub fn domain(&self, cells: usize, seed: u64) -> Result<PerforatedGrid<T>> {
        let field = field_for_cells(self.law, seed, self.pe.n(), cells)?;
        let grid = Grid::shared(self.pe.n(), self.grid.cells(cells))?;
        PerforatedGrid::new(grid, &field, T::one() / T::from_count(cells), &self.pe, self.strategy)
    }

    fn base_energy(&self) -> EnergySpec<T> {
        EnergySpec::dirichlet(self.pe).with_load(Load::Constant(self.load))
    }

    /// Lower bounds of the limit problem: `ψ` at interior nodes, if any.
    fn limit_constraints(&self, grid: &Grid) -> ConstraintSpec<T> {
        let mut cons = ConstraintSpec::zero_trace(grid);
        if let Some(psi) = &self.obstacle {
            for node in grid.interior_nodes() {
                cons.set_lower(node, psi.eval(&grid.coords::<T>(node)));
            }
        }
        cons
    }

    /// Energy and constraints of the perforated problem: `F` over `K_ε`.
    pub fn perforated_problem(&self, domain: &PerforatedGrid<T>) -> (EnergySpec<T>, ConstraintSpec<T>) {
        let grid = &domain.grid;
        let hole_value = |node: usize| match &self.obstacle {
            Some(psi) => psi.on_hole(&grid.coords::<T>(node)),
            None => T::zero(),
        };
        let couplings: Vec<Coupling<T>> = domain
            .couplings(T::zero(), CouplingKind::Floor)
            .into_iter()
            .map(|c| Coupling { target: hole_value(c.node), ..c })
            .collect();
        let mut cons = ConstraintSpec::zero_trace(grid);
        let constrained = domain.holes.constrained_nodes();
        let boundary = grid.boundary_nodes();
        if let Some(psi) = &self.obstacle {
            for node in grid.interior_nodes() {
                if constrained.binary_search(&node).is_err() {
                    cons.set_lower(node, psi.eval(&grid.coords::<T>(node)));
                }
            }
        }
        for &node in &constrained {
            if boundary.binary_search(&node).is_err() {
                cons.set_lower(node, hole_value(node));
            }
        }
        (self.base_energy().with_couplings(couplings), cons)
    }

    /// Energy of the limit problem: `F₀` with the capacity term `(α₀/p) v_-^p`.
    pub fn limit_energy(&self) -> EnergySpec<T> {
        self.base_energy().with_neg_penalty(self.alpha0)
    }
}

/// `F(v)` or `F₀(v)`: the value of `energy` at `v` without regularisation.
pub fn exact_energy<T: Real>(energy: &EnergySpec<T>, v: &GridFunction<T>) -> T {
    assemble(&energy.clone().with_delta(T::zero()), v.grid()).value(v.values())
}

/// Minimizer of `F` over `K_ε`: `u ≥ 0` (or `≥ ψ^ε`) on the holes, `ψ` off
/// them when an obstacle is set, zero trace.
pub fn solve_u_eps<T: Real>(
    study: &HomogenizationStudy<T>,
    domain: &PerforatedGrid<T>,
) -> Result<(GridFunction<T>, SolveReport<T>)> {
    let (energy, cons) = study.perforated_problem(domain);
    minimize(&assemble(&energy, &domain.grid), &cons, &study.solver, None)
}

/// Minimizer of `F₀` on `grid` (under `v ≥ ψ` when the study has an obstacle).
pub fn solve_limit<T: Real>(
    study: &HomogenizationStudy<T>,
    grid: &Arc<Grid>,
) -> Result<(GridFunction<T>, SolveReport<T>)> {
    let obj = assemble(&study.limit_energy(), grid);
    minimize(&obj, &study.limit_constraints(grid), &study.solver, None)
}

/// `F(φ + φ_- w^ε) − F₀(φ)`. On every hole the competitor equals `φ_+ ≥ 0`;
/// a capacity-coupled hole carries that value through its annulus.
pub fn recovery_check<T: Real>(study: &HomogenizationStudy<T>, phi: &TestFunction<T>, run: &CorrectorRun<T>) -> T {
    let domain = &run.domain;
    let grid = &domain.grid;
    let phi_nodal = GridFunction::from_fn(grid.clone(), |x| phi.eval(x));
    let z = phi_nodal.zip_map(&run.w, |f, w| f + neg(f) * w);
    let couplings: Vec<Coupling<T>> = domain
        .couplings(T::zero(), CouplingKind::Anchor)
        .into_iter()
        .map(|c| Coupling { target: phi_nodal.values()[c.node].max(T::zero()), ..c })
        .collect();
    let f = exact_energy(&study.base_energy().with_couplings(couplings), &z);
    f - exact_energy(&study.limit_energy(), &phi_nodal)
}

/// Largest `F(u) − F(z)` over `count` random feasible `z` near `u`: the
/// projections onto `K_ε` of `u + s r` with `r` uniform in `[−1, 1]` and
/// `s` cycling through `10^{-1} … 10^{-4}`. Nonpositive up to solver tolerance
/// when `u` is the minimizer.
pub fn minimality_violation<T: Real>(
    study: &HomogenizationStudy<T>,
    domain: &PerforatedGrid<T>,
    u: &GridFunction<T>,
    count: usize,
    seed: u64,
) -> T {
    let (energy, cons) = study.perforated_problem(domain);
    let obj = assemble(&energy.with_delta(T::zero()), &domain.grid);
    let fu = obj.value(u.values());
    let mut worst = T::neg_infinity();
    for k in 0..count {
        let scale = T::lit(10f64.powi(-(1 + (k % 4) as i32)));
        let mut z: Vec<T> = u
            .values()
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let r = crate::field::site_uniform(seed ^ 0x6d69_6e69, &[k as i64, i as i64]);
                x + scale * T::lit(2.0 * r - 1.0)
            })
            .collect();
        cons.project(&mut z);
        worst = worst.max(fu - obj.value(&z));
    }
    worst
}

fn hole_slack<T: Real>(
    study: &HomogenizationStudy<T>,
    domain: &PerforatedGrid<T>,
    u: &GridFunction<T>,
    cons: &ConstraintSpec<T>,
) -> T {
    let grid = &domain.grid;
    let hard = domain.holes.constrained_nodes().into_iter().filter(|&i| !grid.is_boundary(i)).map(|i| (i, cons.lower(i)));
    let coupled = domain.holes.couplings().into_iter().map(|(i, _)| {
        (i, study.obstacle.as_ref().map_or(T::zero(), |psi| psi.on_hole(&grid.coords::<T>(i))))
    });
    hard.chain(coupled).map(|(i, floor)| u.values()[i] - floor).fold(T::infinity(), |a, b| a.min(b))
}

/// One `(ε, seed)` instance of a study.
#[derive(Debug, Clone, PartialEq)]
pub struct StudySample<T> {
    pub cells: usize,
    pub seed: u64,
    /// `‖u^ε − u₀‖_{L^p}` (or `‖h^ε − h₀‖_{L^p}`).
    pub lp_error: T,
    /// `F(u^ε)`.
    pub energy: T,
    /// `F(u^ε) − F₀(u₀)`.
    pub lsc_margin: T,
    /// Recovery gaps, one per test function of the study.
    pub recovery: Vec<T>,
    pub minimality: T,
    /// `min` of `u^ε − ψ^ε` over the nodes carrying holes. Nonnegative on
    /// hard-constrained nodes; a capacity-coupled carrier may sit below the
    /// hole value by the drop across its annulus.
    pub hole_slack: T,
    pub iterations: usize,
    pub converged: bool,
    pub error: Option<String>,
}

impl<T: Real> StudySample<T> {
    pub fn eps(&self) -> T {
        T::one() / T::from_count(self.cells)
    }

    fn ok(&self) -> bool {
        self.error.is_none()
    }

    fn failed(cells: usize, seed: u64, recovery: usize, error: String) -> Self {
        Self {
            cells,
            seed,
            lp_error: T::nan(),
            energy: T::nan(),
            lsc_margin: T::nan(),
            recovery: vec![T::nan(); recovery],
            minimality: T::nan(),
            hole_slack: T::nan(),
            iterations: 0,
            converged: false,
            error: Some(error),
        }
    }
}

/// Means over the successful seeds at one `ε`.
#[derive(Debug, Clone, PartialEq)]
pub struct StudySummary<T> {
    pub cells: usize,
    pub count: usize,
    pub failures: usize,
    pub lp_error: T,
    pub lsc_margin: T,
    pub recovery: Vec<T>,
}

impl<T: Real> StudySummary<T> {
    pub fn eps(&self) -> T {
        T::one() / T::from_count(self.cells)
    }
}

/// Trends of the means across the `ε` list (coarse to fine).
#[derive(Debug, Clone, PartialEq)]
pub struct Trends {
    pub lp_error_decreasing: bool,
    /// Final mean `L^p` error at most half the initial one.
    pub lp_error_halved: bool,
    /// One flag per recovery test function.
    pub recovery_decreasing: Vec<bool>,
    /// Every mean margin at least `−slack`.
    pub lsc_within_slack: bool,
}

/// Results of [`run_study`].
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport<T> {
    /// `F₀(u₀)` on the finest grid.
    pub limit_energy: T,
    /// `|F₀(u₀; N) − F₀(u₀; N/2)|`, the discretisation part of the slack.
    pub discretization: T,
    /// `0.05 |F₀(u₀)| + discretization`.
    pub slack: T,
    pub limit_report: SolveReport<T>,
    /// Ordered by `(ε, seed)`, coarse first.
    pub samples: Vec<StudySample<T>>,
    pub summaries: Vec<StudySummary<T>>,
    pub trends: Trends,
    /// Names of the recovery test functions, in column order.
    pub recovery_names: Vec<String>,
    /// The hole strategy is a calibrated single node, whose capacity only
    /// matches the target approximately.
    pub calibration_caveat: bool,
}

fn mean<T: Real>(x: impl Iterator<Item = T>) -> T {
    let v: Vec<T> = x.collect();
    if v.is_empty() {
        T::nan()
    } else {
        v.iter().copied().sum::<T>() / T::from_count(v.len())
    }
}

fn sample<T: Real>(
    study: &HomogenizationStudy<T>,
    limit: &GridFunction<T>,
    limit_energy: T,
    cells: usize,
    seed: u64,
) -> Result<StudySample<T>> {
    let domain = study.domain(cells, seed)?;
    let (u, report) = match solve_u_eps(study, &domain) {
        Ok(r) => r,
        Err(e) if e.is_solver_failure() => return Ok(StudySample::failed(cells, seed, study.recovery.len(), e.to_string())),
        Err(e) => return Err(e),
    };
    if let Err(e) = report.require_converged() {
        return Ok(StudySample::failed(cells, seed, study.recovery.len(), e.to_string()));
    }
    let limit = limit.restrict_to(&domain.grid)?;
    let (energy_spec, cons) = study.perforated_problem(&domain);
    let energy = exact_energy(&energy_spec, &u);
    let hole_slack = hole_slack(study, &domain, &u, &cons);
    let mut recovery = Vec::with_capacity(study.recovery.len());
    if !study.recovery.is_empty() && study.obstacle.is_none() {
        let run = match solve_corrector(study.alpha0, &domain, &study.solver) {
            Ok(run) if run.report.converged => run,
            Ok(run) => {
                let e = run.report.require_converged().unwrap_err();
                return Ok(StudySample::failed(cells, seed, study.recovery.len(), e.to_string()));
            }
            Err(e) if e.is_solver_failure() => {
                return Ok(StudySample::failed(cells, seed, study.recovery.len(), e.to_string()))
            }
            Err(e) => return Err(e),
        };
        for phi in &study.recovery {
            recovery.push(recovery_check(study, phi, &run));
        }
    } else {
        recovery.resize(study.recovery.len(), T::nan());
    }
    Ok(StudySample {
        cells,
        seed,
        lp_error: u.sub(&limit).lp_norm(study.pe.p()),
        energy,
        lsc_margin: energy - limit_energy,
        recovery,
        minimality: minimality_violation(study, &domain, &u, study.competitors, seed),
        hole_slack,
        iterations: report.iterations,
        converged: report.converged,
        error: None,
    })
}

/// Runs every `(ε, seed)` instance in parallel against the limit solution on
/// the finest grid. Fails when more than 20% of the instances fail.
pub fn run_study<T: Real>(study: &HomogenizationStudy<T>) -> Result<ConvergenceReport<T>> {
    study.validate()?;
    let n = study.pe.n();
    let finest = study.finest_cells();
    let fine_grid = Grid::shared(n, finest)?;
    let (limit, limit_report) = solve_limit(study, &fine_grid)?;
    limit_report.require_converged()?;
    let limit_energy = exact_energy(&study.limit_energy(), &limit);
    let discretization = if finest % 2 == 0 && finest >= 4 {
        let (coarse, report) = solve_limit(study, &Grid::shared(n, finest / 2)?)?;
        report.require_converged()?;
        (limit_energy - exact_energy(&study.limit_energy(), &coarse)).abs()
    } else {
        T::zero()
    };
    let slack = T::lit(0.05) * limit_energy.abs() + discretization;
    let jobs: Vec<(usize, u64)> =
        study.cells.iter().flat_map(|&c| study.seeds.iter().map(move |&s| (c, s))).collect();
    let mut samples: Vec<StudySample<T>> =
        jobs.par_iter().map(|&(c, s)| sample(study, &limit, limit_energy, c, s)).collect::<Result<Vec<_>>>()?;
    samples.sort_by(|a, b| a.cells.cmp(&b.cells).then(a.seed.cmp(&b.seed)));
    let failed = samples.iter().filter(|s| !s.ok()).count();
    if failed * 5 > samples.len() {
        let first = samples.iter().find_map(|s| s.error.clone()).unwrap_or_default();
        return Err(Error::TooManyFailures { failed, total: samples.len(), first });
    }
    let summaries: Vec<StudySummary<T>> = study
        .cells
        .iter()
        .map(|&c| {
            let ok: Vec<&StudySample<T>> = samples.iter().filter(|s| s.cells == c && s.ok()).collect();
            StudySummary {
                cells: c,
                count: ok.len(),
                failures: study.seeds.len() - ok.len(),
                lp_error: mean(ok.iter().map(|s| s.lp_error)),
                lsc_margin: mean(ok.iter().map(|s| s.lsc_margin)),
                recovery: (0..study.recovery.len()).map(|k| mean(ok.iter().map(|s| s.recovery[k]))).collect(),
            }
        })
        .collect();
    let lp: Vec<T> = summaries.iter().map(|s| s.lp_error).collect();
    let trends = Trends {
        lp_error_decreasing: strictly_decreasing(&lp),
        lp_error_halved: lp.len() >= 2 && lp[lp.len() - 1] <= T::lit(0.5) * lp[0],
        recovery_decreasing: (0..study.recovery.len())
            .map(|k| strictly_decreasing(&summaries.iter().map(|s| s.recovery[k].abs()).collect::<Vec<_>>()))
            .collect(),
        lsc_within_slack: summaries.iter().all(|s| s.lsc_margin >= -slack),
    };
    Ok(ConvergenceReport {
        limit_energy,
        discretization,
        slack,
        limit_report,
        samples,
        summaries,
        trends,
        recovery_names: study.recovery.iter().map(|f| f.name().to_string()).collect(),
        calibration_caveat: matches!(study.strategy, HoleStrategy::NearestNode { .. }),
    })
}

impl<T: Real> ConvergenceReport<T> {
    /// Per-instance rows: `eps, seed, lp_error, energy, limit_energy,
    /// lsc_margin, lsc_slack, recovery_gap_<name>…, minimality, hole_slack,
    /// iterations, converged, error`.
    pub fn write_samples_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> =
            ["eps", "seed", "lp_error", "energy", "limit_energy", "lsc_margin", "lsc_slack"].map(String::from).to_vec();
        header.extend(self.recovery_names.iter().map(|n| format!("recovery_gap_{n}")));
        header.extend(["minimality", "hole_slack", "iterations", "converged", "error"].map(String::from));
        w.write_record(&header)?;
        for s in &self.samples {
            let mut row = vec![
                format!("{:e}", s.eps()),
                s.seed.to_string(),
                format!("{:e}", s.lp_error),
                format!("{:e}", s.energy),
                format!("{:e}", self.limit_energy),
                format!("{:e}", s.lsc_margin),
                format!("{:e}", self.slack),
            ];
            row.extend(s.recovery.iter().map(|g| format!("{g:e}")));
            row.extend([
                format!("{:e}", s.minimality),
                format!("{:e}", s.hole_slack),
                s.iterations.to_string(),
                s.converged.to_string(),
                s.error.clone().unwrap_or_default(),
            ]);
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Per-`ε` means followed by the trend flags as `trend,<name>,<bool>` rows.
    pub fn write_summary_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> =
            ["eps", "count", "failures", "mean_lp_error", "mean_lsc_margin"].map(String::from).to_vec();
        header.extend(self.recovery_names.iter().map(|n| format!("mean_recovery_gap_{n}")));
        w.write_record(&header)?;
        for s in &self.summaries {
            let mut row = vec![
                format!("{:e}", s.eps()),
                s.count.to_string(),
                s.failures.to_string(),
                format!("{:e}", s.lp_error),
                format!("{:e}", s.lsc_margin),
            ];
            row.extend(s.recovery.iter().map(|g| format!("{g:e}")));
            row.resize(header.len(), String::new());
            w.write_record(&row)?;
        }
        let flag = |name: &str, value: bool| {
            let mut row = vec!["trend".to_string(), name.to_string(), value.to_string()];
            row.resize(header.len(), String::new());
            row
        };
        w.write_record(flag("lp_error_decreasing", self.trends.lp_error_decreasing))?;
        w.write_record(flag("lp_error_halved", self.trends.lp_error_halved))?;
        for (name, &ok) in self.recovery_names.iter().zip(&self.trends.recovery_decreasing) {
            w.write_record(flag(&format!("recovery_decreasing_{name}"), ok))?;
        }
        w.write_record(flag("lsc_within_slack", self.trends.lsc_within_slack))?;
        w.write_record(flag("calibration_caveat", self.calibration_caveat))?;
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::hole_strategy;
    use crate::scalar::pos;
    use proptest::prelude::*;

    fn study(p: f64, law: Law, strategy: &str) -> HomogenizationStudy<f64> {
        let pe = PExponent::new(p, 2).unwrap();
        let mut s = HomogenizationStudy::new(pe, law, 1.0, hole_strategy(strategy, &pe).unwrap());
        s.grid = GridPolicy::Common(64);
        s.seeds = vec![0];
        s
    }

    fn empty(s: &HomogenizationStudy<f64>, cells: usize) -> PerforatedGrid<f64> {
        PerforatedGrid::unperforated(Grid::shared(2, s.grid.cells(cells)).unwrap(), cells, s.pe)
    }

    // −Δu = f on the unit square with zero trace, by its sine series.
    fn poisson_series(f: f64, x: &[f64]) -> f64 {
        let pi = std::f64::consts::PI;
        let mut sum = 0.0;
        for m in (1..200).step_by(2) {
            for n in (1..200).step_by(2) {
                let (m, n) = (m as f64, n as f64);
                sum += 16.0 * f / (pi.powi(4) * m * n * (m * m + n * n)) * (m * pi * x[0]).sin() * (n * pi * x[1]).sin();
            }
        }
        sum
    }

    #[test]
    fn zero_load_gives_zero() {
        let mut s = study(1.5, Law::Constant(1.0), "subgrid");
        s.load = 0.0;
        let (u, report) = solve_u_eps(&s, &s.domain(4, 0).unwrap()).unwrap();
        assert!(report.converged);
        assert!(u.values().iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn empty_perforation_is_the_poisson_solution() {
        let s = study(2.0, Law::Constant(1.0), "subgrid");
        let (u, _) = solve_u_eps(&s, &empty(&s, 4)).unwrap();
        let grid = u.grid().clone();
        let err = (0..grid.node_count())
            .map(|i| (u.values()[i] - poisson_series(-1.0, &grid.coords::<f64>(i))).abs())
            .fold(0.0, f64::max);
        assert!(err < 2e-3 * 0.0737, "{err}");
    }

    #[test]
    fn binding_constraint_holds_on_holes_and_u_dips_between_them() {
        let s = study(2.0, Law::Constant(1.0), "nearest_node");
        let domain = s.domain(4, 0).unwrap();
        let (u, _) = solve_u_eps(&s, &domain).unwrap();
        let holes = domain.holes.constrained_nodes();
        assert!(!holes.is_empty());
        assert!(holes.iter().all(|&i| u.values()[i] >= -1e-14));
        assert!(u.min_value() < -1e-3);
        assert!(hole_slack(&s, &domain, &u, &s.perforated_problem(&domain).1) >= -1e-14);
    }

    #[test]
    fn limit_without_penalty_is_plain_poisson() {
        let mut s = study(1.5, Law::Constant(1.0), "subgrid");
        s.alpha0 = 0.0;
        let grid = Grid::shared(2, 32).unwrap();
        let (u0, _) = solve_limit(&s, &grid).unwrap();
        let plain = assemble(&s.base_energy(), &grid);
        let (v, _) = minimize(&plain, &ConstraintSpec::zero_trace(&grid), &s.solver, None).unwrap();
        let diff = u0.sub(&v).values().iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        assert!(diff < 1e-8, "{diff}");
    }

    #[test]
    fn nonnegative_load_leaves_the_penalty_inactive() {
        let mut s = study(2.0, Law::Constant(1.0), "subgrid");
        s.load = 1.0;
        let grid = Grid::shared(2, 32).unwrap();
        let (u0, _) = solve_limit(&s, &grid).unwrap();
        assert!(u0.min_value() >= -1e-12);
        s.alpha0 = 0.0;
        let (v, _) = solve_limit(&s, &grid).unwrap();
        assert!(u0.sub(&v).values().iter().all(|d| d.abs() < 1e-10));
    }

    #[test]
    fn penalty_gradient_matches_finite_differences() {
        let s = study(1.5, Law::Constant(1.0), "subgrid");
        let grid = Grid::shared(2, 8).unwrap();
        let obj = assemble(&EnergySpec::dirichlet(s.pe).with_neg_penalty(2.0), &grid);
        let v: Vec<f64> = (0..grid.node_count()).map(|i| 0.3 * ((i * 7 % 11) as f64 / 11.0 - 0.6)).collect();
        let g = obj.gradient(&v);
        for i in grid.interior_nodes() {
            let h = 1e-6;
            let mut up = v.clone();
            let mut dn = v.clone();
            up[i] += h;
            dn[i] -= h;
            let fd = (obj.value(&up) - obj.value(&dn)) / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-6 * g[i].abs().max(1e-3), "node {i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn zero_obstacle_is_the_nonnegativity_constraint() {
        let mut s = study(2.0, Law::Constant(1.0), "nearest_node");
        s.obstacle = Some(Obstacle { base: 0.0, amplitude: 0.0, on_holes: ObstacleOnHoles::Zero });
        let domain = s.domain(4, 0).unwrap();
        let (h, _) = solve_u_eps(&s, &domain).unwrap();
        let grid = &domain.grid;
        let cons = ConstraintSpec::zero_trace(grid).with_global_lower(0.0);
        let (v, _) = minimize(&assemble(&s.base_energy(), grid), &cons, &s.solver, None).unwrap();
        assert!(h.sub(&v).values().iter().all(|d| d.abs() < 1e-10));
        let (h0, _) = solve_limit(&s, grid).unwrap();
        assert!(h0.values().iter().all(|&x| x.abs() < 1e-12));
    }

    #[test]
    fn deep_obstacle_without_holes_is_inactive() {
        let mut s = study(1.5, Law::Constant(1.0), "subgrid");
        s.obstacle = Some(Obstacle { base: -10.0, amplitude: 0.1, on_holes: ObstacleOnHoles::Zero });
        let (h, _) = solve_u_eps(&s, &empty(&s, 4)).unwrap();
        s.obstacle = None;
        let (u, _) = solve_u_eps(&s, &empty(&s, 4)).unwrap();
        assert!(h.sub(&u).values().iter().all(|d| d.abs() < 1e-8));
    }

    #[test]
    fn oscillating_obstacle_solution_is_feasible() {
        for on_holes in [ObstacleOnHoles::Zero, ObstacleOnHoles::MaxZero] {
            let mut s = study(1.5, Law::Constant(1.0), "nearest_node");
            s.obstacle = Some(Obstacle { on_holes, ..Obstacle::default() });
            let domain = s.domain(4, 0).unwrap();
            let (h, _) = solve_u_eps(&s, &domain).unwrap();
            let (_, cons) = s.perforated_problem(&domain);
            assert!(cons.is_feasible(h.values()));
            assert!(hole_slack(&s, &domain, &h, &cons) >= -1e-14);
        }
    }

    #[test]
    fn recovery_gap_vanishes_for_nonnegative_phi() {
        let s = study(1.5, Law::Uniform { min: 0.5, max: 1.5 }, "subgrid");
        let run = solve_corrector(s.alpha0, &s.domain(4, 1).unwrap(), &s.solver).unwrap();
        let gap = recovery_check(&s, &TestFunction::Positive(0.1), &run);
        assert!(gap.abs() < 1e-15, "{gap}");
    }

    #[test]
    fn recovery_gap_vanishes_without_holes_or_penalty() {
        let mut s = study(1.5, Law::Constant(1.0), "subgrid");
        s.alpha0 = 0.0;
        let run = solve_corrector(0.0, &empty(&s, 4), &s.solver).unwrap();
        assert!(run.w.values().iter().all(|&w| w == 0.0));
        let gap = recovery_check(&s, &TestFunction::SignChanging(0.1), &run);
        assert!(gap.abs() < 1e-15, "{gap}");
    }

    #[test]
    fn margin_without_holes_or_penalty_is_nonnegative() {
        let mut s = study(1.5, Law::Constant(1.0), "subgrid");
        s.alpha0 = 0.0;
        let grid = Grid::shared(2, 64).unwrap();
        let (u0, _) = solve_limit(&s, &grid).unwrap();
        let (u, _) = solve_u_eps(&s, &empty(&s, 4)).unwrap();
        let margin = exact_energy(&s.perforated_problem(&empty(&s, 4)).0, &u) - exact_energy(&s.limit_energy(), &u0);
        assert!(margin >= -1e-10 * exact_energy(&s.limit_energy(), &u0).abs(), "{margin}");
    }

    #[test]
    fn positive_load_makes_the_holes_invisible() {
        let mut s = study(2.0, Law::Constant(1.0), "subgrid");
        s.load = 1.0;
        s.cells = vec![4, 8];
        s.recovery.clear();
        let r = run_study(&s).unwrap();
        for sample in &r.samples {
            assert!(sample.lsc_margin.abs() <= 1e-8 * r.limit_energy.abs(), "{}", sample.lsc_margin);
            assert!(sample.lp_error < 1e-8);
        }
    }

    #[test]
    fn minimizer_beats_random_feasible_competitors() {
        let s = study(1.5, Law::Uniform { min: 0.5, max: 1.5 }, "subgrid");
        let domain = s.domain(8, 3).unwrap();
        let (u, report) = solve_u_eps(&s, &domain).unwrap();
        let tol = 1e-8 * (1.0 + report.energy.abs());
        assert!(minimality_violation(&s, &domain, &u, 20, 3) <= tol);
    }

    #[test]
    fn single_instance_gives_one_row() {
        let mut s = study(2.0, Law::Constant(1.0), "subgrid");
        s.cells = vec![4];
        let r = run_study(&s).unwrap();
        assert_eq!(r.samples.len(), 1);
        assert_eq!(r.summaries.len(), 1);
        let mut out = Vec::new();
        r.write_samples_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap().lines().count(), 2);
    }

    #[test]
    fn nearest_node_study_flags_the_calibration_caveat() {
        let mut s = study(2.0, Law::Uniform { min: 0.5, max: 1.5 }, "nearest_node");
        s.cells = vec![4, 8];
        s.seeds = vec![0, 1];
        let r = run_study(&s).unwrap();
        assert!(r.calibration_caveat);
        let mut out = Vec::new();
        r.write_summary_csv(&mut out).unwrap();
        assert!(String::from_utf8(out).unwrap().contains("trend,calibration_caveat,true"));
        assert!(!run_study(&study(2.0, Law::Constant(1.0), "subgrid")).unwrap().calibration_caveat);
    }

    #[test]
    fn reruns_are_byte_identical() {
        let mut s = study(1.5, Law::Uniform { min: 0.5, max: 1.5 }, "subgrid");
        s.cells = vec![4, 8];
        s.seeds = vec![0, 1];
        let csv = || {
            let r = run_study(&s).unwrap();
            let mut out = Vec::new();
            r.write_samples_csv(&mut out).unwrap();
            r.write_summary_csv(&mut out).unwrap();
            out
        };
        assert_eq!(csv(), csv());
    }

    #[test]
    fn invalid_studies_are_rejected() {
        let base = study(1.5, Law::Constant(1.0), "subgrid");
        let mut s = base.clone();
        s.cells = vec![8, 4];
        assert!(run_study(&s).is_err());
        let mut s = base.clone();
        s.grid = GridPolicy::Common(60);
        s.cells = vec![8];
        assert!(s.validate().is_err());
        let mut s = base.clone();
        s.alpha0 = -1.0;
        assert!(s.validate().is_err());
        let mut s = base;
        s.seeds.clear();
        assert!(s.validate().is_err());
    }

    proptest! {
        #[test]
        fn recovery_competitor_is_phi_plus_where_w_is_one(x in 0.0..1.0f64, y in 0.0..1.0f64, a in -1.0..1.0f64) {
            let phi = TestFunction::SignChanging(a).eval(&[x, y]);
            prop_assert!((phi + neg(phi) - pos(phi)).abs() <= 1e-15);
            prop_assert!(TestFunction::Positive(a.abs()).eval(&[x, y]) >= 0.0);
        }

        #[test]
        fn obstacle_on_holes_never_exceeds_its_positive_part(x in 0.0..1.0f64, y in 0.0..1.0f64) {
            let psi = Obstacle::<f64> { base: 0.0, amplitude: 1.0, on_holes: ObstacleOnHoles::MaxZero };
            prop_assert_eq!(psi.on_hole(&[x, y]), psi.eval(&[x, y]).max(0.0));
            prop_assert_eq!(Obstacle::<f64>::default().on_hole(&[x, y]), 0.0);
            prop_assert!(Obstacle::<f64>::default().eval(&[x, y]) < 0.0);
        }
    }
}
