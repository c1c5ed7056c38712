//! Bound-constrained minimization: projected Newton (default) and accelerated
//! projected gradient.

use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::mesh::GridFunction;
use crate::scalar::Real;
use crate::solver::constraints::ConstraintSpec;
use crate::solver::energy::Objective;
use crate::solver::sparse::{pcg, CsrMatrix, Preconditioner};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Bertsekas-style projected Newton with an `ε`-active set, inexact
    /// IC(0)-preconditioned CG steps and an Armijo search on the projection arc.
    ProjectedNewton,
    /// FISTA with lumped-mass metric, backtracking and monotone restarts.
    AcceleratedGradient,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::ProjectedNewton => "projected_newton",
            Method::AcceleratedGradient => "accelerated_gradient",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig<T> {
    pub method: Method,
    /// Stop when the projected gradient falls below `tol_rel (1 + initial)`.
    pub tol_rel: T,
    pub max_iter: usize,
    /// Solve a sequence of problems with decreasing `δ_reg` first (`p < 2`).
    pub continuation: bool,
}

impl<T: Real> Default for SolverConfig<T> {
    fn default() -> Self {
        Self { method: Method::ProjectedNewton, tol_rel: T::lit(1e-8), max_iter: 200_000, continuation: true }
    }
}

/// Summary of one [`minimize`] call.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport<T> {
    pub method: Method,
    pub iterations: usize,
    pub linear_iterations: usize,
    pub energy: T,
    /// `(Σ m_i r_i²)^{1/2}` with `r` the mass-scaled projected gradient.
    pub projected_gradient: T,
    pub initial_projected_gradient: T,
    /// `max_i |r_i|`.
    pub kkt_residual: T,
    pub delta_reg: T,
    pub tol_rel: T,
    pub converged: bool,
    pub wall_time: Duration,
}

impl<T: Real> SolveReport<T> {
    pub const CSV_HEADER: [&'static str; 10] = [
        "method",
        "iterations",
        "linear_iterations",
        "energy",
        "projected_gradient",
        "initial_projected_gradient",
        "kkt_residual",
        "delta_reg",
        "tol_rel",
        "converged",
    ];

    /// CSV fields matching [`Self::CSV_HEADER`]; wall time is left out so rows
    /// are reproducible.
    pub fn csv_row(&self) -> Vec<String> {
        vec![
            self.method.name().to_string(),
            self.iterations.to_string(),
            self.linear_iterations.to_string(),
            format!("{:e}", self.energy),
            format!("{:e}", self.projected_gradient),
            format!("{:e}", self.initial_projected_gradient),
            format!("{:e}", self.kkt_residual),
            format!("{:e}", self.delta_reg),
            format!("{:e}", self.tol_rel),
            self.converged.to_string(),
        ]
    }

    /// Turns a non-converged report into [`Error::MaxIterations`].
    pub fn require_converged(&self) -> Result<()> {
        if self.converged {
            Ok(())
        } else {
            Err(Error::MaxIterations { iterations: self.iterations, residual: self.projected_gradient.to_f64_lossy() })
        }
    }
}

/// Mass-scaled projected gradient `r` and its weighted and max norms.
fn projected_gradient<T: Real>(
    x: &[T],
    g: &[T],
    mass: &[T],
    cons: &ConstraintSpec<T>,
    r: &mut [T],
) -> (T, T) {
    let mut sum = T::zero();
    let mut max = T::zero();
    for i in 0..x.len() {
        r[i] = if cons.fixed(i).is_some() {
            T::zero()
        } else {
            let gi = g[i] / mass[i];
            x[i] - (x[i] - gi).max(cons.lower(i))
        };
        sum += mass[i] * r[i] * r[i];
        max = max.max(r[i].abs());
    }
    (sum.sqrt(), max)
}

fn initial_iterate<T: Real>(n: usize, cons: &ConstraintSpec<T>, initial: Option<&[T]>) -> Vec<T> {
    let mut x = match initial {
        Some(v) => v.to_vec(),
        None => vec![T::zero(); n],
    };
    cons.project(&mut x);
    x
}

/// Minimizes `obj` over the box described by `cons`.
///
/// A run that exhausts `max_iter` still returns its last iterate, with
/// `converged = false` in the report.
pub fn minimize<T: Real>(
    obj: &Objective<T>,
    cons: &ConstraintSpec<T>,
    config: &SolverConfig<T>,
    initial: Option<&[T]>,
) -> Result<(GridFunction<T>, SolveReport<T>)> {
    cons.validate()?;
    let n = obj.grid().node_count();
    if cons.len() != n {
        return Err(Error::domain("constraint size does not match the grid"));
    }
    if let Some(v) = initial {
        if v.len() != n {
            return Err(Error::domain("initial iterate size does not match the grid"));
        }
    }
    let start = Instant::now();
    let mut x = initial_iterate(n, cons, initial);
    let mut report = match config.method {
        Method::ProjectedNewton => {
            let schedule = delta_schedule(obj, config);
            let mut total = Stage::<T>::default();
            let mut pg0 = None;
            let last = schedule.len() - 1;
            let mut out = None;
            for (k, &delta) in schedule.iter().enumerate() {
                let stage_obj = obj.with_delta(delta);
                // intermediate stages only need a rough solution
                let tol = if k == last { config.tol_rel } else { T::lit(1e-3).max(config.tol_rel) };
                let r = newton(&stage_obj, cons, &mut x, tol, config.max_iter - total.iterations, pg0)?;
                pg0.get_or_insert(r.initial_pg);
                total.iterations += r.iterations;
                total.linear += r.linear;
                out = Some(r);
                if total.iterations >= config.max_iter {
                    break;
                }
            }
            let r = out.expect("at least one stage");
            SolveReport {
                method: config.method,
                iterations: total.iterations,
                linear_iterations: total.linear,
                energy: T::zero(),
                projected_gradient: r.pg,
                initial_projected_gradient: pg0.unwrap_or(r.initial_pg),
                kkt_residual: r.kkt,
                delta_reg: obj.delta(),
                tol_rel: config.tol_rel,
                converged: r.converged && r.final_delta == obj.delta(),
                wall_time: Duration::ZERO,
            }
        }
        Method::AcceleratedGradient => accelerated(obj, cons, &mut x, config)?,
    };
    report.energy = obj.value(&x);
    report.wall_time = start.elapsed();
    let gf = GridFunction::new(obj.grid().clone(), x)?;
    Ok((gf, report))
}

fn delta_schedule<T: Real>(obj: &Objective<T>, config: &SolverConfig<T>) -> Vec<T> {
    let target = obj.delta();
    if !config.continuation || obj.p() >= T::lit(2.0) || target <= T::zero() {
        return vec![target];
    }
    let mut out = Vec::new();
    let mut d = T::lit(1e-2);
    while d > target * T::lit(10.0) {
        out.push(d);
        d *= T::lit(0.1);
    }
    out.push(target);
    out
}

#[derive(Default)]
struct Stage<T> {
    iterations: usize,
    linear: usize,
    pg: T,
    initial_pg: T,
    kkt: T,
    converged: bool,
    final_delta: T,
}

fn newton<T: Real>(
    obj: &Objective<T>,
    cons: &ConstraintSpec<T>,
    x: &mut Vec<T>,
    tol_rel: T,
    max_iter: usize,
    pg_ref: Option<T>,
) -> Result<Stage<T>> {
    let n = x.len();
    let grid = obj.grid().clone();
    let pattern = grid.pattern();
    let mass = obj.mass();
    let mut g = vec![T::zero(); n];
    let mut r = vec![T::zero(); n];
    let mut d = vec![T::zero(); n];
    let mut rhs = vec![T::zero(); n];
    let mut xt = vec![T::zero(); n];
    let mut gt = vec![T::zero(); n];
    let mut mask = vec![false; n];
    let mut hdiag = vec![T::zero(); n];
    let mut h = CsrMatrix::zeros(pattern);
    let mut stage = Stage { final_delta: obj.delta(), ..Stage::default() };
    let f = obj.value_and_gradient(x, &mut g);
    if !f.is_finite() {
        return Err(Error::NonfiniteObjective { iteration: 0 });
    }
    let (pg0, _) = projected_gradient(x, &g, mass, cons, &mut r);
    stage.initial_pg = pg0;
    let reference = pg_ref.unwrap_or(pg0);
    let target = tol_rel * (T::one() + reference);
    let sigma = T::lit(1e-4);
    let mut dx = vec![T::zero(); n];
    for it in 0..=max_iter {
        let (pg, kkt) = projected_gradient(x, &g, mass, cons, &mut r);
        stage.pg = pg;
        stage.kkt = kkt;
        stage.iterations = it;
        if pg <= target {
            stage.converged = true;
            return Ok(stage);
        }
        if it == max_iter {
            return Ok(stage);
        }
        obj.hessian(x, &mut h);
        // ε-active set in the metric of the Hessian diagonal: near the bound and pushing into it
        let mut xmax = T::zero();
        let mut w = T::zero();
        for i in 0..n {
            hdiag[i] = h.diagonal(i);
            if cons.fixed(i).is_none() {
                xmax = xmax.max(x[i].abs());
                let step = g[i] / hdiag[i].max(T::min_positive_value());
                w = w.max((x[i] - (x[i] - step).max(cons.lower(i))).abs());
            }
        }
        let eps_act = w.min(T::lit(1e-3) * xmax);
        for i in 0..n {
            mask[i] = cons.fixed(i).is_some() || (x[i] <= cons.lower(i) + eps_act && g[i] > T::zero());
        }
        h.mask_identity(&mask);
        for i in 0..n {
            rhs[i] = if mask[i] { T::zero() } else { -g[i] };
        }
        let eta = T::lit(1e-2).min((pg / (T::one() + reference)).sqrt()).max(T::lit(1e-12));
        let pre = Preconditioner::build(&h);
        let cg = pcg(&h, &pre, &rhs, &mut d, eta, 2000);
        stage.linear += cg.iterations;
        for i in 0..n {
            if cons.fixed(i).is_some() {
                d[i] = T::zero();
            } else if mask[i] {
                d[i] = -g[i] / hdiag[i].max(T::min_positive_value());
            }
        }
        let mut accepted = false;
        for attempt in 0..2 {
            if attempt == 1 {
                // fall back to a scaled projected-gradient direction
                for i in 0..n {
                    d[i] = if cons.fixed(i).is_some() { T::zero() } else { -g[i] / hdiag[i].max(T::min_positive_value()) };
                }
            }
            let mut t = T::one();
            for _ in 0..60 {
                let mut slope = T::zero();
                for i in 0..n {
                    xt[i] = cons.project_node(i, x[i] + t * d[i]);
                    dx[i] = xt[i] - x[i];
                    slope += g[i] * dx[i];
                }
                let df = obj.value_change(x, &dx);
                if df.is_finite() && slope < T::zero() && df <= sigma * slope {
                    let ft = obj.value_and_gradient(&xt, &mut gt);
                    if !ft.is_finite() {
                        return Err(Error::NonfiniteObjective { iteration: it });
                    }
                    std::mem::swap(x, &mut xt);
                    std::mem::swap(&mut g, &mut gt);
                    accepted = true;
                    break;
                }
                t *= T::lit(0.5);
            }
            if accepted {
                break;
            }
        }
        if !accepted {
            // stagnation at round-off level close to the optimum is not an error
            if pg <= T::lit(1e-4) * (T::one() + reference) {
                return Ok(stage);
            }
            return Err(Error::LineSearchFailure { iteration: it, residual: pg.to_f64_lossy() });
        }
    }
    Ok(stage)
}

fn accelerated<T: Real>(
    obj: &Objective<T>,
    cons: &ConstraintSpec<T>,
    x: &mut Vec<T>,
    config: &SolverConfig<T>,
) -> Result<SolveReport<T>> {
    let n = x.len();
    let mass = obj.mass().to_vec();
    let mut y = x.clone();
    let mut x_prev = x.clone();
    let mut g = vec![T::zero(); n];
    let mut r = vec![T::zero(); n];
    let mut xt = vec![T::zero(); n];
    let mut f = obj.value_and_gradient(x, &mut g);
    let (pg0, _) = projected_gradient(x, &g, &mass, cons, &mut r);
    let target = config.tol_rel * (T::one() + pg0);
    let mut lipschitz = T::one();
    let mut theta = T::one();
    let mut report = SolveReport {
        method: Method::AcceleratedGradient,
        iterations: 0,
        linear_iterations: 0,
        energy: f,
        projected_gradient: pg0,
        initial_projected_gradient: pg0,
        kkt_residual: T::zero(),
        delta_reg: obj.delta(),
        tol_rel: config.tol_rel,
        converged: false,
        wall_time: Duration::ZERO,
    };
    let mut gy = vec![T::zero(); n];
    let roundoff = T::lit(16.0) * T::epsilon();
    let mut restarted = false;
    for it in 0..config.max_iter {
        let fy = obj.value_and_gradient(&y, &mut gy);
        if !fy.is_finite() {
            return Err(Error::NonfiniteObjective { iteration: it });
        }
        // backtracking on the local Lipschitz constant in the lumped-mass metric
        let mut found = false;
        for _ in 0..80 {
            let mut model = fy;
            for i in 0..n {
                xt[i] = cons.project_node(i, y[i] - gy[i] / (lipschitz * mass[i]));
                let s = xt[i] - y[i];
                model += gy[i] * s + lipschitz / T::lit(2.0) * mass[i] * s * s;
            }
            let ft = obj.value(&xt);
            if ft <= model + roundoff * (fy.abs() + T::min_positive_value()) {
                found = true;
                break;
            }
            lipschitz *= T::lit(2.0);
        }
        if !found {
            return Err(Error::LineSearchFailure { iteration: it, residual: report.projected_gradient.to_f64_lossy() });
        }
        let ft = obj.value(&xt);
        if ft > f + roundoff * (f.abs() + T::min_positive_value()) {
            if restarted {
                // a restart from x itself did not descend: round-off floor
                break;
            }
            // monotone restart
            restarted = true;
            theta = T::one();
            y.copy_from_slice(x);
            continue;
        }
        restarted = false;
        x_prev.copy_from_slice(x);
        x.copy_from_slice(&xt);
        f = obj.value_and_gradient(x, &mut g);
        let (pg, kkt) = projected_gradient(x, &g, &mass, cons, &mut r);
        report.iterations = it + 1;
        report.projected_gradient = pg;
        report.kkt_residual = kkt;
        if pg <= target {
            report.converged = true;
            break;
        }
        let theta_next = (T::one() + (T::one() + T::lit(4.0) * theta * theta).sqrt()) / T::lit(2.0);
        let beta = (theta - T::one()) / theta_next;
        theta = theta_next;
        for i in 0..n {
            y[i] = cons.project_node(i, x[i] + beta * (x[i] - x_prev[i]));
        }
        lipschitz *= T::lit(0.9);
    }
    Ok(report)
}
