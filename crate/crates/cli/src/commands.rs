//! One function per subcommand. Each returns its output files as bytes so
//! the caller can hash, cache and write them uniformly.

use rayon::prelude::*;

use perfhom::cell::{find_alpha0, find_alpha0_monte_carlo, CellProblem, LCurveConfig, LCurveEstimate, LEstimator};
use perfhom::corrector::{
    bump_family, delta_scaling, diagnostics, energy_bound, pairing_function, solve_corrector, CorrectorDiagnostics,
};
use perfhom::experiments::{
    run_study, solve_limit, solve_u_eps, ConvergenceReport, HomogenizationStudy, Obstacle, ObstacleOnHoles,
};
use perfhom::field::field_for_cells;
use perfhom::mesh::{Grid, GridFunction, PerforatedGrid};
use perfhom::solver::SolveReport;

use crate::config::{Command, RunConfig};
use crate::plot::{Chart, Series};
use crate::CliError;

/// A file produced by a command. Plots are always produced (and cached) but
/// only written out on `--plot`.
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
    pub is_plot: bool,
}

fn csv_file(name: &str, write: impl FnOnce(&mut Vec<u8>) -> perfhom::Result<()>) -> Result<Artifact, CliError> {
    let mut bytes = Vec::new();
    write(&mut bytes)?;
    Ok(Artifact { name: name.into(), bytes, is_plot: false })
}

fn plot_file(name: &str, chart: Chart) -> Artifact {
    Artifact { name: name.into(), bytes: chart.to_svg().into_bytes(), is_plot: true }
}

fn rows_file(name: &str, header: &[&str], rows: Vec<Vec<String>>) -> Result<Artifact, CliError> {
    csv_file(name, |out| {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(header)?;
        for row in rows {
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    })
}

pub fn run(command: Command, config: &RunConfig) -> Result<Vec<Artifact>, CliError> {
    config.validate(command)?;
    match command {
        Command::Field => field(config),
        Command::Solve => solve(config),
        Command::Cell => cell(config),
        Command::Lcurve => lcurve(config),
        Command::Alpha0 => alpha0(config),
        Command::Corrector => corrector(config),
        Command::Converge => converge(config, None),
        Command::Obstacle => {
            let o = &config.obstacle;
            converge(config, Some(Obstacle { base: o.base, amplitude: o.amplitude, on_holes: config.on_holes()? }))
        }
    }
}

fn field(config: &RunConfig) -> Result<Vec<Artifact>, CliError> {
    let f = field_for_cells::<f64>(config.law()?, config.field.seed, config.n, config.field.cells)?;
    Ok(vec![csv_file("field.csv", |out| f.write_csv(out))?])
}

fn lcurve_config(config: &RunConfig, cells: &[usize], nodes_per_cell: usize, tol_zero_rel: f64) -> Result<LCurveConfig<f64>, CliError> {
    let mut c = LCurveConfig::new(config.pe()?, config.law()?);
    c.cells = cells.to_vec();
    c.seeds = config.seeds.clone();
    c.nodes_per_cell = nodes_per_cell;
    c.tol_zero_rel = tol_zero_rel;
    c.solver = config.solver()?;
    Ok(c)
}

fn study(config: &RunConfig, obstacle: Option<Obstacle<f64>>) -> Result<HomogenizationStudy<f64>, CliError> {
    let mut s = HomogenizationStudy::new(config.pe()?, config.law()?, 0.0, config.strategy()?);
    s.seeds = config.seeds.clone();
    s.solver = config.solver()?;
    s.obstacle = obstacle;
    match obstacle {
        None => {
            let c = &config.converge;
            s.alpha0 = c.alpha0;
            s.load = c.load;
            s.cells = c.cells.clone();
            s.grid = RunConfig::grid_policy(c.grid, c.nodes_per_cell);
            s.recovery = config.recovery();
            s.competitors = c.competitors;
        }
        Some(_) => {
            let c = &config.obstacle;
            s.alpha0 = c.alpha0;
            s.load = c.load;
            s.cells = c.cells.clone();
            s.grid = RunConfig::grid_policy(c.grid, c.nodes_per_cell);
            s.recovery.clear();
            s.competitors = c.competitors;
        }
    }
    Ok(s)
}

fn solution_files(v: &GridFunction<f64>, report: &SolveReport<f64>) -> Result<Vec<Artifact>, CliError> {
    Ok(vec![
        csv_file("solution.phgf", |out| v.write_phgf(out))?,
        csv_file("solution.csv", |out| v.write_csv(out))?,
        rows_file("report.csv", &SolveReport::<f64>::CSV_HEADER, vec![report.csv_row()])?,
    ])
}

fn solve(config: &RunConfig) -> Result<Vec<Artifact>, CliError> {
    let s = &config.solve;
    let solver = config.solver()?;
    let pe = config.pe()?;
    let law = config.law()?;
    let domain = || -> Result<PerforatedGrid<f64>, CliError> {
        let f = field_for_cells(law, s.seed, config.n, s.cells)?;
        Ok(PerforatedGrid::new(Grid::shared(config.n, s.grid)?, &f, 1.0 / s.cells as f64, &pe, config.strategy()?)?)
    };
    let with_obstacle = |obstacle: bool| -> Result<HomogenizationStudy<f64>, CliError> {
        let psi = obstacle.then(|| Obstacle { on_holes: ObstacleOnHoles::Zero, ..Obstacle::default() });
        let mut st = study(config, psi)?;
        st.alpha0 = s.alpha0;
        st.load = s.load;
        Ok(st)
    };
    let (v, report) = match s.problem.as_str() {
        "u_eps" | "h_eps" => solve_u_eps(&with_obstacle(s.problem == "h_eps")?, &domain()?)?,
        "u0" | "h0" => solve_limit(&with_obstacle(s.problem == "h0")?, &Grid::shared(config.n, s.grid)?)?,
        "corrector" => {
            let run = solve_corrector(s.alpha0, &domain()?, &solver)?;
            (run.w, run.report)
        }
        _ => {
            let f = field_for_cells(law, s.seed, config.n, s.cells)?;
            let prob = CellProblem::new(pe, s.alpha, s.cells, f, Grid::shared(config.n, s.grid)?)?;
            let sol = perfhom::cell::solve_cell(&prob, &solver, None)?;
            (sol.v, sol.report)
        }
    };
    report.require_converged()?;
    solution_files(&v, &report)
}

fn cell(config: &RunConfig) -> Result<Vec<Artifact>, CliError> {
    let c = &config.cell;
    let est = LEstimator::new(lcurve_config(config, &c.cells, c.nodes_per_cell, c.tol_zero_rel)?)?;
    let jobs: Vec<(f64, usize, u64)> = c
        .alphas
        .iter()
        .flat_map(|&a| c.cells.iter().flat_map(move |&m| config.seeds.iter().map(move |&s| (a, m, s))))
        .collect();
    let samples = jobs.par_iter().map(|&(a, m, s)| est.sample(a, m, s)).collect::<perfhom::Result<Vec<_>>>()?;
    let failed = samples.iter().filter(|s| s.error.is_some()).count();
    if failed * 5 > samples.len() {
        let first = samples.iter().find_map(|s| s.error.clone()).unwrap_or_default();
        return Err(perfhom::Error::TooManyFailures { failed, total: samples.len(), first }.into());
    }
    let rows = samples
        .iter()
        .map(|s| {
            vec![
                format!("{:e}", s.alpha),
                format!("{:e}", s.eps()),
                s.seed.to_string(),
                format!("{:e}", s.fraction),
                format!("{:e}", s.nodal_fraction),
                format!("{:e}", s.tol_zero),
                s.iterations.to_string(),
                s.converged.to_string(),
                s.error.clone().unwrap_or_default(),
            ]
        })
        .collect();
    Ok(vec![rows_file(
        "fractions.csv",
        &["alpha", "eps", "seed", "fraction", "nodal_fraction", "tol_zero", "solver_iters", "converged", "error"],
        rows,
    )?])
}

fn lcurve_chart(curve: &LCurveEstimate<f64>) -> Chart {
    Chart {
        title: "zero-set fraction".into(),
        x_label: "alpha".into(),
        y_label: "l(alpha)".into(),
        log_x: false,
        log_y: false,
        series: vec![Series {
            label: "extrapolated".into(),
            points: curve.rows.iter().map(|r| (r.alpha, r.extrapolated)).collect(),
        }],
    }
}

fn lcurve(config: &RunConfig) -> Result<Vec<Artifact>, CliError> {
    let c = &config.lcurve;
    let mut lc = lcurve_config(config, &c.cells, c.nodes_per_cell, c.tol_zero_rel)?;
    lc.warm_start = c.warm_start;
    let curve = LCurveEstimate::compute(&c.alphas, &lc)?.sorted();
    Ok(vec![
        csv_file("lcurve_samples.csv", |out| curve.write_samples_csv(out))?,
        csv_file("lcurve_summary.csv", |out| curve.write_summary_csv(out))?,
        plot_file("lcurve.svg", lcurve_chart(&curve)),
    ])
}

fn alpha0(config: &RunConfig) -> Result<Vec<Artifact>, CliError> {
    let c = &config.alpha0;
    let bracket = (c.bracket[0], c.bracket[1]);
    let result = match c.step_fixture {
        Some(step) => find_alpha0(|a: f64| Ok((a - step).max(0.0)), bracket, c.theta, c.tol)?,
        None => find_alpha0_monte_carlo(&lcurve_config(config, &c.cells, c.nodes_per_cell, c.tol_zero_rel)?, bracket, c.theta, c.tol)?,
    };
    let mut files = vec![csv_file("alpha0.csv", |out| result.write_csv(out))?];
    if let Some(curve) = &result.curve {
        files.push(csv_file("lcurve_samples.csv", |out| curve.write_samples_csv(out))?);
        files.push(csv_file("lcurve_summary.csv", |out| curve.write_summary_csv(out))?);
        files.push(plot_file("lcurve.svg", lcurve_chart(curve)));
    }
    Ok(files)
}

fn corrector(config: &RunConfig) -> Result<Vec<Artifact>, CliError> {
    let c = &config.corrector;
    let (pe, law, solver, strategy) = (config.pe()?, config.law()?, config.solver()?, config.strategy()?);
    let p_primes = if c.p_primes.is_empty() { vec![config.p / 2.0] } else { c.p_primes.clone() };
    let phis = bump_family(config.n);
    let jobs: Vec<(u64, usize)> = config.seeds.iter().flat_map(|&s| c.cells.iter().map(move |&m| (s, m))).collect();
    let results = jobs
        .par_iter()
        .map(|&(seed, m)| -> Result<_, CliError> {
            let f = field_for_cells(law, seed, config.n, m)?;
            let domain = PerforatedGrid::new(Grid::shared(config.n, c.grid)?, &f, 1.0 / m as f64, &pe, strategy)?;
            let run = solve_corrector(c.alpha0, &domain, &solver)?;
            run.report.require_converged()?;
            let diag = diagnostics(&run, seed, &phis, &p_primes, &pairing_function);
            let bound = energy_bound(&run);
            let scaling = if c.deltas.is_empty() { None } else { Some(delta_scaling(&run, &c.deltas, &solver)?) };
            Ok((seed, m, diag, bound, scaling))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let diags: Vec<CorrectorDiagnostics<f64>> = results.iter().map(|r| r.2.clone()).collect();
    let mut files = vec![csv_file("diagnostics.csv", |out| CorrectorDiagnostics::write_csv(&diags, out))?];
    files.push(rows_file(
        "energy_bound.csv",
        &["eps", "seed", "corrector", "cutoff", "transport", "margin"],
        results
            .iter()
            .map(|(s, m, _, b, _)| {
                vec![
                    format!("{:e}", 1.0 / *m as f64),
                    s.to_string(),
                    format!("{:e}", b.corrector),
                    format!("{:e}", b.cutoff),
                    format!("{:e}", b.transport),
                    format!("{:e}", b.margin()),
                ]
            })
            .collect(),
    )?);
    if !c.deltas.is_empty() {
        let mut rows = Vec::new();
        for (s, m, _, _, scaling) in &results {
            let sc = scaling.as_ref().expect("computed when deltas are set");
            for k in 0..sc.deltas.len() {
                rows.push(vec![
                    format!("{:e}", 1.0 / *m as f64),
                    s.to_string(),
                    format!("{:e}", sc.deltas[k]),
                    format!("{:e}", sc.distances[k]),
                    format!("{:e}", sc.lp_norms[k]),
                    format!("{:e}", sc.exponent),
                ]);
            }
        }
        files.push(rows_file("delta_scaling.csv", &["eps", "seed", "delta", "w1p_distance", "lp_norm", "exponent"], rows)?);
    }
    let series = config
        .seeds
        .iter()
        .map(|&seed| Series {
            label: format!("seed {seed}"),
            points: diags.iter().filter(|d| d.seed == seed).map(|d| (d.eps, d.lp_norm)).collect(),
        })
        .collect();
    files.push(plot_file(
        "corrector_lp.svg",
        Chart { title: "corrector L^p norm".into(), x_label: "eps".into(), y_label: "|w|_Lp".into(), log_x: true, log_y: true, series },
    ));
    Ok(files)
}

fn convergence_chart(report: &ConvergenceReport<f64>, name: &str) -> Chart {
    let mut series = vec![Series {
        label: format!("mean |{name} - limit|_Lp"),
        points: report.summaries.iter().map(|s| (s.eps(), s.lp_error)).collect(),
    }];
    for (k, n) in report.recovery_names.iter().enumerate() {
        series.push(Series {
            label: format!("|recovery gap| ({n})"),
            points: report.summaries.iter().map(|s| (s.eps(), s.recovery[k].abs())).collect(),
        });
    }
    Chart { title: format!("{name}: convergence"), x_label: "eps".into(), y_label: "value".into(), log_x: true, log_y: true, series }
}

fn converge(config: &RunConfig, obstacle: Option<Obstacle<f64>>) -> Result<Vec<Artifact>, CliError> {
    let study = study(config, obstacle)?;
    let report = run_study(&study)?;
    let name = if obstacle.is_some() { "h_eps" } else { "u_eps" };
    Ok(vec![
        csv_file("samples.csv", |out| report.write_samples_csv(out))?,
        csv_file("summary.csv", |out| report.write_summary_csv(out))?,
        plot_file("convergence.svg", convergence_chart(&report, name)),
    ])
}
