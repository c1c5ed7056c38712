use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use perfhom_cli::config::Command;
use perfhom_cli::{execute, Options};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Sub {
    /// Sample the capacity field.
    Field,
    /// Solve one problem and write the solution.
    Solve,
    /// Zero-set fractions of cell problems.
    Cell,
    /// Monte Carlo estimate of l(α) over a grid of α.
    Lcurve,
    /// Bisection for the critical value α₀.
    Alpha0,
    /// Corrector diagnostics.
    Corrector,
    /// Convergence study of the hole-constrained problem.
    Converge,
    /// Convergence study of the oscillating-obstacle problem.
    Obstacle,
}

impl From<Sub> for Command {
    fn from(s: Sub) -> Self {
        match s {
            Sub::Field => Command::Field,
            Sub::Solve => Command::Solve,
            Sub::Cell => Command::Cell,
            Sub::Lcurve => Command::Lcurve,
            Sub::Alpha0 => Command::Alpha0,
            Sub::Corrector => Command::Corrector,
            Sub::Converge => Command::Converge,
            Sub::Obstacle => Command::Obstacle,
        }
    }
}

/// Homogenization laboratory for p-Laplacian problems in randomly perforated
/// domains. Exit status: 0 on success, 1 on configuration or domain errors,
/// 2 when a solver fails.
#[derive(Debug, Parser)]
#[command(name = "perfhom", version)]
struct Cli {
    #[arg(value_enum)]
    command: Sub,
    /// TOML configuration file (defaults apply when omitted).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Run directory (default: runs/<command>-<hash prefix>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Cache directory.
    #[arg(long, default_value = ".perfhom-cache")]
    cache_dir: PathBuf,
    /// Recompute even when a cached result exists.
    #[arg(long)]
    no_cache: bool,
    /// Also write SVG plots.
    #[arg(long)]
    plot: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let opts = Options {
        command: cli.command.into(),
        config: cli.config,
        jobs: cli.jobs,
        out: cli.out,
        cache_dir: cli.cache_dir,
        no_cache: cli.no_cache,
        plot: cli.plot,
    };
    match execute(&opts) {
        Ok(run) => {
            let source = if run.cache_hit { "cache" } else { "computed" };
            println!("{} ({source}, config {})", run.out.display(), &run.hash[..12]);
            for f in &run.files {
                println!("  {f}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
