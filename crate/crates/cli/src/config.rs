//! Run configuration: one TOML file, one optional table per subcommand.
//!
//! Every field has a default, so the parsed struct (serialised back) is the
//! complete record of what a run used.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use perfhom::calibration::hole_strategy;
use perfhom::capacity::PExponent;
use perfhom::experiments::{GridPolicy, ObstacleOnHoles, TestFunction};
use perfhom::field::Law;
use perfhom::mesh::HoleStrategy;
use perfhom::solver::{Method, SolverConfig};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Field,
    Solve,
    Cell,
    Lcurve,
    Alpha0,
    Corrector,
    Converge,
    Obstacle,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Field => "field",
            Command::Solve => "solve",
            Command::Cell => "cell",
            Command::Lcurve => "lcurve",
            Command::Alpha0 => "alpha0",
            Command::Corrector => "corrector",
            Command::Converge => "converge",
            Command::Obstacle => "obstacle",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LawConfig {
    Constant { gamma: f64 },
    Uniform { min: f64, max: f64 },
    Bernoulli { q: f64, gamma: f64 },
}

impl Default for LawConfig {
    fn default() -> Self {
        LawConfig::Uniform { min: 0.5, max: 1.5 }
    }
}

impl LawConfig {
    pub fn law(&self) -> Law {
        match *self {
            LawConfig::Constant { gamma } => Law::Constant(gamma),
            LawConfig::Uniform { min, max } => Law::Uniform { min, max },
            LawConfig::Bernoulli { q, gamma } => Law::Bernoulli { q, gamma },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    /// `projected_newton` or `accelerated_gradient`.
    pub method: String,
    pub tol_rel: f64,
    pub max_iter: usize,
    pub continuation: bool,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolverConfig::<f64>::default();
        Self { method: d.method.name().into(), tol_rel: d.tol_rel, max_iter: d.max_iter, continuation: d.continuation }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldSection {
    /// `1/ε`.
    pub cells: usize,
    pub seed: u64,
}

impl Default for FieldSection {
    fn default() -> Self {
        Self { cells: 8, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveSection {
    /// `u_eps`, `u0`, `h_eps`, `h0`, `corrector` or `cell`.
    pub problem: String,
    pub cells: usize,
    /// Grid size `N`.
    pub grid: usize,
    pub seed: u64,
    /// `α` of the cell problem.
    pub alpha: f64,
    pub alpha0: f64,
    pub load: f64,
}

impl Default for SolveSection {
    fn default() -> Self {
        Self { problem: "u_eps".into(), cells: 8, grid: 64, seed: 0, alpha: 1.0, alpha0: 1.0, load: -1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CellSection {
    pub alphas: Vec<f64>,
    pub cells: Vec<usize>,
    pub nodes_per_cell: usize,
    pub tol_zero_rel: f64,
}

impl Default for CellSection {
    fn default() -> Self {
        Self { alphas: vec![1.0], cells: vec![8, 16], nodes_per_cell: 8, tol_zero_rel: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LCurveSection {
    pub alphas: Vec<f64>,
    pub cells: Vec<usize>,
    pub nodes_per_cell: usize,
    pub tol_zero_rel: f64,
    pub warm_start: bool,
}

impl Default for LCurveSection {
    fn default() -> Self {
        Self { alphas: vec![0.5, 1.0, 1.5, 2.0], cells: vec![8, 16], nodes_per_cell: 8, tol_zero_rel: 1e-6, warm_start: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Alpha0Section {
    pub bracket: [f64; 2],
    pub theta: f64,
    pub tol: f64,
    pub cells: Vec<usize>,
    pub nodes_per_cell: usize,
    pub tol_zero_rel: f64,
    /// Replace the Monte Carlo estimator by the step `l(α) = max(0, α − step)`.
    pub step_fixture: Option<f64>,
}

impl Default for Alpha0Section {
    fn default() -> Self {
        Self {
            bracket: [0.5, 2.0],
            theta: 0.02,
            tol: 0.01,
            cells: vec![8, 16],
            nodes_per_cell: 8,
            tol_zero_rel: 1e-6,
            step_fixture: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorrectorSection {
    pub alpha0: f64,
    pub cells: Vec<usize>,
    pub grid: usize,
    /// Exponents `p′` of diagnostic (a); empty means `p/2`.
    pub p_primes: Vec<f64>,
    /// Perturbations for the `δ`-scaling fit; empty skips it.
    pub deltas: Vec<f64>,
}

impl Default for CorrectorSection {
    fn default() -> Self {
        Self { alpha0: 1.0, cells: vec![4, 8, 16], grid: 128, p_primes: Vec::new(), deltas: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergeSection {
    pub alpha0: f64,
    pub load: f64,
    pub cells: Vec<usize>,
    /// Common grid size; ignored when `nodes_per_cell` is set.
    pub grid: usize,
    pub nodes_per_cell: Option<usize>,
    /// Amplitude of the sign-changing recovery test function; 0 disables it.
    pub recovery_amplitude: f64,
    pub competitors: usize,
}

impl Default for ConvergeSection {
    fn default() -> Self {
        Self {
            alpha0: 1.0,
            load: -1.0,
            cells: vec![4, 8, 16],
            grid: 128,
            nodes_per_cell: None,
            recovery_amplitude: 0.1,
            competitors: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObstacleSection {
    pub alpha0: f64,
    pub load: f64,
    pub cells: Vec<usize>,
    pub grid: usize,
    pub nodes_per_cell: Option<usize>,
    pub competitors: usize,
    /// `ψ = base + amplitude Π sin(2π x_d)`.
    pub base: f64,
    pub amplitude: f64,
    /// `zero` or `max_zero`.
    pub on_holes: String,
}

impl Default for ObstacleSection {
    fn default() -> Self {
        Self {
            alpha0: 1.0,
            load: -3.0,
            cells: vec![4, 8, 16],
            grid: 128,
            nodes_per_cell: None,
            competitors: 20,
            base: -0.2,
            amplitude: 0.1,
            on_holes: "zero".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub p: f64,
    pub n: usize,
    pub law: LawConfig,
    /// `resolved`, `nearest_node` or `subgrid`.
    pub strategy: String,
    pub seeds: Vec<u64>,
    pub solver: SolverSection,
    pub field: FieldSection,
    pub solve: SolveSection,
    pub cell: CellSection,
    pub lcurve: LCurveSection,
    pub alpha0: Alpha0Section,
    pub corrector: CorrectorSection,
    pub converge: ConvergeSection,
    pub obstacle: ObstacleSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            p: 1.5,
            n: 2,
            law: LawConfig::default(),
            strategy: "subgrid".into(),
            seeds: (0..5).collect(),
            solver: SolverSection::default(),
            field: FieldSection::default(),
            solve: SolveSection::default(),
            cell: CellSection::default(),
            lcurve: LCurveSection::default(),
            alpha0: Alpha0Section::default(),
            corrector: CorrectorSection::default(),
            converge: ConvergeSection::default(),
            obstacle: ObstacleSection::default(),
        }
    }
}

fn config_err(key: &str, message: impl Into<String>) -> CliError {
    CliError::Core(perfhom::Error::config(key, message))
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is serialisable")
    }

    pub fn pe(&self) -> Result<PExponent<f64>, CliError> {
        PExponent::new(self.p, self.n).map_err(|e| config_err("p", e.to_string()))
    }

    pub fn law(&self) -> Result<Law, CliError> {
        let law = self.law.law();
        law.validate()?;
        Ok(law)
    }

    pub fn strategy(&self) -> Result<HoleStrategy<f64>, CliError> {
        Ok(hole_strategy(&self.strategy, &self.pe()?)?)
    }

    pub fn solver(&self) -> Result<SolverConfig<f64>, CliError> {
        let method = match self.solver.method.as_str() {
            "projected_newton" => Method::ProjectedNewton,
            "accelerated_gradient" => Method::AcceleratedGradient,
            other => {
                return Err(config_err(
                    "solver.method",
                    format!("unknown method `{other}` (expected projected_newton or accelerated_gradient)"),
                ))
            }
        };
        if !(self.solver.tol_rel > 0.0) {
            return Err(config_err("solver.tol_rel", "must be positive"));
        }
        if self.solver.max_iter == 0 {
            return Err(config_err("solver.max_iter", "must be positive"));
        }
        Ok(SolverConfig {
            method,
            tol_rel: self.solver.tol_rel,
            max_iter: self.solver.max_iter,
            continuation: self.solver.continuation,
        })
    }

    /// Validates the keys a command reads, so errors surface before any work.
    pub fn validate(&self, command: Command) -> Result<(), CliError> {
        self.pe()?;
        self.law()?;
        self.solver()?;
        if self.seeds.is_empty() {
            return Err(config_err("seeds", "need at least one seed"));
        }
        match command {
            Command::Solve if !["u_eps", "u0", "h_eps", "h0", "corrector", "cell"].contains(&self.solve.problem.as_str()) => {
                Err(config_err("solve.problem", format!("unknown problem `{}`", self.solve.problem)))
            }
            Command::Obstacle => self.on_holes().map(|_| ()),
            Command::Cell | Command::Lcurve if self.alphas(command).is_empty() => {
                Err(config_err(&format!("{}.alphas", command.name()), "need at least one value"))
            }
            _ => Ok(()),
        }
    }

    fn alphas(&self, command: Command) -> &[f64] {
        match command {
            Command::Cell => &self.cell.alphas,
            _ => &self.lcurve.alphas,
        }
    }

    pub fn on_holes(&self) -> Result<ObstacleOnHoles, CliError> {
        match self.obstacle.on_holes.as_str() {
            "zero" => Ok(ObstacleOnHoles::Zero),
            "max_zero" => Ok(ObstacleOnHoles::MaxZero),
            other => Err(config_err("obstacle.on_holes", format!("expected zero or max_zero, got `{other}`"))),
        }
    }

    pub fn recovery(&self) -> Vec<TestFunction<f64>> {
        if self.converge.recovery_amplitude == 0.0 {
            Vec::new()
        } else {
            vec![TestFunction::SignChanging(self.converge.recovery_amplitude)]
        }
    }

    pub fn grid_policy(grid: usize, nodes_per_cell: Option<usize>) -> GridPolicy {
        nodes_per_cell.map_or(GridPolicy::Common(grid), GridPolicy::PerCell)
    }

    /// The part of the configuration `command` depends on, as canonical JSON
    /// (object keys sorted).
    pub fn canonical(&self, command: Command) -> String {
        let section = match command {
            Command::Field => serde_json::to_value(&self.field),
            Command::Solve => serde_json::to_value(&self.solve),
            Command::Cell => serde_json::to_value(&self.cell),
            Command::Lcurve => serde_json::to_value(&self.lcurve),
            Command::Alpha0 => serde_json::to_value(&self.alpha0),
            Command::Corrector => serde_json::to_value(&self.corrector),
            Command::Converge => serde_json::to_value(&self.converge),
            Command::Obstacle => serde_json::to_value(&self.obstacle),
        }
        .expect("sections are serialisable");
        let value = serde_json::json!({
            "version": env!("CARGO_PKG_VERSION"),
            "command": command.name(),
            "p": self.p,
            "n": self.n,
            "law": self.law,
            "strategy": self.strategy,
            "seeds": self.seeds,
            "solver": self.solver,
            "section": section,
        });
        serde_json::to_string(&value).expect("json")
    }

    /// SHA-256 of [`Self::canonical`], hex encoded.
    pub fn hash(&self, command: Command) -> String {
        hex::encode(Sha256::digest(self.canonical(command).as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = RunConfig::from_toml("[converge]\nalpha_0 = 1.0\n").unwrap_err().to_string();
        assert!(err.contains("alpha_0"), "{err}");
    }

    #[test]
    fn hash_ignores_unrelated_sections() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.lcurve.alphas = vec![3.0];
        assert_eq!(a.hash(Command::Converge), b.hash(Command::Converge));
        assert_ne!(a.hash(Command::Lcurve), b.hash(Command::Lcurve));
        assert_ne!(a.hash(Command::Converge), a.hash(Command::Obstacle));
    }

    #[test]
    fn bad_values_name_their_key() {
        let mut c = RunConfig::default();
        c.solver.method = "gauss".into();
        assert!(c.validate(Command::Solve).unwrap_err().to_string().contains("solver.method"));
        let mut c = RunConfig::default();
        c.obstacle.on_holes = "one".into();
        assert!(c.validate(Command::Obstacle).unwrap_err().to_string().contains("obstacle.on_holes"));
        let mut c = RunConfig::default();
        c.p = 0.5;
        assert!(c.validate(Command::Field).unwrap_err().to_string().contains("`p`"));
    }
}
