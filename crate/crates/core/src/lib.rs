//! Numerical laboratory for the homogenization of `p`-Laplacian obstacle
//! problems in randomly perforated domains.

pub mod calibration;
pub mod capacity;
pub mod corrector;
pub mod cell;
pub mod error;
pub mod experiments;
pub mod field;
pub mod mesh;
pub mod quadrature;
pub mod scalar;
pub mod solver;

pub use error::{Error, Result};
pub use scalar::Real;

/// Double-precision instances of the generic types.
pub type PExponentF64 = capacity::PExponent<f64>;
pub type CapacityFieldF64 = field::CapacityField<f64>;
pub type GridFunctionF64 = mesh::GridFunction<f64>;
pub type PerforatedGridF64 = mesh::PerforatedGrid<f64>;
pub type HoleStrategyF64 = mesh::HoleStrategy<f64>;
pub type EnergySpecF64 = solver::EnergySpec<f64>;
pub type SolverConfigF64 = solver::SolverConfig<f64>;
pub type SolveReportF64 = solver::SolveReport<f64>;
pub type LCurveConfigF64 = cell::LCurveConfig<f64>;
pub type CorrectorRunF64 = corrector::CorrectorRun<f64>;
pub type HomogenizationStudyF64 = experiments::HomogenizationStudy<f64>;
pub type ConvergenceReportF64 = experiments::ConvergenceReport<f64>;
