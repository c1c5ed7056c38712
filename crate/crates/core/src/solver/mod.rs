//! Constrained minimization of discrete `p`-Dirichlet energies.

pub mod constraints;
pub mod energy;
pub mod minimize;
pub mod sparse;

pub use constraints::ConstraintSpec;
pub use energy::{assemble, Coupling, CouplingKind, EnergySpec, EnergyTerms, Load, Objective, PointMass};
pub use minimize::{minimize, Method, SolveReport, SolverConfig};
