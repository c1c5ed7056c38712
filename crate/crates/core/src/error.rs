use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error in `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("quadrature did not reach tolerance {tolerance:e} (error estimate {estimate:e})")]
    Quadrature { tolerance: f64, estimate: f64 },

    #[error(
        "hole of radius {radius:e} is not resolved by spacing {spacing:e}; \
         use N >= {min_nodes} or the nearest_node / subgrid strategy"
    )]
    Resolution { radius: f64, spacing: f64, min_nodes: usize },

    #[error("solver stopped after {iterations} iterations (projected gradient {residual:e})")]
    MaxIterations { iterations: usize, residual: f64 },

    #[error("line search failed at iteration {iteration} (projected gradient {residual:e})")]
    LineSearchFailure { iteration: usize, residual: f64 },

    #[error("objective is not finite at iteration {iteration}")]
    NonfiniteObjective { iteration: usize },

    #[error("bracket [{lo}, {hi}] does not straddle the threshold: l(lo) = {l_lo}, l(hi) = {l_hi}")]
    Bracket { lo: f64, hi: f64, l_lo: f64, l_hi: f64 },

    #[error("{failed} of {total} instances failed (first: {first})")]
    TooManyFailures { failed: usize, total: usize, first: String },

    #[error("malformed grid-function file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config { key: key.into(), message: message.into() }
    }

    /// True for failures of the minimizer (as opposed to bad input).
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self,
            Error::MaxIterations { .. }
                | Error::LineSearchFailure { .. }
                | Error::NonfiniteObjective { .. }
                | Error::TooManyFailures { .. }
                | Error::Quadrature { .. }
        )
    }
}
