use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{what} out of domain: {value}")]
    Domain { what: &'static str, value: f64 },
    #[error("invalid channel model: {0}")]
    InvalidModel(String),
    #[error("invalid power policy: {0}")]
    InvalidPolicy(String),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("blocklength threshold `{which}` violated: need N > {required}, got {actual}")]
    Threshold { which: &'static str, required: f64, actual: f64 },
    #[error("unstable queue: mean arrival {mean_arrival} >= mean service {mean_service}")]
    Unstable { mean_arrival: f64, mean_service: f64 },
    #[error("policy not admissible: Xi + Xi'x = {value} at x = {x}")]
    NotAdmissible { x: f64, value: f64 },
    #[error("density vanishes at x* = {x}")]
    DensityZero { x: f64 },
    #[error("curvature of the rate at x* is not positive: r'' = {r2}")]
    Curvature { r2: f64 },
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("moment generating function diverges at theta = {theta}")]
    DivergentMgf { theta: f64 },
    #[error("no sign change on [{lo}, {hi}]: f(lo) = {f_lo}, f(hi) = {f_hi}")]
    NoSignChange { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },
    #[error("{what} did not converge after {iterations} iterations")]
    NoConvergence { what: &'static str, iterations: usize },
    #[error("quadrature failed on [{a}, {b}]: estimate {estimate}, error {error}")]
    Quadrature { a: f64, b: f64, estimate: f64, error: f64 },
    #[error("schedule not admissible: {0}")]
    ScheduleInadmissible(String),
    #[error("no threshold has at least {needed} exceedances")]
    InsufficientExceedances { needed: u64 },
}

/// Coarse classification used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Input,
    Precondition,
    Numeric,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        use Error::*;
        match self {
            Domain { .. } | InvalidModel(_) | InvalidPolicy(_) | InvalidParam(_) => ErrorKind::Input,
            Threshold { .. }
            | Unstable { .. }
            | NotAdmissible { .. }
            | DensityZero { .. }
            | Curvature { .. }
            | Degenerate(_)
            | Infeasible(_)
            | DivergentMgf { .. }
            | ScheduleInadmissible(_)
            | InsufficientExceedances { .. } => ErrorKind::Precondition,
            NoSignChange { .. } | NoConvergence { .. } | Quadrature { .. } => ErrorKind::Numeric,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
