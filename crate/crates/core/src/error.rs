use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is numerically singular: {0}")]
    Singular(String),

    #[error("degenerate transfer: {0}")]
    DegenerateTransfer(String),

    #[error("degenerate decomposition: symbol {symbol} has a zero precoder column")]
    DegenerateDecomposition { symbol: usize },

    #[error("fixed point did not converge after {iterations} iterations (residual {residual:.3e})")]
    FixedPointNotConverged { iterations: usize, residual: f64 },

    #[error("geometric program infeasible: constraint {constraint} at {value:.6e} > 1")]
    GpInfeasible { constraint: usize, value: f64 },

    #[error("geometric program stalled after {iterations} Newton steps")]
    GpStalled { iterations: usize },

    #[error("sum-AMSE target {target:.6e} is out of reach: the design stalls at {best:.6e}")]
    TargetUnreachable { target: f64, best: f64 },

    #[error("{trial}: {inner}")]
    InTrial { trial: String, inner: Box<Error> },

    #[error("iteration {iteration}: {inner}")]
    AtIteration { iteration: usize, inner: Box<Error> },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn at(self, iteration: usize) -> Error {
        Error::AtIteration { iteration, inner: Box::new(self) }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
