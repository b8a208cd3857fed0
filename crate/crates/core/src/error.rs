use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("{name} = {value} is outside {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },

    #[error("kernel singularity at the origin")]
    KernelSingularity,

    #[error("geometry violation: {0}")]
    Geometry(String),

    #[error("too many free nodes for enumeration: {nodes} > {limit}")]
    TooManyNodes { nodes: usize, limit: usize },

    #[error("no KKT-consistent active set found")]
    NoKktSet,

    #[error("active sets disagree: {0}")]
    AmbiguousKkt(String),

    #[error("measure has negative part {negative:e} above tolerance {tolerance:e}; solve is not converged")]
    UnconvergedMeasure { negative: f64, tolerance: f64 },

    #[error("inconsistent inputs: {0}")]
    Inconsistent(String),

    #[error("extrapolation failed: {0}")]
    Extrapolation(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn check_range(
    name: &'static str,
    value: f64,
    ok: bool,
    range: &'static str,
) -> Result<()> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(Error::OutOfRange { name, value, range })
    }
}

/// Validates the fractional order of the obstacle problem, `1 < s < 2`.
pub(crate) fn check_order(s: f64) -> Result<()> {
    check_range("s", s, s > 1.0 && s < 2.0, "(1, 2)")
}
