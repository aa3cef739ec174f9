use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("axis {axis} out of range for dimension {dim}")]
    Axis { axis: usize, dim: usize },
    #[error("invalid exponent {0}: Lebesgue exponents must be at least 1")]
    Exponent(f64),
    #[error("dilation {sigma} does not divide grid size {n}")]
    Dilation { sigma: usize, n: usize },
    #[error("grids differ: {0}")]
    GridMismatch(String),
    #[error("input must have zero spatial mean, found {0:e}")]
    NonzeroMean(f64),
    #[error("concentration mu = {mu} is below the separation bound {min}")]
    MuTooSmall { mu: f64, min: f64 },
    #[error("resolution exceeded: {0}")]
    Resolution(String),
    #[error("exponents outside the admissible regime: {0}")]
    Regime(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("target density must keep a constant spatial mean, drift {0:e}")]
    MeanDrift(f64),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("memory budget exceeded: {0}")]
    Memory(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, LabError>;
