use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("measure is not normalized: mass = {mass}")]
    NotNormalized { mass: f64 },

    #[error(
        "integration blow-up: particle {particle} became non-finite at t = {time}; \
         retry with a time step smaller than dt = {dt}"
    )]
    BlowUp { particle: usize, time: f64, dt: f64 },

    #[error("time step {dt} violates the stability bound; admissible dt <= {max_dt}")]
    Stability { dt: f64, max_dt: f64 },

    #[error("density became negative ({value:e}) in cell {cell}")]
    Positivity { cell: usize, value: f64 },

    #[error("fixed-point iteration did not converge in {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error("parameters outside the admissible regime: {0}")]
    Regime(String),

    #[error("transport problem {rows}x{cols} exceeds the plan cap of {cap} entries; subsample the measures")]
    TooLarge { rows: usize, cols: usize, cap: usize },

    #[error("degenerate support: {0}")]
    Support(String),

    #[error("measure is not symmetric under block permutations; symmetrize it first")]
    NotSymmetric,

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
