use thiserror::Error;

/// Errors produced by the simulation and analysis pipeline.
#[derive(Error, Debug)]
pub enum Error {
    #[error("spin index {target} out of range for {nqubits} qubits")]
    TargetOutOfRange { target: usize, nqubits: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not Hermitian (relative asymmetry {residual:.3e})")]
    NotHermitian { residual: f64 },

    #[error("matrix is not a valid density matrix: {reason}")]
    InvalidDensityMatrix { reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported model: {0}")]
    UnsupportedModel(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("frequency grids do not match")]
    GridMismatch,

    #[error("series of length {len} too short: need at least {required}")]
    SeriesTooShort { len: usize, required: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
