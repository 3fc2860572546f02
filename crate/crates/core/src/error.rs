use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },

    #[error("matrix is not Hermitian (deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    #[error("matrix is not positive semidefinite (smallest eigenvalue {min_eigenvalue:.3e})")]
    NotPositive { min_eigenvalue: f64 },

    #[error("density matrix trace is {trace}, expected 1")]
    InvalidTrace { trace: f64 },

    #[error(
        "damping parameters out of domain 0 <= alpha <= beta <= pi/2: alpha={alpha}, beta={beta}"
    )]
    ParamsOutOfDomain { alpha: f64, beta: f64 },

    #[error("Kraus operators are not complete (deviation {deviation:.3e})")]
    IncompleteKraus { deviation: f64 },

    #[error("Kraus set must hold 1 to 4 operators, got {0}")]
    KrausCount(usize),

    #[error("all Kraus operators are zero")]
    ZeroOperators,

    #[error("input state is not faithful (smallest operator-Schmidt coefficient {smallest:.3e})")]
    NonFaithfulInput { smallest: f64 },

    #[error("optical layout and LCR configuration do not match: {0}")]
    LayoutMismatch(String),

    #[error("all tomography counts are zero")]
    DegenerateCounts,

    #[error("tomography block incomplete: {0}")]
    IncompleteSettings(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
