use num_complex::Complex64;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degree overflow: ({0},{1}) wedge ({2},{3}) exceeds complex dimension {4}")]
    DegreeOverflow(usize, usize, usize, usize, usize),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid index: {0}")]
    InvalidIndex(String),

    #[error("structure constants violate d^2 = 0: {entry} has coefficient {value:e}")]
    Jacobi { entry: String, value: f64 },

    #[error("structure constants are not unimodular: trace of ad({generator}) = {trace}")]
    NotUnimodular { generator: String, trace: Complex64 },

    #[error("matrix is not Hermitian (relative asymmetry {0:e})")]
    NotHermitian(f64),

    #[error("not positive: smallest eigenvalue {eigenvalue:e}")]
    NotPositive { eigenvalue: f64 },

    #[error("form is not primitive: |h ^ omega^(n-1)| = {0:e}")]
    NotPrimitive(f64),

    #[error("form is not closed: |d phi| = {0:e}")]
    NotClosed(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("metric field not positive at grid point {point:?}: smallest eigenvalue {eigenvalue:e}")]
    GridNotPositive { point: [usize; 4], eigenvalue: f64 },

    #[error("calabi integration unstable at step {step}: energy rose from {previous:e} to {current:e} twice in a row")]
    Unstable {
        step: usize,
        previous: f64,
        current: f64,
    },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("model field `{field}`: {message}")]
    ModelField { field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable code, used by the CLI on every failure path.
    pub fn code(&self) -> &'static str {
        match self {
            Error::DegreeOverflow(..) => "E_DEGREE",
            Error::DimensionMismatch(_) => "E_DIMENSION",
            Error::InvalidIndex(_) => "E_INDEX",
            Error::Jacobi { .. } => "E_JACOBI",
            Error::NotUnimodular { .. } => "E_UNIMODULAR",
            Error::NotHermitian(_) => "E_NOT_HERMITIAN",
            Error::NotPositive { .. } => "E_NOT_POSITIVE",
            Error::NotPrimitive(_) => "E_NOT_PRIMITIVE",
            Error::NotClosed(_) => "E_NOT_CLOSED",
            Error::InvalidArgument(_) => "E_ARGUMENT",
            Error::GridNotPositive { .. } => "E_GRID_NOT_POSITIVE",
            Error::Unstable { .. } => "E_UNSTABLE",
            Error::Parse { .. } => "E_PARSE",
            Error::ModelField { .. } => "E_MODEL_FIELD",
            Error::Io(_) => "E_IO",
        }
    }
}
