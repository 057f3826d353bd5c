use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain quadratic form is not positive definite (eigenvalues {0:e}, {1:e})")]
    NonConvexDomain(f64, f64),

    #[error("no lattice point with spacing {h} lies inside the domain")]
    EmptyGrid { h: f64 },

    #[error("point ({0}, {1}) lies outside the domain")]
    OutsideDomain(f64, f64),

    #[error("problem data evaluated to a non-finite value: {0}")]
    EvaluationError(String),

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("unknown problem `{0}`")]
    UnknownProblem(String),

    #[error("Hessian determinant {det:e} is below the singularity threshold {eps:e}")]
    SingularHessian { det: f64, eps: f64 },

    #[error("time step {dt:e} fell below the minimum {dt_min:e} at t = {t}")]
    StiffnessOverflow { t: f64, dt: f64, dt_min: f64 },

    #[error("non-finite value produced at t = {t}")]
    NonFiniteField { t: f64 },

    #[error("dual grid does not cover the gradient range: {0}")]
    DualGridTooSmall(String),

    #[error("dual transform undefined: {0}")]
    DegenerateDual(String),

    #[error("traces cannot be compared: {0}")]
    IncompatibleTraces(String),

    #[error("expression error at column {col}: {msg}")]
    Expression { col: usize, msg: String },

    #[error("config parse error at line {line}, column {col}: {msg}")]
    Parse { line: usize, col: usize, msg: String },

    #[error("unknown config key `{0}`")]
    UnknownKey(String),

    #[error("value out of range for `{key}`: {msg}")]
    Range { key: String, msg: String },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl Error {
    /// Stable machine-readable tag used in failure reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NonConvexDomain(..) => "NonConvexDomain",
            Error::EmptyGrid { .. } => "EmptyGrid",
            Error::OutsideDomain(..) => "OutsideDomain",
            Error::EvaluationError(_) => "EvaluationError",
            Error::InvalidProblem(_) => "InvalidProblem",
            Error::UnknownProblem(_) => "UnknownProblem",
            Error::SingularHessian { .. } => "SingularHessian",
            Error::StiffnessOverflow { .. } => "StiffnessOverflow",
            Error::NonFiniteField { .. } => "NonFiniteField",
            Error::DualGridTooSmall(_) => "DualGridTooSmall",
            Error::DegenerateDual(_) => "DegenerateDual",
            Error::IncompatibleTraces(_) => "IncompatibleTraces",
            Error::Expression { .. } => "ExpressionError",
            Error::Parse { .. } => "ParseError",
            Error::UnknownKey(_) => "UnknownKey",
            Error::Range { .. } => "RangeError",
            Error::Io(_) => "IoError",
        }
    }
}
