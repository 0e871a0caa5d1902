//! Error type shared by all modules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// The design matrix is (numerically) rank deficient. Estimators refuse
    /// to fit such designs rather than silently regularizing them.
    #[error("rank deficient design: |R[{index},{index}]| = {value:.3e} below {threshold:.3e}")]
    RankDeficient {
        index: usize,
        value: f64,
        threshold: f64,
    },

    #[error("too few rows: need more than {needed}, have {have}")]
    TooFewRows { needed: usize, have: usize },

    /// Dense n-by-n matching variables scale poorly; solvers over the
    /// matching polytope refuse instances beyond this guard.
    #[error("problem too large for dense matching variables: n = {n} exceeds guard n <= {limit}")]
    ProblemTooLarge { n: usize, limit: usize },

    /// A forbidden pairing was selected by the assignment solver, meaning the
    /// constrained matching problem is over-constrained.
    #[error("constrained matching infeasible: forbidden pairing selected for row {row}")]
    InfeasibleMatch { row: usize },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error in {path} line {line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
}

impl Error {
    /// Short stable identifier, used as the per-row failure code in
    /// experiment result tables.
    pub fn code(&self) -> &'static str {
        match self {
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::InvalidConfig(_) => "invalid_config",
            Error::RankDeficient { .. } => "rank_deficient",
            Error::TooFewRows { .. } => "too_few_rows",
            Error::ProblemTooLarge { .. } => "problem_too_large",
            Error::InfeasibleMatch { .. } => "infeasible_match",
            Error::Io(_) => "io",
            Error::Parse { .. } => "parse",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
