use thiserror::Error;

pub type Result<T> = std::result::Result<T, SfdaError>;

/// Broad error classes, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Convergence,
    Io,
}

#[derive(Debug, Error)]
pub enum SfdaError {
    #[error("class {class} has no observations")]
    EmptyClass { class: usize },

    #[error("label {label} at row {row} is outside 1..={k}")]
    InvalidLabel { row: usize, label: i64, k: usize },

    #[error("need more than {k} observations for {k} classes, got {n}")]
    InsufficientSamples { n: usize, k: usize },

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate objective: the linear term vanishes on the feasible subspace")]
    DegenerateObjective,

    #[error("unbounded objective: quadratic form is singular and no penalty is applied")]
    UnboundedObjective,

    #[error("initial vector is annihilated by the objective matrix")]
    DegenerateInit,

    #[error("{stage} did not converge after {iterations} iterations (residual {residual:.3e})")]
    Convergence {
        stage: &'static str,
        iterations: usize,
        residual: f64,
        last_iterate: Option<Vec<f64>>,
    },

    #[error("constraint vectors are rank deficient when extracting component {component}")]
    RankDeficientConstraints { component: usize },

    #[error("component gram matrix is ill conditioned (condition estimate {condition:.3e})")]
    IllConditionedGram { condition: f64 },

    #[error("matrix is singular or not positive definite: {0}")]
    Singular(String),

    #[error("expected {expected} positive eigenvalues, found {found}")]
    MissingEigenvalues { expected: usize, found: usize },

    #[error("class {class} has {count} observations, fewer than the {folds} folds")]
    ClassTooSmall {
        class: usize,
        count: usize,
        folds: usize,
    },

    #[error("every grid point failed during cross-validation")]
    NoValidGridPoint,

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl SfdaError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            SfdaError::Convergence { .. } => ErrorKind::Convergence,
            SfdaError::Io(_) | SfdaError::Csv(_) | SfdaError::Json(_) => ErrorKind::Io,
            _ => ErrorKind::Validation,
        }
    }

    /// Short machine-readable identifier.
    pub fn code(&self) -> &'static str {
        match self {
            SfdaError::EmptyClass { .. } => "empty_class",
            SfdaError::InvalidLabel { .. } => "invalid_label",
            SfdaError::InsufficientSamples { .. } => "insufficient_samples",
            SfdaError::NonFinite { .. } => "non_finite",
            SfdaError::DimensionMismatch(_) => "dimension_mismatch",
            SfdaError::InvalidParameter(_) => "invalid_parameter",
            SfdaError::DegenerateObjective => "degenerate_objective",
            SfdaError::UnboundedObjective => "unbounded_objective",
            SfdaError::DegenerateInit => "degenerate_init",
            SfdaError::Convergence { .. } => "convergence",
            SfdaError::RankDeficientConstraints { .. } => "rank_deficient_constraints",
            SfdaError::IllConditionedGram { .. } => "ill_conditioned_gram",
            SfdaError::Singular(_) => "singular_matrix",
            SfdaError::MissingEigenvalues { .. } => "missing_eigenvalues",
            SfdaError::ClassTooSmall { .. } => "class_too_small",
            SfdaError::NoValidGridPoint => "no_valid_grid_point",
            SfdaError::Parse(_) => "parse_error",
            SfdaError::Io(_) => "io_error",
            SfdaError::Csv(_) => "csv_error",
            SfdaError::Json(_) => "json_error",
        }
    }
}
