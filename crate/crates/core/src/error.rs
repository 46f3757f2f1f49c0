use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("variable count mismatch: {left} vs {right}")]
    VariableMismatch { left: usize, right: usize },
    #[error("variable index {var} out of range for {nvars} variables")]
    BadVariable { var: usize, nvars: usize },
    #[error("substituted series #{index} has a nonzero constant term")]
    NonzeroConstantTerm { index: usize },
    #[error("series has zero constant term and cannot be inverted")]
    ZeroConstantTerm,

    #[error("weight is not real valued: Hermitian asymmetry {asymmetry:.3e} at {index}")]
    NotRealValued { asymmetry: f64, index: String },
    #[error("degenerate weight: {0}")]
    Degenerate(String),
    #[error("quadratic gap violated: cmin = {cmin:.3e} at radius {radius}")]
    GapViolation { cmin: f64, radius: f64 },

    #[error("degenerate Hessian: {0}")]
    DegenerateHessian(String),
    #[error("critical structure violated: {what} off by {size:.3e}")]
    CriticalStructureViolation { what: String, size: f64 },
    #[error("bad contour ({kind}): margin {margin:.3e}")]
    BadContour { kind: String, margin: f64 },

    #[error("insufficient degree: {0}")]
    InsufficientDegree(String),
    #[error("quadrature under-resolved: node doubling changed result by {change:.3e} (tolerance {tolerance:.1e})")]
    QuadratureUnderresolved { change: f64, tolerance: f64 },
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("Gram matrix ill-conditioned: condition estimate {condition:.3e}")]
    IllConditioned { condition: f64 },
    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}
