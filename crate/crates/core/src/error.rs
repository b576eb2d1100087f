use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not stable: eigenvalue {re} {sign} {im_abs}i has non-positive real part", sign = if *im < 0.0 { "-" } else { "+" }, im_abs = im.abs())]
    UnstableMatrix { re: f64, im: f64 },

    #[error("matrix is singular: {0}")]
    Singular(String),

    #[error("ergodicity condition violated: theta = {theta} must exceed beta0/2 = {half_beta0}")]
    Ergodicity { theta: f64, half_beta0: f64 },

    #[error("assumption violated: {0}")]
    Assumption(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    Dimension {
        what: &'static str,
        expected: String,
        found: String,
    },

    #[error("time step {step} violates the stability bound {bound}: {reason}")]
    UnstableStep {
        step: f64,
        bound: f64,
        reason: &'static str,
    },

    #[error("non-finite {what} at step {step}")]
    NonFinite { what: &'static str, step: usize },

    #[error("Gram matrix is singular at T = {time} (condition number {condition:e})")]
    SingularGram { time: f64, condition: f64 },

    #[error("diffusion matrix is not positive semi-definite (eigenvalue {eigenvalue:e})")]
    IndefiniteDiffusion { eigenvalue: f64 },

    #[error("channels live on different grids: {0}")]
    GridMismatch(String),

    #[error("missing {0} channel")]
    MissingChannel(&'static str),

    #[error("learning rate scale a = {a} must exceed 1 + delta = {threshold} for the central limit regime")]
    CltCondition { a: f64, threshold: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("malformed path data: {0}")]
    Parse(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dimension(what: &'static str, expected: impl ToString, found: impl ToString) -> Self {
        Error::Dimension {
            what,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}
