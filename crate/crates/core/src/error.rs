use thiserror::Error;

pub type Result<T> = std::result::Result<T, VepError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VepError {
    #[error("vacuous product: both factors have infinite variance")]
    VacuousProduct,

    /// Division left a non-positive precision. Callers in the sweep treat this
    /// as a skip-update signal.
    #[error("negative cavity variance (cavity precision {precision})")]
    NegativeCavity { precision: f64 },

    /// Moment matching or a literal update produced a non-positive variance.
    #[error("non-positive variance after update ({variance})")]
    NonPositiveVariance { variance: f64 },

    #[error("invalid belief: mean {mean}, variance {variance}")]
    InvalidBelief { mean: f64, variance: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value in layer {layer}")]
    NonFiniteLayer { layer: usize },

    #[error("non-finite state at sweep {sweep}")]
    NonFiniteState { sweep: usize },

    #[error("quadrature did not converge: achieved error {achieved:e}, requested {requested:e}")]
    Quadrature { achieved: f64, requested: f64 },

    #[error("finite difference produced a non-finite evaluation at coordinate {coordinate}")]
    FiniteDifference { coordinate: usize },

    #[error("line {line}: {message}")]
    Csv { line: u64, message: String },

    #[error("no data rows")]
    NoDataRows,

    #[error("model file: {0}")]
    Model(String),

    #[error("io: {0}")]
    Io(String),
}

impl VepError {
    /// True for the conditions a sweep skips over instead of aborting.
    pub fn is_skip(&self) -> bool {
        matches!(
            self,
            VepError::NegativeCavity { .. } | VepError::NonPositiveVariance { .. }
        )
    }
}

impl From<std::io::Error> for VepError {
    fn from(e: std::io::Error) -> Self {
        VepError::Io(e.to_string())
    }
}
