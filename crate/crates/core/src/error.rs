use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("graft failed: {0}")]
    Graft(String),
    #[error("segment cap of {cap} reached after {built} segments")]
    SegmentCap {
        cap: usize,
        built: usize,
        partial: Box<crate::builder::BuildTrace>,
    },
    #[error("cannot split: {0}")]
    CannotSplit(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("no root: {0}")]
    NoRoot(String),
    #[error("uncrossed rays at built depth: {0} words")]
    UncrossedRays(usize),
    #[error("divergent integral: {0}")]
    Divergence(String),
    #[error("cell did not die within {max_time} (partial path of {steps} steps)")]
    Timeout {
        max_time: f64,
        steps: usize,
        partial: Box<crate::levy::CellPath>,
    },
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub(crate) fn param(msg: impl Into<String>) -> Error {
    Error::Parameter(msg.into())
}
