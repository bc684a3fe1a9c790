use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("operation is undefined for the zero polynomial map")]
    ZeroMap,

    #[error("polyhedral set is empty")]
    EmptySet,

    #[error("{rows} inequality rows exceed the enumeration cap of {cap}")]
    FaceCap { rows: usize, cap: usize },

    #[error("LICQ fails on the pseudo-face with active rows {face:?}")]
    Licq { face: Vec<usize> },

    #[error("premise not satisfied: {0}")]
    Premise(String),

    #[error("excess is undefined: {0}")]
    Undefined(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
