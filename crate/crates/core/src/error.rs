use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Normal equations (or a pooled Gram matrix) are not positive definite.
    /// `columns` are 1-based task ids or 0-based feature indices, depending on `context`.
    #[error("singular design ({context}): degenerate columns {columns:?}")]
    SingularDesign { context: &'static str, columns: Vec<usize> },

    #[error("singular matrix: {0}")]
    SingularMatrix(String),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(&'static str),

    #[error("enumeration of {requested} subsets exceeds the guard of {limit}")]
    EnumerationGuard { requested: u128, limit: u128 },

    #[error("evaluation failed for {subset}: {message}")]
    Evaluation { subset: String, message: String },

    #[error("evaluation at gamma={gamma} failed: {source}")]
    AtGamma { gamma: f64, source: Box<Error> },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
