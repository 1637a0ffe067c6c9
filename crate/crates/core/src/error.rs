use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or configuration value violates a precondition.
    #[error("configuration error: {0}")]
    Config(String),

    /// The requested object would exceed the configured memory budget.
    #[error("capacity exceeded: {what} needs {required} entries, budget is {budget}")]
    Capacity {
        what: String,
        required: u128,
        budget: u128,
    },

    /// Two objects that must share a grid (or a shape) do not.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A propagation produced non-finite values or a series failed to converge.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("not enough samples: {0}")]
    Samples(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}
