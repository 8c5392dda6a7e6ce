use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("step index {index} out of range 0..={max}")]
    Index { index: usize, max: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("singular reverse step at k={0}: signal coefficient vanishes")]
    SingularStep(usize),

    #[error("schedule not trainable: {0}")]
    NotTrainable(String),

    #[error("non-finite loss at epoch {0}")]
    Divergence(usize),

    #[error("corrupt checkpoint: {0}")]
    Checkpoint(String),

    #[error("malformed csv: {0}")]
    Csv(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
