use thiserror::Error;

pub type Result<T, E = NnError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("dimension error in layer `{layer}`: expected {expected}, got {got:?}")]
    Shape { layer: String, expected: String, got: Vec<usize> },

    #[error("invalid tensor: {0}")]
    InvalidTensor(String),

    #[error("state error in layer `{layer}`: {message}")]
    State { layer: String, message: String },

    #[error("weights format error: {0}")]
    Format(String),

    #[error("weights shape mismatch in layer `{layer}`: expected {expected:?}, got {got:?}")]
    WeightShape { layer: String, expected: Vec<usize>, got: Vec<usize> },

    #[error("optimizer error: {0}")]
    Optimizer(String),

    #[error("loss error: {0}")]
    Loss(String),

    #[error("invalid layer plan: {0}")]
    Plan(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl NnError {
    pub(crate) fn shape(layer: &str, expected: impl Into<String>, got: &[usize]) -> Self {
        NnError::Shape { layer: layer.to_owned(), expected: expected.into(), got: got.to_vec() }
    }

    pub(crate) fn not_forwarded(layer: &str) -> Self {
        NnError::State { layer: layer.to_owned(), message: "backward called before forward".into() }
    }
}
