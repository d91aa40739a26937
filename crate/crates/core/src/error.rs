use thiserror::Error;

pub type Result<T> = std::result::Result<T, SmarnetError>;

#[derive(Debug, Error)]
pub enum SmarnetError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("missing token field `{0}`")]
    MissingFeature(&'static str),

    #[error("annotation length mismatch: document has {tokens} tokens, sidecar has {annotations}")]
    SidecarLength { tokens: usize, annotations: usize },

    #[error("language model has not been trained")]
    UntrainedModel,

    #[error("non-finite loss on example `{id}`")]
    NonFiniteLoss { id: String },

    #[error("malformed data at {path}: {message}")]
    Data { path: String, message: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl SmarnetError {
    pub(crate) fn shape(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        SmarnetError::Shape {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        SmarnetError::InvalidArgument(msg.into())
    }

    pub(crate) fn data(path: impl Into<String>, message: impl Into<String>) -> Self {
        SmarnetError::Data {
            path: path.into(),
            message: message.into(),
        }
    }
}
