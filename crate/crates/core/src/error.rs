use thiserror::Error;

#[derive(Debug, Error)]
pub enum FlexError {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("sparsity map shape mismatch: {0}")]
    SparsityShape(String),
    #[error("unsupported precision: {0}")]
    Precision(String),
    #[error("unsupported layer kind: {0}")]
    UnsupportedKind(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("layer cannot be tiled into L1: {0}")]
    Untileable(String),
    #[error("address or field overflow: {0}")]
    AddressOverflow(String),
    #[error("L2 overflow while placing tensor `{tensor}` ({needed} bytes needed, {capacity} available)")]
    L2Overflow {
        tensor: String,
        needed: usize,
        capacity: usize,
    },
    #[error("decode error: {0}")]
    Decode(String),
    #[error("address fault: {0}")]
    AddressFault(String),
    #[error("sparsity index memory underflow: {0}")]
    IndexUnderflow(String),
    #[error("missing parameter: {0}")]
    MissingParam(String),
    #[error("calibration is underdetermined: {targets} targets for {params} free parameters")]
    Underdetermined { targets: usize, params: usize },
    #[error("illegal power-mode transition {from} -> {to}")]
    IllegalTransition { from: String, to: String },
    #[error("capacity error: {0}")]
    Capacity(String),
    #[error("scenario needs calibrated parameters: {0}")]
    Uncalibrated(String),
    #[error("value out of range: {0}")]
    Range(String),
    #[error("malformed file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, FlexError>;
