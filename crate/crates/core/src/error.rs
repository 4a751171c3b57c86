use thiserror::Error;

/// Errors raised across the flow pipeline.
#[derive(Debug, Error)]
pub enum FlowError {
    #[error("grid of {width}x{height} needs {expected} values, got {actual}")]
    LengthMismatch {
        width: usize,
        height: usize,
        expected: usize,
        actual: usize,
    },
    #[error("grid dimensions must be positive, got {width}x{height}")]
    EmptyGrid { width: usize, height: usize },
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("intensity {value} outside [0, 1] at index {index}")]
    IntensityRange { index: usize, value: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("image of {width}x{height} is smaller than the minimum side {min_side}")]
    ImageTooSmall {
        width: usize,
        height: usize,
        min_side: usize,
    },
    #[error("data system is missing {0}")]
    MissingDerivatives(&'static str),
    #[error("non-finite gradient at iteration {iteration} (L = {lipschitz})")]
    NonFiniteGradient { iteration: usize, lipschitz: f64 },
    #[error("flo format: {0}")]
    FloFormat(String),
    #[error("unsupported image: {0}")]
    UnsupportedImage(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = FlowError> = std::result::Result<T, E>;
