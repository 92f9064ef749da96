use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid descriptor: {0}")]
    InvalidDescriptor(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("fisher vector is already normalized")]
    DoubleNormalization,

    #[error("degenerate foreground/background split: {0}")]
    DegenerateSplit(String),

    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),

    #[error("label error: {0}")]
    Label(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: malformed file: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image {image_id}: {source}")]
    Image {
        image_id: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn for_image(self, image_id: &str) -> Self {
        match self {
            e @ Error::Image { .. } => e,
            e => Error::Image {
                image_id: image_id.to_string(),
                source: Box::new(e),
            },
        }
    }

    /// Process exit code: 3 for I/O failures, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 3,
            Error::Image { source, .. } => source.exit_code(),
            _ => 2,
        }
    }
}
