use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unknown class name {name:?}; expected one of {{{allowed}}}")]
    UnknownClass { name: String, allowed: String },

    #[error("no samples found under {}", .0.display())]
    NoSamples(PathBuf),

    #[error("cannot stratify: {0}")]
    CannotStratify(String),

    #[error("insufficient tissue: {found} pixels above the OD threshold, need {required}")]
    InsufficientTissue { found: usize, required: usize },

    #[error("stains not separable: second OD covariance eigenvalue {second:.3e} vs leading {first:.3e}")]
    StainsNotSeparable { first: f64, second: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("non-finite gradient")]
    NonFiniteGradient,

    #[error("weights unavailable for {backbone}: {reason} (hint: {hint})")]
    Weights {
        backbone: String,
        reason: String,
        hint: String,
    },

    #[error("unknown baseline {id:?}; available: {available}")]
    UnknownBaseline { id: String, available: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image {}: {source}", path.display())]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Format {
            what,
            detail: detail.into(),
        }
    }

    pub fn in_stage(self, stage: impl Into<String>) -> Self {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }

    /// Innermost error beneath any stage wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}
