use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("degenerate box: {0}")]
    DegenerateBox(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("index out of range: {0}")]
    OutOfRange(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown category `{0}`")]
    UnknownCategory(String),

    #[error("unknown part id {0}")]
    UnknownPart(u32),

    #[error("invalid edit: {0}")]
    InvalidEdit(String),

    #[error("layout filtering left no boxes")]
    EmptyLayout,

    #[error("every part is empty")]
    AllPartsEmpty,

    #[error("part chamfer is not applicable: {0}")]
    PartCdNotApplicable(String),

    #[error("part count mismatch: prediction has {pred}, ground truth has {gt}")]
    PartCountMismatch { pred: usize, gt: usize },

    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("format error in {what}: {message}")]
    Format { what: &'static str, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(what: &'static str, message: impl Into<String>) -> Self {
        Error::Format {
            what,
            message: message.into(),
        }
    }

    /// Stable machine-readable code, used by the CLI error line and the HTTP API.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Geometry(_) => "geometry",
            Error::DegenerateBox(_) => "degenerate_box",
            Error::Empty(_) => "empty_input",
            Error::OutOfRange(_) => "out_of_range",
            Error::Shape(_) => "shape_mismatch",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::UnknownCategory(_) => "unknown_category",
            Error::UnknownPart(_) => "unknown_part",
            Error::InvalidEdit(_) => "invalid_edit",
            Error::EmptyLayout => "empty_layout",
            Error::AllPartsEmpty => "all_parts_empty",
            Error::PartCdNotApplicable(_) => "part_cd_not_applicable",
            Error::PartCountMismatch { .. } => "part_count_mismatch",
            Error::Config { .. } => "config",
            Error::Format { .. } => "format",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }
}
