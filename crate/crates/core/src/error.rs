use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("invalid configuration: {field}: {reason}")]
    Config { field: &'static str, reason: String },

    #[error("{}", fmt_data(.path, *.line, .msg))]
    Data {
        path: Option<PathBuf>,
        line: Option<usize>,
        msg: String,
    },

    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NotScalar(Vec<usize>),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("png encoding: {0}")]
    Png(#[from] png::EncodingError),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn config(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Config {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn data(line: Option<usize>, msg: impl Into<String>) -> Self {
        Error::Data {
            path: None,
            line,
            msg: msg.into(),
        }
    }

    /// True for errors caused by the numbers themselves rather than by the
    /// caller or the input files.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::NonFinite(_))
    }
}

fn fmt_data(path: &Option<PathBuf>, line: Option<usize>, msg: &str) -> String {
    match (path, line) {
        (Some(p), Some(l)) => format!("{}:{l}: {msg}", p.display()),
        (Some(p), None) => format!("{}: {msg}", p.display()),
        (None, Some(l)) => format!("line {l}: {msg}"),
        (None, None) => msg.to_string(),
    }
}
