use std::path::PathBuf;

/// Errors produced anywhere in the destylization pipeline.
#[derive(Debug, thiserror::Error)]
pub enum OdmError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("schema error on line {line}: field `{field}`: {message}")]
    Schema {
        line: usize,
        field: String,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("font error: {0}")]
    Font(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("contract error: {0}")]
    Contract(String),

    #[error("non-finite value in loss component `{component}`{detail}")]
    Numeric { component: &'static str, detail: String },

    #[error("format error at offset {offset}: {message}")]
    Format { offset: usize, message: String },

    #[error("unsupported checkpoint version {found} (expected {expected})")]
    Version { found: u8, expected: u8 },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = OdmError> = std::result::Result<T, E>;

impl OdmError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        OdmError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(op: &str, a: &[usize], b: &[usize]) -> Self {
        OdmError::Shape(format!("{op}: incompatible shapes {a:?} and {b:?}"))
    }
}
