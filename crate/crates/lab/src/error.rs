use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    /// Schema violation at a dotted field path.
    #[error("{path}: {msg}")]
    Config { path: String, msg: String },
    #[error("config parse error at line {line}, column {column}: {msg}")]
    Parse { line: usize, column: usize, msg: String },
    #[error("{context}: {source}")]
    Core { context: String, source: dlab_core::Error },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("unknown experiment `{0}` (not a file and not a bundled id)")]
    UnknownExperiment(String),
}

pub type LabResult<T> = Result<T, LabError>;

pub(crate) fn config_err(path: impl Into<String>, msg: impl Into<String>) -> LabError {
    LabError::Config { path: path.into(), msg: msg.into() }
}

/// Attaches a field path to core errors; parameter errors get the field appended.
pub(crate) trait Context<T> {
    fn at(self, path: &str) -> LabResult<T>;
}

impl<T> Context<T> for Result<T, dlab_core::Error> {
    fn at(self, path: &str) -> LabResult<T> {
        self.map_err(|e| match e {
            dlab_core::Error::InvalidParameter { field, reason } => {
                config_err(format!("{path}.{field}"), reason)
            }
            other => LabError::Core { context: path.to_string(), source: other },
        })
    }
}

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> LabError {
    let path = path.into();
    move |source| LabError::Io { path, source }
}
