use thiserror::Error;

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum HarnessError {
    /// Every problem found in a configuration.
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    /// A CSV input lacks a required column.
    #[error("{file}: missing column {column:?}")]
    Schema { file: String, column: String },

    #[error("checkpoint {path}: {source}")]
    Checkpoint { path: String, source: cellbal_core::Error },

    #[error("{0}")]
    Core(#[from] cellbal_core::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl HarnessError {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.display().to_string(), source }
    }
}
