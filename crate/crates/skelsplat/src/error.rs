use std::path::{Path, PathBuf};

use skelsplat_core::Error as CoreError;

/// Failures of the file layer and the commands built on it.
#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}:{line}: {message}", path.display())]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{}:{line}: {message}", path.display())]
    Config { path: PathBuf, line: usize, message: String },
    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },
    #[error("{0}")]
    Core(#[from] CoreError),
}

pub type Result<T> = std::result::Result<T, IoError>;

impl IoError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.to_path_buf(), source }
    }

    pub fn format(path: &Path, message: impl Into<String>) -> Self {
        Self::Format { path: path.to_path_buf(), message: message.into() }
    }

    /// Process exit status: 2 for unreadable or malformed input, 3 for bad
    /// configuration, 4 for numeric divergence, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            IoError::Io { .. } | IoError::Parse { .. } | IoError::Format { .. } => 2,
            IoError::Config { .. } => 3,
            IoError::Core(e) => match e {
                CoreError::Config(_) => 3,
                CoreError::Diverged { .. } | CoreError::NonFinite(_) => 4,
                CoreError::InvalidInput(_)
                | CoreError::Data(_)
                | CoreError::DegenerateLimb { .. }
                | CoreError::BehindCamera { .. }
                | CoreError::Culled { .. } => 2,
            },
        }
    }
}

/// 1-based line of byte `offset` in `text`.
pub(crate) fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

/// Line and message of a TOML error. Value errors get the key assigned on
/// that line as a prefix, since the parser reports only the value.
pub(crate) fn toml_error(text: &str, e: &toml::de::Error) -> (usize, String) {
    let message = e.message().trim().to_string();
    let Some(span) = e.span() else { return (1, message) };
    let start = span.start.min(text.len());
    let line_start = text[..start].rfind('\n').map_or(0, |i| i + 1);
    let key = text[line_start..start].split_once('=').map(|(k, _)| k.trim()).filter(|k| !k.is_empty());
    let message = match key {
        Some(k) if !message.contains(k) => format!("`{k}`: {message}"),
        _ => message,
    };
    (line_of(text, start), message)
}
