use std::fmt;
use std::path::{Path, PathBuf};

/// Errors of the experiment runner, split by exit status.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Unreadable or invalid configuration or input file (exit 2).
    #[error("{}", located(path, *line, message))]
    Config { path: PathBuf, line: Option<usize>, message: String },
    /// A required input file does not exist or cannot be read (exit 2).
    #[error("{}: cannot read: {source}", path.display())]
    Missing { path: PathBuf, source: std::io::Error },
    /// Writing an output failed (exit 2).
    #[error("{}: {message}", path.display())]
    Output { path: PathBuf, message: String },
    /// A declared property check failed (exit 1).
    #[error("check failed: {clause}: {detail}")]
    Check { clause: String, detail: String },
}

fn located(path: &Path, line: Option<usize>, message: &str) -> String {
    match line {
        Some(l) if l > 0 => format!("{}:{l}: {message}", path.display()),
        _ => format!("{}: {message}", path.display()),
    }
}

impl CliError {
    pub fn parse(path: &Path, line: usize, message: impl fmt::Display) -> CliError {
        CliError::Config { path: path.to_path_buf(), line: Some(line), message: message.to_string() }
    }

    pub fn config(path: &Path, line: Option<usize>, message: impl fmt::Display) -> CliError {
        CliError::Config { path: path.to_path_buf(), line, message: message.to_string() }
    }

    pub fn missing(path: &Path, source: std::io::Error) -> CliError {
        CliError::Missing { path: path.to_path_buf(), source }
    }

    pub fn io(path: &Path, e: impl fmt::Display) -> CliError {
        CliError::Output { path: path.to_path_buf(), message: e.to_string() }
    }

    pub fn check(clause: impl Into<String>, detail: impl fmt::Display) -> CliError {
        CliError::Check { clause: clause.into(), detail: detail.to_string() }
    }

    pub fn line(&self) -> Option<usize> {
        match self {
            CliError::Config { line, .. } => *line,
            _ => None,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Check { .. } => 1,
            _ => 2,
        }
    }
}
