use std::fmt;

use ionmirror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad configuration; exit code 1.
    Config,
    /// Unreadable or malformed input and output files; exit code 1.
    Input,
    /// Numerical failure of the solver or a fit; exit code 2.
    Solver,
}

/// A failure reported as one `key=value` line on stderr.
#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub kind: ErrorKind,
    pub field: String,
    /// 1-based line in the config file, 0 when unknown.
    pub line: usize,
    pub message: String,
}

impl CliError {
    pub fn config(field: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        CliError {
            kind: ErrorKind::Config,
            field: field.into(),
            line,
            message: message.into(),
        }
    }

    pub fn solver(message: impl Into<String>) -> Self {
        CliError {
            kind: ErrorKind::Solver,
            field: "-".into(),
            line: 0,
            message: message.into(),
        }
    }

    pub fn io(path: &std::path::Path, err: impl fmt::Display) -> Self {
        CliError {
            kind: ErrorKind::Input,
            field: "path".into(),
            line: 0,
            message: format!("{}: {err}", path.display()),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Config | ErrorKind::Input => 1,
            ErrorKind::Solver => 2,
        }
    }
}

/// Sorts a model error into bad input or solver failure. Field names of
/// invalid parameters are the config keys.
pub fn classify(err: Error, line_of: impl Fn(&str) -> usize) -> CliError {
    if err.is_solver_failure() {
        return CliError::solver(err.to_string());
    }
    match err.root() {
        Error::InvalidParameter { field, .. } => CliError::config(*field, line_of(field), err.to_string()),
        _ => CliError::solver(err.to_string()),
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            ErrorKind::Config => "config",
            ErrorKind::Input => "input",
            ErrorKind::Solver => "solver",
        };
        write!(
            f,
            "error kind={kind} field={} line={} message={:?}",
            self.field, self.line, self.message
        )
    }
}

impl std::error::Error for CliError {}
