use std::fmt;
use std::path::{Path, PathBuf};

/// Where a configuration problem sits in its source file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Location {
    pub line: usize,
    pub column: usize,
}

impl Location {
    /// 1-based line and column of a byte offset.
    pub fn of_offset(src: &str, offset: usize) -> Self {
        let before = &src[..offset.min(src.len())];
        let line = before.matches('\n').count() + 1;
        let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
        Self { line, column }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{}", config_message(.origin, .location, .key, .message))]
    Config {
        origin: String,
        location: Option<Location>,
        key: String,
        message: String,
    },
    #[error(transparent)]
    Core(#[from] gridkan_core::Error),
    #[error("{}: {source}", .path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {message}", .path.display())]
    Format { path: PathBuf, message: String },
}

fn config_message(origin: &str, location: &Option<Location>, key: &str, message: &str) -> String {
    let mut s = String::from(origin);
    if let Some(l) = location {
        s.push_str(&format!(":{}:{}", l.line, l.column));
    }
    if !key.is_empty() {
        s.push_str(&format!(": `{key}`"));
    }
    s.push_str(": ");
    s.push_str(message);
    s
}

impl CliError {
    pub fn config(key: impl Into<String>, message: impl fmt::Display) -> Self {
        CliError::Config {
            origin: "config".into(),
            location: None,
            key: key.into(),
            message: message.to_string(),
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn format(path: &Path, message: impl fmt::Display) -> Self {
        CliError::Format {
            path: path.to_path_buf(),
            message: message.to_string(),
        }
    }

    /// Process exit code: 2 configuration, 3 numerical failure, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Core(e) if e.is_numeric() => 3,
            CliError::Core(_) => 2,
            CliError::Io { .. } | CliError::Format { .. } => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn offsets_map_to_lines_and_columns() {
        let src = "a = 1\nbb = 2\n";
        assert_eq!(Location::of_offset(src, 0), Location { line: 1, column: 1 });
        assert_eq!(Location::of_offset(src, 6), Location { line: 2, column: 1 });
        assert_eq!(Location::of_offset(src, 11), Location { line: 2, column: 6 });
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::config("data", "bad").exit_code(), 2);
        assert_eq!(CliError::from(gridkan_core::Error::NotConverged).exit_code(), 3);
        assert_eq!(CliError::from(gridkan_core::Error::Shape("x".into())).exit_code(), 2);
        let io = CliError::io(Path::new("missing.json"), std::io::ErrorKind::NotFound.into());
        assert_eq!(io.exit_code(), 4);
        assert!(io.to_string().contains("missing.json"));
    }
}
