use std::fmt;
use std::path::{Path, PathBuf};

use confrefine::Error as CoreError;

/// Exit codes. Argument errors use clap's own code 2.
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_VALIDATION: i32 = 4;
pub const EXIT_IO: i32 = 5;
pub const EXIT_NUMERICAL: i32 = 6;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Core(CoreError),
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Io { .. } | CliError::Core(CoreError::Io { .. }) => "io",
            CliError::Core(e) if e.is_numerical() => "numerical",
            CliError::Core(_) => "validation",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            "config" => EXIT_CONFIG,
            "io" => EXIT_IO,
            "numerical" => EXIT_NUMERICAL,
            _ => EXIT_VALIDATION,
        }
    }

    /// Single line `error kind=<kind> code=<n>: <message>` for scripts.
    pub fn report_line(&self) -> String {
        let msg = self.to_string().replace('\n', " ");
        format!("error kind={} code={}: {msg}", self.kind(), self.exit_code())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "{m}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io { path, source } => write!(f, "{}: {source}", path.display()),
        }
    }
}

impl std::error::Error for CliError {}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        CliError::Core(e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_are_distinct_per_kind() {
        let errs = [
            CliError::Config("x".into()),
            CliError::Core(CoreError::Validation("x".into())),
            CliError::io(Path::new("a"), std::io::Error::other("gone")),
            CliError::Core(CoreError::NonFinite("x".into())),
        ];
        let mut codes: Vec<i32> = errs.iter().map(CliError::exit_code).collect();
        codes.push(EXIT_USAGE);
        let mut uniq = codes.clone();
        uniq.sort();
        uniq.dedup();
        assert_eq!(uniq.len(), codes.len());
        assert_eq!(
            errs[3].report_line(),
            "error kind=numerical code=6: non-finite value: x"
        );
    }
}
