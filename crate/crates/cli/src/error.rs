use std::fmt;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_UNDEFINED: i32 = 4;
pub const EXIT_GRADCHECK: i32 = 5;

#[derive(Debug)]
pub enum CliError {
    Core(egonce_core::Error),
    /// A core error annotated with the file it came from.
    InFile(String, egonce_core::Error),
    Usage(String),
    GradCheck(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use egonce_core::Error as E;
        match self {
            CliError::Core(e) | CliError::InFile(_, e) => match e {
                E::NumericAbort { .. } => EXIT_NUMERIC,
                E::UndefinedMetric(_) => EXIT_UNDEFINED,
                _ => EXIT_INPUT,
            },
            CliError::Usage(_) => EXIT_INPUT,
            CliError::GradCheck(_) => EXIT_GRADCHECK,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::InFile(path, e) => write!(f, "{path}: {e}"),
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::GradCheck(m) => write!(f, "gradient check failed: {m}"),
        }
    }
}

impl From<egonce_core::Error> for CliError {
    fn from(e: egonce_core::Error) -> Self {
        CliError::Core(e)
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Attaches `path` to parse and schema errors, which do not carry it.
pub fn in_file<T>(path: &std::path::Path, r: egonce_core::Result<T>) -> CliResult<T> {
    r.map_err(|e| match e {
        egonce_core::Error::Io { .. } => CliError::Core(e),
        other => CliError::InFile(path.display().to_string(), other),
    })
}
