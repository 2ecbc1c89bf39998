use std::fmt;

/// One violated configuration invariant, named by its field path.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigIssue {
    pub field: String,
    pub message: String,
}

impl ConfigIssue {
    pub(crate) fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

fn join_issues(issues: &[ConfigIssue]) -> String {
    issues.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Every violated invariant, collected in one pass.
    #[error("invalid configuration: {}", join_issues(.0))]
    Config(Vec<ConfigIssue>),

    /// Malformed config or sweep-plan text.
    #[error("config parse error: {0}")]
    ConfigParse(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("insufficient statistics: {0}")]
    InsufficientStatistics(String),

    #[error("bin width mismatch: {0} s vs {1} s")]
    BinWidthMismatch(f64, f64),

    #[error("degenerate fit: {0}")]
    Rank(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by the user's configuration (CLI exit code 2).
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::ConfigParse(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
