use thiserror::Error;

use crate::component::ComponentId;

/// One problem found while validating a scenario configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigIssue {
    /// Dotted key path, e.g. `object.sigma`.
    pub key: String,
    pub message: String,
}

impl std::fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("structural error: {0}")]
    Structural(String),

    #[error("invariant violation: {0}")]
    InvariantViolation(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    /// A single step exceeded a per-step bound (the thinning bound on total
    /// hazard, or the pointwise depletion bound); the caller must subdivide.
    #[error("step too large: {what} {value:.6} exceeds {limit} (require {what} ≤ {limit})")]
    StepTooLarge {
        what: &'static str,
        value: f64,
        limit: f64,
    },

    #[error("rule violation: component {0} is not ready and cannot be stochastically chosen")]
    NotReady(ComponentId),

    #[error("trajectory {stream}: {source}")]
    Trajectory {
        stream: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid configuration:\n{}", format_issues(.0))]
    Config(Vec<ConfigIssue>),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

fn format_issues(issues: &[ConfigIssue]) -> String {
    issues
        .iter()
        .map(|i| format!("  - {i}"))
        .collect::<Vec<_>>()
        .join("\n")
}

impl Error {
    /// True for failures of the numerical machinery, as opposed to bad
    /// input or configuration.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Numerical(_)
            | Error::StepTooLarge { .. }
            | Error::UndefinedMetric(_)
            | Error::InvariantViolation(_)
            | Error::NotReady(_) => true,
            Error::Trajectory { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
