use thiserror::Error;

use crate::episode::HackingCategory;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("{detector} detector could not be fitted: {reason}")]
    Fit {
        detector: HackingCategory,
        reason: String,
    },

    #[error("{} detector(s) could not be fitted: {}", .0.len(), fit_summary(.0))]
    FitFailures(Vec<(HackingCategory, String)>),

    #[error("undefined: {0}")]
    Undefined(String),

    #[error("factorial cell {0} has no runs")]
    MissingCell(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("malformed episode log at line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

fn fit_summary(failures: &[(HackingCategory, String)]) -> String {
    failures
        .iter()
        .map(|(d, r)| format!("{d}: {r}"))
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
