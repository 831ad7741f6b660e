use std::fmt;
use std::path::Path;

use serde::Serialize;

/// Runtime failure reported as one JSON line on stderr.
#[derive(Debug, Serialize)]
pub struct CliError {
    pub error: &'static str,
    pub message: String,
}

impl CliError {
    pub fn new(error: &'static str, message: impl Into<String>) -> Self {
        Self { error, message: message.into() }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Self::new("io", format!("{}: {e}", path.display()))
    }

    pub fn input(message: impl Into<String>) -> Self {
        Self::new("invalid-input", message)
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).unwrap_or_else(|_| format!("{{\"error\":\"{}\"}}", self.error))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.error, self.message)
    }
}

macro_rules! from_core {
    ($($ty:path => $kind:literal),* $(,)?) => {$(
        impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                Self::new($kind, e.to_string())
            }
        }
    )*};
}

from_core! {
    assign_core::ProblemError => "problem",
    assign_core::admm::AdmmError => "solver",
    assign_core::engine::EngineError => "engine",
    assign_core::eval::EvalError => "eval",
    assign_core::rounding::RoundingError => "rounding",
    assign_core::objective::ObjectiveError => "objective",
    assign_core::subsolver::SubsolverError => "subsolver",
}
