use std::path::PathBuf;

use thiserror::Error;

/// Failures surfaced by the command line, each with its exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("missing input: {}", .0.display())]
    MissingInput(PathBuf),
    #[error("{0}")]
    Usage(String),
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: hcvrd::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::MissingInput(_) | CliError::Usage(_) => 2,
            CliError::Stage { .. } => 1,
        }
    }

    /// One-line JSON description written to stderr.
    pub fn to_json(&self) -> String {
        let value = match self {
            CliError::MissingInput(p) => serde_json::json!({
                "status": "error",
                "kind": "missing_input",
                "path": p.display().to_string(),
                "message": self.to_string(),
            }),
            CliError::Usage(msg) => serde_json::json!({
                "status": "error",
                "kind": "usage",
                "message": msg,
            }),
            CliError::Stage { stage, source } => serde_json::json!({
                "status": "error",
                "kind": "stage_failure",
                "stage": stage,
                "message": source.to_string(),
            }),
        };
        value.to_string()
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Attaches a stage name to core errors.
pub trait StageContext<T> {
    fn stage(self, stage: &'static str) -> CliResult<T>;
}

impl<T> StageContext<T> for hcvrd::Result<T> {
    fn stage(self, stage: &'static str) -> CliResult<T> {
        self.map_err(|source| CliError::Stage { stage, source })
    }
}
