use thiserror::Error;

use spdclab_core::Error as ModelError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// Every problem found in the configuration.
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    /// A model rejected its input; `context` names the config section or
    /// parameter it came from.
    #[error("{context}: {source}")]
    Model {
        context: String,
        #[source]
        source: ModelError,
    },
}

impl CliError {
    pub fn model(context: impl Into<String>, source: ModelError) -> Self {
        CliError::Model {
            context: context.into(),
            source,
        }
    }

    /// 0 success, 1 I/O, 2 configuration, 3 numeric or fit failure,
    /// 4 infeasible target.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } => 1,
            CliError::Config(_) => 2,
            CliError::Model { source, .. } => match source {
                ModelError::Infeasible { .. } => 4,
                ModelError::InvalidArgument(_) | ModelError::OutOfRange { .. } | ModelError::Parse { .. } => 2,
                _ => 3,
            },
        }
    }
}
