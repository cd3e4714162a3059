use ctg_core::CtgError;
use thiserror::Error;

use crate::prompt::AgentKind;

pub type Result<T, E = AgentError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),

    #[error("could not read a classification from the reply: {raw:?}")]
    ReplyParse { raw: String },

    #[error("{agent} agent timed out after {seconds} s")]
    Timeout { agent: AgentKind, seconds: f64 },

    #[error("unknown agent {0:?}")]
    UnknownFeature(String),

    #[error("{agent} agent failed: {source}")]
    Agent {
        agent: AgentKind,
        #[source]
        source: Box<AgentError>,
    },

    #[error("configuration: {0}")]
    Config(String),

    #[error("prompt file {path}: {source}")]
    PromptIo {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] CtgError),
}

impl AgentError {
    /// The agent a pipeline failure is attributed to, if any.
    pub fn agent(&self) -> Option<AgentKind> {
        match self {
            AgentError::Agent { agent, .. } | AgentError::Timeout { agent, .. } => Some(*agent),
            _ => None,
        }
    }
}
