//! Feature agents, the aggregator, and the backends that answer them.
//!
//! The [`RuleEngine`] backend reproduces the local rule tables exactly; the
//! [`RemoteModel`] backend sends each prompt with a rendered trace image to a
//! chat-completion endpoint and parses the class out of the reply.

pub mod backend;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod prompt;
pub mod reply;

pub use backend::{Backend, BackendKind, Prepared, RemoteConfig, RemoteModel, RuleEngine};
pub use config::AgentsConfig;
pub use error::{AgentError, Result};
pub use pipeline::{run_pipeline, AgentResult, PipelineConfig, PipelineOutput};
pub use prompt::{render_prompt, AgentKind, Mode, PromptSet};
pub use reply::parse_reply;
