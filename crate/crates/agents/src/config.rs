//! Agent settings as read from a config file.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use ctg_core::analysis::AnalysisConfig;
use serde::{Deserialize, Serialize};

use crate::backend::{Backend, BackendKind, RemoteConfig, RemoteModel, RuleEngine};
use crate::error::Result;
use crate::pipeline::PipelineConfig;
use crate::prompt::{Mode, PromptSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentsConfig {
    pub backend: BackendKind,
    #[serde(flatten)]
    pub remote: RemoteConfig,
    /// Directory whose `<agent>.txt` files replace the bundled prompts.
    pub prompt_dir: Option<PathBuf>,
}

impl Default for AgentsConfig {
    fn default() -> Self {
        Self {
            backend: BackendKind::Rules,
            remote: RemoteConfig::default(),
            prompt_dir: None,
        }
    }
}

impl AgentsConfig {
    pub fn build_backend(&self, analysis: &AnalysisConfig) -> Result<Arc<dyn Backend>> {
        Ok(match self.backend {
            BackendKind::Rules => Arc::new(RuleEngine::new(analysis.clone())),
            BackendKind::Remote => Arc::new(RemoteModel::new(self.remote.clone())?),
        })
    }

    pub fn pipeline(&self, mode: Mode) -> Result<PipelineConfig> {
        let prompts = match &self.prompt_dir {
            Some(dir) => PromptSet::from_dir(dir)?,
            None => PromptSet::default(),
        };
        Ok(PipelineConfig {
            mode,
            agent_timeout: Duration::from_secs_f64(self.remote.timeout_s.max(0.001)),
            prompts,
        })
    }
}
