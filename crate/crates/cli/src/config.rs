//! TOML configuration: pipeline thresholds plus agent settings.

use std::path::Path;

use anyhow::Context;
use ctg_agents::AgentsConfig;
use ctg_core::analysis::AnalysisConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub analysis: AnalysisConfig,
    pub agents: AgentsConfig,
}

impl Config {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_all_defaults() {
        assert_eq!(toml::from_str::<Config>("").unwrap(), Config::default());
    }

    #[test]
    fn partial_sections_override_single_fields() {
        let cfg: Config = toml::from_str(
            "[agents]\nbackend = \"remote\"\nmodel = \"m\"\n\n[analysis.sinusoidal]\nmin_span_s = 900.0\n",
        )
        .unwrap();
        assert_eq!(cfg.agents.remote.model, "m");
        assert_eq!(cfg.analysis.sinusoidal.min_span_s, 900.0);
        assert_eq!(cfg.analysis.baseline, Default::default());
    }

    #[test]
    fn unknown_section_is_rejected() {
        assert!(toml::from_str::<Config>("[nope]\nx = 1\n").is_err());
    }
}
