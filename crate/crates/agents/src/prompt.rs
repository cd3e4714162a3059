//! Bundled agent prompts and their assembly.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ctg_core::classify::Feature;

use crate::error::{AgentError, Result};

/// One of the five feature agents or the aggregator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AgentKind {
    Feature(Feature),
    Aggregator,
}

impl AgentKind {
    /// Prompt order for the single-request mode: the aggregator rule first,
    /// then the features.
    pub const ALL: [AgentKind; 6] = [
        AgentKind::Aggregator,
        AgentKind::Feature(Feature::Baseline),
        AgentKind::Feature(Feature::Variability),
        AgentKind::Feature(Feature::Accelerations),
        AgentKind::Feature(Feature::Decelerations),
        AgentKind::Feature(Feature::Sinusoidal),
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AgentKind::Feature(f) => f.as_str(),
            AgentKind::Aggregator => "aggregator",
        }
    }

    fn index(self) -> usize {
        match self {
            AgentKind::Aggregator => 0,
            AgentKind::Feature(f) => f.index() + 1,
        }
    }

    pub fn file_name(self) -> String {
        format!("{}.txt", self.as_str())
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AgentKind {
    type Err = AgentError;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("aggregator") {
            return Ok(AgentKind::Aggregator);
        }
        s.parse::<Feature>()
            .map(AgentKind::Feature)
            .map_err(|_| AgentError::UnknownFeature(s.to_string()))
    }
}

/// How a record is put to the backend.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Mode {
    /// Five feature agents in parallel, then the aggregator.
    #[default]
    MultiAgent,
    /// One request carrying every prompt, answered with the overall class.
    DirectPrompt,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::MultiAgent => "multi-agent",
            Mode::DirectPrompt => "direct",
        }
    }
}

impl FromStr for Mode {
    type Err = AgentError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "multi-agent" | "multi" | "multiagent" => Ok(Mode::MultiAgent),
            "direct" | "direct-prompt" => Ok(Mode::DirectPrompt),
            _ => Err(AgentError::Config(format!("unknown mode {s:?}"))),
        }
    }
}

/// Section headings every prompt carries, in order.
pub const SECTIONS: [&str; 4] = ["Definition:", "Rule:", "Role:", "Example Output:"];
/// Extra section carried by the deceleration prompt.
pub const TYPE_SECTION: &str = "Type:";

const BUNDLED: [&str; 6] = [
    include_str!("../prompts/aggregator.txt"),
    include_str!("../prompts/baseline.txt"),
    include_str!("../prompts/variability.txt"),
    include_str!("../prompts/accelerations.txt"),
    include_str!("../prompts/decelerations.txt"),
    include_str!("../prompts/sinusoidal.txt"),
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    texts: [String; 6],
}

impl Default for PromptSet {
    fn default() -> Self {
        Self {
            texts: BUNDLED.map(str::to_string),
        }
    }
}

impl PromptSet {
    /// Bundled prompts, with any `<agent>.txt` found in `dir` taking over
    /// from the bundled text for that agent.
    pub fn from_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        if !dir.is_dir() {
            return Err(AgentError::Config(format!(
                "{} is not a directory",
                dir.display()
            )));
        }
        let mut set = Self::default();
        for kind in AgentKind::ALL {
            let path = dir.join(kind.file_name());
            if path.exists() {
                set.texts[kind.index()] = std::fs::read_to_string(&path)
                    .map_err(|source| AgentError::PromptIo { path, source })?;
            }
        }
        Ok(set)
    }

    pub fn get(&self, kind: AgentKind) -> &str {
        &self.texts[kind.index()]
    }

    /// Prompt for one agent, or every prompt joined for the single-request mode.
    pub fn render(&self, kind: AgentKind, mode: Mode) -> String {
        match mode {
            Mode::MultiAgent => self.get(kind).to_string(),
            Mode::DirectPrompt => AgentKind::ALL
                .iter()
                .map(|k| self.get(*k).trim_end())
                .collect::<Vec<_>>()
                .join("\n\n"),
        }
    }
}

/// Bundled prompt for an agent named by string.
pub fn render_prompt(agent: &str, mode: Mode) -> Result<String> {
    let kind: AgentKind = agent.parse()?;
    Ok(PromptSet::default().render(kind, mode))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn positions(text: &str, heads: &[&str]) -> Vec<usize> {
        heads
            .iter()
            .map(|h| {
                text.lines()
                    .position(|l| l.trim() == *h)
                    .unwrap_or_else(|| panic!("missing {h}"))
            })
            .collect()
    }

    #[test]
    fn sections_appear_in_order() {
        let set = PromptSet::default();
        for kind in AgentKind::ALL {
            let text = set.get(kind);
            let mut heads = SECTIONS.to_vec();
            if kind == AgentKind::Feature(Feature::Decelerations) {
                heads.push(TYPE_SECTION);
            } else {
                assert!(!text.lines().any(|l| l.trim() == TYPE_SECTION), "{kind}");
            }
            let pos = positions(text, &heads);
            assert!(pos.windows(2).all(|w| w[0] < w[1]), "{kind}: {pos:?}");
        }
    }

    #[test]
    fn baseline_prompt_carries_normal_range() {
        assert!(render_prompt("baseline", Mode::MultiAgent)
            .unwrap()
            .contains("Normal: 110–160 bpm"));
    }

    #[test]
    fn direct_prompt_concatenates_in_order() {
        let set = PromptSet::default();
        let all = render_prompt("baseline", Mode::DirectPrompt).unwrap();
        let mut at = 0;
        for kind in AgentKind::ALL {
            let body = set.get(kind).trim_end();
            let found = all[at..].find(body).map(|p| p + at);
            assert!(found.is_some(), "{kind} missing or out of order");
            at = found.unwrap() + body.len();
        }
    }

    #[test]
    fn unknown_agent_is_rejected() {
        assert!(matches!(
            render_prompt("heartbeat", Mode::MultiAgent),
            Err(AgentError::UnknownFeature(_))
        ));
    }

    #[test]
    fn directory_overrides_single_files() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("sinusoidal.txt"), "custom").unwrap();
        let set = PromptSet::from_dir(dir.path()).unwrap();
        assert_eq!(set.get(AgentKind::Feature(Feature::Sinusoidal)), "custom");
        assert_eq!(set.get(AgentKind::Aggregator), BUNDLED[0]);
    }
}
