//! Backends that answer agent prompts.

use std::time::Duration;

use base64::Engine as _;
use ctg_core::analysis::{analyze, Analysis, AnalysisConfig};
use ctg_core::classify::{
    aggregate, Evidence, Feature, FeatureAssessment, FeatureClass, OverallAssessment,
};
use ctg_core::render::{render_svg, RenderConfig};
use ctg_core::signal::CtgRecord;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{AgentError, Result};
use crate::reply::parse_reply;

/// Per-record material shared by every agent of one run.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub record_id: String,
    /// Set by backends that measure the trace themselves.
    pub analysis: Option<Analysis>,
    /// PNG rendering of the trace, for backends that look at it.
    pub image_png: Option<Vec<u8>>,
    /// One-line description sent alongside the image.
    pub description: String,
}

impl Prepared {
    pub fn bare(rec: &CtgRecord) -> Self {
        Self {
            record_id: rec.record_id().to_string(),
            analysis: None,
            image_png: None,
            description: describe(rec),
        }
    }
}

fn describe(rec: &CtgRecord) -> String {
    format!(
        "CTG record {}: {:.1} min at {} Hz. Upper panel FHR 50-210 bpm, lower panel UC 0-100, 1 cm per minute.",
        rec.record_id(),
        rec.duration_s() / 60.0,
        rec.sample_rate_hz()
    )
}

/// Something that can play the feature, aggregator and single-shot roles.
/// Implementations must be usable from several threads at once.
pub trait Backend: Send + Sync {
    fn name(&self) -> &str;

    fn prepare(&self, rec: &CtgRecord) -> Result<Prepared>;

    fn feature(
        &self,
        prepared: &Prepared,
        feature: Feature,
        prompt: &str,
    ) -> Result<FeatureAssessment>;

    fn aggregate(
        &self,
        prepared: &Prepared,
        features: &[FeatureAssessment],
        prompt: &str,
    ) -> Result<OverallAssessment>;

    fn direct(&self, prepared: &Prepared, prompt: &str) -> Result<OverallAssessment>;
}

/// The local rule tables. Ignores prompts.
#[derive(Debug, Clone, Default)]
pub struct RuleEngine {
    pub config: AnalysisConfig,
}

impl RuleEngine {
    pub fn new(config: AnalysisConfig) -> Self {
        Self { config }
    }

    fn analysis<'a>(&self, prepared: &'a Prepared) -> Result<&'a Analysis> {
        prepared.analysis.as_ref().ok_or_else(|| {
            AgentError::BackendUnavailable("record was not prepared by the rule engine".into())
        })
    }
}

impl Backend for RuleEngine {
    fn name(&self) -> &str {
        "rules"
    }

    fn prepare(&self, rec: &CtgRecord) -> Result<Prepared> {
        Ok(Prepared {
            analysis: Some(analyze(rec, &self.config)?),
            ..Prepared::bare(rec)
        })
    }

    fn feature(
        &self,
        prepared: &Prepared,
        feature: Feature,
        _prompt: &str,
    ) -> Result<FeatureAssessment> {
        Ok(self
            .analysis(prepared)?
            .assess(feature, &self.config.classify))
    }

    fn aggregate(
        &self,
        _: &Prepared,
        features: &[FeatureAssessment],
        _prompt: &str,
    ) -> Result<OverallAssessment> {
        Ok(aggregate(features)?)
    }

    fn direct(&self, prepared: &Prepared, _prompt: &str) -> Result<OverallAssessment> {
        let mut overall = self.analysis(prepared)?.overall(&self.config.classify)?;
        overall.features.clear();
        Ok(overall)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteConfig {
    /// Endpoint root; requests go to `<base_url>/chat/completions`.
    pub base_url: String,
    pub model: String,
    pub timeout_s: f64,
    /// Extra attempts after a transport failure. Bad replies are not retried.
    pub max_retries: u32,
    /// Environment variable holding the bearer token.
    pub api_key_env: String,
    pub temperature: f64,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com/v1".into(),
            model: String::new(),
            timeout_s: 120.0,
            max_retries: 1,
            api_key_env: "CTG_API_KEY".into(),
            temperature: 0.0,
        }
    }
}

/// A chat-completion endpoint that is shown the rendered trace.
pub struct RemoteModel {
    config: RemoteConfig,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
    render: RenderConfig,
}

enum Failure {
    Transport(String),
    Fatal(AgentError),
}

impl RemoteModel {
    pub fn new(config: RemoteConfig) -> Result<Self> {
        if config.model.trim().is_empty() {
            return Err(AgentError::Config(
                "remote backend needs a model name".into(),
            ));
        }
        if !(config.timeout_s.is_finite() && config.timeout_s > 0.0) {
            return Err(AgentError::Config(format!(
                "timeout_s must be positive, got {}",
                config.timeout_s
            )));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout_s))
            .build()
            .map_err(|e| AgentError::BackendUnavailable(e.to_string()))?;
        let api_key = std::env::var(&config.api_key_env)
            .ok()
            .filter(|k| !k.is_empty());
        Ok(Self {
            config,
            api_key,
            client,
            render: RenderConfig::default(),
        })
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    fn endpoint(&self) -> String {
        format!(
            "{}/chat/completions",
            self.config.base_url.trim_end_matches('/')
        )
    }

    fn user_content(prepared: &Prepared, instruction: &str) -> Value {
        let mut parts = vec![json!({
            "type": "text",
            "text": format!("{}\n{instruction}", prepared.description),
        })];
        if let Some(png) = &prepared.image_png {
            let data = base64::engine::general_purpose::STANDARD.encode(png);
            parts.push(json!({
                "type": "image_url",
                "image_url": { "url": format!("data:image/png;base64,{data}") },
            }));
        }
        Value::Array(parts)
    }

    /// Sends one chat request and returns the reply text.
    pub fn chat(&self, system: &str, user: Value) -> Result<String> {
        let body = json!({
            "model": self.config.model,
            "temperature": self.config.temperature,
            "messages": [
                { "role": "system", "content": system },
                { "role": "user", "content": user },
            ],
        });
        let mut last = String::new();
        for _ in 0..=self.config.max_retries {
            match self.attempt(&body) {
                Ok(text) => return Ok(text),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Transport(msg)) => last = msg,
            }
        }
        Err(AgentError::BackendUnavailable(last))
    }

    fn attempt(&self, body: &Value) -> Result<String, Failure> {
        let mut req = self.client.post(self.endpoint()).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| Failure::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| Failure::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(Failure::Fatal(AgentError::BackendUnavailable(format!(
                "HTTP {status}: {}",
                text.chars().take(200).collect::<String>()
            ))));
        }
        let value: Value = serde_json::from_str(&text).map_err(|e| {
            Failure::Fatal(AgentError::BackendUnavailable(format!(
                "reply is not JSON: {e}"
            )))
        })?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| {
                Failure::Fatal(AgentError::BackendUnavailable(
                    "reply has no message content".into(),
                ))
            })
    }
}

impl Backend for RemoteModel {
    fn name(&self) -> &str {
        "remote"
    }

    fn prepare(&self, rec: &CtgRecord) -> Result<Prepared> {
        let svg = render_svg(rec, &self.render)?;
        Ok(Prepared {
            image_png: Some(rasterize(&svg)?),
            ..Prepared::bare(rec)
        })
    }

    fn feature(
        &self,
        prepared: &Prepared,
        feature: Feature,
        prompt: &str,
    ) -> Result<FeatureAssessment> {
        let instruction = format!("Assess the {feature} feature. Answer with a Classification line and an Explanation line.");
        let reply = self.chat(prompt, Self::user_content(prepared, &instruction))?;
        let (class, explanation) = parse_reply(&reply)?;
        Ok(FeatureAssessment {
            feature,
            class,
            explanation,
            evidence: Evidence::Opaque,
        })
    }

    fn aggregate(
        &self,
        _: &Prepared,
        features: &[FeatureAssessment],
        prompt: &str,
    ) -> Result<OverallAssessment> {
        let listing: Vec<String> = features
            .iter()
            .map(|f| {
                format!(
                    "{}: {} ({})",
                    f.feature,
                    title(f.class.as_str()),
                    f.explanation
                )
            })
            .collect();
        let user = format!(
            "{}\nGive the overall classification with a Classification line and an Explanation line.",
            listing.join("\n")
        );
        let reply = self.chat(prompt, Value::String(user))?;
        let (class, explanation) = parse_reply(&reply)?;
        Ok(overall(class, explanation, features.to_vec()))
    }

    fn direct(&self, prepared: &Prepared, prompt: &str) -> Result<OverallAssessment> {
        let instruction = "Give the overall classification of this trace with a Classification line and an Explanation line.";
        let reply = self.chat(prompt, Self::user_content(prepared, instruction))?;
        let (class, explanation) = parse_reply(&reply)?;
        Ok(overall(class, explanation, Vec::new()))
    }
}

fn overall(
    class: FeatureClass,
    explanation: String,
    features: Vec<FeatureAssessment>,
) -> OverallAssessment {
    OverallAssessment {
        class,
        binary: class.binary(),
        explanation,
        features,
    }
}

fn title(word: &str) -> String {
    let mut chars = word.chars();
    chars
        .next()
        .map(|c| c.to_ascii_uppercase().to_string() + chars.as_str())
        .unwrap_or_default()
}

/// Rasterizes an SVG document at its natural size.
pub fn rasterize(svg: &str) -> Result<Vec<u8>> {
    use resvg::{tiny_skia, usvg};
    let fail =
        |e: String| AgentError::BackendUnavailable(format!("rendering the trace image: {e}"));
    let tree =
        usvg::Tree::from_str(svg, &usvg::Options::default()).map_err(|e| fail(e.to_string()))?;
    let size = tree.size().to_int_size();
    let mut pixmap = tiny_skia::Pixmap::new(size.width(), size.height())
        .ok_or_else(|| fail("empty image".into()))?;
    resvg::render(&tree, tiny_skia::Transform::default(), &mut pixmap.as_mut());
    pixmap.encode_png().map_err(|e| fail(e.to_string()))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Rules,
    Remote,
}

impl std::str::FromStr for BackendKind {
    type Err = AgentError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rules" | "rule" | "rule-engine" => Ok(BackendKind::Rules),
            "remote" | "model" => Ok(BackendKind::Remote),
            _ => Err(AgentError::Config(format!("unknown backend {s:?}"))),
        }
    }
}
