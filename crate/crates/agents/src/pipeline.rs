//! Fan-out of the five feature agents and the aggregation step.

use std::sync::mpsc;
use std::sync::Arc;
use std::time::{Duration, Instant};

use ctg_core::classify::{
    Feature, FeatureAssessment, FeatureClass, OverallAssessment, ResultDocument,
};
use ctg_core::signal::CtgRecord;

use crate::backend::{Backend, Prepared};
use crate::error::{AgentError, Result};
use crate::prompt::{AgentKind, Mode, PromptSet};

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub mode: Mode,
    /// Time each agent is given before the run fails.
    pub agent_timeout: Duration,
    pub prompts: PromptSet,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            mode: Mode::MultiAgent,
            agent_timeout: Duration::from_secs(120),
            prompts: PromptSet::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentResult {
    pub agent: AgentKind,
    pub class: FeatureClass,
    pub explanation: String,
    pub latency_ms: u128,
    pub backend_used: String,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub overall: OverallAssessment,
    pub mode: Mode,
    /// Feature agents in fixed feature order, then the aggregator (or the
    /// single direct request).
    pub agents: Vec<AgentResult>,
}

impl PipelineOutput {
    pub fn document(&self, record_id: &str) -> ResultDocument {
        let mut doc = ResultDocument::new(record_id, &self.overall);
        if self.mode == Mode::DirectPrompt {
            doc.mode = Some(self.mode.as_str().to_string());
        }
        doc
    }
}

fn wrap(agent: AgentKind, e: AgentError) -> AgentError {
    match e {
        AgentError::Agent { .. } | AgentError::Timeout { .. } => e,
        other => AgentError::Agent {
            agent,
            source: Box::new(other),
        },
    }
}

/// Classifies one record.
///
/// In multi-agent mode the five feature agents run on their own threads and
/// the aggregator runs once all of them have answered. Results are ordered
/// by feature, never by arrival. If any agent fails or runs out of time the
/// run fails with the first such feature in feature order; nothing is
/// aggregated from a partial set.
pub fn run_pipeline(
    rec: &CtgRecord,
    backend: Arc<dyn Backend>,
    cfg: &PipelineConfig,
) -> Result<PipelineOutput> {
    let prepared = Arc::new(backend.prepare(rec)?);
    match cfg.mode {
        Mode::DirectPrompt => run_direct(&prepared, backend.as_ref(), cfg),
        Mode::MultiAgent => run_multi(prepared, backend, cfg),
    }
}

fn run_direct(
    prepared: &Prepared,
    backend: &dyn Backend,
    cfg: &PipelineConfig,
) -> Result<PipelineOutput> {
    let prompt = cfg
        .prompts
        .render(AgentKind::Aggregator, Mode::DirectPrompt);
    let start = Instant::now();
    let overall = backend
        .direct(prepared, &prompt)
        .map_err(|e| wrap(AgentKind::Aggregator, e))?;
    let agents = vec![AgentResult {
        agent: AgentKind::Aggregator,
        class: overall.class,
        explanation: overall.explanation.clone(),
        latency_ms: start.elapsed().as_millis(),
        backend_used: backend.name().to_string(),
    }];
    Ok(PipelineOutput {
        overall,
        mode: Mode::DirectPrompt,
        agents,
    })
}

type AgentMessage = (Feature, Result<FeatureAssessment>, u128);

fn run_multi(
    prepared: Arc<Prepared>,
    backend: Arc<dyn Backend>,
    cfg: &PipelineConfig,
) -> Result<PipelineOutput> {
    let (tx, rx) = mpsc::channel::<AgentMessage>();
    for feature in Feature::ALL {
        let (tx, prepared, backend) = (tx.clone(), Arc::clone(&prepared), Arc::clone(&backend));
        let prompt = cfg
            .prompts
            .render(AgentKind::Feature(feature), Mode::MultiAgent);
        // Detached: an agent that overruns is abandoned, not joined.
        std::thread::spawn(move || {
            let start = Instant::now();
            let result = backend.feature(&prepared, feature, &prompt);
            let _ = tx.send((feature, result, start.elapsed().as_millis()));
        });
    }
    drop(tx);

    let deadline = Instant::now() + cfg.agent_timeout;
    let mut slots: [Option<(Result<FeatureAssessment>, u128)>; 5] = Default::default();
    let mut received = 0;
    while received < slots.len() {
        let left = deadline.saturating_duration_since(Instant::now());
        match rx.recv_timeout(left) {
            Ok((feature, result, ms)) => {
                slots[feature.index()] = Some((result, ms));
                received += 1;
            }
            Err(_) => break,
        }
    }

    let mut features = Vec::with_capacity(5);
    let mut agents = Vec::with_capacity(6);
    for (feature, slot) in Feature::ALL.into_iter().zip(slots) {
        let agent = AgentKind::Feature(feature);
        let Some((result, ms)) = slot else {
            return Err(AgentError::Timeout {
                agent,
                seconds: cfg.agent_timeout.as_secs_f64(),
            });
        };
        let assessment = result.map_err(|e| wrap(agent, e))?;
        if assessment.feature != feature {
            return Err(wrap(
                agent,
                AgentError::BackendUnavailable(format!(
                    "answered for {} instead",
                    assessment.feature
                )),
            ));
        }
        agents.push(AgentResult {
            agent,
            class: assessment.class,
            explanation: assessment.explanation.clone(),
            latency_ms: ms,
            backend_used: backend.name().to_string(),
        });
        features.push(assessment);
    }

    let prompt = cfg.prompts.render(AgentKind::Aggregator, Mode::MultiAgent);
    let start = Instant::now();
    let overall = backend
        .aggregate(&prepared, &features, &prompt)
        .map_err(|e| wrap(AgentKind::Aggregator, e))?;
    agents.push(AgentResult {
        agent: AgentKind::Aggregator,
        class: overall.class,
        explanation: overall.explanation.clone(),
        latency_ms: start.elapsed().as_millis(),
        backend_used: backend.name().to_string(),
    });
    Ok(PipelineOutput {
        overall,
        mode: Mode::MultiAgent,
        agents,
    })
}
