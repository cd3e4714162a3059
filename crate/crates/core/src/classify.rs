//! Per-feature rule tables and the overall aggregation rule.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::baseline::{BaselineEstimate, VariabilityProfile};
use crate::episodes::{DecelType, Episode, EpisodeKind, TypedDeceleration};
use crate::error::{CtgError, Result};
use crate::signal::BinaryLabel;
use crate::sinusoidal::{SinusoidalFinding, SinusoidalStatus};

/// Severity class, ordered from least to most severe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureClass {
    Normal,
    Suspicious,
    Pathological,
}

impl FeatureClass {
    pub const ALL: [FeatureClass; 3] = [
        FeatureClass::Normal,
        FeatureClass::Suspicious,
        FeatureClass::Pathological,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureClass::Normal => "normal",
            FeatureClass::Suspicious => "suspicious",
            FeatureClass::Pathological => "pathological",
        }
    }

    pub fn binary(self) -> BinaryLabel {
        if self == FeatureClass::Normal {
            BinaryLabel::Normal
        } else {
            BinaryLabel::Abnormal
        }
    }
}

impl fmt::Display for FeatureClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for FeatureClass {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "normal" => Ok(FeatureClass::Normal),
            "suspicious" => Ok(FeatureClass::Suspicious),
            "pathological" => Ok(FeatureClass::Pathological),
            other => Err(format!("unknown class {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Feature {
    Baseline,
    Variability,
    Accelerations,
    Decelerations,
    Sinusoidal,
}

impl Feature {
    /// Fixed reporting order.
    pub const ALL: [Feature; 5] = [
        Feature::Baseline,
        Feature::Variability,
        Feature::Accelerations,
        Feature::Decelerations,
        Feature::Sinusoidal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Feature::Baseline => "baseline",
            Feature::Variability => "variability",
            Feature::Accelerations => "accelerations",
            Feature::Decelerations => "decelerations",
            Feature::Sinusoidal => "sinusoidal",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Feature {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Feature::ALL
            .into_iter()
            .find(|f| f.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown feature {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccelerationEvidence {
    pub accelerations: Vec<Episode>,
    /// Accelerations whose peak falls near a contraction peak.
    pub contraction_locked: usize,
    pub contractions: usize,
}

/// The measurements a verdict was based on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Evidence {
    Baseline(BaselineEstimate),
    Variability(VariabilityProfile),
    Accelerations(AccelerationEvidence),
    Decelerations {
        decelerations: Vec<TypedDeceleration>,
    },
    Sinusoidal(SinusoidalFinding),
    /// Verdict came from a backend that reports no measurements.
    Opaque,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureAssessment {
    pub feature: Feature,
    pub class: FeatureClass,
    pub explanation: String,
    pub evidence: Evidence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverallAssessment {
    pub class: FeatureClass,
    pub binary: BinaryLabel,
    pub explanation: String,
    /// One entry per feature in fixed order; empty for single-shot runs.
    pub features: Vec<FeatureAssessment>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifyConfig {
    /// An acceleration is contraction-locked when its peak is this close to a
    /// contraction peak.
    pub lock_window_s: f64,
    pub lock_fraction: f64,
    pub min_locking_contractions: usize,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        Self {
            lock_window_s: 30.0,
            lock_fraction: 0.8,
            min_locking_contractions: 2,
        }
    }
}

/// Whole-bpm bucketing: 110–160 normal, 100–109 and 161–180 suspicious,
/// otherwise pathological.
pub fn baseline_class(value_bpm: f64) -> FeatureClass {
    let v = value_bpm.round();
    if (110.0..=160.0).contains(&v) {
        FeatureClass::Normal
    } else if (100.0..=109.0).contains(&v) || (161.0..=180.0).contains(&v) {
        FeatureClass::Suspicious
    } else {
        FeatureClass::Pathological
    }
}

pub fn classify_baseline(est: &BaselineEstimate) -> FeatureAssessment {
    let (class, explanation) = match (est.determinable, est.value_bpm) {
        (true, Some(v)) => {
            let class = baseline_class(v);
            let range = match class {
                FeatureClass::Normal => "within 110-160 bpm",
                FeatureClass::Suspicious => "in the 100-109 or 161-180 bpm band",
                FeatureClass::Pathological => "below 100 or above 180 bpm",
            };
            (class, format!("baseline {:.0} bpm, {range}", v.round()))
        }
        _ => (
            FeatureClass::Suspicious,
            format!(
                "baseline indeterminable, only {:.0} s of stable signal",
                est.coverage_s
            ),
        ),
    };
    FeatureAssessment {
        feature: Feature::Baseline,
        class,
        explanation,
        evidence: Evidence::Baseline(est.clone()),
    }
}

/// Class from the variability summary alone.
pub fn variability_class(p: &VariabilityProfile) -> (FeatureClass, String) {
    let min = |s: f64| s / 60.0;
    if p.low_var_longest_run_s >= 900.0 {
        return (
            FeatureClass::Pathological,
            format!(
                "bandwidth below 5 bpm for {:.0} min",
                min(p.low_var_longest_run_s)
            ),
        );
    }
    if p.high_var_longest_run_s >= 600.0 {
        return (
            FeatureClass::Pathological,
            format!(
                "bandwidth above 25 bpm for {:.0} min",
                min(p.high_var_longest_run_s)
            ),
        );
    }
    if p.low_var_longest_run_s >= 600.0 {
        return (
            FeatureClass::Suspicious,
            format!(
                "bandwidth below 5 bpm for {:.0} min",
                min(p.low_var_longest_run_s)
            ),
        );
    }
    if p.high_var_longest_run_s >= 300.0 {
        return (
            FeatureClass::Suspicious,
            format!(
                "bandwidth above 25 bpm for {:.0} min",
                min(p.high_var_longest_run_s)
            ),
        );
    }
    if p.normal_fraction < 0.5 {
        return (
            FeatureClass::Suspicious,
            format!(
                "bandwidth 5-25 bpm in only {:.0}% of minutes",
                p.normal_fraction * 100.0
            ),
        );
    }
    match p.median_oscillations_per_min {
        Some(f) if (3.0..=5.0).contains(&f) => (
            FeatureClass::Normal,
            format!(
                "bandwidth 5-25 bpm in {:.0}% of minutes at {f:.1} cycles/min",
                p.normal_fraction * 100.0
            ),
        ),
        Some(f) => (
            FeatureClass::Suspicious,
            format!("bandwidth normal but {f:.1} cycles/min, outside 3-5"),
        ),
        None => (
            FeatureClass::Suspicious,
            "no minute with normal bandwidth".to_string(),
        ),
    }
}

pub fn classify_variability(p: &VariabilityProfile) -> FeatureAssessment {
    let (class, explanation) = variability_class(p);
    FeatureAssessment {
        feature: Feature::Variability,
        class,
        explanation,
        evidence: Evidence::Variability(p.clone()),
    }
}

pub fn classify_accelerations(
    accels: &[Episode],
    contractions: &[Episode],
    cfg: &ClassifyConfig,
) -> FeatureAssessment {
    let accels: Vec<Episode> = accels
        .iter()
        .filter(|e| e.kind == EpisodeKind::Acceleration)
        .copied()
        .collect();
    let locked = accels
        .iter()
        .filter(|a| {
            contractions
                .iter()
                .any(|c| (c.extremum_s - a.extremum_s).abs() <= cfg.lock_window_s)
        })
        .count();
    let n = accels.len();
    let (class, explanation) = match n {
        0 => (FeatureClass::Pathological, "no accelerations".to_string()),
        1 => (
            FeatureClass::Suspicious,
            "a single acceleration".to_string(),
        ),
        _ if contractions.len() >= cfg.min_locking_contractions
            && locked as f64 >= cfg.lock_fraction * n as f64 =>
        {
            (
                FeatureClass::Suspicious,
                format!("{n} accelerations, {locked} of them timed with contractions"),
            )
        }
        _ => (FeatureClass::Normal, format!("{n} accelerations")),
    };
    FeatureAssessment {
        feature: Feature::Accelerations,
        class,
        explanation,
        evidence: Evidence::Accelerations(AccelerationEvidence {
            accelerations: accels,
            contraction_locked: locked,
            contractions: contractions.len(),
        }),
    }
}

fn is_pathological_decel(d: &TypedDeceleration) -> bool {
    match d.decel_type {
        DecelType::Late | DecelType::AtypicalVariable => true,
        DecelType::Prolonged => !d.sub3min || d.overlapped_contractions > 2,
        DecelType::Early | DecelType::Variable => false,
    }
}

fn decel_label(t: DecelType) -> &'static str {
    match t {
        DecelType::Early => "early",
        DecelType::Variable => "variable",
        DecelType::Late => "late",
        DecelType::Prolonged => "prolonged",
        DecelType::AtypicalVariable => "atypical variable",
    }
}

pub fn deceleration_class(typed: &[TypedDeceleration]) -> FeatureClass {
    if typed.is_empty() {
        FeatureClass::Normal
    } else if typed.iter().any(is_pathological_decel) {
        FeatureClass::Pathological
    } else {
        FeatureClass::Suspicious
    }
}

pub fn classify_decelerations(typed: &[TypedDeceleration]) -> FeatureAssessment {
    let class = deceleration_class(typed);
    let explanation = if typed.is_empty() {
        "no decelerations".to_string()
    } else {
        let parts: Vec<String> = typed
            .iter()
            .map(|d| {
                let mut s = format!(
                    "{} at {:.0} s ({:.0} bpm, {:.0} s",
                    decel_label(d.decel_type),
                    d.episode.onset_s,
                    d.episode.amplitude,
                    d.episode.duration_s
                );
                if d.sub3min {
                    s.push_str(", under 3 min");
                }
                s.push(')');
                s
            })
            .collect();
        format!("{} deceleration(s): {}", typed.len(), parts.join("; "))
    };
    FeatureAssessment {
        feature: Feature::Decelerations,
        class,
        explanation,
        evidence: Evidence::Decelerations {
            decelerations: typed.to_vec(),
        },
    }
}

pub fn sinusoidal_class(status: SinusoidalStatus) -> FeatureClass {
    match status {
        SinusoidalStatus::None => FeatureClass::Normal,
        SinusoidalStatus::Pseudosinusoidal => FeatureClass::Suspicious,
        SinusoidalStatus::TrueSinusoidal => FeatureClass::Pathological,
    }
}

pub fn classify_sinusoidal(f: &SinusoidalFinding) -> FeatureAssessment {
    let explanation = match (f.status, f.span) {
        (SinusoidalStatus::None, _) | (_, None) => "no sinusoidal pattern".to_string(),
        (status, Some((a, b))) => format!(
            "{} pattern from {a:.0} s to {b:.0} s, {:.1} bpm at {:.1} cycles/min",
            if status == SinusoidalStatus::TrueSinusoidal {
                "sinusoidal"
            } else {
                "pseudosinusoidal"
            },
            f.amplitude_bpm,
            f.frequency_cpm
        ),
    };
    FeatureAssessment {
        feature: Feature::Sinusoidal,
        class: sinusoidal_class(f.status),
        explanation,
        evidence: Evidence::Sinusoidal(f.clone()),
    }
}

/// The combination rule on classes alone: any pathological feature or two
/// suspicious ones make the trace pathological; a single suspicious feature
/// makes it suspicious.
pub fn aggregate_classes(classes: &[FeatureClass]) -> FeatureClass {
    let suspicious = classes
        .iter()
        .filter(|&&c| c == FeatureClass::Suspicious)
        .count();
    if classes.contains(&FeatureClass::Pathological) || suspicious >= 2 {
        FeatureClass::Pathological
    } else if suspicious == 1 {
        FeatureClass::Suspicious
    } else {
        FeatureClass::Normal
    }
}

fn rule_clause(features: &[FeatureAssessment]) -> String {
    let names = |c: FeatureClass| -> Vec<&str> {
        features
            .iter()
            .filter(|f| f.class == c)
            .map(|f| f.feature.as_str())
            .collect()
    };
    let path = names(FeatureClass::Pathological);
    let susp = names(FeatureClass::Suspicious);
    if !path.is_empty() {
        format!("Pathological: {} pathological.", path.join(", "))
    } else if susp.len() >= 2 {
        format!("Pathological: {} suspicious.", susp.join(", "))
    } else if susp.len() == 1 {
        format!("Suspicious: {} suspicious, nothing pathological.", susp[0])
    } else {
        "Normal: every feature normal.".to_string()
    }
}

/// Combines exactly one assessment per feature into the overall verdict.
/// Feature order in the input does not matter; the output is in fixed order.
pub fn aggregate(features: &[FeatureAssessment]) -> Result<OverallAssessment> {
    let mut slots: [Option<&FeatureAssessment>; 5] = [None; 5];
    for f in features {
        let slot = &mut slots[f.feature.index()];
        if slot.is_some() {
            return Err(CtgError::WrongFeatureSet(format!(
                "{} given more than once",
                f.feature
            )));
        }
        *slot = Some(f);
    }
    let missing: Vec<&str> = Feature::ALL
        .iter()
        .filter(|f| slots[f.index()].is_none())
        .map(|f| f.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(CtgError::WrongFeatureSet(format!(
            "missing {}",
            missing.join(", ")
        )));
    }
    let ordered: Vec<FeatureAssessment> = slots.iter().flatten().map(|f| (*f).clone()).collect();
    let classes: Vec<FeatureClass> = ordered.iter().map(|f| f.class).collect();
    let class = aggregate_classes(&classes);
    let mut explanation: Vec<String> = ordered
        .iter()
        .map(|f| {
            format!(
                "{} ({}): {}.",
                capitalize(f.feature.as_str()),
                f.class,
                f.explanation
            )
        })
        .collect();
    explanation.push(rule_clause(&ordered));
    Ok(OverallAssessment {
        class,
        binary: class.binary(),
        explanation: explanation.join(" "),
        features: ordered,
    })
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    c.next()
        .map(|first| first.to_uppercase().chain(c).collect())
        .unwrap_or_default()
}

/// Serialized verdict for one record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultDocument {
    pub record_id: String,
    pub overall: OverallSummary,
    pub features: Vec<FeatureAssessment>,
    /// Present only for single-shot runs, whose feature list is empty.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverallSummary {
    pub class: FeatureClass,
    pub binary: BinaryLabel,
    pub explanation: String,
}

impl ResultDocument {
    pub fn new(record_id: impl Into<String>, overall: &OverallAssessment) -> Self {
        Self {
            record_id: record_id.into(),
            overall: OverallSummary {
                class: overall.class,
                binary: overall.binary,
                explanation: overall.explanation.clone(),
            },
            features: overall.features.clone(),
            mode: None,
        }
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
