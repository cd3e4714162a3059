//! End-to-end feature extraction and rule classification for one record.

use serde::{Deserialize, Serialize};

use crate::baseline::{
    estimate_baseline, variability_profile, BaselineConfig, BaselineEstimate, VariabilityConfig,
    VariabilityProfile,
};
use crate::classify::{
    aggregate, classify_accelerations, classify_baseline, classify_decelerations,
    classify_sinusoidal, classify_variability, AccelerationEvidence, ClassifyConfig, Evidence,
    Feature, FeatureAssessment, FeatureClass, OverallAssessment,
};
use crate::episodes::{
    detect_contractions, detect_excursions, type_decelerations, ContractionConfig, Episode,
    EpisodeKind, ExcursionConfig, TypedDeceleration, TypingConfig,
};
use crate::error::Result;
use crate::signal::{preprocess, CleanSignal, CtgRecord, PreprocessConfig};
use crate::sinusoidal::{detect_sinusoidal, SinusoidalConfig, SinusoidalFinding};

/// Every tunable threshold of the pipeline. Missing sections deserialize to
/// their defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisConfig {
    pub preprocess: PreprocessConfig,
    pub baseline: BaselineConfig,
    pub variability: VariabilityConfig,
    pub excursions: ExcursionConfig,
    pub contractions: ContractionConfig,
    pub typing: TypingConfig,
    pub sinusoidal: SinusoidalConfig,
    pub classify: ClassifyConfig,
}

/// All measurements for one record.
#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub record_id: String,
    pub fhr: CleanSignal,
    pub uc: CleanSignal,
    pub baseline: BaselineEstimate,
    pub variability: VariabilityProfile,
    pub accelerations: Vec<Episode>,
    pub decelerations: Vec<TypedDeceleration>,
    pub contractions: Vec<Episode>,
    pub sinusoidal: SinusoidalFinding,
}

pub fn analyze(rec: &CtgRecord, cfg: &AnalysisConfig) -> Result<Analysis> {
    let (fhr, uc) = preprocess(rec, &cfg.preprocess)?;
    let baseline = estimate_baseline(&fhr, &cfg.baseline)?;
    let contractions = detect_contractions(&uc, &cfg.contractions);
    let excursions = if baseline.determinable {
        detect_excursions(&fhr, &baseline, &cfg.excursions)?
    } else {
        Vec::new()
    };
    let (accelerations, decels): (Vec<Episode>, Vec<Episode>) = excursions
        .iter()
        .partition(|e| e.kind == EpisodeKind::Acceleration);
    let decelerations = type_decelerations(&decels, &contractions, &fhr, &baseline, &cfg.typing);
    let variability = variability_profile(&fhr, &baseline, &excursions, &cfg.variability)?;
    let sinusoidal = detect_sinusoidal(&fhr, &accelerations, &cfg.sinusoidal)?;
    Ok(Analysis {
        record_id: rec.record_id().to_string(),
        fhr,
        uc,
        baseline,
        variability,
        accelerations,
        decelerations,
        contractions,
        sinusoidal,
    })
}

impl Analysis {
    /// Rule verdict for one feature. Episode features cannot be judged
    /// without a baseline and are then reported as suspicious.
    pub fn assess(&self, feature: Feature, cfg: &ClassifyConfig) -> FeatureAssessment {
        let unassessable = !self.baseline.determinable
            && matches!(feature, Feature::Accelerations | Feature::Decelerations);
        if unassessable {
            let evidence = match feature {
                Feature::Accelerations => Evidence::Accelerations(AccelerationEvidence {
                    accelerations: Vec::new(),
                    contraction_locked: 0,
                    contractions: self.contractions.len(),
                }),
                _ => Evidence::Decelerations {
                    decelerations: Vec::new(),
                },
            };
            return FeatureAssessment {
                feature,
                class: FeatureClass::Suspicious,
                explanation: format!("{feature} not assessable without a determinable baseline"),
                evidence,
            };
        }
        match feature {
            Feature::Baseline => classify_baseline(&self.baseline),
            Feature::Variability => classify_variability(&self.variability),
            Feature::Accelerations => {
                classify_accelerations(&self.accelerations, &self.contractions, cfg)
            }
            Feature::Decelerations => classify_decelerations(&self.decelerations),
            Feature::Sinusoidal => classify_sinusoidal(&self.sinusoidal),
        }
    }

    pub fn assess_all(&self, cfg: &ClassifyConfig) -> Vec<FeatureAssessment> {
        Feature::ALL.iter().map(|&f| self.assess(f, cfg)).collect()
    }

    pub fn overall(&self, cfg: &ClassifyConfig) -> Result<OverallAssessment> {
        aggregate(&self.assess_all(cfg))
    }
}

/// Preprocess, measure, classify, and aggregate in one call.
pub fn classify_record(rec: &CtgRecord, cfg: &AnalysisConfig) -> Result<OverallAssessment> {
    analyze(rec, cfg)?.overall(&cfg.classify)
}
