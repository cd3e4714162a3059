//! Accuracy and F1 over labelled records, repeated over several trials.

use std::collections::BTreeMap;

use ctg_core::classify::{FeatureClass, OverallAssessment};
use ctg_core::signal::{BinaryLabel, CtgRecord};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no label for record {0:?}")]
    MissingLabel(String),

    #[error("cannot draw {wanted} {label} records, only {available} available")]
    NotEnough {
        label: &'static str,
        wanted: usize,
        available: usize,
    },

    #[error("nothing to evaluate")]
    Empty,

    #[error("trials must be at least 1")]
    NoTrials,

    #[error("record {record_id}: {source}")]
    Record {
        record_id: String,
        #[source]
        source: anyhow::Error,
    },

    #[error("thread pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

/// Binary confusion counts with Abnormal as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (BinaryLabel, BinaryLabel)>) -> Self {
        let mut c = Confusion::default();
        for (predicted, actual) in pairs {
            match (predicted, actual) {
                (BinaryLabel::Abnormal, BinaryLabel::Abnormal) => c.tp += 1,
                (BinaryLabel::Abnormal, BinaryLabel::Normal) => c.fp += 1,
                (BinaryLabel::Normal, BinaryLabel::Normal) => c.tn += 1,
                (BinaryLabel::Normal, BinaryLabel::Abnormal) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            n => (self.tp + self.tn) as f64 / n as f64,
        }
    }

    /// Zero when there are no positives at all, predicted or actual.
    pub fn f1(&self) -> f64 {
        match 2 * self.tp + self.fp + self.fn_ {
            0 => 0.0,
            d => (2 * self.tp) as f64 / d as f64,
        }
    }
}

/// Which records each trial sees.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sampler {
    /// Draw this many records per trial; all records when unset.
    pub sample: Option<usize>,
    /// Split the draw evenly between the two labels (odd sizes favour Abnormal).
    pub balanced: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalOptions {
    pub trials: usize,
    pub sampler: Sampler,
    /// Worker threads; 0 lets the pool decide.
    pub jobs: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            trials: 5,
            sampler: Sampler::default(),
            jobs: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordVerdict {
    pub record_id: String,
    pub label: BinaryLabel,
    pub predicted: BinaryLabel,
    pub class: FeatureClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub trial: usize,
    pub accuracy: f64,
    pub f1: f64,
    pub confusion: Confusion,
    /// Sorted by record id.
    pub verdicts: Vec<RecordVerdict>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Records evaluated per trial.
    pub n_records: usize,
    pub trials: usize,
    pub sampler: Sampler,
    pub mean_accuracy: f64,
    pub mean_f1: f64,
    pub per_trial: Vec<TrialReport>,
}

impl EvalReport {
    /// A one-row results table with percentages.
    pub fn table(&self, method: &str) -> String {
        format!(
            "| Method | Accuracy (%) | F1-Score (%) |\n|---|---|---|\n| {method} | {:.2} | {:.2} |\n",
            100.0 * self.mean_accuracy,
            100.0 * self.mean_f1
        )
    }
}

fn draw(
    pool: &[usize],
    records: &[CtgRecord],
    labels: &BTreeMap<String, BinaryLabel>,
    sampler: &Sampler,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>, EvalError> {
    let Some(k) = sampler.sample else {
        return Ok(pool.to_vec());
    };
    let pick = |from: &[usize], n: usize, label: &'static str, rng: &mut ChaCha8Rng| {
        if n > from.len() {
            return Err(EvalError::NotEnough {
                label,
                wanted: n,
                available: from.len(),
            });
        }
        Ok(rand::seq::index::sample(rng, from.len(), n)
            .into_iter()
            .map(|i| from[i])
            .collect::<Vec<_>>())
    };
    let mut chosen = if sampler.balanced {
        let (abnormal, normal): (Vec<usize>, Vec<usize>) = pool
            .iter()
            .partition(|&&i| labels[records[i].record_id()] == BinaryLabel::Abnormal);
        let mut chosen = pick(&abnormal, k.div_ceil(2), "abnormal", rng)?;
        chosen.extend(pick(&normal, k / 2, "normal", rng)?);
        chosen
    } else {
        pick(pool, k, "labelled", rng)?
    };
    chosen.sort_unstable();
    Ok(chosen)
}

/// Runs `classify` over the records for each trial and scores the binary
/// verdicts against `labels`.
///
/// Records are processed in id order and classified in parallel; trial `t`
/// samples with a generator seeded from `sampler.seed + t`, so the report is
/// a function of its inputs alone.
pub fn evaluate<F>(
    records: &[CtgRecord],
    labels: &BTreeMap<String, BinaryLabel>,
    opts: &EvalOptions,
    classify: F,
) -> Result<EvalReport, EvalError>
where
    F: Fn(&CtgRecord) -> anyhow::Result<OverallAssessment> + Sync,
{
    if opts.trials == 0 {
        return Err(EvalError::NoTrials);
    }
    if records.is_empty() || opts.sampler.sample == Some(0) {
        return Err(EvalError::Empty);
    }
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| records[a].record_id().cmp(records[b].record_id()));
    // Balanced draws partition the whole pool by label; otherwise only what is
    // drawn needs one.
    if opts.sampler.balanced {
        if let Some(&i) = order
            .iter()
            .find(|&&i| !labels.contains_key(records[i].record_id()))
        {
            return Err(EvalError::MissingLabel(records[i].record_id().to_string()));
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs)
        .build()?;
    let mut per_trial = Vec::with_capacity(opts.trials);
    for trial in 0..opts.trials {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.sampler.seed.wrapping_add(trial as u64));
        let chosen = draw(&order, records, labels, &opts.sampler, &mut rng)?;
        let mut truth = Vec::with_capacity(chosen.len());
        for &i in &chosen {
            let id = records[i].record_id();
            let label = labels
                .get(id)
                .ok_or_else(|| EvalError::MissingLabel(id.to_string()))?;
            truth.push(*label);
        }
        let outcomes: Vec<anyhow::Result<OverallAssessment>> =
            pool.install(|| chosen.par_iter().map(|&i| classify(&records[i])).collect());
        let mut verdicts = Vec::with_capacity(chosen.len());
        for ((&i, label), outcome) in chosen.iter().zip(truth).zip(outcomes) {
            let record_id = records[i].record_id().to_string();
            let overall = outcome.map_err(|source| EvalError::Record {
                record_id: record_id.clone(),
                source,
            })?;
            verdicts.push(RecordVerdict {
                record_id,
                label,
                predicted: overall.binary,
                class: overall.class,
            });
        }
        let confusion = Confusion::from_pairs(verdicts.iter().map(|v| (v.predicted, v.label)));
        per_trial.push(TrialReport {
            trial,
            accuracy: confusion.accuracy(),
            f1: confusion.f1(),
            confusion,
            verdicts,
        });
    }

    let n = per_trial.len() as f64;
    Ok(EvalReport {
        n_records: per_trial[0].verdicts.len(),
        trials: opts.trials,
        sampler: opts.sampler,
        mean_accuracy: per_trial.iter().map(|t| t.accuracy).sum::<f64>() / n,
        mean_f1: per_trial.iter().map(|t| t.f1).sum::<f64>() / n,
        per_trial,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counts(tp: usize, fp: usize, tn: usize, fn_: usize) -> Confusion {
        Confusion { tp, fp, tn, fn_ }
    }

    #[test]
    fn hand_computed_matrices() {
        let c = counts(20, 5, 20, 5);
        assert!((c.accuracy() - 0.80).abs() < 1e-12);
        assert!((c.f1() - 0.80).abs() < 1e-12);
        let c = counts(25, 0, 24, 1);
        assert!((c.accuracy() - 0.98).abs() < 1e-12);
        assert!((c.f1() - 50.0 / 51.0).abs() < 1e-12);
    }

    #[test]
    fn no_positives_gives_zero_f1() {
        let c = counts(0, 0, 10, 0);
        assert_eq!(c.accuracy(), 1.0);
        assert_eq!(c.f1(), 0.0);
    }

    #[test]
    fn pairs_are_counted_with_abnormal_positive() {
        use BinaryLabel::*;
        let c = Confusion::from_pairs([
            (Abnormal, Abnormal),
            (Abnormal, Normal),
            (Normal, Normal),
            (Normal, Abnormal),
        ]);
        assert_eq!(c, counts(1, 1, 1, 1));
    }

    #[test]
    fn confusion_serializes_fn_key() {
        let json = serde_json::to_value(counts(1, 2, 3, 4)).unwrap();
        assert_eq!(json["fn"], 4);
    }
}
