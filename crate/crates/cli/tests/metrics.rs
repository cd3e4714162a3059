use std::collections::BTreeMap;

use ctg_cli::eval::{evaluate, Confusion, EvalError, EvalOptions, Sampler};
use ctg_core::classify::{FeatureClass, OverallAssessment};
use ctg_core::signal::{BinaryLabel, CtgRecord};
use proptest::prelude::*;

fn label(abnormal: bool) -> BinaryLabel {
    if abnormal {
        BinaryLabel::Abnormal
    } else {
        BinaryLabel::Normal
    }
}

/// Records whose predicted label is encoded in the first FHR sample.
fn fixture(pairs: &[(bool, bool)]) -> (Vec<CtgRecord>, BTreeMap<String, BinaryLabel>) {
    let mut records = Vec::new();
    let mut labels = BTreeMap::new();
    for (i, &(predicted, actual)) in pairs.iter().enumerate() {
        let id = format!("rec-{i:04}");
        let fhr = if predicted { 170.0 } else { 140.0 };
        records.push(CtgRecord::new(id.clone(), 4.0, vec![fhr; 4], vec![10.0; 4], None).unwrap());
        labels.insert(id, label(actual));
    }
    (records, labels)
}

fn predict(rec: &CtgRecord) -> anyhow::Result<OverallAssessment> {
    let abnormal = rec.fhr()[0] > 150.0;
    Ok(OverallAssessment {
        class: if abnormal {
            FeatureClass::Suspicious
        } else {
            FeatureClass::Normal
        },
        binary: label(abnormal),
        explanation: String::new(),
        features: Vec::new(),
    })
}

proptest! {
    #[test]
    fn metrics_match_brute_force(pairs in prop::collection::vec((any::<bool>(), any::<bool>()), 1..80)) {
        let (records, labels) = fixture(&pairs);
        let report = evaluate(&records, &labels, &EvalOptions { trials: 2, ..EvalOptions::default() }, predict).unwrap();
        let (mut tp, mut fp, mut tn, mut fn_) = (0.0, 0.0, 0.0, 0.0);
        for &(p, a) in &pairs {
            match (p, a) {
                (true, true) => tp += 1.0,
                (true, false) => fp += 1.0,
                (false, false) => tn += 1.0,
                (false, true) => fn_ += 1.0,
            }
        }
        let accuracy = (tp + tn) / pairs.len() as f64;
        let f1 = if tp + fp + fn_ == 0.0 { 0.0 } else { 2.0 * tp / (2.0 * tp + fp + fn_) };
        prop_assert!((report.mean_accuracy - accuracy).abs() < 1e-12);
        prop_assert!((report.mean_f1 - f1).abs() < 1e-12);
        let c = report.per_trial[0].confusion;
        prop_assert_eq!(c.total(), pairs.len());
        prop_assert_eq!(c, Confusion { tp: tp as usize, fp: fp as usize, tn: tn as usize, fn_: fn_ as usize });
    }

    #[test]
    fn balanced_draws_are_even_and_reproducible(seed in any::<u64>(), k in 1usize..20) {
        let pairs: Vec<(bool, bool)> = (0..40).map(|i| (i % 3 == 0, i % 2 == 0)).collect();
        let (records, labels) = fixture(&pairs);
        let opts = EvalOptions {
            trials: 3,
            sampler: Sampler { sample: Some(k), balanced: true, seed },
            jobs: 1,
        };
        let a = evaluate(&records, &labels, &opts, predict).unwrap();
        let b = evaluate(&records, &labels, &opts, predict).unwrap();
        prop_assert_eq!(&a, &b);
        for t in &a.per_trial {
            let abnormal = t.verdicts.iter().filter(|v| v.label == BinaryLabel::Abnormal).count();
            prop_assert_eq!(t.verdicts.len(), k);
            prop_assert_eq!(abnormal, k.div_ceil(2));
            let ids: Vec<&str> = t.verdicts.iter().map(|v| v.record_id.as_str()).collect();
            prop_assert!(ids.windows(2).all(|w| w[0] < w[1]));
        }
    }
}

#[test]
fn missing_label_is_reported() {
    let (records, mut labels) = fixture(&[(true, true), (false, false)]);
    labels.remove("rec-0001");
    let err = evaluate(&records, &labels, &EvalOptions::default(), predict).unwrap_err();
    assert!(matches!(err, EvalError::MissingLabel(id) if id == "rec-0001"));
}

#[test]
fn sampling_more_than_available_fails() {
    let (records, labels) = fixture(&[(true, true), (false, false), (false, false)]);
    let opts = EvalOptions {
        trials: 1,
        sampler: Sampler {
            sample: Some(4),
            balanced: true,
            seed: 0,
        },
        jobs: 1,
    };
    let err = evaluate(&records, &labels, &opts, predict).unwrap_err();
    assert!(matches!(
        err,
        EvalError::NotEnough {
            label: "abnormal",
            wanted: 2,
            available: 1
        }
    ));
}

#[test]
fn parallel_and_serial_reports_agree() {
    let pairs: Vec<(bool, bool)> = (0..30).map(|i| (i % 4 == 0, i % 3 == 0)).collect();
    let (records, labels) = fixture(&pairs);
    let serial = EvalOptions {
        jobs: 1,
        ..EvalOptions::default()
    };
    let parallel = EvalOptions {
        jobs: 4,
        ..EvalOptions::default()
    };
    assert_eq!(
        evaluate(&records, &labels, &serial, predict).unwrap(),
        evaluate(&records, &labels, &parallel, predict).unwrap()
    );
}
