use ctg_core::baseline::{
    estimate_baseline, variability_profile, BaselineConfig, BaselineEstimate, VariabilityConfig,
};
use ctg_core::classify::{aggregate_classes, FeatureClass};
use ctg_core::episodes::{
    detect_contractions, detect_excursions, type_decelerations, ContractionConfig, Episode,
    EpisodeKind, ExcursionConfig, TypingConfig,
};
use ctg_core::render::{Layout, RenderConfig};
use ctg_core::signal::{
    parse_csv, preprocess, to_csv_string, CleanSignal, CtgRecord, PreprocessConfig,
};
use ctg_core::sinusoidal::{detect_sinusoidal, SinusoidalConfig, SinusoidalStatus};
use ctg_core::synth::{generate, random_scenario, GroundTruth};
use proptest::prelude::*;
use std::f64::consts::PI;

const RATE: f64 = 4.0;

fn clean(values: Vec<f64>) -> CleanSignal {
    let n = values.len();
    CleanSignal {
        values,
        sample_rate_hz: RATE,
        valid_mask: vec![true; n],
    }
}

fn synthetic(seed: u64, noise: f64) -> (CleanSignal, CleanSignal, BaselineEstimate) {
    let (rec, _) = generate(&random_scenario(seed, noise)).unwrap();
    let (fhr, uc) = preprocess(&rec, &PreprocessConfig::default()).unwrap();
    let base = estimate_baseline(&fhr, &BaselineConfig::default()).unwrap();
    (fhr, uc, base)
}

fn sine(minutes: usize, amp: f64, cpm: f64, center: f64) -> Vec<f64> {
    (0..minutes * 240)
        .map(|i| center + amp * (2.0 * PI * cpm * i as f64 / RATE / 60.0).sin())
        .collect()
}

fn assert_close(a: &Episode, b: &Episode, shift_s: f64) {
    for (x, y) in [
        (a.onset_s, b.onset_s),
        (a.extremum_s, b.extremum_s),
        (a.offset_s, b.offset_s),
    ] {
        assert!((x + shift_s - y).abs() < 1e-9, "{a:?} vs {b:?}");
    }
    assert!((a.amplitude - b.amplitude).abs() < 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn csv_round_trip_is_stable(
        fhr in prop::collection::vec(prop_oneof![Just(0.0), 60.0f64..200.0], 20..200),
        tone in 0.0f64..100.0,
    ) {
        let n = fhr.len();
        let uc: Vec<f64> = (0..n).map(|i| (tone + i as f64).min(100.0)).collect();
        let rec = CtgRecord::new("r", RATE, fhr, uc, None).unwrap();
        let text = to_csv_string(&rec);
        let again = parse_csv("r", &text, RATE).unwrap();
        prop_assert_eq!(&again, &rec);
        prop_assert_eq!(to_csv_string(&again), text);
    }

    #[test]
    fn preprocess_is_idempotent(seed in 0u64..10_000, noise in 0.0f64..3.0, gap_at in 0usize..4000, gap_len in 0usize..200) {
        let (rec, _) = generate(&random_scenario(seed, noise)).unwrap();
        let mut fhr = rec.fhr().to_vec();
        fhr[gap_at..(gap_at + gap_len).min(4800)].iter_mut().for_each(|v| *v = 0.0);
        let rec = CtgRecord::new("r", RATE, fhr, rec.uc().to_vec(), None).unwrap();
        let cfg = PreprocessConfig::default();
        let (f1, u1) = preprocess(&rec, &cfg).unwrap();
        let (f2, u2) = preprocess(&CtgRecord::from_clean("r", &f1, &u1).unwrap(), &cfg).unwrap();
        prop_assert_eq!(&f1.valid_mask, &f2.valid_mask);
        for i in 0..f1.len() {
            if f1.valid_mask[i] {
                prop_assert_eq!(f1.values[i], f2.values[i]);
            }
        }
        prop_assert_eq!(u1.values, u2.values);
    }

    #[test]
    fn baseline_is_shift_equivariant(seed in 0u64..10_000, c in -20.0f64..20.0) {
        let (fhr, _, base) = synthetic(seed, 1.0);
        let shifted = CleanSignal { values: fhr.values.iter().map(|v| v + c).collect(), ..fhr.clone() };
        let moved = estimate_baseline(&shifted, &BaselineConfig::default()).unwrap();
        prop_assert_eq!(base.determinable, moved.determinable);
        if let (Some(a), Some(b)) = (base.value_bpm, moved.value_bpm) {
            prop_assert!((a + c - b).abs() < 1e-6, "{} + {} vs {}", a, c, b);
        }
    }

    #[test]
    fn baseline_stays_within_signal_range(seed in 0u64..10_000) {
        let (fhr, _, base) = synthetic(seed, 2.0);
        let valid = fhr.valid_values();
        let lo = valid.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = valid.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if let Some(b) = base.value_bpm {
            prop_assert!(b >= lo && b <= hi);
        }
    }

    #[test]
    fn pure_sine_minute_bandwidth(amp in 2.0f64..12.0, cpm in 1.0f64..5.0) {
        let rec = CtgRecord::new("s", RATE, sine(12, amp, cpm, 140.0), vec![10.0; 2880], None).unwrap();
        let (fhr, _) = preprocess(&rec, &PreprocessConfig::default()).unwrap();
        let base = BaselineEstimate { value_bpm: Some(140.0), determinable: true, coverage_s: 720.0, iterations: 1 };
        let p = variability_profile(&fhr, &base, &[], &VariabilityConfig::default()).unwrap();
        prop_assert_eq!(p.minutes.len(), 12);
        for m in &p.minutes {
            prop_assert!(m.amplitude_bpm <= 2.0 * amp + 1e-9);
            prop_assert!(m.amplitude_bpm >= 2.0 * amp * 0.9, "{} vs {}", m.amplitude_bpm, 2.0 * amp);
        }
    }

    #[test]
    fn minute_count_is_floor_of_duration(extra in 0usize..240, minutes in 10usize..30) {
        let n = minutes * 240 + extra;
        let fhr = clean(vec![140.0; n]);
        let base = estimate_baseline(&fhr, &BaselineConfig::default()).unwrap();
        let p = variability_profile(&fhr, &base, &[], &VariabilityConfig::default()).unwrap();
        prop_assert_eq!(p.minutes.len(), minutes);
    }

    #[test]
    fn episodes_meet_type_thresholds(seed in 0u64..10_000, noise in 0.0f64..3.0) {
        let (fhr, uc, base) = synthetic(seed, noise);
        prop_assume!(base.determinable);
        let cfg = ExcursionConfig::default();
        for e in detect_excursions(&fhr, &base, &cfg).unwrap() {
            prop_assert!(e.kind != EpisodeKind::Contraction);
            prop_assert!(e.amplitude > cfg.min_amplitude_bpm);
            prop_assert!(e.duration_s > cfg.min_duration_s);
            prop_assert!(e.onset_s <= e.extremum_s && e.extremum_s <= e.offset_s);
        }
        for c in detect_contractions(&uc, &ContractionConfig::default()) {
            prop_assert_eq!(c.kind, EpisodeKind::Contraction);
            prop_assert!(c.onset_s <= c.extremum_s && c.extremum_s <= c.offset_s);
        }
    }

    #[test]
    fn mirrored_signal_swaps_episode_kinds(seed in 0u64..10_000, noise in 0.0f64..3.0) {
        let (fhr, _, base) = synthetic(seed, noise);
        prop_assume!(base.determinable);
        let b = base.value_bpm.unwrap();
        let mirrored = CleanSignal { values: fhr.values.iter().map(|v| 2.0 * b - v).collect(), ..fhr.clone() };
        let cfg = ExcursionConfig::default();
        let orig = detect_excursions(&fhr, &base, &cfg).unwrap();
        let flip = detect_excursions(&mirrored, &base, &cfg).unwrap();
        prop_assert_eq!(orig.len(), flip.len());
        for (a, m) in orig.iter().zip(&flip) {
            let swapped = match a.kind {
                EpisodeKind::Acceleration => EpisodeKind::Deceleration,
                _ => EpisodeKind::Acceleration,
            };
            prop_assert_eq!(m.kind, swapped);
            assert_close(a, m, 0.0);
        }
    }

    #[test]
    fn time_shift_moves_episodes(seed in 0u64..10_000, k in 1usize..400) {
        let (fhr, _, base) = synthetic(seed, 1.0);
        prop_assume!(base.determinable);
        let b = base.value_bpm.unwrap();
        let mut values = vec![b; k];
        values.extend_from_slice(&fhr.values);
        let mut mask = vec![true; k];
        mask.extend_from_slice(&fhr.valid_mask);
        let shifted = CleanSignal { values, sample_rate_hz: RATE, valid_mask: mask };
        let cfg = ExcursionConfig::default();
        let orig = detect_excursions(&fhr, &base, &cfg).unwrap();
        let moved = detect_excursions(&shifted, &base, &cfg).unwrap();
        prop_assert_eq!(orig.len(), moved.len());
        for (a, m) in orig.iter().zip(&moved) {
            prop_assert_eq!(a.kind, m.kind);
            assert_close(a, m, k as f64 / RATE);
        }
    }

    #[test]
    fn every_deceleration_gets_one_type(seed in 0u64..10_000, noise in 0.0f64..3.0) {
        let (fhr, uc, base) = synthetic(seed, noise);
        prop_assume!(base.determinable);
        let decels: Vec<Episode> = detect_excursions(&fhr, &base, &ExcursionConfig::default())
            .unwrap()
            .into_iter()
            .filter(|e| e.kind == EpisodeKind::Deceleration)
            .collect();
        let contractions = detect_contractions(&uc, &ContractionConfig::default());
        let typed = type_decelerations(&decels, &contractions, &fhr, &base, &TypingConfig::default());
        prop_assert_eq!(typed.len(), decels.len());
        for (t, d) in typed.iter().zip(&decels) {
            prop_assert_eq!(&t.episode, d);
        }
    }

    #[test]
    fn sinusoid_amplitude_scales(scale in 0.6f64..1.8) {
        let cfg = SinusoidalConfig::default();
        let a = detect_sinusoidal(&clean(sine(12, 6.0, 4.0, 0.0)), &[], &cfg).unwrap();
        let b = detect_sinusoidal(&clean(sine(12, 6.0 * scale, 4.0, 0.0)), &[], &cfg).unwrap();
        prop_assert!((b.amplitude_bpm / a.amplitude_bpm - scale).abs() <= 0.05 * scale);
        prop_assert!((b.frequency_cpm - a.frequency_cpm).abs() <= 0.1);
    }

    #[test]
    fn sine_frequency_is_recovered(f in 2.0f64..6.0) {
        let found = detect_sinusoidal(&clean(sine(12, 8.0, f, 140.0)), &[], &SinusoidalConfig::default()).unwrap();
        prop_assert!((found.frequency_cpm - f).abs() <= 0.2, "{} vs {}", found.frequency_cpm, f);
    }

    #[test]
    fn truncated_sine_is_never_true(minutes in 1usize..10, lead in 0usize..5) {
        let mut v = vec![140.0; lead * 240];
        v.extend(sine(minutes, 8.0, 4.0, 140.0));
        v.resize(20 * 240, 140.0);
        let found = detect_sinusoidal(&clean(v), &[], &SinusoidalConfig::default()).unwrap();
        prop_assert_ne!(found.status, SinusoidalStatus::TrueSinusoidal);
    }

    #[test]
    fn layout_is_affine(t1 in 0.0f64..2400.0, t2 in 0.0f64..2400.0, v in -100.0f64..400.0) {
        let cfg = RenderConfig::default();
        let l = Layout::new(2400.0, &cfg);
        let mid = l.x((t1 + t2) / 2.0);
        prop_assert!((mid - (l.x(t1) + l.x(t2)) / 2.0).abs() < 1e-9);
        let y = l.y_fhr(v, &cfg);
        prop_assert!((0.0..=l.fhr_height).contains(&y));
        let u = l.y_uc(v, &cfg);
        prop_assert!((l.uc_top..=l.height).contains(&u));
    }

    #[test]
    fn truth_depends_only_on_parameters(seed in 0u64..10_000) {
        let s = random_scenario(seed, 0.0);
        let (_, gt) = generate(&s).unwrap();
        let mut noisy = s.clone();
        noisy.noise_bpm = 3.0;
        noisy.seed ^= 0xdead_beef;
        prop_assert_eq!(GroundTruth::from_scenario(&noisy), gt);
    }

    #[test]
    fn scheduled_episodes_do_not_overlap(seed in 0u64..10_000) {
        let s = random_scenario(seed, 0.0);
        prop_assert!(s.validate().is_ok());
        let mut spans: Vec<(f64, f64)> = s.accelerations.iter().map(|a| (a.onset_s, a.onset_s + a.duration_s)).collect();
        spans.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in spans.windows(2) {
            prop_assert!(w[0].1 <= w[1].0);
        }
        for a in &s.accelerations {
            prop_assert!(a.onset_s >= 0.0 && a.onset_s + a.duration_s <= s.duration_s);
        }
        for d in &s.decelerations {
            prop_assert!(d.onset_s >= 0.0 && d.end_s() <= s.duration_s);
            prop_assert!(d.amplitude_bpm >= 20.0 && d.duration_s >= 20.0);
        }
    }
}

#[test]
fn aggregate_matches_exhaustive_table() {
    use FeatureClass::*;
    for code in 0..243u32 {
        let classes: Vec<FeatureClass> = (0..5)
            .map(|k| FeatureClass::ALL[(code / 3u32.pow(k) % 3) as usize])
            .collect();
        let suspicious = classes.iter().filter(|c| **c == Suspicious).count();
        let expected = if classes.contains(&Pathological) || suspicious >= 2 {
            Pathological
        } else if suspicious == 1 {
            Suspicious
        } else {
            Normal
        };
        assert_eq!(aggregate_classes(&classes), expected, "{classes:?}");
    }
}
