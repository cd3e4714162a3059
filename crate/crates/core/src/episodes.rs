//! Acceleration, deceleration, and contraction episodes, and deceleration
//! typing.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::baseline::BaselineEstimate;
use crate::dsp;
use crate::error::{CtgError, Result};
use crate::signal::CleanSignal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpisodeKind {
    Acceleration,
    Deceleration,
    Contraction,
}

impl EpisodeKind {
    /// Direction of the excursion relative to the reference level.
    pub fn sign(self) -> f64 {
        match self {
            EpisodeKind::Deceleration => -1.0,
            EpisodeKind::Acceleration | EpisodeKind::Contraction => 1.0,
        }
    }
}

/// A detected excursion. Times are seconds from trace start; a sample at index
/// `i` covers `[i, i + 1) / rate`, and the extremum is reported at the center
/// of its sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub kind: EpisodeKind,
    pub onset_s: f64,
    pub extremum_s: f64,
    pub offset_s: f64,
    /// Peak deviation from the reference level (bpm, or UC units for
    /// contractions). Always positive.
    pub amplitude: f64,
    pub duration_s: f64,
}

impl Episode {
    pub fn overlaps(&self, start_s: f64, end_s: f64) -> bool {
        self.onset_s < end_s && start_s < self.offset_s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExcursionConfig {
    pub deadband_bpm: f64,
    /// Time back inside the deadband needed to close an excursion.
    pub reentry_s: f64,
    pub min_amplitude_bpm: f64,
    pub min_duration_s: f64,
}

impl Default for ExcursionConfig {
    fn default() -> Self {
        Self {
            deadband_bpm: 5.0,
            reentry_s: 5.0,
            min_amplitude_bpm: 15.0,
            min_duration_s: 15.0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct RawExcursion {
    sign: f64,
    start: usize,
    last_on: usize,
    peak: usize,
    peak_abs: f64,
}

/// Hysteresis scanner shared by FHR and UC detection.
///
/// A sample is "on" when its deviation from `reference` exceeds `deadband` in
/// an allowed direction. An excursion runs from its first on-sample to its
/// last one and is closed once `reentry` consecutive samples are not on (or a
/// gap is hit); shorter dips are bridged.
fn scan_excursions(
    values: &[f64],
    valid: &[bool],
    reference: f64,
    deadband: f64,
    reentry: usize,
    allow_negative: bool,
) -> Vec<RawExcursion> {
    let n = values.len();
    let side = |i: usize| -> f64 {
        let d = values[i] - reference;
        if d > deadband {
            1.0
        } else if allow_negative && d < -deadband {
            -1.0
        } else {
            0.0
        }
    };
    let mut out = Vec::new();
    let mut open: Option<RawExcursion> = None;
    let mut i = 0;
    while i < n {
        if !valid[i] {
            if let Some(ex) = open.take() {
                out.push(ex);
            }
            i += 1;
            continue;
        }
        let s = side(i);
        match open.as_mut() {
            None => {
                if s != 0.0 {
                    open = Some(RawExcursion {
                        sign: s,
                        start: i,
                        last_on: i,
                        peak: i,
                        peak_abs: (values[i] - reference).abs(),
                    });
                }
                i += 1;
            }
            Some(ex) => {
                if s == ex.sign {
                    ex.last_on = i;
                    let d = (values[i] - reference).abs();
                    if d > ex.peak_abs {
                        ex.peak_abs = d;
                        ex.peak = i;
                    }
                    i += 1;
                } else if i - ex.last_on >= reentry {
                    let closed = *ex;
                    open = None;
                    out.push(closed);
                    // Rescan the tail: an opposite excursion may have started
                    // while this one was waiting to close.
                    i = closed.last_on + 1;
                } else {
                    i += 1;
                }
            }
        }
    }
    if let Some(ex) = open {
        out.push(ex);
    }
    out
}

fn to_episode(ex: &RawExcursion, rate: f64, kind: EpisodeKind) -> Episode {
    let onset_s = ex.start as f64 / rate;
    let offset_s = (ex.last_on + 1) as f64 / rate;
    Episode {
        kind,
        onset_s,
        extremum_s: (ex.peak as f64 + 0.5) / rate,
        offset_s,
        amplitude: ex.peak_abs,
        duration_s: offset_s - onset_s,
    }
}

/// Accelerations and decelerations relative to a determinable baseline,
/// sorted by onset.
pub fn detect_excursions(
    fhr: &CleanSignal,
    baseline: &BaselineEstimate,
    cfg: &ExcursionConfig,
) -> Result<Vec<Episode>> {
    let base = match (baseline.determinable, baseline.value_bpm) {
        (true, Some(b)) => b,
        _ => return Err(CtgError::BaselineIndeterminable),
    };
    let rate = fhr.sample_rate_hz;
    let reentry = (cfg.reentry_s * rate).round().max(1.0) as usize;
    let raw = scan_excursions(
        &fhr.values,
        &fhr.valid_mask,
        base,
        cfg.deadband_bpm,
        reentry,
        true,
    );
    Ok(raw
        .iter()
        .map(|ex| {
            let kind = if ex.sign > 0.0 {
                EpisodeKind::Acceleration
            } else {
                EpisodeKind::Deceleration
            };
            to_episode(ex, rate, kind)
        })
        .filter(|e| e.amplitude > cfg.min_amplitude_bpm && e.duration_s > cfg.min_duration_s)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContractionConfig {
    /// Resting tone is this percentile of the smoothed UC channel.
    pub tone_percentile: f64,
    /// Level above tone that delimits a contraction.
    pub boundary_units: f64,
    pub min_rise_units: f64,
    pub min_duration_s: f64,
    pub reentry_s: f64,
}

impl Default for ContractionConfig {
    fn default() -> Self {
        Self {
            tone_percentile: 0.10,
            boundary_units: 5.0,
            min_rise_units: 15.0,
            min_duration_s: 45.0,
            reentry_s: 5.0,
        }
    }
}

pub fn detect_contractions(uc: &CleanSignal, cfg: &ContractionConfig) -> Vec<Episode> {
    let Some(tone) = dsp::percentile(&uc.valid_values(), cfg.tone_percentile) else {
        return Vec::new();
    };
    let rate = uc.sample_rate_hz;
    let reentry = (cfg.reentry_s * rate).round().max(1.0) as usize;
    scan_excursions(
        &uc.values,
        &uc.valid_mask,
        tone,
        cfg.boundary_units,
        reentry,
        false,
    )
    .iter()
    .map(|ex| to_episode(ex, rate, EpisodeKind::Contraction))
    .filter(|e| e.amplitude >= cfg.min_rise_units && e.duration_s >= cfg.min_duration_s)
    .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecelType {
    Early,
    Variable,
    Late,
    Prolonged,
    AtypicalVariable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AtypicalFeature {
    LossOfShoulder,
    SlowReturn,
    ProlongedElevatedBaseline,
    Biphasic,
    LossOfOscillation,
    LowerBaselineResumption,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypedDeceleration {
    pub episode: Episode,
    pub decel_type: DecelType,
    pub atypical_features: BTreeSet<AtypicalFeature>,
    pub associated_contraction: Option<Episode>,
    pub onset_to_nadir_s: f64,
    /// Prolonged, but not longer than three minutes.
    pub sub3min: bool,
    pub overlapped_contractions: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TypingConfig {
    pub prolonged_s: f64,
    pub sub3_prolonged_s: f64,
    pub abrupt_onset_to_nadir_s: f64,
    pub early_nadir_window_s: f64,
    pub late_onset_lag_s: f64,
    pub association_window_s: f64,
    /// Onset extrapolation never reaches back further than this.
    pub max_onset_extrapolation_s: f64,
    /// Timing uses the middle of the contiguous stretch at least this deep,
    /// relative to the peak depth, rather than the single deepest sample.
    pub nadir_depth_fraction: f64,
    pub atypical: AtypicalConfig,
}

impl Default for TypingConfig {
    fn default() -> Self {
        Self {
            prolonged_s: 180.0,
            sub3_prolonged_s: 90.0,
            abrupt_onset_to_nadir_s: 30.0,
            early_nadir_window_s: 15.0,
            late_onset_lag_s: 20.0,
            association_window_s: 60.0,
            max_onset_extrapolation_s: 30.0,
            nadir_depth_fraction: 0.85,
            atypical: AtypicalConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AtypicalConfig {
    pub shoulder_rise_bpm: f64,
    pub shoulder_window_s: f64,
    pub slow_return_s: f64,
    /// Recovery is taken to begin after the last sample this deep, relative
    /// to the peak depth.
    pub recovery_depth_fraction: f64,
    pub biphasic_depth_bpm: f64,
    pub biphasic_recovery_bpm: f64,
    pub min_oscillation_bpm: f64,
    pub nadir_depth_fraction: f64,
    pub min_nadir_span_s: f64,
    pub resumption_window_s: f64,
    pub lower_resumption_bpm: f64,
    pub elevated_bpm: f64,
    pub elevated_window_s: f64,
}

impl Default for AtypicalConfig {
    fn default() -> Self {
        Self {
            shoulder_rise_bpm: 5.0,
            shoulder_window_s: 20.0,
            slow_return_s: 30.0,
            recovery_depth_fraction: 0.8,
            biphasic_depth_bpm: 15.0,
            biphasic_recovery_bpm: 10.0,
            min_oscillation_bpm: 3.0,
            nadir_depth_fraction: 0.7,
            min_nadir_span_s: 20.0,
            resumption_window_s: 60.0,
            lower_resumption_bpm: 5.0,
            elevated_bpm: 10.0,
            elevated_window_s: 60.0,
        }
    }
}

fn idx(t: f64, rate: f64, n: usize) -> usize {
    ((t * rate).round().max(0.0) as usize).min(n)
}

/// Mean of valid samples in `[lo, hi)`, if at least half are valid.
fn window_mean(fhr: &CleanSignal, lo: usize, hi: usize) -> Option<f64> {
    if hi <= lo {
        return None;
    }
    let vals: Vec<f64> = (lo..hi)
        .filter(|&i| fhr.valid_mask[i])
        .map(|i| fhr.values[i])
        .collect();
    if vals.len() * 2 < hi - lo {
        return None;
    }
    dsp::mean(&vals)
}

fn window_max(fhr: &CleanSignal, lo: usize, hi: usize) -> Option<f64> {
    (lo..hi)
        .filter(|&i| fhr.valid_mask[i])
        .map(|i| fhr.values[i])
        .reduce(f64::max)
}

/// Estimated start of the descent: the line through the deadband exit and
/// the first half-depth sample, extended back to baseline.
fn estimate_onset_s(d: &Episode, fhr: &CleanSignal, base: f64, cfg: &TypingConfig) -> f64 {
    let rate = fhr.sample_rate_hz;
    let n = fhr.len();
    let exit = idx(d.onset_s, rate, n);
    let peak = ((d.extremum_s * rate).floor() as usize).min(n.saturating_sub(1));
    let depth = |i: usize| base - fhr.values[i];
    if exit >= peak || !fhr.valid_mask[exit] {
        return d.onset_s;
    }
    let half = (exit..=peak).find(|&i| fhr.valid_mask[i] && depth(i) >= 0.5 * d.amplitude);
    let Some(half) = half else {
        return d.onset_s;
    };
    let (d0, d1) = (depth(exit), depth(half));
    if half == exit || d1 <= d0 {
        return d.onset_s;
    }
    let slope = (d1 - d0) / (half - exit) as f64;
    let back_s = (d0 / slope) / rate;
    d.onset_s - back_s.clamp(0.0, cfg.max_onset_extrapolation_s)
}

/// Middle of the contiguous stretch around the extremum whose depth is at
/// least `fraction` of the peak. Flat-bottomed drops put the single deepest
/// sample anywhere along the bottom; this midpoint is stable.
fn nadir_time_s(d: &Episode, fhr: &CleanSignal, base: f64, fraction: f64) -> f64 {
    let rate = fhr.sample_rate_hz;
    let n = fhr.len();
    let peak = ((d.extremum_s * rate).floor() as usize).min(n.saturating_sub(1));
    let deep = |i: usize| fhr.valid_mask[i] && base - fhr.values[i] >= fraction * d.amplitude;
    let mut lo = peak;
    while lo > 0 && deep(lo - 1) {
        lo -= 1;
    }
    let mut hi = peak + 1;
    while hi < n && deep(hi) {
        hi += 1;
    }
    (lo + hi) as f64 / 2.0 / rate
}

/// The six atypical-feature detectors for an abrupt deceleration.
pub fn atypical_features(
    d: &Episode,
    fhr: &CleanSignal,
    baseline: &BaselineEstimate,
    cfg: &AtypicalConfig,
) -> BTreeSet<AtypicalFeature> {
    let mut found = BTreeSet::new();
    let Some(base) = baseline.value_bpm else {
        return found;
    };
    let rate = fhr.sample_rate_hz;
    let n = fhr.len();
    let on = idx(d.onset_s, rate, n);
    let off = idx(d.offset_s, rate, n);
    let secs = |s: f64| (s * rate).round() as usize;
    let depth = |i: usize| base - fhr.values[i];

    // Primary and secondary rise around the deceleration.
    let w = secs(cfg.shoulder_window_s);
    let pre = window_max(fhr, on.saturating_sub(w), on);
    let post = window_max(fhr, off, (off + w).min(n));
    let missing = |m: Option<f64>| m.is_some_and(|v| v - base < cfg.shoulder_rise_bpm);
    if missing(pre) || missing(post) {
        found.insert(AtypicalFeature::LossOfShoulder);
    }

    let deep = cfg.recovery_depth_fraction * d.amplitude;
    if let Some(last_deep) = (on..off)
        .rev()
        .find(|&i| fhr.valid_mask[i] && depth(i) >= deep)
    {
        let recovery_s = d.offset_s - (last_deep + 1) as f64 / rate;
        if recovery_s > cfg.slow_return_s {
            found.insert(AtypicalFeature::SlowReturn);
        }
    }

    let rw = secs(cfg.resumption_window_s);
    let post_mean = window_mean(fhr, off, (off + rw).min(n));
    let ew = secs(cfg.elevated_window_s);
    if window_mean(fhr, off, (off + ew).min(n)).is_some_and(|m| m - base >= cfg.elevated_bpm) {
        found.insert(AtypicalFeature::ProlongedElevatedBaseline);
    }
    if let (Some(pre_mean), Some(post_mean)) =
        (window_mean(fhr, on.saturating_sub(rw), on), post_mean)
    {
        if pre_mean - post_mean >= cfg.lower_resumption_bpm {
            found.insert(AtypicalFeature::LowerBaselineResumption);
        }
    }

    let depths: Vec<f64> = (on..off)
        .filter(|&i| fhr.valid_mask[i])
        .map(depth)
        .collect();
    if count_deep_troughs(&depths, cfg.biphasic_depth_bpm, cfg.biphasic_recovery_bpm) >= 2 {
        found.insert(AtypicalFeature::Biphasic);
    }

    if let Some(bw) = nadir_bandwidth(d, fhr, base, cfg) {
        if bw < cfg.min_oscillation_bpm {
            found.insert(AtypicalFeature::LossOfOscillation);
        }
    }
    found
}

/// Number of depth maxima at least `min_depth` deep that are separated by a
/// recovery of at least `recovery` (a zig-zag with that reversal size).
fn count_deep_troughs(depths: &[f64], min_depth: f64, recovery: f64) -> usize {
    let mut count = 0;
    let mut seeking_peak = true;
    let mut extreme = match depths.first() {
        Some(v) => *v,
        None => return 0,
    };
    for &v in &depths[1..] {
        if seeking_peak {
            if v > extreme {
                extreme = v;
            } else if v < extreme - recovery {
                if extreme >= min_depth {
                    count += 1;
                }
                seeking_peak = false;
                extreme = v;
            }
        } else if v < extreme {
            extreme = v;
        } else if v > extreme + recovery {
            seeking_peak = true;
            extreme = v;
        }
    }
    if seeking_peak && extreme >= min_depth {
        count += 1;
    }
    count
}

/// Oscillation bandwidth in the deepest part of the deceleration, after
/// removing a linear trend. `None` when that part is too short to judge.
fn nadir_bandwidth(d: &Episode, fhr: &CleanSignal, base: f64, cfg: &AtypicalConfig) -> Option<f64> {
    let rate = fhr.sample_rate_hz;
    let n = fhr.len();
    let peak = ((d.extremum_s * rate).floor() as usize).min(n - 1);
    let deep = |i: usize| {
        fhr.valid_mask[i] && base - fhr.values[i] >= cfg.nadir_depth_fraction * d.amplitude
    };
    let mut lo = peak;
    while lo > 0 && deep(lo - 1) {
        lo -= 1;
    }
    let mut hi = peak + 1;
    while hi < n && deep(hi) {
        hi += 1;
    }
    if ((hi - lo) as f64) / rate < cfg.min_nadir_span_s {
        return None;
    }
    let trim = (hi - lo) / 10;
    let seg = &fhr.values[lo + trim..hi - trim];
    let m = seg.len() as f64;
    let tx = (m - 1.0) / 2.0;
    let my = seg.iter().sum::<f64>() / m;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, y) in seg.iter().enumerate() {
        let dx = i as f64 - tx;
        sxy += dx * (y - my);
        sxx += dx * dx;
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let resid = seg
        .iter()
        .enumerate()
        .map(|(i, y)| y - my - slope * (i as f64 - tx));
    let (mn, mx) = resid.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), r| {
        (a.min(r), b.max(r))
    });
    Some(mx - mn)
}

fn associate<'a>(d: &Episode, contractions: &'a [Episode], window_s: f64) -> Option<&'a Episode> {
    let dist = |c: &&Episode| (c.extremum_s - d.extremum_s).abs();
    let overlapping = contractions
        .iter()
        .filter(|c| c.overlaps(d.onset_s, d.offset_s))
        .min_by(|a, b| dist(a).total_cmp(&dist(b)));
    overlapping.or_else(|| {
        contractions
            .iter()
            .filter(|c| (c.extremum_s - d.extremum_s).abs() <= window_s)
            .min_by(|a, b| dist(a).total_cmp(&dist(b)))
    })
}

/// Assigns exactly one type to each deceleration.
///
/// Order: longer than three minutes is prolonged; an abrupt descent is
/// variable (atypical when any atypical feature is present); a gradual one is
/// early or late by its timing against the associated contraction. Gradual
/// decelerations that fit neither pattern are prolonged when longer than
/// 90 s and late otherwise.
pub fn type_decelerations(
    decels: &[Episode],
    contractions: &[Episode],
    fhr: &CleanSignal,
    baseline: &BaselineEstimate,
    cfg: &TypingConfig,
) -> Vec<TypedDeceleration> {
    let base = baseline.value_bpm.unwrap_or(f64::NAN);
    decels
        .iter()
        .filter(|d| d.kind == EpisodeKind::Deceleration)
        .map(|d| {
            let onset_est = estimate_onset_s(d, fhr, base, cfg);
            let nadir_s = nadir_time_s(d, fhr, base, cfg.nadir_depth_fraction);
            let onset_to_nadir_s = (nadir_s - onset_est).max(0.0);
            let assoc = associate(d, contractions, cfg.association_window_s).copied();
            let overlapped_contractions = contractions
                .iter()
                .filter(|c| c.overlaps(d.onset_s, d.offset_s))
                .count();
            let mut atypical = BTreeSet::new();
            let mut sub3min = false;

            let decel_type = if d.duration_s > cfg.prolonged_s {
                DecelType::Prolonged
            } else if onset_to_nadir_s < cfg.abrupt_onset_to_nadir_s {
                atypical = atypical_features(d, fhr, baseline, &cfg.atypical);
                if atypical.is_empty() {
                    DecelType::Variable
                } else {
                    DecelType::AtypicalVariable
                }
            } else {
                let timed = assoc.and_then(|c| {
                    let early = (nadir_s - c.extremum_s).abs() <= cfg.early_nadir_window_s
                        && onset_est >= c.onset_s
                        && onset_est <= c.offset_s;
                    let late =
                        onset_est > c.onset_s + cfg.late_onset_lag_s && d.offset_s > c.offset_s;
                    if early {
                        Some(DecelType::Early)
                    } else if late {
                        Some(DecelType::Late)
                    } else {
                        None
                    }
                });
                match timed {
                    Some(t) => t,
                    None if d.duration_s > cfg.sub3_prolonged_s => {
                        sub3min = true;
                        DecelType::Prolonged
                    }
                    None => DecelType::Late,
                }
            };
            TypedDeceleration {
                episode: *d,
                decel_type,
                atypical_features: atypical,
                associated_contraction: assoc,
                onset_to_nadir_s,
                sub3min,
                overlapped_contractions,
            }
        })
        .collect()
}
