//! FHR baseline and per-minute variability.

use serde::{Deserialize, Serialize};

use crate::dsp;
use crate::episodes::Episode;
use crate::error::{CtgError, Result};
use crate::signal::{CleanSignal, MIN_DURATION_S};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    /// Samples further than this from the running estimate are treated as
    /// excursions and left out of the mean.
    pub exclusion_band_bpm: f64,
    pub max_iter: usize,
    /// Iteration stops once the estimate moves less than this.
    pub tolerance_bpm: f64,
    /// Included signal needed for the estimate to count as determinable.
    pub min_coverage_s: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            exclusion_band_bpm: 8.0,
            max_iter: 5,
            tolerance_bpm: 0.5,
            min_coverage_s: MIN_DURATION_S,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineEstimate {
    pub value_bpm: Option<f64>,
    pub determinable: bool,
    pub coverage_s: f64,
    pub iterations: usize,
}

/// Iterative trimmed mean seeded at the 1-bpm histogram mode.
pub fn estimate_baseline(fhr: &CleanSignal, cfg: &BaselineConfig) -> Result<BaselineEstimate> {
    fhr.check_duration(MIN_DURATION_S)?;
    let values = fhr.valid_values();
    if values.is_empty() {
        return Err(CtgError::AllGaps);
    }

    let mut estimate = histogram_mode(&values);
    let mut included = 0usize;
    let mut iterations = 0;
    for iter in 1..=cfg.max_iter.max(1) {
        iterations = iter;
        let (sum, count) = values
            .iter()
            .filter(|v| (**v - estimate).abs() <= cfg.exclusion_band_bpm)
            .fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
        included = count;
        if count == 0 {
            break;
        }
        let next = sum / count as f64;
        let shift = (next - estimate).abs();
        estimate = next;
        if shift < cfg.tolerance_bpm {
            break;
        }
    }

    let coverage_s = included as f64 / fhr.sample_rate_hz;
    let determinable = included > 0 && coverage_s >= cfg.min_coverage_s;
    Ok(BaselineEstimate {
        value_bpm: determinable.then_some(estimate),
        determinable,
        coverage_s,
        iterations,
    })
}

/// Center of the most populated 1-bpm bin; ties go to the lowest bin. Bins
/// start at the smallest value so that shifting the signal shifts the result.
fn histogram_mode(values: &[f64]) -> f64 {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mut bins = std::collections::BTreeMap::<u64, usize>::new();
    for v in values {
        *bins.entry((v - lo).floor() as u64).or_default() += 1;
    }
    let mut best = (0u64, 0usize);
    for (bin, count) in bins {
        if count > best.1 {
            best = (bin, count);
        }
    }
    lo + best.0 as f64 + 0.5
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VariabilityConfig {
    /// Minimum share of usable samples for a minute to be assessed.
    pub min_minute_coverage: f64,
    /// Hysteresis around the minute mean when counting oscillations.
    pub crossing_hysteresis_bpm: f64,
    /// Samples this close to baseline end the exclusion zone around an episode.
    pub episode_margin_bpm: f64,
    pub max_episode_margin_s: f64,
    /// Fixed padding beyond the displaced stretch, covering shoulders and
    /// overshoot on the other side of baseline.
    pub episode_guard_s: f64,
}

impl Default for VariabilityConfig {
    fn default() -> Self {
        Self {
            min_minute_coverage: 0.5,
            crossing_hysteresis_bpm: 1.0,
            episode_margin_bpm: 1.0,
            max_episode_margin_s: 30.0,
            episode_guard_s: 15.0,
        }
    }
}

pub const LOW_VARIABILITY_BPM: f64 = 5.0;
pub const HIGH_VARIABILITY_BPM: f64 = 25.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinuteVariability {
    pub minute: usize,
    /// Bandwidth (max − min) of the smoothed signal, bpm.
    pub amplitude_bpm: f64,
    pub oscillations_per_min: u32,
    /// False when too much of the minute is missing or inside an episode.
    pub assessable: bool,
}

impl MinuteVariability {
    pub fn is_low(&self) -> bool {
        self.assessable && self.amplitude_bpm < LOW_VARIABILITY_BPM
    }

    pub fn is_high(&self) -> bool {
        self.assessable && self.amplitude_bpm > HIGH_VARIABILITY_BPM
    }

    pub fn is_normal_amplitude(&self) -> bool {
        self.assessable
            && (LOW_VARIABILITY_BPM..=HIGH_VARIABILITY_BPM).contains(&self.amplitude_bpm)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariabilityProfile {
    pub minutes: Vec<MinuteVariability>,
    pub low_var_longest_run_s: f64,
    pub high_var_longest_run_s: f64,
    /// Share of assessed minutes whose bandwidth is within 5–25 bpm.
    pub normal_fraction: f64,
    /// Median oscillation count over the normal-bandwidth minutes.
    pub median_oscillations_per_min: Option<f64>,
}

impl VariabilityProfile {
    /// Builds the summary fields from per-minute entries. Unassessable minutes
    /// neither extend nor break a run.
    pub fn from_minutes(minutes: Vec<MinuteVariability>) -> Self {
        let low = longest_run(&minutes, MinuteVariability::is_low);
        let high = longest_run(&minutes, MinuteVariability::is_high);
        let assessed = minutes.iter().filter(|m| m.assessable).count();
        let normal: Vec<f64> = minutes
            .iter()
            .filter(|m| m.is_normal_amplitude())
            .map(|m| f64::from(m.oscillations_per_min))
            .collect();
        let normal_fraction = if assessed == 0 {
            0.0
        } else {
            normal.len() as f64 / assessed as f64
        };
        Self {
            low_var_longest_run_s: low as f64 * 60.0,
            high_var_longest_run_s: high as f64 * 60.0,
            normal_fraction,
            median_oscillations_per_min: dsp::median(&normal),
            minutes,
        }
    }
}

/// Longest stretch, in minutes, from the first to the last minute matching
/// `pred`. Unassessable minutes neither break a run nor end it, but they
/// count toward its length when they fall inside it.
fn longest_run(minutes: &[MinuteVariability], pred: fn(&MinuteVariability) -> bool) -> usize {
    let (mut best, mut start) = (0, None);
    for (i, m) in minutes.iter().enumerate() {
        if !m.assessable {
            continue;
        }
        if pred(m) {
            let s = *start.get_or_insert(i);
            best = best.max(i - s + 1);
        } else {
            start = None;
        }
    }
    best
}

/// Per-minute bandwidth and oscillation count.
///
/// Samples inside detected accelerations and decelerations (widened until the
/// signal is back near baseline) are left out, so episodes do not read as
/// variability. With an indeterminable baseline nothing is excluded.
pub fn variability_profile(
    fhr: &CleanSignal,
    baseline: &BaselineEstimate,
    episodes: &[Episode],
    cfg: &VariabilityConfig,
) -> Result<VariabilityProfile> {
    fhr.check_duration(MIN_DURATION_S)?;
    let rate = fhr.sample_rate_hz;
    let n = fhr.len();
    let mut usable = fhr.valid_mask.clone();
    if let Some(base) = baseline.value_bpm {
        for ep in episodes {
            let (lo, hi) = exclusion_zone(fhr, base, ep, cfg);
            usable[lo..hi].iter_mut().for_each(|u| *u = false);
        }
    }

    let per_minute = (60.0 * rate).round() as usize;
    let count = (fhr.duration_s() / 60.0).floor() as usize;
    let lookback = (30.0 * rate).round() as usize;
    let mut minutes = Vec::with_capacity(count);
    for m in 0..count {
        let start = m * per_minute;
        let end = ((m + 1) * per_minute).min(n);
        let samples: Vec<f64> = (start..end)
            .filter(|&i| usable[i])
            .map(|i| fhr.values[i])
            .collect();
        let assessable = samples.len() as f64 >= cfg.min_minute_coverage * (end - start) as f64;
        if samples.is_empty() {
            minutes.push(MinuteVariability {
                minute: m,
                amplitude_bpm: 0.0,
                oscillations_per_min: 0,
                assessable: false,
            });
            continue;
        }
        let mn = samples.iter().cloned().fold(f64::INFINITY, f64::min);
        let mx = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let center = dsp::mean(&samples).unwrap_or(0.0);
        let h = cfg.crossing_hysteresis_bpm;
        // Seed the crossing state from just before the minute so a crossing
        // exactly at the boundary is counted once.
        let initial_low = (start.saturating_sub(lookback)..start)
            .rev()
            .filter(|&i| usable[i])
            .map(|i| fhr.values[i])
            .find(|v| (v - center).abs() > h)
            .map(|v| v < center)
            .or_else(|| ((samples[0] - center).abs() <= h).then_some(true));
        let crossings = dsp::upward_crossings(&samples, center, h, initial_low);
        minutes.push(MinuteVariability {
            minute: m,
            amplitude_bpm: mx - mn,
            oscillations_per_min: crossings as u32,
            assessable,
        });
    }
    Ok(VariabilityProfile::from_minutes(minutes))
}

/// Index range covered by an episode, widened on both sides while the signal
/// is still displaced toward the episode's side of baseline.
pub(crate) fn exclusion_zone(
    fhr: &CleanSignal,
    base: f64,
    ep: &Episode,
    cfg: &VariabilityConfig,
) -> (usize, usize) {
    let rate = fhr.sample_rate_hz;
    let n = fhr.len();
    let sign = ep.kind.sign();
    let max_walk = (cfg.max_episode_margin_s * rate).round() as usize;
    let displaced =
        |i: usize| fhr.valid_mask[i] && sign * (fhr.values[i] - base) > cfg.episode_margin_bpm;

    let mut lo = ((ep.onset_s * rate).round() as usize).min(n);
    let floor = lo.saturating_sub(max_walk);
    while lo > floor && displaced(lo - 1) {
        lo -= 1;
    }
    let mut hi = ((ep.offset_s * rate).round() as usize).min(n);
    let ceil = (hi + max_walk).min(n);
    while hi < ceil && displaced(hi) {
        hi += 1;
    }
    let guard = (cfg.episode_guard_s * rate).round() as usize;
    (lo.saturating_sub(guard), (hi + guard).min(n))
}
