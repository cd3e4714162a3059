//! Sinusoidal and pseudosinusoidal pattern detection.

use serde::{Deserialize, Serialize};

use crate::dsp;
use crate::episodes::{Episode, EpisodeKind};
use crate::error::Result;
use crate::signal::{CleanSignal, MIN_DURATION_S};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SinusoidalStatus {
    None,
    Pseudosinusoidal,
    TrueSinusoidal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinusoidalFinding {
    pub status: SinusoidalStatus,
    pub span: Option<(f64, f64)>,
    pub amplitude_bpm: f64,
    pub frequency_cpm: f64,
    pub smoothness: f64,
    /// Combined second and third harmonic amplitude relative to the
    /// fundamental, over the reported span.
    pub harmonic_ratio: Option<f64>,
}

impl SinusoidalFinding {
    pub fn span_duration_s(&self) -> f64 {
        self.span.map_or(0.0, |(a, b)| b - a)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SinusoidalConfig {
    pub window_s: f64,
    /// Second scan length so that patterns shorter than `window_s` are not
    /// diluted by the surrounding trace.
    pub short_window_s: f64,
    pub step_s: f64,
    pub min_span_s: f64,
    pub pseudo_min_span_s: f64,
    pub min_amplitude_bpm: f64,
    pub max_amplitude_bpm: f64,
    pub min_frequency_cpm: f64,
    pub max_frequency_cpm: f64,
    pub smooth_threshold: f64,
    pub pseudo_smooth_threshold: f64,
    /// Variance share a single sinusoid must explain for a window to count.
    pub min_regularity: f64,
    /// Per-minute fit against the span-wide sinusoid used to trim the span.
    pub min_minute_fit: f64,
    pub max_harmonic_ratio: f64,
    pub crossing_hysteresis_bpm: f64,
    pub max_band_hz: f64,
    pub min_valid_fraction: f64,
    pub frequency_step_cpm: f64,
}

impl Default for SinusoidalConfig {
    fn default() -> Self {
        Self {
            window_s: 600.0,
            short_window_s: 240.0,
            step_s: 60.0,
            min_span_s: 600.0,
            pseudo_min_span_s: 240.0,
            min_amplitude_bpm: 5.0,
            max_amplitude_bpm: 15.0,
            min_frequency_cpm: 3.0,
            max_frequency_cpm: 5.0,
            smooth_threshold: 0.6,
            pseudo_smooth_threshold: 0.35,
            min_regularity: 0.5,
            min_minute_fit: 0.6,
            max_harmonic_ratio: 0.05,
            crossing_hysteresis_bpm: 1.0,
            max_band_hz: 0.5,
            min_valid_fraction: 0.9,
            frequency_step_cpm: 0.02,
        }
    }
}

/// Shape measures of one stretch of mean-removed signal.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Measures {
    amplitude: f64,
    frequency_cpm: f64,
    smoothness: f64,
    regularity: f64,
    fit_cpm: f64,
}

fn centered(fhr: &CleanSignal, lo: usize, hi: usize, min_valid: f64) -> Option<Vec<f64>> {
    let valid = fhr.valid_mask[lo..hi].iter().filter(|&&v| v).count();
    if (valid as f64) < min_valid * (hi - lo) as f64 || valid == 0 {
        return None;
    }
    let mean = (lo..hi)
        .filter(|&i| fhr.valid_mask[i])
        .map(|i| fhr.values[i])
        .sum::<f64>()
        / valid as f64;
    Some(
        (lo..hi)
            .map(|i| {
                if fhr.valid_mask[i] {
                    fhr.values[i] - mean
                } else {
                    0.0
                }
            })
            .collect(),
    )
}

/// Indices of upward crossings through `±h`.
fn crossing_indices(x: &[f64], h: f64) -> Vec<usize> {
    let mut low = None;
    let mut out = Vec::new();
    for (i, &v) in x.iter().enumerate() {
        if v < -h {
            low = Some(true);
        } else if v > h {
            if low == Some(true) {
                out.push(i);
            }
            low = Some(false);
        }
    }
    out
}

/// Mean half peak-to-trough over full cycles, and the cycle rate between the
/// first and last upward crossing.
fn amplitude_and_frequency(x: &[f64], rate: f64, h: f64) -> (f64, f64) {
    let ups = crossing_indices(x, h);
    if ups.len() < 2 {
        let (mn, mx) = min_max(x);
        return ((mx - mn) / 2.0, 0.0);
    }
    let halves: Vec<f64> = ups
        .windows(2)
        .map(|w| {
            let (mn, mx) = min_max(&x[w[0]..w[1]]);
            (mx - mn) / 2.0
        })
        .collect();
    let span_min = (ups[ups.len() - 1] - ups[0]) as f64 / rate / 60.0;
    (
        dsp::mean(&halves).unwrap_or(0.0),
        (ups.len() - 1) as f64 / span_min,
    )
}

fn min_max(x: &[f64]) -> (f64, f64) {
    x.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        })
}

/// Share of power below `max_band_hz` that falls in the configured
/// frequency band.
fn band_share(x: &[f64], rate: f64, cfg: &SinusoidalConfig) -> f64 {
    let len_s = x.len() as f64 / rate;
    let bin = |hz: f64| hz * len_s;
    let lo = bin(cfg.min_frequency_cpm / 60.0).ceil() as usize;
    let hi = bin(cfg.max_frequency_cpm / 60.0).floor() as usize;
    let top = (bin(cfg.max_band_hz).floor() as usize).min(x.len() / 2);
    if lo > hi || top < 1 {
        return 0.0;
    }
    let power = dsp::dft_power(x, 1, top);
    let total: f64 = power.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    power[lo - 1..hi.min(top)].iter().sum::<f64>() / total
}

/// Best single-sinusoid fit over the configured band: (cpm, explained share).
fn best_fit(x: &[f64], rate: f64, cfg: &SinusoidalConfig) -> (f64, f64) {
    let steps =
        ((cfg.max_frequency_cpm - cfg.min_frequency_cpm) / cfg.frequency_step_cpm).round() as usize;
    (0..=steps)
        .map(|k| {
            let cpm = cfg.min_frequency_cpm + k as f64 * cfg.frequency_step_cpm;
            (cpm, dsp::explained_fraction(x, cpm / 60.0 / rate))
        })
        .fold((0.0, 0.0), |best, c| if c.1 > best.1 { c } else { best })
}

fn measure(x: &[f64], rate: f64, cfg: &SinusoidalConfig) -> Measures {
    let (amplitude, frequency_cpm) = amplitude_and_frequency(x, rate, cfg.crossing_hysteresis_bpm);
    let (fit_cpm, regularity) = best_fit(x, rate, cfg);
    Measures {
        amplitude,
        frequency_cpm,
        smoothness: band_share(x, rate, cfg),
        regularity,
        fit_cpm,
    }
}

fn in_bounds(m: &Measures, cfg: &SinusoidalConfig) -> bool {
    (cfg.min_amplitude_bpm..=cfg.max_amplitude_bpm).contains(&m.amplitude)
        && (cfg.min_frequency_cpm..=cfg.max_frequency_cpm).contains(&m.frequency_cpm)
}

fn harmonic_ratio(x: &[f64], cycles_per_sample: f64) -> f64 {
    let amp2 = |k: f64| {
        let (a, b) = dsp::sinusoid_fit(x, k * cycles_per_sample);
        a * a + b * b
    };
    let fundamental = amp2(1.0);
    if fundamental <= 0.0 {
        return f64::INFINITY;
    }
    ((amp2(2.0) + amp2(3.0)) / fundamental).sqrt()
}

/// Scans 10-minute windows for sine-like oscillation and reports the
/// strongest pattern found.
///
/// A window qualifies when its amplitude and cycle rate are in range, its
/// band power share reaches the pseudosinusoidal threshold, and one sinusoid
/// explains most of its variance. Qualifying windows are merged, and the
/// merged span is trimmed to the longest run of minutes that still follow
/// the span-wide sinusoid. A true sinusoidal pattern needs a span of at least
/// `min_span_s`, a smooth and harmonic-free waveform, and no overlapping
/// acceleration.
pub fn detect_sinusoidal(
    fhr: &CleanSignal,
    accels: &[Episode],
    cfg: &SinusoidalConfig,
) -> Result<SinusoidalFinding> {
    fhr.check_duration(MIN_DURATION_S)?;
    let rate = fhr.sample_rate_hz;
    let n = fhr.len();
    let step = ((cfg.step_s * rate).round() as usize).max(1);

    let mut best: Option<Measures> = None;
    let mut qualifying: Vec<(usize, usize)> = Vec::new();
    for window_s in [cfg.window_s, cfg.short_window_s] {
        let win = ((window_s * rate).round() as usize).clamp(1, n);
        scan(fhr, win, step, cfg, &mut best, &mut qualifying);
    }

    let none = |m: Option<Measures>| SinusoidalFinding {
        status: SinusoidalStatus::None,
        span: None,
        amplitude_bpm: m.map_or(0.0, |m| m.amplitude),
        frequency_cpm: m.map_or(0.0, |m| m.frequency_cpm),
        smoothness: m.map_or(0.0, |m| m.smoothness),
        harmonic_ratio: None,
    };

    let mut candidates: Vec<SinusoidalFinding> = qualifying
        .iter()
        .filter_map(|&(lo, hi)| assess_span(fhr, lo, hi, accels, cfg))
        .collect();
    candidates.sort_by(|a, b| {
        rank(a.status)
            .cmp(&rank(b.status))
            .then(a.span_duration_s().total_cmp(&b.span_duration_s()))
    });
    Ok(candidates.pop().unwrap_or_else(|| none(best)))
}

/// Slides a window of `win` samples over the trace, keeping the most regular
/// window in `best` and appending merged qualifying spans.
fn scan(
    fhr: &CleanSignal,
    win: usize,
    step: usize,
    cfg: &SinusoidalConfig,
    best: &mut Option<Measures>,
    spans: &mut Vec<(usize, usize)>,
) {
    let rate = fhr.sample_rate_hz;
    let n = fhr.len();
    let mut starts: Vec<usize> = (0..=n - win).step_by(step).collect();
    if starts.last() != Some(&(n - win)) {
        starts.push(n - win);
    }
    let first = spans.len();
    for &s in &starts {
        let Some(x) = centered(fhr, s, s + win, cfg.min_valid_fraction) else {
            continue;
        };
        // Cheap gates first; the band power is only needed for candidates.
        let (amplitude, frequency_cpm) =
            amplitude_and_frequency(&x, rate, cfg.crossing_hysteresis_bpm);
        let (fit_cpm, regularity) = best_fit(&x, rate, cfg);
        let mut m = Measures {
            amplitude,
            frequency_cpm,
            smoothness: 0.0,
            regularity,
            fit_cpm,
        };
        let candidate = in_bounds(&m, cfg) && regularity >= cfg.min_regularity;
        let better = best.is_none_or(|b| m.regularity > b.regularity);
        if candidate || better {
            m.smoothness = band_share(&x, rate, cfg);
        }
        if better {
            *best = Some(m);
        }
        if candidate && m.smoothness >= cfg.pseudo_smooth_threshold {
            match spans.get_mut(first..).and_then(|s| s.last_mut()) {
                Some(last) if s <= last.1 => last.1 = s + win,
                _ => spans.push((s, s + win)),
            }
        }
    }
}

fn rank(s: SinusoidalStatus) -> u8 {
    match s {
        SinusoidalStatus::None => 0,
        SinusoidalStatus::Pseudosinusoidal => 1,
        SinusoidalStatus::TrueSinusoidal => 2,
    }
}

fn assess_span(
    fhr: &CleanSignal,
    lo: usize,
    hi: usize,
    accels: &[Episode],
    cfg: &SinusoidalConfig,
) -> Option<SinusoidalFinding> {
    let rate = fhr.sample_rate_hz;
    let x = centered(fhr, lo, hi, cfg.min_valid_fraction)?;
    let (cpm, _) = best_fit(&x, rate, cfg);
    let cps = cpm / 60.0 / rate;
    let (a, b) = dsp::sinusoid_fit(&x, cps);
    let w = 2.0 * std::f64::consts::PI * cps;

    // Minutes that still follow the span-wide sinusoid.
    let per_minute = (60.0 * rate).round() as usize;
    let fits: Vec<bool> = x
        .chunks(per_minute)
        .enumerate()
        .map(|(m, chunk)| {
            let mean = chunk.iter().sum::<f64>() / chunk.len() as f64;
            let total: f64 = chunk.iter().map(|v| (v - mean).powi(2)).sum();
            let resid: f64 = chunk
                .iter()
                .enumerate()
                .map(|(k, v)| {
                    let t = w * (m * per_minute + k) as f64;
                    (v - a * t.cos() - b * t.sin()).powi(2)
                })
                .sum();
            chunk.len() == per_minute && total > 0.0 && 1.0 - resid / total >= cfg.min_minute_fit
        })
        .collect();
    let (run_start, run_len) = longest_true_run(&fits);
    if run_len == 0 {
        return None;
    }
    let s_lo = lo + run_start * per_minute;
    let s_hi = s_lo + run_len * per_minute;
    let span = (s_lo as f64 / rate, s_hi as f64 / rate);
    let duration = span.1 - span.0;
    if duration < cfg.pseudo_min_span_s {
        return None;
    }

    let y = centered(fhr, s_lo, s_hi, cfg.min_valid_fraction)?;
    let m = measure(&y, rate, cfg);
    let ratio = harmonic_ratio(&y, m.fit_cpm / 60.0 / rate);
    let accel_overlap = accels
        .iter()
        .any(|e| e.kind == EpisodeKind::Acceleration && e.overlaps(span.0, span.1));
    let bounds = in_bounds(&m, cfg);
    let status = if bounds
        && duration >= cfg.min_span_s
        && m.smoothness >= cfg.smooth_threshold
        && ratio <= cfg.max_harmonic_ratio
        && !accel_overlap
    {
        SinusoidalStatus::TrueSinusoidal
    } else if bounds
        && m.smoothness >= cfg.pseudo_smooth_threshold
        && (duration < cfg.min_span_s
            || m.smoothness < cfg.smooth_threshold
            || ratio > cfg.max_harmonic_ratio)
    {
        SinusoidalStatus::Pseudosinusoidal
    } else {
        SinusoidalStatus::None
    };
    Some(SinusoidalFinding {
        status,
        span: (status != SinusoidalStatus::None).then_some(span),
        amplitude_bpm: m.amplitude,
        frequency_cpm: m.frequency_cpm,
        smoothness: m.smoothness,
        harmonic_ratio: Some(ratio),
    })
}

fn longest_true_run(flags: &[bool]) -> (usize, usize) {
    let (mut best, mut cur_start, mut cur) = ((0, 0), 0, 0);
    for (i, &f) in flags.iter().enumerate() {
        if f {
            if cur == 0 {
                cur_start = i;
            }
            cur += 1;
            if cur > best.1 {
                best = (cur_start, cur);
            }
        } else {
            cur = 0;
        }
    }
    best
}
