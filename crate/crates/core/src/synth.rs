//! Parametric trace generator with ground truth derived from the parameters.
//!
//! FHR is built as baseline + variability + episode shapes + noise, UC as
//! resting tone + Gaussian contractions + noise. [`GroundTruth`] is computed
//! from the [`Scenario`] alone by applying the rule tables to the nominal
//! parameters; it never looks at the generated samples.

use std::f64::consts::PI;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::baseline::{MinuteVariability, VariabilityProfile};
use crate::classify::{
    aggregate_classes, baseline_class, deceleration_class, variability_class, Feature, FeatureClass,
};
use crate::episodes::{AtypicalFeature, DecelType, Episode, EpisodeKind, TypedDeceleration};
use crate::error::{CtgError, Result};
use crate::signal::CtgRecord;
use crate::sinusoidal::SinusoidalStatus;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpisodeShape {
    #[default]
    Trapezoid,
    RaisedCosine,
    Biphasic,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Waveform {
    #[default]
    Sine,
    Triangle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariabilitySpec {
    /// Peak-to-peak bandwidth.
    pub amplitude_bpm: f64,
    pub cycles_per_min: f64,
    /// Stretches that override the trace-wide values.
    #[serde(default)]
    pub segments: Vec<VariabilitySegment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariabilitySegment {
    pub start_s: f64,
    pub end_s: f64,
    pub amplitude_bpm: f64,
    pub cycles_per_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccelSpec {
    pub onset_s: f64,
    pub duration_s: f64,
    pub amplitude_bpm: f64,
    #[serde(default)]
    pub shape: EpisodeShape,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecelSpec {
    pub onset_s: f64,
    pub duration_s: f64,
    pub amplitude_bpm: f64,
    pub onset_to_nadir_s: f64,
    /// Defaults to a trapezoid for abrupt drops and a raised cosine otherwise.
    #[serde(default)]
    pub shape: Option<EpisodeShape>,
    /// Adds a contraction peaking this long before the nadir.
    #[serde(default)]
    pub lag_to_contraction_s: Option<f64>,
    #[serde(default = "default_contraction_width")]
    pub contraction_width_s: f64,
    #[serde(default = "default_contraction_amplitude")]
    pub contraction_amplitude: f64,
    /// Brief rises just before and after the drop. Defaults to on for
    /// abrupt shapes.
    #[serde(default)]
    pub shoulders: Option<bool>,
    #[serde(default = "default_shoulder_bpm")]
    pub shoulder_bpm: f64,
    /// Level change applied from the end of the drop to the end of the trace.
    #[serde(default)]
    pub resume_offset_bpm: f64,
    /// Length of the return to baseline. Defaults to the descent time for
    /// abrupt shapes and to the rest of the episode for raised cosines.
    #[serde(default)]
    pub recovery_s: Option<f64>,
    /// Partial recovery between the two troughs of a biphasic drop.
    #[serde(default = "default_partial_recovery")]
    pub partial_recovery_bpm: f64,
}

fn default_contraction_width() -> f64 {
    80.0
}
fn default_contraction_amplitude() -> f64 {
    50.0
}
fn default_shoulder_bpm() -> f64 {
    6.0
}
fn default_partial_recovery() -> f64 {
    14.0
}
fn default_duration() -> f64 {
    1200.0
}
fn default_rate() -> f64 {
    4.0
}
fn default_tone() -> f64 {
    10.0
}

/// Biphasic knot timings after the first descent: hold, partial rise, hold,
/// second descent.
const BIPHASIC_HOLD_S: f64 = 4.0;
const BIPHASIC_SWING_S: f64 = 2.0;
const SHOULDER_PLATEAU_S: f64 = 8.0;
const SHOULDER_RAMP_S: f64 = 2.0;

impl DecelSpec {
    /// A drop with the remaining fields at their defaults.
    pub fn new(onset_s: f64, duration_s: f64, amplitude_bpm: f64, onset_to_nadir_s: f64) -> Self {
        Self {
            onset_s,
            duration_s,
            amplitude_bpm,
            onset_to_nadir_s,
            shape: None,
            lag_to_contraction_s: None,
            contraction_width_s: default_contraction_width(),
            contraction_amplitude: default_contraction_amplitude(),
            shoulders: None,
            shoulder_bpm: default_shoulder_bpm(),
            resume_offset_bpm: 0.0,
            recovery_s: None,
            partial_recovery_bpm: default_partial_recovery(),
        }
    }

    pub fn shape(&self) -> EpisodeShape {
        self.shape.unwrap_or(if self.onset_to_nadir_s < 30.0 {
            EpisodeShape::Trapezoid
        } else {
            EpisodeShape::RaisedCosine
        })
    }

    pub fn has_shoulders(&self) -> bool {
        self.shoulders.unwrap_or(matches!(
            self.shape(),
            EpisodeShape::Trapezoid | EpisodeShape::Biphasic
        ))
    }

    pub fn recovery(&self) -> f64 {
        self.recovery_s.unwrap_or(match self.shape() {
            EpisodeShape::RaisedCosine => self.duration_s - self.onset_to_nadir_s,
            _ => self.onset_to_nadir_s,
        })
    }

    pub fn nadir_s(&self) -> f64 {
        self.onset_s + self.onset_to_nadir_s
    }

    pub fn end_s(&self) -> f64 {
        self.onset_s + self.duration_s
    }

    fn plateau(&self) -> f64 {
        self.raw_plateau().max(0.0)
    }

    fn raw_plateau(&self) -> f64 {
        self.duration_s - self.onset_to_nadir_s - self.recovery()
    }

    /// Normalized depth in `[0, 1]` at `t` seconds after onset.
    fn depth(&self, t: f64) -> f64 {
        if t < 0.0 || t >= self.duration_s {
            return 0.0;
        }
        let (otn, rec, plat) = (self.onset_to_nadir_s, self.recovery(), self.plateau());
        match self.shape() {
            EpisodeShape::Trapezoid => {
                if t < otn {
                    t / otn
                } else if t < otn + plat {
                    1.0
                } else {
                    1.0 - (t - otn - plat) / rec
                }
            }
            EpisodeShape::RaisedCosine => {
                if t < otn {
                    (1.0 - (PI * t / otn).cos()) / 2.0
                } else if t < otn + plat {
                    1.0
                } else {
                    (1.0 + (PI * (t - otn - plat) / rec).cos()) / 2.0
                }
            }
            EpisodeShape::Biphasic => {
                let r = 1.0 - self.partial_recovery_bpm / self.amplitude_bpm;
                let knots = [
                    (0.0, 0.0),
                    (otn, 1.0),
                    (otn + BIPHASIC_HOLD_S, 1.0),
                    (otn + BIPHASIC_HOLD_S + BIPHASIC_SWING_S, r),
                    (otn + 2.0 * BIPHASIC_HOLD_S + BIPHASIC_SWING_S, r),
                    (otn + 2.0 * BIPHASIC_HOLD_S + 2.0 * BIPHASIC_SWING_S, 1.0),
                    (self.duration_s - rec, 1.0),
                    (self.duration_s, 0.0),
                ];
                piecewise_linear(&knots, t)
            }
        }
    }

    /// Time of the deepest point used for typing: the middle of the bottom.
    fn nominal_nadir_s(&self) -> f64 {
        match self.shape() {
            EpisodeShape::Biphasic => self.nadir_s() + BIPHASIC_HOLD_S / 2.0,
            _ => self.nadir_s() + self.plateau() / 2.0,
        }
    }

    fn contraction(&self) -> Option<ContractionSpec> {
        self.lag_to_contraction_s.map(|lag| ContractionSpec {
            peak_s: self.nadir_s() - lag,
            width_s: self.contraction_width_s,
            amplitude: self.contraction_amplitude,
        })
    }
}

fn piecewise_linear(knots: &[(f64, f64)], t: f64) -> f64 {
    for w in knots.windows(2) {
        let ((t0, v0), (t1, v1)) = (w[0], w[1]);
        if t >= t0 && t < t1 {
            return if t1 > t0 {
                v0 + (v1 - v0) * (t - t0) / (t1 - t0)
            } else {
                v1
            };
        }
    }
    0.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionSpec {
    pub peak_s: f64,
    /// Full width at half maximum.
    pub width_s: f64,
    /// Rise above resting tone.
    pub amplitude: f64,
}

impl ContractionSpec {
    fn sigma(&self) -> f64 {
        self.width_s / (8.0 * 2f64.ln()).sqrt()
    }

    /// Span above `tone + boundary`.
    fn span(&self, boundary: f64) -> (f64, f64) {
        let half = if self.amplitude > boundary {
            self.sigma() * (2.0 * (self.amplitude / boundary).ln()).sqrt()
        } else {
            0.0
        };
        (self.peak_s - half, self.peak_s + half)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinusoidSpec {
    /// Peak deviation from baseline.
    pub amplitude_bpm: f64,
    pub cpm: f64,
    pub start_s: f64,
    pub duration_s: f64,
    #[serde(default)]
    pub waveform: Waveform,
}

impl SinusoidSpec {
    fn contains(&self, t: f64) -> bool {
        t >= self.start_s && t < self.start_s + self.duration_s
    }

    fn value(&self, t: f64) -> f64 {
        let phase = (t - self.start_s) * self.cpm / 60.0;
        let w = match self.waveform {
            Waveform::Sine => (2.0 * PI * phase).sin(),
            Waveform::Triangle => {
                let p = phase.rem_euclid(1.0);
                if p < 0.25 {
                    4.0 * p
                } else if p < 0.75 {
                    2.0 - 4.0 * p
                } else {
                    4.0 * p - 4.0
                }
            }
        };
        self.amplitude_bpm * w
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default)]
    pub id: Option<String>,
    #[serde(default = "default_duration")]
    pub duration_s: f64,
    #[serde(default = "default_rate")]
    pub sample_rate_hz: f64,
    pub baseline_bpm: f64,
    pub variability: VariabilitySpec,
    #[serde(default)]
    pub accelerations: Vec<AccelSpec>,
    #[serde(default)]
    pub decelerations: Vec<DecelSpec>,
    #[serde(default)]
    pub contractions: Vec<ContractionSpec>,
    #[serde(default)]
    pub sinusoidal: Option<SinusoidSpec>,
    #[serde(default)]
    pub noise_bpm: f64,
    /// Seeds the noise.
    #[serde(default)]
    pub seed: u64,
    /// Seeds the cycle-to-cycle jitter of the variability waveform.
    #[serde(default)]
    pub pattern_seed: u64,
    #[serde(default = "default_tone")]
    pub uc_tone: f64,
}

impl Scenario {
    /// A quiet trace: given baseline and variability, nothing else.
    pub fn quiet(baseline_bpm: f64, amplitude_bpm: f64, cycles_per_min: f64) -> Self {
        Self {
            id: None,
            duration_s: default_duration(),
            sample_rate_hz: default_rate(),
            baseline_bpm,
            variability: VariabilitySpec {
                amplitude_bpm,
                cycles_per_min,
                segments: Vec::new(),
            },
            accelerations: Vec::new(),
            decelerations: Vec::new(),
            contractions: Vec::new(),
            sinusoidal: None,
            noise_bpm: 0.0,
            seed: 0,
            pattern_seed: 0,
            uc_tone: default_tone(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn record_id(&self) -> String {
        self.id
            .clone()
            .unwrap_or_else(|| format!("synth-{}", self.seed))
    }

    /// All contractions, including those implied by deceleration timing.
    pub fn all_contractions(&self) -> Vec<ContractionSpec> {
        let mut all = self.contractions.clone();
        all.extend(self.decelerations.iter().filter_map(DecelSpec::contraction));
        all.sort_by(|a, b| a.peak_s.total_cmp(&b.peak_s));
        all
    }

    /// Variability bandwidth and rate in effect at `t`.
    fn variability_at(&self, t: f64) -> (f64, f64) {
        self.variability
            .segments
            .iter()
            .rev()
            .find(|s| t >= s.start_s && t < s.end_s)
            .map_or(
                (
                    self.variability.amplitude_bpm,
                    self.variability.cycles_per_min,
                ),
                |s| (s.amplitude_bpm, s.cycles_per_min),
            )
    }

    pub fn validate(&self) -> Result<()> {
        let range = |what: &str, ok: bool| {
            if ok {
                Ok(())
            } else {
                Err(CtgError::OutOfRange(what.to_string()))
            }
        };
        let t_ok = |t: f64| (0.0..=self.duration_s).contains(&t);
        range("duration_s must be positive", self.duration_s > 0.0)?;
        range("sample_rate_hz must be positive", self.sample_rate_hz > 0.0)?;
        range(
            "baseline_bpm outside 30-250",
            (30.0..=250.0).contains(&self.baseline_bpm),
        )?;
        range("noise_bpm must be non-negative", self.noise_bpm >= 0.0)?;
        range(
            "uc_tone outside 0-100",
            (0.0..=100.0).contains(&self.uc_tone),
        )?;
        let var_ok = |a: f64, c: f64| a >= 0.0 && c > 0.0;
        range(
            "variability amplitude/rate",
            var_ok(
                self.variability.amplitude_bpm,
                self.variability.cycles_per_min,
            ),
        )?;
        for s in &self.variability.segments {
            range(
                "variability segment",
                var_ok(s.amplitude_bpm, s.cycles_per_min) && s.start_s < s.end_s,
            )?;
        }
        for a in &self.accelerations {
            range(
                "acceleration timing",
                a.duration_s > 0.0
                    && a.amplitude_bpm > 0.0
                    && t_ok(a.onset_s)
                    && t_ok(a.onset_s + a.duration_s),
            )?;
        }
        for d in &self.decelerations {
            range(
                "deceleration timing",
                d.duration_s > 0.0 && d.amplitude_bpm > 0.0 && t_ok(d.onset_s) && t_ok(d.end_s()),
            )?;
            range(
                "deceleration onset_to_nadir_s",
                d.onset_to_nadir_s > 0.0 && d.onset_to_nadir_s < d.duration_s,
            )?;
            range(
                "deceleration recovery",
                // Tolerates rounding when duration is built as descent + recovery.
                d.recovery() > 0.0 && d.raw_plateau() >= -1e-9,
            )?;
            if d.shape() == EpisodeShape::Biphasic {
                range(
                    "biphasic deceleration too short for both troughs",
                    d.plateau() >= 2.0 * BIPHASIC_HOLD_S + 2.0 * BIPHASIC_SWING_S,
                )?;
                range(
                    "biphasic partial recovery",
                    d.partial_recovery_bpm > 0.0 && d.partial_recovery_bpm < d.amplitude_bpm,
                )?;
            }
        }
        for c in self.all_contractions() {
            range(
                "contraction",
                c.width_s > 0.0 && c.amplitude >= 0.0 && t_ok(c.peak_s),
            )?;
        }
        if let Some(s) = &self.sinusoidal {
            range(
                "sinusoid",
                s.amplitude_bpm >= 0.0
                    && s.cpm > 0.0
                    && t_ok(s.start_s)
                    && t_ok(s.start_s + s.duration_s),
            )?;
        }

        let overlap = |kind: &str, mut spans: Vec<(f64, f64)>| {
            spans.sort_by(|a, b| a.0.total_cmp(&b.0));
            match spans.windows(2).find(|w| w[1].0 < w[0].1) {
                Some(w) => Err(CtgError::Overlap(format!(
                    "{kind} at {:.0}-{:.0} s and {:.0}-{:.0} s",
                    w[0].0, w[0].1, w[1].0, w[1].1
                ))),
                None => Ok(()),
            }
        };
        overlap(
            "accelerations",
            self.accelerations
                .iter()
                .map(|a| (a.onset_s, a.onset_s + a.duration_s))
                .collect(),
        )?;
        overlap(
            "decelerations",
            self.decelerations
                .iter()
                .map(|d| (d.onset_s, d.end_s()))
                .collect(),
        )?;
        overlap(
            "contractions",
            self.all_contractions()
                .iter()
                .map(|c| (c.peak_s - c.width_s / 2.0, c.peak_s + c.width_s / 2.0))
                .collect(),
        )?;
        Ok(())
    }
}

fn accel_shape(a: &AccelSpec, t: f64) -> f64 {
    let t = t - a.onset_s;
    if t < 0.0 || t >= a.duration_s {
        return 0.0;
    }
    match a.shape {
        EpisodeShape::RaisedCosine => (1.0 - (2.0 * PI * t / a.duration_s).cos()) / 2.0,
        _ => {
            let ramp = (a.duration_s / 4.0).min(3.0);
            (t / ramp).min((a.duration_s - t) / ramp).min(1.0)
        }
    }
}

fn shoulder_shape(d: &DecelSpec, t: f64) -> f64 {
    let bump = |start: f64| {
        piecewise_linear(
            &[
                (start, 0.0),
                (start + SHOULDER_RAMP_S, 1.0),
                (start + SHOULDER_RAMP_S + SHOULDER_PLATEAU_S, 1.0),
                (start + 2.0 * SHOULDER_RAMP_S + SHOULDER_PLATEAU_S, 0.0),
            ],
            t,
        )
    };
    let len = 2.0 * SHOULDER_RAMP_S + SHOULDER_PLATEAU_S;
    bump(d.onset_s - len) + bump(d.end_s())
}

/// Cycle boundaries of the variability waveform: start time, period, and
/// relative amplitude of each cycle.
fn variability_cycles(s: &Scenario) -> Vec<(f64, f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(s.pattern_seed);
    let mut cycles = Vec::new();
    let mut t = 0.0;
    while t < s.duration_s {
        let (_, cpm) = s.variability_at(t);
        let period = 60.0 / cpm * rng.random_range(-0.45..0.45f64).exp();
        let rel = rng.random_range(0.9..1.0);
        cycles.push((t, period, rel));
        t += period;
    }
    cycles
}

/// Builds the record and its ground truth.
pub fn generate(s: &Scenario) -> Result<(CtgRecord, GroundTruth)> {
    s.validate()?;
    let rate = s.sample_rate_hz;
    let n = (s.duration_s * rate).round() as usize;
    let cycles = variability_cycles(s);
    let contractions = s.all_contractions();
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let noise =
        Normal::new(0.0, s.noise_bpm.max(0.0)).map_err(|e| CtgError::OutOfRange(e.to_string()))?;
    let uc_noise = Normal::new(0.0, s.noise_bpm.max(0.0) / 2.0)
        .map_err(|e| CtgError::OutOfRange(e.to_string()))?;

    let mut fhr = Vec::with_capacity(n);
    let mut uc = Vec::with_capacity(n);
    let mut k = 0;
    for i in 0..n {
        let t = i as f64 / rate;
        while k + 1 < cycles.len() && cycles[k + 1].0 <= t {
            k += 1;
        }
        let (c0, period, rel) = cycles[k];
        let (bw, _) = s.variability_at(t);
        let mut var = bw / 2.0 * rel * (2.0 * PI * (t - c0) / period).sin();

        let mut weight: f64 = 0.0;
        let mut shape = 0.0;
        for a in &s.accelerations {
            let w = accel_shape(a, t);
            weight = weight.max(w);
            shape += a.amplitude_bpm * w;
        }
        for d in &s.decelerations {
            let w = d.depth(t - d.onset_s);
            weight = weight.max(w);
            shape -= d.amplitude_bpm * w;
            if d.has_shoulders() {
                shape += d.shoulder_bpm * shoulder_shape(d, t);
            }
            if t >= d.end_s() {
                shape += d.resume_offset_bpm;
            }
        }
        var *= 1.0 - 0.5 * weight;
        if let Some(sin) = s.sinusoidal.as_ref().filter(|sin| sin.contains(t)) {
            var = sin.value(t);
        }
        let mut v = s.baseline_bpm + var + shape;
        if s.noise_bpm > 0.0 {
            v += noise.sample(&mut rng);
        }
        fhr.push(v);

        let mut u = s.uc_tone;
        for c in &contractions {
            let z = (t - c.peak_s) / c.sigma();
            u += c.amplitude * (-0.5 * z * z).exp();
        }
        if s.noise_bpm > 0.0 {
            u += uc_noise.sample(&mut rng);
        }
        uc.push(u);
    }
    let rec = CtgRecord::new(s.record_id(), rate, fhr, uc, None)?;
    Ok((rec, GroundTruth::from_scenario(s)))
}

/// Labels and episodes implied by a scenario's parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub baseline_determinable: bool,
    /// Nominal share of the trace within the baseline exclusion band.
    pub baseline_coverage_s: f64,
    pub features: Vec<(Feature, FeatureClass)>,
    pub overall: FeatureClass,
    pub accelerations: Vec<Episode>,
    pub decelerations: Vec<(Episode, DecelType)>,
    pub contractions: Vec<Episode>,
    pub sinusoidal: SinusoidalStatus,
}

/// Boundary used for nominal contraction spans (matches the detector).
const CONTRACTION_BOUNDARY: f64 = 5.0;
const BASELINE_BAND_BPM: f64 = 8.0;
const DEADBAND_BPM: f64 = 5.0;

impl GroundTruth {
    pub fn class_of(&self, feature: Feature) -> FeatureClass {
        self.features
            .iter()
            .find(|(f, _)| *f == feature)
            .map(|(_, c)| *c)
            .unwrap_or(FeatureClass::Normal)
    }

    pub fn from_scenario(s: &Scenario) -> Self {
        let accelerations: Vec<Episode> = s
            .accelerations
            .iter()
            .map(|a| Episode {
                kind: EpisodeKind::Acceleration,
                onset_s: a.onset_s,
                extremum_s: a.onset_s + a.duration_s / 2.0,
                offset_s: a.onset_s + a.duration_s,
                amplitude: a.amplitude_bpm,
                duration_s: a.duration_s,
            })
            .collect();
        let contractions: Vec<Episode> = s
            .all_contractions()
            .iter()
            .filter(|c| c.amplitude >= 15.0)
            .map(|c| {
                let (on, off) = c.span(CONTRACTION_BOUNDARY);
                Episode {
                    kind: EpisodeKind::Contraction,
                    onset_s: on,
                    extremum_s: c.peak_s,
                    offset_s: off,
                    amplitude: c.amplitude,
                    duration_s: off - on,
                }
            })
            .collect();
        let decelerations: Vec<(Episode, DecelType, bool, usize)> = s
            .decelerations
            .iter()
            .map(|d| {
                let ep = Episode {
                    kind: EpisodeKind::Deceleration,
                    onset_s: d.onset_s,
                    extremum_s: d.nadir_s(),
                    offset_s: d.end_s(),
                    amplitude: d.amplitude_bpm,
                    duration_s: d.duration_s,
                };
                let (t, sub3) = nominal_type(s, d, &contractions);
                let overlapped = contractions
                    .iter()
                    .filter(|c| c.overlaps(ep.onset_s, ep.offset_s))
                    .count();
                (ep, t, sub3, overlapped)
            })
            .collect();

        let coverage = nominal_coverage(s);
        let determinable = coverage >= 600.0;
        let baseline = if determinable {
            baseline_class(s.baseline_bpm)
        } else {
            FeatureClass::Suspicious
        };
        let (variability, _) = variability_class(&nominal_profile(s));

        let accel = if !determinable {
            FeatureClass::Suspicious
        } else {
            let locked = accelerations
                .iter()
                .filter(|a| {
                    contractions
                        .iter()
                        .any(|c| (c.extremum_s - a.extremum_s).abs() <= 30.0)
                })
                .count();
            match accelerations.len() {
                0 => FeatureClass::Pathological,
                1 => FeatureClass::Suspicious,
                n if contractions.len() >= 2 && locked as f64 >= 0.8 * n as f64 => {
                    FeatureClass::Suspicious
                }
                _ => FeatureClass::Normal,
            }
        };
        let decel = if !determinable {
            FeatureClass::Suspicious
        } else {
            let typed: Vec<TypedDeceleration> = decelerations
                .iter()
                .map(|(ep, t, sub3, overlapped)| TypedDeceleration {
                    episode: *ep,
                    decel_type: *t,
                    atypical_features: Default::default(),
                    associated_contraction: None,
                    onset_to_nadir_s: 0.0,
                    sub3min: *sub3,
                    overlapped_contractions: *overlapped,
                })
                .collect();
            deceleration_class(&typed)
        };
        let sinusoidal = nominal_sinusoid(s);
        let sin_class = crate::classify::sinusoidal_class(sinusoidal);
        let features = vec![
            (Feature::Baseline, baseline),
            (Feature::Variability, variability),
            (Feature::Accelerations, accel),
            (Feature::Decelerations, decel),
            (Feature::Sinusoidal, sin_class),
        ];
        let overall = aggregate_classes(&features.iter().map(|(_, c)| *c).collect::<Vec<_>>());
        GroundTruth {
            baseline_determinable: determinable,
            baseline_coverage_s: coverage,
            features,
            overall,
            accelerations,
            decelerations: decelerations
                .into_iter()
                .map(|(e, t, _, _)| (e, t))
                .collect(),
            contractions,
            sinusoidal,
        }
    }
}

/// Atypical features implied by the deceleration parameters.
pub fn nominal_atypical(s: &Scenario, d: &DecelSpec) -> Vec<AtypicalFeature> {
    let mut out = Vec::new();
    if !d.has_shoulders() {
        out.push(AtypicalFeature::LossOfShoulder);
    }
    // Time from 80% depth back to the deadband edge along the recovery.
    let lo = DEADBAND_BPM / d.amplitude_bpm;
    let frac = match d.shape() {
        EpisodeShape::RaisedCosine => ((2.0 * lo - 1.0).acos() - (0.6f64).acos()) / PI,
        _ => 0.8 - lo,
    };
    if d.recovery() * frac > 30.0 {
        out.push(AtypicalFeature::SlowReturn);
    }
    if d.resume_offset_bpm >= 10.0 {
        out.push(AtypicalFeature::ProlongedElevatedBaseline);
    }
    if d.shape() == EpisodeShape::Biphasic
        && d.partial_recovery_bpm >= 10.0
        && d.amplitude_bpm >= 15.0
    {
        out.push(AtypicalFeature::Biphasic);
    }
    let nadir_span = match d.shape() {
        EpisodeShape::Biphasic => BIPHASIC_HOLD_S,
        _ => d.plateau() + 0.3 * (d.onset_to_nadir_s + d.recovery()),
    };
    let (bw, _) = s.variability_at(d.nominal_nadir_s());
    if nadir_span >= 20.0 && bw * 0.5 < 3.0 {
        out.push(AtypicalFeature::LossOfOscillation);
    }
    if d.resume_offset_bpm <= -5.0 {
        out.push(AtypicalFeature::LowerBaselineResumption);
    }
    out
}

/// Deceleration type from parameters, mirroring the detector's decision
/// order. Returns the type and the under-three-minutes flag.
pub fn nominal_type(s: &Scenario, d: &DecelSpec, contractions: &[Episode]) -> (DecelType, bool) {
    if d.duration_s > 180.0 {
        return (DecelType::Prolonged, false);
    }
    if d.onset_to_nadir_s < 30.0 {
        return if nominal_atypical(s, d).is_empty() {
            (DecelType::Variable, false)
        } else {
            (DecelType::AtypicalVariable, false)
        };
    }
    let nadir = d.nominal_nadir_s();
    let dist = |c: &&Episode| (c.extremum_s - nadir).abs();
    let assoc = contractions
        .iter()
        .filter(|c| c.overlaps(d.onset_s, d.end_s()))
        .min_by(|a, b| dist(a).total_cmp(&dist(b)))
        .or_else(|| {
            contractions
                .iter()
                .filter(|c| dist(c) <= 60.0)
                .min_by(|a, b| dist(a).total_cmp(&dist(b)))
        });
    if let Some(c) = assoc {
        if (nadir - c.extremum_s).abs() <= 15.0 && d.onset_s >= c.onset_s && d.onset_s <= c.offset_s
        {
            return (DecelType::Early, false);
        }
        if d.onset_s > c.onset_s + 20.0 && d.end_s() > c.offset_s {
            return (DecelType::Late, false);
        }
    }
    if d.duration_s > 90.0 {
        (DecelType::Prolonged, true)
    } else {
        (DecelType::Late, false)
    }
}

/// Share of a sinusoid of peak `a` that lies within `±band`.
fn in_band_fraction(a: f64, band: f64) -> f64 {
    if a <= band {
        1.0
    } else {
        2.0 * (band / a).asin() / PI
    }
}

/// Nominal seconds of signal inside the baseline band: variability and
/// sinusoid time weighted by their in-band share, minus episode time.
pub fn nominal_coverage(s: &Scenario) -> f64 {
    let step = 1.0;
    let mut total = 0.0;
    let mut t = 0.0;
    while t < s.duration_s {
        let mid = t + step / 2.0;
        let in_episode = s
            .accelerations
            .iter()
            .any(|a| mid >= a.onset_s && mid < a.onset_s + a.duration_s)
            || s.decelerations
                .iter()
                .any(|d| mid >= d.onset_s && mid < d.end_s());
        if !in_episode {
            let peak = match s.sinusoidal.as_ref().filter(|x| x.contains(mid)) {
                Some(sin) => sin.amplitude_bpm,
                None => s.variability_at(mid).0 / 2.0 * 0.95,
            };
            total += step * in_band_fraction(peak, BASELINE_BAND_BPM);
        }
        t += step;
    }
    total
}

/// Per-minute nominal variability. Minutes mostly covered by episodes are
/// unassessable, as they are for the analyzer.
pub fn nominal_profile(s: &Scenario) -> VariabilityProfile {
    let count = (s.duration_s / 60.0).floor() as usize;
    let minutes = (0..count)
        .map(|m| {
            let (lo, hi) = (m as f64 * 60.0, (m + 1) as f64 * 60.0);
            let covered: f64 = s
                .accelerations
                .iter()
                .map(|a| (a.onset_s, a.onset_s + a.duration_s))
                .chain(s.decelerations.iter().map(|d| (d.onset_s, d.end_s())))
                .map(|(a, b)| (b.min(hi) - a.max(lo)).max(0.0))
                .sum();
            let mid = lo + 30.0;
            let (bw, cpm) = match s.sinusoidal.as_ref().filter(|x| x.contains(mid)) {
                Some(sin) => (2.0 * sin.amplitude_bpm, sin.cpm),
                None => s.variability_at(mid),
            };
            MinuteVariability {
                minute: m,
                amplitude_bpm: bw,
                oscillations_per_min: cpm.round() as u32,
                assessable: covered < 30.0,
            }
        })
        .collect();
    VariabilityProfile::from_minutes(minutes)
}

pub fn nominal_sinusoid(s: &Scenario) -> SinusoidalStatus {
    let Some(sin) = &s.sinusoidal else {
        return SinusoidalStatus::None;
    };
    let bounds = (5.0..=15.0).contains(&sin.amplitude_bpm) && (3.0..=5.0).contains(&sin.cpm);
    if !bounds || sin.duration_s < 240.0 {
        return SinusoidalStatus::None;
    }
    let (lo, hi) = (sin.start_s, sin.start_s + sin.duration_s);
    let accel_overlap = s
        .accelerations
        .iter()
        .any(|a| a.onset_s < hi && lo < a.onset_s + a.duration_s);
    let long = sin.duration_s >= 600.0;
    match sin.waveform {
        Waveform::Sine if long && !accel_overlap => SinusoidalStatus::TrueSinusoidal,
        Waveform::Sine if long => SinusoidalStatus::None,
        _ => SinusoidalStatus::Pseudosinusoidal,
    }
}

/// Free time available for placing episodes.
struct Planner {
    free: Vec<(f64, f64)>,
}

impl Planner {
    fn new(lo: f64, hi: f64) -> Self {
        Self {
            free: vec![(lo, hi)],
        }
    }

    fn block(&mut self, lo: f64, hi: f64) {
        let mut next = Vec::new();
        for &(a, b) in &self.free {
            if hi <= a || lo >= b {
                next.push((a, b));
            } else {
                if lo > a {
                    next.push((a, lo));
                }
                if hi < b {
                    next.push((hi, b));
                }
            }
        }
        self.free = next;
    }

    /// Picks a start on a 5 s grid for a footprint of `len` seconds, keeping
    /// `gap` seconds clear on both sides, and reserves it.
    fn place(&mut self, rng: &mut ChaCha8Rng, len: f64, gap: f64, min_start: f64) -> Option<f64> {
        let mut options = Vec::new();
        for &(a, b) in &self.free {
            let mut t = ((a.max(min_start - gap) + gap) / 5.0).ceil() * 5.0;
            while t + len + gap <= b {
                options.push(t);
                t += 5.0;
            }
        }
        if options.is_empty() {
            return None;
        }
        let start = options[rng.random_range(0..options.len())];
        self.block(start - gap, start + len + gap);
        Some(start)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Category {
    Baseline,
    Variability,
    Accelerations,
    Decelerations,
    Sinusoid,
}

const EPISODE_GAP_S: f64 = 60.0;

/// A random scenario drawn from a fixed set of pattern families, built so
/// the generated trace stays clear of every rule threshold. Deterministic in
/// `seed`; `noise_bpm` is passed through.
pub fn random_scenario(seed: u64, noise_bpm: f64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        if let Some(s) = try_scenario(&mut rng, seed, noise_bpm) {
            return s;
        }
    }
}

fn pick<T: Copy>(rng: &mut ChaCha8Rng, items: &[T]) -> T {
    items[rng.random_range(0..items.len())]
}

fn minute_aligned(rng: &mut ChaCha8Rng, lo_min: u32, hi_min: u32) -> f64 {
    f64::from(rng.random_range(lo_min..=hi_min)) * 60.0
}

fn try_scenario(rng: &mut ChaCha8Rng, seed: u64, noise_bpm: f64) -> Option<Scenario> {
    use Category::*;
    let k = match rng.random_range(0..20) {
        0..=2 => 0,
        3..=13 => 1,
        _ => 2,
    };
    let mut cats: Vec<Category> = Vec::new();
    while cats.len() < k {
        let c = pick(
            rng,
            &[
                Baseline,
                Variability,
                Accelerations,
                Decelerations,
                Sinusoid,
            ],
        );
        let clash = cats.contains(&c)
            || (c == Variability && cats.contains(&Sinusoid))
            || (c == Sinusoid && cats.contains(&Variability));
        if !clash {
            cats.push(c);
        }
    }

    let mut s = Scenario::quiet(
        rng.random_range(125.0..150.0),
        rng.random_range(8.0..12.0),
        rng.random_range(3.5..4.5),
    );
    s.seed = seed;
    s.pattern_seed = rng.random();
    s.noise_bpm = noise_bpm;
    let mut plan = Planner::new(30.0, s.duration_s - 30.0);

    if cats.contains(&Baseline) {
        s.baseline_bpm = match rng.random_range(0..4) {
            0 => rng.random_range(103.0..106.0),
            1 => rng.random_range(165.0..177.0),
            2 => rng.random_range(85.0..96.0),
            _ => rng.random_range(185.0..195.0),
        };
    }

    let mut indeterminable = false;
    if cats.contains(&Variability) {
        let seg = |start: f64, len: f64, amp: f64, cpm: f64| VariabilitySegment {
            start_s: start,
            end_s: start + len,
            amplitude_bpm: amp,
            cycles_per_min: cpm,
        };
        match rng.random_range(0..6) {
            0 => s.variability.amplitude_bpm = rng.random_range(0.5..1.5),
            1 => {
                let len = minute_aligned(rng, 12, 13);
                let start = if rng.random_bool(0.5) {
                    0.0
                } else {
                    s.duration_s - len
                };
                s.variability
                    .segments
                    .push(seg(start, len, rng.random_range(0.5..1.5), 4.0));
                plan.block(start - EPISODE_GAP_S, start + len + EPISODE_GAP_S);
            }
            2 => {
                let len = 600.0;
                let start = minute_aligned(rng, 0, 10);
                s.variability
                    .segments
                    .push(seg(start, len, rng.random_range(32.0..36.0), 4.0));
                plan.block(start - EPISODE_GAP_S, start + len + EPISODE_GAP_S);
            }
            3 => {
                let len = minute_aligned(rng, 6, 7);
                let start = minute_aligned(rng, 0, 20 - (len / 60.0) as u32);
                s.variability
                    .segments
                    .push(seg(start, len, rng.random_range(32.0..36.0), 4.0));
                plan.block(start - EPISODE_GAP_S, start + len + EPISODE_GAP_S);
            }
            4 => s.variability.cycles_per_min = rng.random_range(1.5..1.8),
            _ => {
                s.variability.amplitude_bpm = rng.random_range(38.0..42.0);
                indeterminable = true;
            }
        }
    }

    let mut accel_slots = usize::MAX;
    if cats.contains(&Sinusoid) {
        let true_pattern = rng.random_bool(0.5);
        let (dur, waveform) = if true_pattern {
            (minute_aligned(rng, 11, 13), Waveform::Sine)
        } else {
            let w = if rng.random_bool(0.5) {
                Waveform::Sine
            } else {
                Waveform::Triangle
            };
            (minute_aligned(rng, 5, 7), w)
        };
        let start = minute_aligned(rng, 1, 19 - (dur / 60.0) as u32);
        s.sinusoidal = Some(SinusoidSpec {
            amplitude_bpm: rng.random_range(7.0..9.0),
            cpm: rng.random_range(3.5..4.5),
            start_s: start,
            duration_s: dur,
            waveform,
        });
        if !true_pattern {
            s.variability.amplitude_bpm = rng.random_range(8.0..10.0);
        }
        plan.block(start - 120.0, start + dur + 120.0);
        if true_pattern {
            accel_slots = 1;
        }
    }

    if cats.contains(&Decelerations) {
        let family = rng.random_range(0..7);
        let count = if matches!(family, 0..=2) {
            rng.random_range(1..=2)
        } else {
            1
        };
        for _ in 0..count {
            let d = place_decel(rng, &mut s, &mut plan, family)?;
            s.decelerations.push(d);
        }
        s.decelerations
            .sort_by(|a, b| a.onset_s.total_cmp(&b.onset_s));
    }

    let accel_count = if cats.contains(&Accelerations) {
        match rng.random_range(0..3) {
            0 => 0,
            1 => 1,
            _ => {
                for _ in 0..3 {
                    let dur = rng.random_range(20.0..40.0);
                    let width = rng.random_range(60.0..80.0);
                    let half_span = width * 0.95;
                    let start = plan.place(rng, 2.0 * half_span, EPISODE_GAP_S, 0.0)?;
                    let peak = start + half_span;
                    let onset = peak + rng.random_range(-5.0..5.0) - dur / 2.0;
                    s.accelerations.push(accel(rng, onset, dur));
                    s.contractions.push(ContractionSpec {
                        peak_s: peak,
                        width_s: width,
                        amplitude: rng.random_range(40.0..60.0),
                    });
                }
                0
            }
        }
    } else {
        rng.random_range(2..=3)
    };
    for _ in 0..accel_count.min(accel_slots) {
        let dur = rng.random_range(20.0..40.0);
        let onset = plan.place(rng, dur, EPISODE_GAP_S, 0.0)?;
        s.accelerations.push(accel(rng, onset, dur));
    }
    s.accelerations
        .sort_by(|a, b| a.onset_s.total_cmp(&b.onset_s));
    s.contractions.sort_by(|a, b| a.peak_s.total_cmp(&b.peak_s));

    let coverage = nominal_coverage(&s);
    if (540.0..=660.0).contains(&coverage) || (indeterminable && coverage >= 540.0) {
        return None;
    }
    s.validate().ok()?;
    Some(s)
}

fn accel(rng: &mut ChaCha8Rng, onset: f64, dur: f64) -> AccelSpec {
    AccelSpec {
        onset_s: onset,
        duration_s: dur,
        amplitude_bpm: rng.random_range(20.0..35.0),
        shape: EpisodeShape::Trapezoid,
    }
}

/// Families: 0 early, 1 variable, 2 late, 3 sub-three-minute prolonged,
/// 4 prolonged, 5 biphasic, 6 lower resumption.
fn place_decel(
    rng: &mut ChaCha8Rng,
    s: &mut Scenario,
    plan: &mut Planner,
    family: u32,
) -> Option<DecelSpec> {
    let amp = rng.random_range(20.0..35.0);
    let shoulder = 2.0 * SHOULDER_RAMP_S + SHOULDER_PLATEAU_S;
    match family {
        0 => {
            let otn: f64 = rng.random_range(50.0..70.0);
            let rec = rng.random_range(50.0..70.0);
            let width = rng.random_range(90.0..110.0);
            let half_span: f64 = width;
            // Footprint spans the contraction, centred on the nadir.
            let len = 2.0 * half_span.max(otn.max(rec));
            let start = plan.place(rng, len, EPISODE_GAP_S, 0.0)?;
            let nadir = start + len / 2.0;
            let mut d = DecelSpec::new(nadir - otn, otn + rec, amp, otn);
            d.recovery_s = Some(rec);
            d.lag_to_contraction_s = Some(0.0);
            d.contraction_width_s = width;
            d.contraction_amplitude = rng.random_range(40.0..60.0);
            Some(d)
        }
        1 => {
            let (otn, plat, rec) = (
                rng.random_range(5.0..8.0),
                rng.random_range(8.0..10.0),
                rng.random_range(8.0..10.0),
            );
            let dur = otn + plat + rec;
            let start = plan.place(rng, dur + 2.0 * shoulder, EPISODE_GAP_S, 0.0)?;
            let mut d = DecelSpec::new(start + shoulder, dur, amp, otn);
            d.shoulder_bpm = rng.random_range(9.0..11.0);
            d.recovery_s = Some(rec);
            Some(d)
        }
        2 => {
            let otn = rng.random_range(50.0..70.0);
            let rec = rng.random_range(50.0..70.0);
            let lag = rng.random_range(45.0..55.0);
            let width = rng.random_range(60.0..75.0);
            let c_half = width;
            // From the contraction's start to the end of the drop.
            let lead = c_half + lag;
            let len = lead + rec;
            let start = plan.place(rng, len, EPISODE_GAP_S, 0.0)?;
            let nadir = start + lead;
            let mut d = DecelSpec::new(nadir - otn, otn + rec, amp, otn);
            d.recovery_s = Some(rec);
            d.lag_to_contraction_s = Some(lag);
            d.contraction_width_s = width;
            d.contraction_amplitude = rng.random_range(40.0..60.0);
            Some(d)
        }
        3 => {
            let otn = rng.random_range(45.0..55.0);
            let rec = rng.random_range(45.0..55.0);
            let plat = rng.random_range(50.0..65.0);
            let dur = otn + plat + rec;
            let start = plan.place(rng, dur, EPISODE_GAP_S, 0.0)?;
            let mut d = DecelSpec::new(start, dur, amp, otn);
            d.recovery_s = Some(rec);
            Some(d)
        }
        4 => {
            let dur = rng.random_range(220.0..280.0);
            let ramp = rng.random_range(20.0..30.0);
            let start = plan.place(rng, dur, EPISODE_GAP_S, 0.0)?;
            let mut d = DecelSpec::new(start, dur, amp, ramp);
            d.shape = Some(EpisodeShape::Trapezoid);
            d.recovery_s = Some(ramp);
            d.shoulders = Some(false);
            Some(d)
        }
        5 => {
            let otn = rng.random_range(5.0..8.0);
            let rec = rng.random_range(8.0..10.0);
            let dur = otn + 3.0 * BIPHASIC_HOLD_S + 2.0 * BIPHASIC_SWING_S + rec;
            let start = plan.place(rng, dur + 2.0 * shoulder, EPISODE_GAP_S, 0.0)?;
            let mut d = DecelSpec::new(start + shoulder, dur, rng.random_range(30.0..38.0), otn);
            d.shoulder_bpm = rng.random_range(9.0..11.0);
            d.shape = Some(EpisodeShape::Biphasic);
            d.recovery_s = Some(rec);
            d.partial_recovery_bpm = rng.random_range(17.0..20.0);
            Some(d)
        }
        _ => {
            let (otn, plat, rec) = (
                rng.random_range(5.0..8.0),
                rng.random_range(8.0..10.0),
                rng.random_range(8.0..10.0),
            );
            let dur = otn + plat + rec;
            // The level change runs to the end, so nothing may follow it.
            let start = plan.place(rng, dur + 2.0 * shoulder, EPISODE_GAP_S, 840.0)?;
            plan.block(start, s.duration_s);
            s.variability.amplitude_bpm = s.variability.amplitude_bpm.min(10.0);
            let mut d = DecelSpec::new(start + shoulder, dur, amp, otn);
            d.shoulder_bpm = rng.random_range(9.0..11.0);
            d.recovery_s = Some(rec);
            d.resume_offset_bpm = -rng.random_range(6.0..8.0);
            Some(d)
        }
    }
}
