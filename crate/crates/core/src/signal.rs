//! Trace data model, CSV ingestion, and preprocessing.
//!
//! A trace is a pair of equally sampled channels: fetal heart rate in bpm and
//! uterine activity in arbitrary units on a 0–100 scale. FHR samples that are
//! absent, non-numeric, zero, or outside the physiological range are carried as
//! gaps rather than values.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dsp;
use crate::error::{CtgError, Result};

pub const FHR_MIN_BPM: f64 = 30.0;
pub const FHR_MAX_BPM: f64 = 250.0;
pub const UC_MAX: f64 = 100.0;
pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 4.0;
/// Shortest trace the analyzers accept.
pub const MIN_DURATION_S: f64 = 600.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BinaryLabel {
    Normal,
    Abnormal,
}

impl BinaryLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            BinaryLabel::Normal => "normal",
            BinaryLabel::Abnormal => "abnormal",
        }
    }
}

impl std::str::FromStr for BinaryLabel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "normal" | "0" => Ok(BinaryLabel::Normal),
            "abnormal" | "1" => Ok(BinaryLabel::Abnormal),
            other => Err(format!("unknown label {other:?}")),
        }
    }
}

/// A paired FHR/UC recording at a fixed sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct CtgRecord {
    record_id: String,
    sample_rate_hz: f64,
    fhr: Vec<f64>,
    uc: Vec<f64>,
    gap_mask: Vec<bool>,
    reference_label: Option<BinaryLabel>,
}

impl CtgRecord {
    /// Builds a record, applying the ingestion rules: FHR samples that are
    /// non-finite, zero, or out of range become gaps (stored as `0.0`), UC is
    /// clamped to `[0, 100]`, and samples already flagged in `gap_mask` are
    /// normalized the same way.
    pub fn new(
        record_id: impl Into<String>,
        sample_rate_hz: f64,
        fhr: Vec<f64>,
        uc: Vec<f64>,
        gap_mask: Option<Vec<bool>>,
    ) -> Result<Self> {
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(CtgError::InvalidRecord(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        if fhr.is_empty() {
            return Err(CtgError::EmptyRecord);
        }
        if fhr.len() != uc.len() {
            return Err(CtgError::InvalidRecord(format!(
                "fhr has {} samples but uc has {}",
                fhr.len(),
                uc.len()
            )));
        }
        let mut mask = gap_mask.unwrap_or_else(|| vec![false; fhr.len()]);
        if mask.len() != fhr.len() {
            return Err(CtgError::InvalidRecord(format!(
                "gap mask has {} entries for {} samples",
                mask.len(),
                fhr.len()
            )));
        }
        let mut fhr = fhr;
        for (v, gap) in fhr.iter_mut().zip(mask.iter_mut()) {
            if *gap || !is_valid_fhr(*v) {
                *gap = true;
                *v = 0.0;
            }
        }
        let uc = uc
            .into_iter()
            .map(|v| {
                if v.is_finite() {
                    v.clamp(0.0, UC_MAX)
                } else {
                    0.0
                }
            })
            .collect();
        Ok(Self {
            record_id: record_id.into(),
            sample_rate_hz,
            fhr,
            uc,
            gap_mask: mask,
            reference_label: None,
        })
    }

    /// Rebuilds a record from preprocessed channels; invalid FHR samples become
    /// gaps.
    pub fn from_clean(
        record_id: impl Into<String>,
        fhr: &CleanSignal,
        uc: &CleanSignal,
    ) -> Result<Self> {
        let mask = fhr.valid_mask.iter().map(|v| !v).collect();
        let values = fhr
            .values
            .iter()
            .zip(&fhr.valid_mask)
            .map(|(v, ok)| if *ok { *v } else { 0.0 })
            .collect();
        Self::new(
            record_id,
            fhr.sample_rate_hz,
            values,
            uc.values.clone(),
            Some(mask),
        )
    }

    pub fn with_label(mut self, label: Option<BinaryLabel>) -> Self {
        self.reference_label = label;
        self
    }

    pub fn record_id(&self) -> &str {
        &self.record_id
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn fhr(&self) -> &[f64] {
        &self.fhr
    }

    pub fn uc(&self) -> &[f64] {
        &self.uc
    }

    pub fn gap_mask(&self) -> &[bool] {
        &self.gap_mask
    }

    pub fn reference_label(&self) -> Option<BinaryLabel> {
        self.reference_label
    }

    pub fn len(&self) -> usize {
        self.fhr.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fhr.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.fhr.len() as f64 / self.sample_rate_hz
    }

    pub fn gap_count(&self) -> usize {
        self.gap_mask.iter().filter(|g| **g).count()
    }
}

fn is_valid_fhr(v: f64) -> bool {
    v.is_finite() && v != 0.0 && (FHR_MIN_BPM..=FHR_MAX_BPM).contains(&v)
}

/// A preprocessed channel. Values at invalid positions are `NaN`.
#[derive(Debug, Clone, PartialEq)]
pub struct CleanSignal {
    pub values: Vec<f64>,
    pub sample_rate_hz: f64,
    pub valid_mask: Vec<bool>,
}

impl CleanSignal {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.values.len() as f64 / self.sample_rate_hz
    }

    pub fn samples(&self, seconds: f64) -> usize {
        (seconds * self.sample_rate_hz).round() as usize
    }

    pub fn time_of(&self, index: usize) -> f64 {
        index as f64 / self.sample_rate_hz
    }

    pub fn valid_count(&self) -> usize {
        self.valid_mask.iter().filter(|v| **v).count()
    }

    /// Valid samples only, in order.
    pub fn valid_values(&self) -> Vec<f64> {
        self.values
            .iter()
            .zip(&self.valid_mask)
            .filter_map(|(v, ok)| ok.then_some(*v))
            .collect()
    }

    pub fn check_duration(&self, required_s: f64) -> Result<()> {
        let duration_s = self.duration_s();
        if duration_s < required_s {
            return Err(CtgError::TooShort {
                duration_s,
                required_s,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    /// Longest FHR gap, in seconds, that is bridged by linear interpolation.
    pub max_gap_s: f64,
    /// Running-median width for FHR, seconds.
    pub fhr_median_s: f64,
    /// Running-median width for UC, seconds.
    pub uc_median_s: f64,
    pub min_duration_s: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            max_gap_s: 15.0,
            fhr_median_s: 2.5,
            uc_median_s: 10.0,
            min_duration_s: MIN_DURATION_S,
        }
    }
}

const MAX_MEDIAN_PASSES: usize = 1000;

/// Gap bridging followed by running-median smoothing of both channels.
///
/// The median filter is iterated to its root signal, which makes the whole
/// operation idempotent: feeding the output back in returns it unchanged.
pub fn preprocess(rec: &CtgRecord, cfg: &PreprocessConfig) -> Result<(CleanSignal, CleanSignal)> {
    let duration_s = rec.duration_s();
    if duration_s < cfg.min_duration_s {
        return Err(CtgError::TooShort {
            duration_s,
            required_s: cfg.min_duration_s,
        });
    }
    let rate = rec.sample_rate_hz();
    let max_gap = (cfg.max_gap_s * rate).floor() as usize;

    let mut valid: Vec<bool> = rec.gap_mask().iter().map(|g| !g).collect();
    let mut values = rec.fhr().to_vec();
    interpolate_short_gaps(&mut values, &mut valid, max_gap);

    let fhr_half = half_width(cfg.fhr_median_s, rate);
    let mut fhr_out = vec![f64::NAN; values.len()];
    for (start, end) in valid_runs(&valid) {
        let smoothed = dsp::median_root(&values[start..end], fhr_half, MAX_MEDIAN_PASSES);
        fhr_out[start..end].copy_from_slice(&smoothed);
    }

    let uc_half = half_width(cfg.uc_median_s, rate);
    let uc_out = dsp::median_root(rec.uc(), uc_half, MAX_MEDIAN_PASSES);

    Ok((
        CleanSignal {
            values: fhr_out,
            sample_rate_hz: rate,
            valid_mask: valid,
        },
        CleanSignal {
            values: uc_out,
            sample_rate_hz: rate,
            valid_mask: vec![true; rec.len()],
        },
    ))
}

/// Half-width in samples of an odd median window spanning `seconds`.
fn half_width(seconds: f64, rate: f64) -> usize {
    ((seconds * rate) / 2.0).round() as usize
}

/// Linearly bridges interior runs of invalid samples no longer than
/// `max_gap` samples. Leading and trailing gaps have only one anchor and are
/// left invalid.
fn interpolate_short_gaps(values: &mut [f64], valid: &mut [bool], max_gap: usize) {
    let n = values.len();
    let mut i = 0;
    while i < n {
        if valid[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i < n && !valid[i] {
            i += 1;
        }
        let end = i;
        let len = end - start;
        if start == 0 || end == n || len > max_gap {
            continue;
        }
        let left = values[start - 1];
        let right = values[end];
        let span = (len + 1) as f64;
        for (k, idx) in (start..end).enumerate() {
            let frac = (k + 1) as f64 / span;
            values[idx] = left + (right - left) * frac;
            valid[idx] = true;
        }
    }
}

/// Half-open index ranges of consecutive valid samples.
pub(crate) fn valid_runs(valid: &[bool]) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut i = 0;
    while i < valid.len() {
        if !valid[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i < valid.len() && valid[i] {
            i += 1;
        }
        runs.push((start, i));
    }
    runs
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

/// Reads a trace in the canonical `t_s,fhr_bpm,uc` layout. The record id is
/// the file stem. Without a time column the sample rate defaults to 4 Hz.
pub fn load_csv(path: impl AsRef<Path>) -> Result<CtgRecord> {
    load_csv_with_rate(path, DEFAULT_SAMPLE_RATE_HZ)
}

pub fn load_csv_with_rate(path: impl AsRef<Path>, default_rate_hz: f64) -> Result<CtgRecord> {
    let path = path.as_ref();
    let text = read_text(path)?;
    let record_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_csv(&record_id, &text, default_rate_hz)
}

fn read_text(path: &Path) -> Result<String> {
    match fs::read_to_string(path) {
        Ok(t) => Ok(t),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            Err(CtgError::FileNotFound(path.to_path_buf()))
        }
        Err(source) => Err(CtgError::Io {
            path: path.to_path_buf(),
            source,
        }),
    }
}

/// Parses CSV text into a record. Exposed for in-memory fixtures.
pub fn parse_csv(record_id: &str, text: &str, default_rate_hz: f64) -> Result<CtgRecord> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let headers = reader
        .headers()
        .map_err(|e| CtgError::MalformedRow {
            line: 1,
            reason: e.to_string(),
        })?
        .clone();
    let column = |names: &[&str]| {
        headers
            .iter()
            .position(|h| names.iter().any(|n| h.eq_ignore_ascii_case(n)))
    };
    let fhr_col = column(&["fhr_bpm", "fhr"]).ok_or_else(|| CtgError::MalformedRow {
        line: 1,
        reason: "header has no fhr column".into(),
    })?;
    let uc_col = column(&["uc"]).ok_or_else(|| CtgError::MalformedRow {
        line: 1,
        reason: "header has no uc column".into(),
    })?;
    let t_col = column(&["t_s", "t", "time"]);
    let width = headers.len();

    let mut times = Vec::new();
    let mut fhr = Vec::new();
    let mut uc = Vec::new();
    let mut gaps = Vec::new();
    let mut last_uc = 0.0;
    for row in reader.records() {
        let row = row.map_err(|e| CtgError::MalformedRow {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            reason: e.to_string(),
        })?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
        if row.len() == 1 && row.get(0) == Some("") {
            continue;
        }
        if row.len() < width {
            return Err(CtgError::LengthMismatch {
                line,
                expected: width,
                found: row.len(),
            });
        }
        if row.len() > width {
            return Err(CtgError::MalformedRow {
                line,
                reason: format!("expected {width} fields, found {}", row.len()),
            });
        }
        if let Some(tc) = t_col {
            let t: f64 = row[tc].parse().map_err(|_| CtgError::MalformedRow {
                line,
                reason: format!("time value {:?} is not numeric", &row[tc]),
            })?;
            times.push(t);
        }
        match row[fhr_col].parse::<f64>() {
            Ok(v) if is_valid_fhr(v) => {
                fhr.push(v);
                gaps.push(false);
            }
            _ => {
                fhr.push(0.0);
                gaps.push(true);
            }
        }
        // Missing UC samples hold the previous value.
        let u = match row[uc_col].parse::<f64>() {
            Ok(v) if v.is_finite() => v.clamp(0.0, UC_MAX),
            _ => last_uc,
        };
        last_uc = u;
        uc.push(u);
    }
    if fhr.is_empty() {
        return Err(CtgError::EmptyRecord);
    }

    let rate = if times.len() >= 2 {
        let span = times[times.len() - 1] - times[0];
        let rate = (times.len() - 1) as f64 / span;
        if !(rate.is_finite() && rate > 0.0) {
            return Err(CtgError::MalformedRow {
                line: 2,
                reason: "time column is not increasing".into(),
            });
        }
        (rate * 1e6).round() / 1e6
    } else {
        default_rate_hz
    };
    CtgRecord::new(record_id, rate, fhr, uc, Some(gaps))
}

/// Canonical CSV text for a record. Gaps are written as `0`.
pub fn to_csv_string(rec: &CtgRecord) -> String {
    let mut out = String::with_capacity(rec.len() * 20);
    out.push_str("t_s,fhr_bpm,uc\n");
    for i in 0..rec.len() {
        let t = i as f64 / rec.sample_rate_hz();
        let fhr = if rec.gap_mask()[i] { 0.0 } else { rec.fhr()[i] };
        let _ = writeln!(out, "{t},{fhr},{}", rec.uc()[i]);
    }
    out
}

pub fn save_csv(rec: &CtgRecord, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_csv_string(rec)).map_err(|source| CtgError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads `labels.csv` (`record_id,label`).
pub fn load_labels(path: impl AsRef<Path>) -> Result<BTreeMap<String, BinaryLabel>> {
    let path = path.as_ref();
    let text = read_text(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut labels = BTreeMap::new();
    for row in reader.records() {
        let row = row.map_err(|e| CtgError::MalformedRow {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            reason: e.to_string(),
        })?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
        if row.len() < 2 {
            return Err(CtgError::LengthMismatch {
                line,
                expected: 2,
                found: row.len(),
            });
        }
        let label = row[1]
            .parse()
            .map_err(|reason| CtgError::MalformedRow { line, reason })?;
        labels.insert(row[0].to_string(), label);
    }
    Ok(labels)
}

pub fn save_labels(labels: &BTreeMap<String, BinaryLabel>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("record_id,label\n");
    for (id, label) in labels {
        let _ = writeln!(out, "{id},{}", label.as_str());
    }
    fs::write(path, out).map_err(|source| CtgError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Loads every `<record_id>.csv` in `dir` (except `labels.csv`), sorted by id,
/// attaching labels from `labels` when present.
pub fn load_dir(
    dir: impl AsRef<Path>,
    labels: Option<&BTreeMap<String, BinaryLabel>>,
) -> Result<Vec<CtgRecord>> {
    let dir = dir.as_ref();
    let entries = fs::read_dir(dir).map_err(|source| {
        if source.kind() == std::io::ErrorKind::NotFound {
            CtgError::FileNotFound(dir.to_path_buf())
        } else {
            CtgError::Io {
                path: dir.to_path_buf(),
                source,
            }
        }
    })?;
    let mut paths: Vec<_> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|e| e == "csv")
                && p.file_name().is_some_and(|n| n != "labels.csv")
        })
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let rec = load_csv(&p)?;
            let label = labels.and_then(|l| l.get(rec.record_id()).copied());
            Ok(rec.with_label(label))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant(n: usize, fhr: f64) -> CtgRecord {
        CtgRecord::new("c", 4.0, vec![fhr; n], vec![10.0; n], None).unwrap()
    }

    #[test]
    fn constant_file_loads_without_gaps() {
        let rec = constant(4800, 140.0);
        let text = to_csv_string(&rec);
        let back = parse_csv("c", &text, 4.0).unwrap();
        assert_eq!(back.len(), 4800);
        assert_eq!(back.gap_count(), 0);
        assert_eq!(back.sample_rate_hz(), 4.0);
    }

    #[test]
    fn hand_written_fixture_masks_zero_and_out_of_range() {
        let text = "t_s,fhr_bpm,uc\n\
                    0,140,10\n0.25,141,10\n0.5,0,10\n0.75,142,11\n1,,12\n\
                    1.25,abc,12\n1.5,260,12\n1.75,25,12\n2,143,13\n2.25,144,13\n";
        let rec = parse_csv("f", text, 4.0).unwrap();
        assert_eq!(rec.len(), 10);
        let gaps: Vec<usize> = (0..10).filter(|i| rec.gap_mask()[*i]).collect();
        assert_eq!(gaps, vec![2, 4, 5, 6, 7]);
        assert_eq!(rec.fhr()[3], 142.0);
    }

    #[test]
    fn short_row_is_length_mismatch() {
        let text = "t_s,fhr_bpm,uc\n0,140,10\n0.25,141\n";
        assert!(matches!(
            parse_csv("x", text, 4.0),
            Err(CtgError::LengthMismatch {
                line: 3,
                expected: 3,
                found: 2
            })
        ));
    }

    #[test]
    fn bad_time_is_malformed() {
        let text = "t_s,fhr_bpm,uc\n0,140,10\nzz,141,10\n";
        assert!(matches!(
            parse_csv("x", text, 4.0),
            Err(CtgError::MalformedRow { line: 3, .. })
        ));
    }

    #[test]
    fn header_only_is_empty() {
        assert!(matches!(
            parse_csv("x", "fhr,uc\n", 4.0),
            Err(CtgError::EmptyRecord)
        ));
    }

    #[test]
    fn missing_file() {
        assert!(matches!(
            load_csv("/nonexistent/x.csv"),
            Err(CtgError::FileNotFound(_))
        ));
    }

    #[test]
    fn time_column_is_optional() {
        let rec = parse_csv("x", "fhr,uc\n140,5\n141,6\n", 2.0).unwrap();
        assert_eq!(rec.sample_rate_hz(), 2.0);
        assert_eq!(rec.uc(), &[5.0, 6.0]);
    }

    #[test]
    fn single_missing_sample_is_interpolated() {
        let mut fhr = vec![140.0; 2400];
        for v in fhr.iter_mut().skip(1001) {
            *v = 142.0;
        }
        fhr[1000] = 0.0;
        let mut valid = vec![true; 2400];
        valid[1000] = false;
        let mut vals = fhr.clone();
        interpolate_short_gaps(&mut vals, &mut valid, 60);
        assert!(valid[1000]);
        assert_eq!(vals[1000], 141.0);
    }

    #[test]
    fn long_gap_stays_invalid() {
        let mut fhr = vec![140.0; 4800];
        for v in &mut fhr[1000..1240] {
            *v = 0.0;
        }
        let rec = CtgRecord::new("g", 4.0, fhr, vec![10.0; 4800], None).unwrap();
        let (clean, _) = preprocess(&rec, &PreprocessConfig::default()).unwrap();
        assert!(clean.valid_mask[1000..1240].iter().all(|v| !v));
        assert!(clean.values[1100].is_nan());
        assert!(clean.valid_mask[999] && clean.valid_mask[1240]);
    }

    #[test]
    fn fifteen_second_gap_is_bridged() {
        let mut fhr = vec![140.0; 4800];
        for v in &mut fhr[1000..1060] {
            *v = 0.0;
        }
        let rec = CtgRecord::new("g", 4.0, fhr, vec![10.0; 4800], None).unwrap();
        let (clean, _) = preprocess(&rec, &PreprocessConfig::default()).unwrap();
        assert!(clean.valid_mask.iter().all(|v| *v));
        assert_eq!(clean.values[1030], 140.0);
    }

    #[test]
    fn one_sample_spike_is_removed() {
        let mut fhr = vec![140.0; 4800];
        fhr[2000] = 180.0;
        let rec = CtgRecord::new("s", 4.0, fhr, vec![10.0; 4800], None).unwrap();
        let (clean, _) = preprocess(&rec, &PreprocessConfig::default()).unwrap();
        assert_eq!(clean.values[2000], 140.0);
    }

    #[test]
    fn too_short_is_rejected() {
        let rec = constant(2399, 140.0);
        assert!(matches!(
            preprocess(&rec, &PreprocessConfig::default()),
            Err(CtgError::TooShort { .. })
        ));
    }

    #[test]
    fn uc_is_clamped() {
        let rec = CtgRecord::new("u", 4.0, vec![140.0; 3], vec![-5.0, 50.0, 130.0], None).unwrap();
        assert_eq!(rec.uc(), &[0.0, 50.0, 100.0]);
    }

    #[test]
    fn labels_parse() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("labels.csv");
        fs::write(&p, "record_id,label\na,normal\nb,Abnormal\n").unwrap();
        let l = load_labels(&p).unwrap();
        assert_eq!(l["a"], BinaryLabel::Normal);
        assert_eq!(l["b"], BinaryLabel::Abnormal);
    }
}
