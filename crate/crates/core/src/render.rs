//! Deterministic SVG rendering of a trace on CTG paper.
//!
//! The FHR panel sits above the UC panel and both share the time axis. Output
//! depends only on the record and config, so documents can be compared
//! byte for byte.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::episodes::{Episode, EpisodeKind};
use crate::error::Result;
use crate::signal::{CtgRecord, MIN_DURATION_S};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderConfig {
    pub paper_speed_cm_per_min: f64,
    pub px_per_cm: u32,
    pub fhr_axis: (f64, f64),
    pub uc_axis: (f64, f64),
    pub fhr_bpm_per_cm: f64,
    pub uc_units_per_cm: f64,
    pub fhr_grid_bpm: f64,
    pub uc_grid_units: f64,
    pub time_grid_min: f64,
    pub panel_gap_px: f64,
    pub show_episodes: bool,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            paper_speed_cm_per_min: 1.0,
            px_per_cm: 40,
            fhr_axis: (50.0, 210.0),
            uc_axis: (0.0, 100.0),
            fhr_bpm_per_cm: 20.0,
            uc_units_per_cm: 25.0,
            fhr_grid_bpm: 10.0,
            uc_grid_units: 10.0,
            time_grid_min: 1.0,
            panel_gap_px: 40.0,
            show_episodes: false,
        }
    }
}

/// Pixel geometry derived from a config and a trace duration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Layout {
    pub width: f64,
    pub fhr_height: f64,
    pub uc_top: f64,
    pub uc_height: f64,
    pub height: f64,
    px_per_s: f64,
}

impl Layout {
    pub fn new(duration_s: f64, cfg: &RenderConfig) -> Self {
        let px_per_cm = f64::from(cfg.px_per_cm);
        let px_per_s = cfg.paper_speed_cm_per_min * px_per_cm / 60.0;
        let fhr_height = (cfg.fhr_axis.1 - cfg.fhr_axis.0) / cfg.fhr_bpm_per_cm * px_per_cm;
        let uc_height = (cfg.uc_axis.1 - cfg.uc_axis.0) / cfg.uc_units_per_cm * px_per_cm;
        let uc_top = fhr_height + cfg.panel_gap_px;
        Self {
            width: duration_s * px_per_s,
            fhr_height,
            uc_top,
            uc_height,
            height: uc_top + uc_height,
            px_per_s,
        }
    }

    pub fn x(&self, t_s: f64) -> f64 {
        t_s * self.px_per_s
    }

    /// FHR value to y, clamped to the axis range.
    pub fn y_fhr(&self, bpm: f64, cfg: &RenderConfig) -> f64 {
        let (lo, hi) = cfg.fhr_axis;
        (hi - bpm.clamp(lo, hi)) / (hi - lo) * self.fhr_height
    }

    pub fn y_uc(&self, units: f64, cfg: &RenderConfig) -> f64 {
        let (lo, hi) = cfg.uc_axis;
        self.uc_top + (hi - units.clamp(lo, hi)) / (hi - lo) * self.uc_height
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn grid_values(lo: f64, hi: f64, step: f64) -> impl Iterator<Item = f64> {
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(move |k| k as f64 * step)
}

/// Splits `(x, y, valid)` points into runs of valid samples and writes one polyline each.
fn polylines(out: &mut String, xs: impl Iterator<Item = (f64, f64, bool)>) {
    let mut run = String::new();
    let flush = |run: &mut String, out: &mut String| {
        if !run.is_empty() {
            let _ = writeln!(out, "<polyline points=\"{run}\"/>");
            run.clear();
        }
    };
    for (x, y, ok) in xs {
        if ok {
            if !run.is_empty() {
                run.push(' ');
            }
            let _ = write!(run, "{x:.2},{y:.2}");
        } else {
            flush(&mut run, out);
        }
    }
    flush(&mut run, out);
}

pub fn render_svg(rec: &CtgRecord, cfg: &RenderConfig) -> Result<String> {
    render_svg_with_episodes(rec, cfg, &[])
}

/// Renders the trace; `episodes` are drawn as shaded bands when
/// `cfg.show_episodes` is set.
pub fn render_svg_with_episodes(
    rec: &CtgRecord,
    cfg: &RenderConfig,
    episodes: &[Episode],
) -> Result<String> {
    let duration = rec.duration_s();
    if duration < MIN_DURATION_S {
        return Err(crate::CtgError::TooShort {
            duration_s: duration,
            required_s: MIN_DURATION_S,
        });
    }
    let l = Layout::new(duration, cfg);
    let rate = rec.sample_rate_hz();
    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w:.2}" height="{h:.2}" viewBox="0 0 {w:.2} {h:.2}">"#,
        w = l.width,
        h = l.height
    );
    let _ = writeln!(s, "<title>{}</title>", escape(rec.record_id()));
    let _ = writeln!(
        s,
        r##"<rect x="0" y="0" width="{:.2}" height="{:.2}" fill="#ffffff"/>"##,
        l.width, l.height
    );

    let _ = writeln!(s, r##"<g id="grid" stroke="#e8b4b4" stroke-width="0.5">"##);
    for v in grid_values(cfg.fhr_axis.0, cfg.fhr_axis.1, cfg.fhr_grid_bpm) {
        let y = l.y_fhr(v, cfg);
        let _ = writeln!(
            s,
            r#"<line x1="0.00" y1="{y:.2}" x2="{:.2}" y2="{y:.2}"/>"#,
            l.width
        );
    }
    for v in grid_values(cfg.uc_axis.0, cfg.uc_axis.1, cfg.uc_grid_units) {
        let y = l.y_uc(v, cfg);
        let _ = writeln!(
            s,
            r#"<line x1="0.00" y1="{y:.2}" x2="{:.2}" y2="{y:.2}"/>"#,
            l.width
        );
    }
    for m in grid_values(0.0, duration / 60.0, cfg.time_grid_min) {
        let x = l.x(m * 60.0);
        let _ = writeln!(
            s,
            r#"<line x1="{x:.2}" y1="0.00" x2="{x:.2}" y2="{:.2}"/>"#,
            l.fhr_height
        );
        let _ = writeln!(
            s,
            r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}"/>"#,
            l.uc_top, l.height
        );
    }
    let _ = writeln!(s, "</g>");

    if cfg.show_episodes && !episodes.is_empty() {
        let _ = writeln!(s, r#"<g id="episodes" fill-opacity="0.2">"#);
        for e in episodes {
            let (fill, top, height) = match e.kind {
                EpisodeKind::Acceleration => ("#2a9d3a", 0.0, l.fhr_height),
                EpisodeKind::Deceleration => ("#c0392b", 0.0, l.fhr_height),
                EpisodeKind::Contraction => ("#2e6fb7", l.uc_top, l.uc_height),
            };
            let _ = writeln!(
                s,
                r#"<rect x="{:.2}" y="{top:.2}" width="{:.2}" height="{height:.2}" fill="{fill}"/>"#,
                l.x(e.onset_s),
                l.x(e.offset_s) - l.x(e.onset_s)
            );
        }
        let _ = writeln!(s, "</g>");
    }

    let _ = writeln!(
        s,
        r##"<g id="fhr" fill="none" stroke="#000000" stroke-width="1">"##
    );
    polylines(
        &mut s,
        rec.fhr()
            .iter()
            .zip(rec.gap_mask())
            .enumerate()
            .map(|(i, (&v, &gap))| (l.x(i as f64 / rate), l.y_fhr(v, cfg), !gap)),
    );
    let _ = writeln!(s, "</g>");
    let _ = writeln!(
        s,
        r##"<g id="uc" fill="none" stroke="#000000" stroke-width="1">"##
    );
    polylines(
        &mut s,
        rec.uc()
            .iter()
            .enumerate()
            .map(|(i, &v)| (l.x(i as f64 / rate), l.y_uc(v, cfg), true)),
    );
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, "</svg>");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(fhr: Vec<f64>) -> CtgRecord {
        let n = fhr.len();
        CtgRecord::new("r", 4.0, fhr, vec![10.0; n], None).unwrap()
    }

    #[test]
    fn twenty_minutes_is_800_px_wide() {
        let svg = render_svg(&record(vec![140.0; 4800]), &RenderConfig::default()).unwrap();
        assert!(svg.contains(r#"width="800.00""#));
        assert_eq!(Layout::new(1200.0, &RenderConfig::default()).width, 800.0);
    }

    #[test]
    fn constant_trace_lies_on_its_gridline() {
        let cfg = RenderConfig::default();
        let svg = render_svg(&record(vec![140.0; 4800]), &cfg).unwrap();
        let l = Layout::new(1200.0, &cfg);
        let y = format!("{:.2}", l.y_fhr(140.0, &cfg));
        assert!(svg.contains(&format!(r#"y1="{y}" x2="800.00" y2="{y}""#)));
        let fhr = svg.split(r#"<g id="fhr""#).nth(1).unwrap();
        let fhr = fhr.split("</g>").next().unwrap();
        assert_eq!(fhr.matches("<polyline").count(), 1);
        assert!(fhr
            .split(['"', ' '])
            .filter(|p| p.contains(','))
            .all(|p| p.ends_with(&format!(",{y}"))));
    }

    #[test]
    fn gap_splits_the_line() {
        let mut v = vec![140.0; 4800];
        v[2000..2100].iter_mut().for_each(|x| *x = 0.0);
        let svg = render_svg(&record(v), &RenderConfig::default()).unwrap();
        let fhr = svg
            .split(r#"<g id="fhr""#)
            .nth(1)
            .unwrap()
            .split("</g>")
            .next()
            .unwrap();
        assert_eq!(fhr.matches("<polyline").count(), 2);
    }

    #[test]
    fn out_of_axis_values_are_clamped() {
        let cfg = RenderConfig::default();
        let l = Layout::new(1200.0, &cfg);
        assert_eq!(l.y_fhr(240.0, &cfg), 0.0);
        assert_eq!(l.y_fhr(35.0, &cfg), l.fhr_height);
        assert_eq!(l.y_uc(-5.0, &cfg), l.height);
    }

    #[test]
    fn short_record_is_rejected() {
        assert!(render_svg(&record(vec![140.0; 400]), &RenderConfig::default()).is_err());
    }

    #[test]
    fn title_is_escaped() {
        let rec = CtgRecord::new("a<b&c", 4.0, vec![140.0; 2400], vec![10.0; 2400], None).unwrap();
        let svg = render_svg(&rec, &RenderConfig::default()).unwrap();
        assert!(svg.contains("<title>a&lt;b&amp;c</title>"));
    }
}
