//! Small numeric kernels shared by the analyzers.
//!
//! Everything here works on plain slices; callers own sampling-rate and
//! validity bookkeeping.

use std::f64::consts::PI;

/// One pass of a centered running median with `2 * half + 1` taps.
///
/// Edges are handled by replicating the first and last sample, so the output
/// has the same length as the input.
pub fn median_filter(values: &[f64], half: usize) -> Vec<f64> {
    let n = values.len();
    if n == 0 || half == 0 {
        return values.to_vec();
    }
    let width = 2 * half + 1;
    let mut window = Vec::with_capacity(width);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        window.clear();
        for k in 0..width {
            let j = (i + k).saturating_sub(half).min(n - 1);
            window.push(values[j]);
        }
        let (_, m, _) = window.select_nth_unstable_by(half, f64::total_cmp);
        out.push(*m);
    }
    out
}

/// Repeats [`median_filter`] until the signal stops changing (a root signal of
/// the filter). With replicated edges this converges in a bounded number of
/// passes; `max_passes` is only a backstop.
pub fn median_root(values: &[f64], half: usize, max_passes: usize) -> Vec<f64> {
    let mut current = values.to_vec();
    for _ in 0..max_passes {
        let next = median_filter(&current, half);
        if next == current {
            break;
        }
        current = next;
    }
    current
}

/// Centered moving average over `2 * half + 1` samples that ignores invalid
/// samples. Positions whose window holds no valid sample come back as `NaN`.
pub fn moving_average(values: &[f64], valid: &[bool], half: usize) -> Vec<f64> {
    let n = values.len();
    let mut prefix = vec![0.0; n + 1];
    let mut count = vec![0usize; n + 1];
    for i in 0..n {
        let ok = valid[i];
        prefix[i + 1] = prefix[i] + if ok { values[i] } else { 0.0 };
        count[i + 1] = count[i] + usize::from(ok);
    }
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            let c = count[hi] - count[lo];
            if c == 0 {
                f64::NAN
            } else {
                (prefix[hi] - prefix[lo]) / c as f64
            }
        })
        .collect()
}

pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Linear-interpolated percentile, `q` in `[0, 1]`.
pub fn percentile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    Some(sorted[lo] + (sorted[hi] - sorted[lo]) * frac)
}

pub fn median(values: &[f64]) -> Option<f64> {
    percentile(values, 0.5)
}

/// Least-squares fit of `a*cos(wt) + b*sin(wt)` to zero-mean samples.
///
/// `x` is evaluated at sample indices `0..x.len()`; `cycles_per_sample` is the
/// frequency in cycles per sample. Returns `(a, b)`.
pub fn sinusoid_fit(x: &[f64], cycles_per_sample: f64) -> (f64, f64) {
    let (a, b, _) = fit_with_projection(x, cycles_per_sample);
    (a, b)
}

/// Least-squares coefficients plus the energy of the fitted sinusoid.
fn fit_with_projection(x: &[f64], cycles_per_sample: f64) -> (f64, f64, f64) {
    let w = 2.0 * PI * cycles_per_sample;
    let (mut cc, mut ss, mut cs, mut xc, mut xs) = (0.0, 0.0, 0.0, 0.0, 0.0);
    // Rotation recurrence keeps this cheap inside the frequency search.
    let (sw, cw) = w.sin_cos();
    let (mut s, mut c) = (0.0f64, 1.0f64);
    for &v in x {
        cc += c * c;
        ss += s * s;
        cs += c * s;
        xc += v * c;
        xs += v * s;
        let c_next = c * cw - s * sw;
        s = s * cw + c * sw;
        c = c_next;
    }
    let det = cc * ss - cs * cs;
    if det.abs() < 1e-12 {
        return (0.0, 0.0, 0.0);
    }
    let a = (xc * ss - xs * cs) / det;
    let b = (xs * cc - xc * cs) / det;
    (a, b, a * xc + b * xs)
}

/// Variance of `x` explained by the best single sinusoid at
/// `cycles_per_sample` (an R² in `[0, 1]` for zero-mean input).
pub fn explained_fraction(x: &[f64], cycles_per_sample: f64) -> f64 {
    let total: f64 = x.iter().map(|v| v * v).sum();
    if total <= 0.0 {
        return 0.0;
    }
    let (_, _, fitted) = fit_with_projection(x, cycles_per_sample);
    (fitted / total).clamp(0.0, 1.0)
}

/// Power of the discrete Fourier transform of `x` at bins `lo..=hi`.
///
/// Direct evaluation using a twiddle table; `x.len()` bins span one cycle per
/// record length each.
pub fn dft_power(x: &[f64], lo: usize, hi: usize) -> Vec<f64> {
    let n = x.len();
    if n == 0 || lo > hi {
        return Vec::new();
    }
    let table: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            let ang = 2.0 * PI * k as f64 / n as f64;
            (ang.cos(), ang.sin())
        })
        .collect();
    (lo..=hi)
        .map(|bin| {
            let (mut re, mut im) = (0.0, 0.0);
            let mut idx = 0usize;
            for &v in x {
                let (c, s) = table[idx];
                re += v * c;
                im -= v * s;
                idx += bin;
                if idx >= n {
                    idx %= n;
                }
            }
            re * re + im * im
        })
        .collect()
}

/// Count of upward crossings through a band `center ± hysteresis`.
///
/// A crossing is counted when the signal moves from below `center - h` to
/// above `center + h`. `initial_low` seeds the state for signals that start
/// inside the band.
pub fn upward_crossings(
    x: &[f64],
    center: f64,
    hysteresis: f64,
    initial_low: Option<bool>,
) -> usize {
    let mut low = initial_low;
    let mut count = 0;
    for &v in x {
        if v < center - hysteresis {
            low = Some(true);
        } else if v > center + hysteresis {
            if low == Some(true) {
                count += 1;
            }
            low = Some(false);
        }
    }
    count
}
