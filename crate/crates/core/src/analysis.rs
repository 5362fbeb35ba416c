//! Fringe visibility, product traces and fringe period estimation.

use std::collections::VecDeque;
use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("window must span at least 2 samples, got {0}")]
    WindowTooSmall(usize),
    #[error(
        "trace shorter than window: no contiguous run of {window} samples (longest is {longest})"
    )]
    TraceShorterThanWindow { window: usize, longest: usize },
    #[error("sample {index} is {value}; visibility needs finite non-negative values")]
    BadSample { index: usize, value: f64 },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("no dominant peak: trace is flat")]
    NoDominantPeak,
    #[error("fewer than 3 fringes in trace (period {period_bins:.1} bins over {len} samples)")]
    TooFewFringes { period_bins: f64, len: usize },
    #[error("need at least {need} samples for the fit, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("displacement per bin must be positive and finite, got {0}")]
    BadScale(f64),
}

pub type Result<T> = std::result::Result<T, AnalysisError>;

/// `(max − min)/(max + min)`, with `0/0` taken as 0.
pub fn contrast(max: f64, min: f64) -> f64 {
    let sum = max + min;
    if sum == 0.0 {
        0.0
    } else {
        (max - min) / sum
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VisibilityPoint {
    /// Time (or index) at the window centre.
    pub t: f64,
    pub v: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VisibilityTrace {
    pub window: usize,
    pub rows: Vec<VisibilityPoint>,
}

fn check_samples(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
        Some(index) => Err(AnalysisError::BadSample {
            index,
            value: values[index],
        }),
        None => Ok(()),
    }
}

/// Split sample indices into contiguous runs. A step in `times` more than
/// 1.5 times the smallest positive step starts a new run, so windows never
/// straddle dropped bins.
pub fn contiguous_runs(times: &[f64]) -> Vec<std::ops::Range<usize>> {
    if times.is_empty() {
        return Vec::new();
    }
    let base = times
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|d| *d > 0.0)
        .fold(f64::INFINITY, f64::min);
    let mut runs = Vec::new();
    let mut start = 0;
    for i in 1..times.len() {
        if times[i] - times[i - 1] > 1.5 * base {
            runs.push(start..i);
            start = i;
        }
    }
    runs.push(start..times.len());
    runs
}

/// Sliding max and min over every length-`window` slice of `values`.
fn sliding_extremes(values: &[f64], window: usize) -> Vec<(f64, f64)> {
    let mut hi: VecDeque<usize> = VecDeque::new();
    let mut lo: VecDeque<usize> = VecDeque::new();
    let mut out = Vec::with_capacity(values.len().saturating_sub(window) + 1);
    for (i, &x) in values.iter().enumerate() {
        while hi.back().is_some_and(|&j| values[j] <= x) {
            hi.pop_back();
        }
        hi.push_back(i);
        while lo.back().is_some_and(|&j| values[j] >= x) {
            lo.pop_back();
        }
        lo.push_back(i);
        if i + 1 >= window {
            let first = i + 1 - window;
            while hi.front().is_some_and(|&j| j < first) {
                hi.pop_front();
            }
            while lo.front().is_some_and(|&j| j < first) {
                lo.pop_front();
            }
            out.push((values[hi[0]], values[lo[0]]));
        }
    }
    out
}

/// Visibility over each window of `window` consecutive samples within a
/// contiguous run (see [`contiguous_runs`]).
pub fn windowed_visibility(
    times: &[f64],
    values: &[f64],
    window: usize,
) -> Result<VisibilityTrace> {
    if times.len() != values.len() {
        return Err(AnalysisError::LengthMismatch(times.len(), values.len()));
    }
    if window < 2 {
        return Err(AnalysisError::WindowTooSmall(window));
    }
    check_samples(values)?;
    let runs = contiguous_runs(times);
    let longest = runs.iter().map(|r| r.len()).max().unwrap_or(0);
    if longest < window {
        return Err(AnalysisError::TraceShorterThanWindow { window, longest });
    }
    let mut rows = Vec::new();
    for run in runs {
        if run.len() < window {
            continue;
        }
        let extremes = sliding_extremes(&values[run.clone()], window);
        for (offset, (max, min)) in extremes.into_iter().enumerate() {
            rows.push(VisibilityPoint {
                t: times[run.start + offset + window / 2],
                v: contrast(max, min),
            });
        }
    }
    Ok(VisibilityTrace { window, rows })
}

/// Visibility over the whole trace.
pub fn global_visibility(values: &[f64]) -> Result<f64> {
    check_samples(values)?;
    if values.is_empty() {
        return Err(AnalysisError::TraceShorterThanWindow {
            window: 1,
            longest: 0,
        });
    }
    let (max, min) = values
        .iter()
        .fold((f64::MIN, f64::MAX), |(hi, lo), &x| (hi.max(x), lo.min(x)));
    Ok(contrast(max, min))
}

pub fn product_trace(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(AnalysisError::LengthMismatch(a.len(), b.len()));
    }
    Ok(a.iter().zip(b).map(|(x, y)| x * y).collect())
}

/// Dominant period of a uniformly sampled trace, in displacement units.
///
/// The mean-removed trace is Hann-tapered and zero-padded to at least 8
/// times its length; the spectral peak is refined by a parabola through
/// the log magnitudes of the three highest bins.
pub fn fringe_period(trace: &[f64], displacement_per_bin: f64) -> Result<f64> {
    if !(displacement_per_bin > 0.0 && displacement_per_bin.is_finite()) {
        return Err(AnalysisError::BadScale(displacement_per_bin));
    }
    Ok(fringe_period_bins(trace)? * displacement_per_bin)
}

pub fn fringe_period_bins(trace: &[f64]) -> Result<f64> {
    spectral_period(&[trace])
}

/// Like [`fringe_period`], for a trace with gaps (such as dropped scan
/// seams). Each contiguous run is transformed separately and the power
/// spectra are summed, so direction reversals between runs do not smear
/// the peak.
pub fn fringe_period_segmented(
    times: &[f64],
    trace: &[f64],
    displacement_per_bin: f64,
) -> Result<f64> {
    if times.len() != trace.len() {
        return Err(AnalysisError::LengthMismatch(times.len(), trace.len()));
    }
    if !(displacement_per_bin > 0.0 && displacement_per_bin.is_finite()) {
        return Err(AnalysisError::BadScale(displacement_per_bin));
    }
    let segments: Vec<&[f64]> = contiguous_runs(times)
        .into_iter()
        .map(|r| &trace[r])
        .collect();
    Ok(spectral_period(&segments)? * displacement_per_bin)
}

fn spectral_period(segments: &[&[f64]]) -> Result<f64> {
    let total: usize = segments.iter().map(|s| s.len()).sum();
    let segments: Vec<&[f64]> = segments.iter().copied().filter(|s| s.len() >= 4).collect();
    let longest = segments.iter().map(|s| s.len()).max().unwrap_or(0);
    if longest == 0 {
        return Err(AnalysisError::TooFewSamples {
            need: 4,
            got: total,
        });
    }
    for s in &segments {
        if let Some(index) = s.iter().position(|v| !v.is_finite()) {
            return Err(AnalysisError::BadSample {
                index,
                value: s[index],
            });
        }
    }

    let size = (8 * longest).next_power_of_two();
    let fft = FftPlanner::new().plan_fft_forward(size);
    let mut power = vec![0.0; size / 2 + 1];
    let mut flat = true;
    for s in &segments {
        let n = s.len();
        let mean = s.iter().sum::<f64>() / n as f64;
        let scale = s.iter().map(|x| x.abs()).fold(0.0, f64::max);
        let spread = s.iter().map(|x| (x - mean).abs()).fold(0.0, f64::max);
        if spread <= 1e-12 * scale.max(f64::MIN_POSITIVE) {
            continue;
        }
        flat = false;
        // Hann taper against leakage from the negative-frequency image.
        let hann = |i: usize| 0.5 - 0.5 * (TAU * (i as f64 + 0.5) / n as f64).cos();
        let mut buf: Vec<Complex<f64>> = s
            .iter()
            .enumerate()
            .map(|(i, x)| Complex::new((x - mean) * hann(i), 0.0))
            .collect();
        buf.resize(size, Complex::new(0.0, 0.0));
        fft.process(&mut buf);
        for (p, c) in power.iter_mut().zip(&buf) {
            *p += c.norm_sqr();
        }
    }
    if flat {
        return Err(AnalysisError::NoDominantPeak);
    }

    let (k, peak) =
        power.iter().enumerate().skip(1).fold(
            (0, 0.0),
            |best, (i, &m)| if m > best.1 { (i, m) } else { best },
        );
    if k == 0 || peak <= 0.0 {
        return Err(AnalysisError::NoDominantPeak);
    }
    let shift = if k + 1 < power.len() && power[k - 1] > 0.0 && power[k + 1] > 0.0 {
        let (a, b, c) = (power[k - 1].ln(), peak.ln(), power[k + 1].ln());
        let denom = a - 2.0 * b + c;
        if denom < 0.0 {
            0.5 * (a - c) / denom
        } else {
            0.0
        }
    } else {
        0.0
    };
    let freq = (k as f64 + shift) / size as f64;
    let period = 1.0 / freq;
    if period * 3.0 > total as f64 * (1.0 + 1e-9) {
        return Err(AnalysisError::TooFewFringes {
            period_bins: period,
            len: total,
        });
    }
    Ok(period)
}

/// Visibility of a least-squares truncated Fourier series in `phase`.
///
/// The model is `a0 + Σ_{h=1..harmonics} (a_h cos hφ + b_h sin hφ)`; its
/// extremes are taken on a dense grid over one period.
pub fn harmonic_fit_visibility(phase: &[f64], values: &[f64], harmonics: usize) -> Result<f64> {
    if phase.len() != values.len() {
        return Err(AnalysisError::LengthMismatch(phase.len(), values.len()));
    }
    let cols = 1 + 2 * harmonics;
    if values.len() < cols + 1 {
        return Err(AnalysisError::TooFewSamples {
            need: cols + 1,
            got: values.len(),
        });
    }
    let basis = |x: f64, j: usize| -> f64 {
        match j {
            0 => 1.0,
            _ => {
                let h = j.div_ceil(2) as f64;
                if j % 2 == 1 {
                    (h * x).cos()
                } else {
                    (h * x).sin()
                }
            }
        }
    };
    let design = DMatrix::from_fn(values.len(), cols, |i, j| basis(phase[i], j));
    let rhs = DVector::from_column_slice(values);
    let coef = design
        .svd(true, true)
        .solve(&rhs, 1e-12)
        .map_err(|_| AnalysisError::NoDominantPeak)?;
    let grid = 4096;
    let (max, min) = (0..grid)
        .map(|k| {
            let x = TAU * k as f64 / grid as f64;
            (0..cols).map(|j| coef[j] * basis(x, j)).sum::<f64>()
        })
        .fold((f64::MIN, f64::MAX), |(hi, lo), y| (hi.max(y), lo.min(y)));
    Ok(contrast(max, min))
}
