//! Check a compiled circuit against the closed-form model.
//!
//! Mirrors, reflection phases and source phases add constant offsets to
//! `φ`, `ψ` and `θ`. Those offsets, and the intensity scale `I0`, are fitted
//! first; the report then gives the worst deviation over all samples.

use std::f64::consts::TAU;
use std::fmt;

use rand::Rng;
use thiserror::Error;

use crate::analytic::{eq3_coincidence, eq45_intensities};
use crate::circuit::{Bindings, CircuitError, EvaluationPlan};
use crate::optics::{intensity, JonesVector};
use crate::rng::{stream, Channel};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CompareError {
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error("cannot pick a model: expected detectors D1/D2 or DA/DB, found {0}")]
    UnknownLayout(String),
    #[error("sample count must be positive")]
    NoSamples,
    #[error("circuit output is dark; cannot fit an intensity scale")]
    Dark,
}

/// Which closed form the circuit is held against.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Model {
    /// `I_α`, `I_β` at detectors `D1`, `D2`.
    Intensities,
    /// Original-scheme coincidence between detectors `DA` and `DB`.
    Coincidence,
}

impl Model {
    pub fn detect(plan: &EvaluationPlan) -> Result<(Model, usize, usize), CompareError> {
        let pick = |a: &str, b: &str| Some((plan.detector_index(a)?, plan.detector_index(b)?));
        if let Some((i, j)) = pick("D1", "D2") {
            return Ok((Model::Intensities, i, j));
        }
        if let Some((i, j)) = pick("DA", "DB") {
            return Ok((Model::Coincidence, i, j));
        }
        let names: Vec<&str> = plan.detector_names().collect();
        Err(CompareError::UnknownLayout(names.join(", ")))
    }

    pub fn name(self) -> &'static str {
        match self {
            Model::Intensities => "intensities",
            Model::Coincidence => "coincidence",
        }
    }
}

/// Coincidence rate of two party fields: `|⟨E_A|E_B⟩|² / √(I_A·I_B)`.
///
/// Each photon of a pair is found in the superposition its own
/// interferometer prepares; the rate is the squared overlap of the two
/// normalized states times the geometric-mean intensity.
pub fn coincidence_rate(a: &JonesVector, b: &JonesVector) -> f64 {
    let norm = (intensity(a) * intensity(b)).sqrt();
    if norm == 0.0 {
        return 0.0;
    }
    a.inner(b).norm_sqr() / norm
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample {
    pub phi: f64,
    pub psi: f64,
    pub theta: f64,
    /// Circuit values: `(I_1, I_2)` or `(R_AB, 0)`.
    pub observed: (f64, f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompareReport {
    pub model: Model,
    pub samples: usize,
    /// Fitted `(φ, ψ, θ)` offsets, each in `[0, 2π)`.
    pub offsets: [f64; 3],
    pub i0: f64,
    /// Largest deviation, relative to the full-scale value (`2·I0` for
    /// intensities, `I0` for the coincidence rate).
    pub max_error: f64,
    pub tolerance: f64,
}

impl CompareReport {
    pub fn passed(&self) -> bool {
        self.max_error <= self.tolerance
    }
}

impl fmt::Display for CompareReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "model: {}", self.model.name())?;
        writeln!(f, "samples: {}", self.samples)?;
        writeln!(
            f,
            "offsets: phi={:.12} psi={:.12} theta={:.12}",
            self.offsets[0], self.offsets[1], self.offsets[2]
        )?;
        writeln!(f, "I0: {:.12}", self.i0)?;
        writeln!(f, "max_relative_error: {:.3e}", self.max_error)?;
        writeln!(f, "tolerance: {:.3e}", self.tolerance)?;
        writeln!(f, "result: {}", if self.passed() { "PASS" } else { "FAIL" })
    }
}

pub const DEFAULT_TOLERANCE: f64 = 1e-9;

/// Samples used for the offset fit; the error is reported over all.
const FIT_SAMPLES: usize = 256;
const COARSE_GRID: usize = 12;

/// Unit-scale model values at the sample point shifted by `offsets`.
fn model_shape(model: Model, s: &Sample, offsets: &[f64; 3]) -> (f64, f64) {
    let (phi, psi, theta) = (s.phi + offsets[0], s.psi + offsets[1], s.theta + offsets[2]);
    match model {
        Model::Intensities => eq45_intensities(phi, psi, theta, 1.0),
        Model::Coincidence => (eq3_coincidence(phi, psi, 1.0), 0.0),
    }
}

/// Least-squares scale for fixed offsets, and the residual sum of squares.
fn fit_scale(model: Model, samples: &[Sample], offsets: &[f64; 3]) -> (f64, f64) {
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let shapes: Vec<(f64, f64)> = samples
        .iter()
        .map(|s| model_shape(model, s, offsets))
        .collect();
    for (s, m) in samples.iter().zip(&shapes) {
        sxy += s.observed.0 * m.0 + s.observed.1 * m.1;
        sxx += m.0 * m.0 + m.1 * m.1;
    }
    let scale = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let sse = samples
        .iter()
        .zip(&shapes)
        .map(|(s, m)| (s.observed.0 - scale * m.0).powi(2) + (s.observed.1 - scale * m.1).powi(2))
        .sum();
    (scale, sse)
}

/// Coarse grid over the offset torus, then a compass search.
fn fit_offsets(model: Model, samples: &[Sample]) -> [f64; 3] {
    let free = match model {
        Model::Intensities => 3,
        // θ does not enter the coincidence rate.
        Model::Coincidence => 2,
    };
    let step = TAU / COARSE_GRID as f64;
    let mut best = [0.0; 3];
    let mut best_sse = f64::INFINITY;
    let count = COARSE_GRID.pow(free as u32);
    for idx in 0..count {
        let mut o = [0.0; 3];
        let mut rest = idx;
        for slot in o.iter_mut().take(free) {
            *slot = (rest % COARSE_GRID) as f64 * step;
            rest /= COARSE_GRID;
        }
        let (_, sse) = fit_scale(model, samples, &o);
        if sse < best_sse {
            best_sse = sse;
            best = o;
        }
    }

    let mut delta = step / 2.0;
    while delta > 1e-14 {
        let mut moved = false;
        for axis in 0..free {
            for sign in [1.0, -1.0] {
                let mut trial = best;
                trial[axis] += sign * delta;
                let (_, sse) = fit_scale(model, samples, &trial);
                if sse < best_sse {
                    best_sse = sse;
                    best = trial;
                    moved = true;
                }
            }
        }
        if !moved {
            delta *= 0.5;
        }
    }
    best.map(|x| x.rem_euclid(TAU))
}

/// Evaluate the circuit at `n` random phase triples drawn from `seed`.
pub fn sample_circuit(
    plan: &EvaluationPlan,
    n: usize,
    seed: u64,
) -> Result<(Model, Vec<Sample>), CompareError> {
    let (model, i, j) = Model::detect(plan)?;
    let mut rng = stream(seed, 0, Channel::Compare);
    let mut samples = Vec::with_capacity(n);
    for _ in 0..n {
        let (phi, psi, theta) = (
            rng.random::<f64>() * TAU,
            rng.random::<f64>() * TAU,
            rng.random::<f64>() * TAU,
        );
        let fields = plan.detector_fields(&Bindings::new(phi, psi, theta))?;
        let observed = match model {
            Model::Intensities => (intensity(&fields[i]), intensity(&fields[j])),
            Model::Coincidence => (coincidence_rate(&fields[i], &fields[j]), 0.0),
        };
        samples.push(Sample {
            phi,
            psi,
            theta,
            observed,
        });
    }
    Ok((model, samples))
}

pub fn compare(
    plan: &EvaluationPlan,
    n: usize,
    seed: u64,
    tolerance: f64,
) -> Result<CompareReport, CompareError> {
    if n == 0 {
        return Err(CompareError::NoSamples);
    }
    let (model, samples) = sample_circuit(plan, n, seed)?;
    let fit_set = &samples[..samples.len().min(FIT_SAMPLES)];
    let offsets = fit_offsets(model, fit_set);
    let (i0, _) = fit_scale(model, fit_set, &offsets);
    if i0.is_nan() || i0 <= 0.0 {
        return Err(CompareError::Dark);
    }
    let full_scale = match model {
        Model::Intensities => 2.0 * i0,
        Model::Coincidence => i0,
    };
    let max_error = samples
        .iter()
        .map(|s| {
            let m = model_shape(model, s, &offsets);
            let e1 = (s.observed.0 - i0 * m.0).abs();
            let e2 = (s.observed.1 - i0 * m.1).abs();
            e1.max(e2) / full_scale
        })
        .fold(0.0, f64::max);
    Ok(CompareReport {
        model,
        samples: n,
        offsets,
        i0,
        max_error,
        tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{builtin, load};

    #[test]
    fn coincidence_rate_of_identical_and_orthogonal_states() {
        let h = JonesVector::horizontal();
        assert_eq!(coincidence_rate(&h, &h), 1.0);
        assert_eq!(coincidence_rate(&h, &JonesVector::vertical()), 0.0);
        assert_eq!(coincidence_rate(&JonesVector::ZERO, &h), 0.0);
    }

    #[test]
    fn builtins_pass_with_zero_offsets() {
        for text in [builtin::FRANSON_MODIFIED, builtin::FRANSON_ORIGINAL] {
            let (_, plan) = load(text).unwrap();
            let report = compare(&plan, 500, 1, DEFAULT_TOLERANCE).unwrap();
            assert!(report.passed(), "{report}");
            assert!((report.i0 - 1.0).abs() < 1e-12);
            for o in report.offsets {
                let wrapped = o.min(TAU - o);
                assert!(wrapped < 1e-9, "{report}");
            }
        }
    }

    #[test]
    fn recovers_a_shifted_phase() {
        let text = builtin::FRANSON_MODIFIED.replace(
            "element bs_final : BS",
            "element bs_final : BS\nelement extra : PHASE { phase = 0.7 }",
        );
        let text = text.replace(
            "connect bs_b.out1 -> bs_final.in2",
            "connect bs_b.out1 -> extra.in\nconnect extra.out -> bs_final.in2",
        );
        let (_, plan) = load(&text).unwrap();
        let report = compare(&plan, 300, 2, DEFAULT_TOLERANCE).unwrap();
        assert!(report.passed(), "{report}");
    }

    #[test]
    fn unknown_layout() {
        let (_, plan) = load("source s\ndetector X : SPCM\nconnect s.out -> X.in\n").unwrap();
        assert!(matches!(
            compare(&plan, 10, 0, 1e-9),
            Err(CompareError::UnknownLayout(_))
        ));
    }
}
