//! Timed experiments: a PZT triangle scan drives `φ`, a slow model drives
//! `θ`, and every bin is evaluated through a compiled circuit and turned
//! into detector counts.

use std::f64::consts::TAU;
use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use thiserror::Error;

use crate::circuit::{Bindings, CircuitError, EvaluationPlan};
use crate::numfmt::sig9;
use crate::optics::intensity;
use crate::rng::{stream, Channel};
use crate::stats::{self, CoincidenceModel, DetectorModel, SourceModel, StatsError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RunError {
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("a seed is required for {0}")]
    SeedRequired(&'static str),
    #[error("the circuit needs at least two detectors, found {0}")]
    Detectors(usize),
    #[error("total detected intensity at zero phase is {0}; cannot normalize")]
    Dark(f64),
    #[error("invalid {what}: {value}")]
    Invalid { what: &'static str, value: f64 },
}

pub type Result<T> = std::result::Result<T, RunError>;

fn check(what: &'static str, value: f64, ok: bool) -> Result<f64> {
    if ok && value.is_finite() {
        Ok(value)
    } else {
        Err(RunError::Invalid { what, value })
    }
}

/// PZT triangle scan. The mirror displacement ramps from 0 to
/// `displacement_nm` over half a period and back.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScanProfile {
    pub period_s: f64,
    /// Drive voltage at full displacement; informational.
    pub voltage_max: f64,
    pub displacement_nm: f64,
    pub wavelength_nm: f64,
    /// Bins discarded per half-scan, split around the turning points.
    pub seam_drop: usize,
}

impl Default for ScanProfile {
    fn default() -> Self {
        Self {
            period_s: 1000.0,
            voltage_max: 100.0,
            displacement_nm: 2660.0,
            wavelength_nm: 532.0,
            seam_drop: 45,
        }
    }
}

impl ScanProfile {
    pub fn check(&self) -> Result<()> {
        check("scan period", self.period_s, self.period_s > 0.0)?;
        check(
            "displacement range",
            self.displacement_nm,
            self.displacement_nm >= 0.0,
        )?;
        check("wavelength", self.wavelength_nm, self.wavelength_nm > 0.0)?;
        check("voltage range", self.voltage_max, self.voltage_max >= 0.0)?;
        Ok(())
    }

    /// Position within the current period, in `[0, 1)`.
    fn cycle_fraction(&self, t: f64) -> f64 {
        (t / self.period_s).rem_euclid(1.0)
    }

    pub fn displacement_at(&self, t: f64) -> f64 {
        let u = self.cycle_fraction(t);
        let ramp = if u <= 0.5 { 2.0 * u } else { 2.0 - 2.0 * u };
        self.displacement_nm * ramp
    }

    pub fn voltage_at(&self, t: f64) -> f64 {
        if self.displacement_nm == 0.0 {
            return 0.0;
        }
        self.voltage_max * self.displacement_at(t) / self.displacement_nm
    }

    /// Path-length phase `2π·ΔL/λ`.
    pub fn phi_at(&self, t: f64) -> f64 {
        TAU * self.displacement_at(t) / self.wavelength_nm
    }

    /// Bins per half-scan.
    pub fn half_scan_bins(&self, bin: f64) -> usize {
        (0.5 * self.period_s / bin).round() as usize
    }

    /// Bins kept per half-scan after seam dropping.
    pub fn retained_per_half_scan(&self, bin: f64) -> usize {
        self.half_scan_bins(bin).saturating_sub(self.seam_drop)
    }

    /// Whether bin `k` falls in the seam around a turning point. The drop
    /// is split with the larger half at the start of each ramp.
    pub fn is_seam(&self, k: u64, bin: f64) -> bool {
        let half = self.half_scan_bins(bin) as u64;
        if half == 0 {
            return false;
        }
        let j = k % half;
        let lead = self.seam_drop.div_ceil(2) as u64;
        let trail = (self.seam_drop / 2) as u64;
        j < lead || j + trail >= half
    }

    /// PZT displacement swept per bin.
    pub fn displacement_per_bin(&self, bin: f64) -> f64 {
        2.0 * self.displacement_nm * bin / self.period_s
    }

    /// Bins per interference fringe (one wavelength of displacement).
    pub fn fringe_bins(&self, bin: f64) -> f64 {
        self.wavelength_nm / self.displacement_per_bin(bin)
    }
}

/// Slow evolution of the global phase between the parties.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ThetaModel {
    Constant(f64),
    /// `θ(t) = start + rate·t`.
    Linear {
        rate: f64,
        start: f64,
    },
    /// Ornstein–Uhlenbeck process with stationary standard deviation
    /// `sigma`, started from its stationary law and held constant over
    /// steps of `step_s`.
    Drift {
        sigma: f64,
        correlation_time_s: f64,
        step_s: f64,
    },
}

/// Defaults to a fixed `θ = 0`; turbulence is opt-in.
impl Default for ThetaModel {
    fn default() -> Self {
        ThetaModel::Constant(0.0)
    }
}

impl ThetaModel {
    /// Parameters used by a bare `drift`.
    pub const DEFAULT_DRIFT: ThetaModel = ThetaModel::Drift {
        sigma: 1.5,
        correlation_time_s: 600.0,
        step_s: 1.0,
    };

    pub fn needs_seed(&self) -> bool {
        matches!(self, ThetaModel::Drift { .. })
    }

    pub fn check(&self) -> Result<()> {
        match *self {
            ThetaModel::Constant(x) => check("theta", x, true).map(|_| ()),
            ThetaModel::Linear { rate, start } => {
                check("theta rate", rate, true)?;
                check("theta start", start, true).map(|_| ())
            }
            ThetaModel::Drift {
                sigma,
                correlation_time_s,
                step_s,
            } => {
                check("drift sigma", sigma, sigma >= 0.0)?;
                check(
                    "drift correlation time",
                    correlation_time_s,
                    correlation_time_s > 0.0,
                )?;
                check("drift step", step_s, step_s > 0.0).map(|_| ())
            }
        }
    }

    /// Phase path sampled at `times`, which must be non-decreasing.
    pub fn path(&self, times: &[f64], seed: Option<u64>) -> Result<Vec<f64>> {
        self.check()?;
        match *self {
            ThetaModel::Constant(x) => Ok(vec![x; times.len()]),
            ThetaModel::Linear { rate, start } => {
                Ok(times.iter().map(|t| start + rate * t).collect())
            }
            ThetaModel::Drift {
                sigma,
                correlation_time_s,
                step_s,
            } => {
                let seed = seed.ok_or(RunError::SeedRequired("theta drift"))?;
                let mut rng = stream(seed, 0, Channel::Theta);
                let a = (-step_s / correlation_time_s).exp();
                let kick = sigma * (1.0 - a * a).sqrt();
                let normal = |rng: &mut _| -> f64 { StandardNormal.sample(rng) };
                let mut value = sigma * normal(&mut rng);
                let mut step = 0u64;
                let mut out = Vec::with_capacity(times.len());
                for &t in times {
                    let target = (t / step_s + 1e-9).floor().max(0.0) as u64;
                    while step < target {
                        value = a * value + kick * normal(&mut rng);
                        step += 1;
                    }
                    out.push(value);
                }
                Ok(out)
            }
        }
    }

    pub fn theta_at(&self, t: f64, seed: Option<u64>) -> Result<f64> {
        Ok(self.path(&[t], seed)?[0])
    }
}

impl fmt::Display for ThetaModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ThetaModel::Constant(x) => write!(f, "constant:{x}"),
            ThetaModel::Linear { rate, start } => write!(f, "linear:{rate}:{start}"),
            ThetaModel::Drift {
                sigma,
                correlation_time_s,
                step_s,
            } => write!(f, "drift:{sigma}:{correlation_time_s}:{step_s}"),
        }
    }
}

impl FromStr for ThetaModel {
    type Err = String;

    /// `constant:X`, `linear:RATE[:START]`, `drift[:SIGMA[:TAU[:STEP]]]`.
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let mut parts = s.split(':');
        let kind = parts.next().unwrap_or_default().trim();
        let nums: Vec<f64> = parts
            .map(|p| {
                p.trim()
                    .parse::<f64>()
                    .map_err(|_| format!("malformed number `{p}` in `{s}`"))
            })
            .collect::<std::result::Result<_, _>>()?;
        let model = match (kind, nums.as_slice()) {
            ("constant", [x]) => ThetaModel::Constant(*x),
            ("linear", [rate]) => ThetaModel::Linear {
                rate: *rate,
                start: 0.0,
            },
            ("linear", [rate, start]) => ThetaModel::Linear {
                rate: *rate,
                start: *start,
            },
            ("drift", rest) if rest.len() <= 3 => {
                let ThetaModel::Drift {
                    sigma,
                    correlation_time_s,
                    step_s,
                } = ThetaModel::DEFAULT_DRIFT
                else {
                    unreachable!()
                };
                ThetaModel::Drift {
                    sigma: rest.first().copied().unwrap_or(sigma),
                    correlation_time_s: rest.get(1).copied().unwrap_or(correlation_time_s),
                    step_s: rest.get(2).copied().unwrap_or(step_s),
                }
            }
            _ => return Err(format!(
                "expected constant:X, linear:RATE[:START] or drift[:SIGMA[:TAU[:STEP]]], got `{s}`"
            )),
        };
        model.check().map_err(|e| e.to_string())?;
        Ok(model)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Schedule {
    pub duration_s: f64,
    pub bin_s: f64,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            duration_s: 4000.0,
            bin_s: 1.0,
        }
    }
}

impl Schedule {
    pub fn check(&self) -> Result<()> {
        check("duration", self.duration_s, self.duration_s >= 0.0)?;
        check("bin length", self.bin_s, self.bin_s > 0.0).map(|_| ())
    }

    /// Number of whole bins; bin `k` starts at `k·bin_s`.
    pub fn bin_count(&self) -> u64 {
        (self.duration_s / self.bin_s + 1e-9).floor() as u64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Mode {
    /// Expected signal counts, no darks, accidentals or sampling noise.
    Analytic,
    #[default]
    MonteCarlo,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Analytic => "analytic",
            Mode::MonteCarlo => "monte-carlo",
        }
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "analytic" => Ok(Mode::Analytic),
            "monte-carlo" | "montecarlo" | "mc" => Ok(Mode::MonteCarlo),
            _ => Err(format!(
                "unknown mode `{s}` (expected analytic or monte-carlo)"
            )),
        }
    }
}

/// Everything a run depends on besides the circuit and the seed.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RunSettings {
    pub schedule: Schedule,
    pub scan: ScanProfile,
    pub theta: ThetaModel,
    /// Alice's phase, held fixed.
    pub psi: f64,
    pub source: SourceModel,
    pub detector: DetectorModel,
    pub coincidence: CoincidenceModel,
    pub mode: Mode,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Row {
    pub t: f64,
    pub phi: f64,
    pub theta: f64,
    pub i_alpha: f64,
    pub i_beta: f64,
    pub d1: f64,
    pub d2: f64,
    pub c12: f64,
}

/// Per-bin record of a run. Counts are integers in Monte Carlo mode and
/// expected values in analytic mode.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DetectionTimeSeries {
    pub rows: Vec<Row>,
    /// Normalization intensity (mean of the two channels).
    pub i0: f64,
    /// Sum of emitted events, pairs and triples over all bins (Monte Carlo
    /// only).
    pub emitted: u64,
    pub pairs: u64,
    pub triples: u64,
}

pub const CSV_HEADER: &str = "t,phi,theta,I_alpha,I_beta,D1,D2,C12";
pub const COLUMNS: [&str; 8] = ["t", "phi", "theta", "I_alpha", "I_beta", "D1", "D2", "C12"];

impl Row {
    pub fn get(&self, column: &str) -> Option<f64> {
        Some(match column {
            "t" => self.t,
            "phi" => self.phi,
            "theta" => self.theta,
            "I_alpha" => self.i_alpha,
            "I_beta" => self.i_beta,
            "D1" => self.d1,
            "D2" => self.d2,
            "C12" => self.c12,
            _ => return None,
        })
    }
}

impl DetectionTimeSeries {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        if !COLUMNS.contains(&name) {
            return None;
        }
        Some(self.rows.iter().filter_map(|r| r.get(name)).collect())
    }

    /// CSV with `#key=value` comment lines ahead of the header.
    pub fn write_csv<W: Write>(&self, metadata: &[(&str, String)], out: W) -> io::Result<()> {
        let mut out = io::BufWriter::new(out);
        for (k, v) in metadata {
            writeln!(out, "# {k}={v}")?;
        }
        writeln!(out, "{CSV_HEADER}")?;
        for r in &self.rows {
            let cells = [r.t, r.phi, r.theta, r.i_alpha, r.i_beta, r.d1, r.d2, r.c12].map(sig9);
            writeln!(out, "{}", cells.join(","))?;
        }
        out.flush()
    }
}

/// Intensities at the first two detectors.
fn channel_intensities(plan: &EvaluationPlan, bindings: &Bindings) -> Result<(f64, f64)> {
    let fields = plan.detector_fields(bindings)?;
    Ok((intensity(&fields[0]), intensity(&fields[1])))
}

/// Run the experiment. Bins are evaluated in parallel; the result does not
/// depend on the thread count.
pub fn run(
    plan: &EvaluationPlan,
    settings: &RunSettings,
    seed: Option<u64>,
) -> Result<DetectionTimeSeries> {
    let detectors = plan.detector_names().count();
    if detectors < 2 {
        return Err(RunError::Detectors(detectors));
    }
    settings.schedule.check()?;
    settings.scan.check()?;
    settings.theta.check()?;
    check("psi", settings.psi, true)?;
    settings.source.check()?;
    settings.detector.check()?;
    settings.coincidence.check()?;
    if settings.mode == Mode::MonteCarlo && seed.is_none() {
        return Err(RunError::SeedRequired("monte-carlo mode"));
    }
    if settings.theta.needs_seed() && seed.is_none() {
        return Err(RunError::SeedRequired("theta drift"));
    }

    let (z1, z2) = channel_intensities(plan, &Bindings::new(0.0, settings.psi, 0.0))?;
    let i0 = 0.5 * (z1 + z2);
    if !(i0 > 0.0 && i0.is_finite()) {
        return Err(RunError::Dark(z1 + z2));
    }

    let bin = settings.schedule.bin_s;
    let kept: Vec<u64> = (0..settings.schedule.bin_count())
        .filter(|&k| !settings.scan.is_seam(k, bin))
        .collect();
    let times: Vec<f64> = kept.iter().map(|&k| k as f64 * bin).collect();
    let thetas = settings.theta.path(&times, seed)?;
    let seed = seed.unwrap_or(0);

    let evaluated: Vec<(Row, stats::BinCounts)> = kept
        .par_iter()
        .zip(times.par_iter())
        .zip(thetas.par_iter())
        .map(|((&k, &t), &theta)| -> Result<(Row, stats::BinCounts)> {
            let phi = settings.scan.phi_at(t);
            let (ia, ib) = channel_intensities(plan, &Bindings::new(phi, settings.psi, theta))?;
            let exp = stats::expected_bin_counts(
                ia,
                ib,
                i0,
                &settings.source,
                &settings.detector,
                &settings.coincidence,
                bin,
            )?;
            let (d1, d2, c12, counts) = match settings.mode {
                Mode::Analytic => (
                    exp.emitted * exp.p1 * exp.efficiency,
                    exp.emitted * exp.p2 * exp.efficiency,
                    exp.pair_coincidences(),
                    stats::BinCounts::default(),
                ),
                Mode::MonteCarlo => {
                    let c = stats::sample_bin(&exp, seed, k);
                    (c.n1 as f64, c.n2 as f64, c.c12 as f64, c)
                }
            };
            let row = Row {
                t,
                phi,
                theta,
                i_alpha: ia,
                i_beta: ib,
                d1,
                d2,
                c12,
            };
            Ok((row, counts))
        })
        .collect::<Result<_>>()?;

    let mut series = DetectionTimeSeries {
        rows: Vec::with_capacity(evaluated.len()),
        i0,
        ..Default::default()
    };
    for (row, c) in evaluated {
        series.rows.push(row);
        series.emitted += c.emitted;
        series.pairs += c.pairs;
        series.triples += c.triples;
    }
    Ok(series)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    #[test]
    fn triangle_examples() {
        let s = ScanProfile::default();
        assert_eq!(s.phi_at(0.0), 0.0);
        assert_abs_diff_eq!(s.phi_at(500.0), 10.0 * PI, epsilon = 1e-12);
        assert_abs_diff_eq!(s.phi_at(1000.0), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.phi_at(250.0), 5.0 * PI, epsilon = 1e-12);
        assert_abs_diff_eq!(s.phi_at(750.0), 5.0 * PI, epsilon = 1e-12);
        assert_abs_diff_eq!(s.voltage_at(500.0), 100.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.fringe_bins(1.0), 100.0, epsilon = 1e-9);
    }

    #[test]
    fn seam_keeps_455_of_500() {
        let s = ScanProfile::default();
        assert_eq!(s.half_scan_bins(1.0), 500);
        let kept = (0..500).filter(|&k| !s.is_seam(k, 1.0)).count();
        assert_eq!(kept, 455);
        assert_eq!(s.retained_per_half_scan(1.0), 455);
        assert!(s.is_seam(0, 1.0) && s.is_seam(22, 1.0) && !s.is_seam(23, 1.0));
        assert!(
            !s.is_seam(477, 1.0)
                && s.is_seam(478, 1.0)
                && s.is_seam(522, 1.0)
                && !s.is_seam(523, 1.0)
        );
    }

    #[test]
    fn theta_examples() {
        assert_eq!(
            ThetaModel::Constant(PI / 2.0)
                .theta_at(123.0, None)
                .unwrap(),
            PI / 2.0
        );
        let lin = ThetaModel::Linear {
            rate: 4.0 * PI / 4000.0,
            start: 0.0,
        };
        assert_abs_diff_eq!(
            lin.theta_at(2000.0, None).unwrap(),
            2.0 * PI,
            epsilon = 1e-12
        );
        assert_eq!(
            ThetaModel::DEFAULT_DRIFT.theta_at(1.0, None),
            Err(RunError::SeedRequired("theta drift"))
        );
    }

    #[test]
    fn drift_reaches_stationary_variance() {
        let model = ThetaModel::Drift {
            sigma: 0.8,
            correlation_time_s: 20.0,
            step_s: 1.0,
        };
        let n = 4000;
        let samples: Vec<f64> = (0..n)
            .map(|seed| model.theta_at(500.0, Some(seed)).unwrap())
            .collect();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((var / 0.64 - 1.0).abs() < 0.1, "variance {var}");
    }

    #[test]
    fn drift_path_is_step_held_and_prefix_stable() {
        let model = ThetaModel::DEFAULT_DRIFT;
        let long = model.path(&[0.0, 0.5, 1.0, 2.0, 3.0], Some(4)).unwrap();
        assert_eq!(long[0], long[1]);
        assert_ne!(long[1], long[2]);
        let short = model.path(&[0.0, 1.0, 2.0], Some(4)).unwrap();
        assert_eq!(short, [long[0], long[2], long[3]]);
    }

    #[test]
    fn theta_model_text() {
        assert_eq!(
            "constant:0".parse::<ThetaModel>().unwrap(),
            ThetaModel::Constant(0.0)
        );
        assert_eq!(
            "linear:0.5".parse::<ThetaModel>().unwrap(),
            ThetaModel::Linear {
                rate: 0.5,
                start: 0.0
            }
        );
        assert_eq!(
            "drift".parse::<ThetaModel>().unwrap(),
            ThetaModel::DEFAULT_DRIFT
        );
        let custom: ThetaModel = "drift:0.2:60".parse().unwrap();
        assert_eq!(custom.to_string().parse::<ThetaModel>().unwrap(), custom);
        assert!("drift:-1".parse::<ThetaModel>().is_err());
        assert!("wobble:1".parse::<ThetaModel>().is_err());
        assert!("constant".parse::<ThetaModel>().is_err());
    }

    #[test]
    fn schedule_bins() {
        assert_eq!(Schedule::default().bin_count(), 4000);
        assert_eq!(
            Schedule {
                duration_s: 0.0,
                bin_s: 1.0
            }
            .bin_count(),
            0
        );
        assert_eq!(
            Schedule {
                duration_s: 1.0,
                bin_s: 0.1
            }
            .bin_count(),
            10
        );
    }
}
