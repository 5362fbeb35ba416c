//! Photon counting: source statistics, threshold detectors, dark counts and
//! coincidence windows.
//!
//! A bin of length `bin` seconds is sampled as follows. `N` photon events
//! are emitted (Poisson with mean `R1·bin`, or a narrower binomial in
//! sub-Poisson mode). `K ~ Bin(N, r2)` of them are pairs and
//! `T ~ Bin(K, r3)` of those are triples. Each event is routed to D1 or D2
//! with the interference probabilities `I_α/2I0`, `I_β/2I0` and detected
//! with the detector efficiency. A pair produces a coincidence when both
//! photons click on opposite detectors, probability `(I_α·I_β/I0²)·η²`.
//! Dark counts and accidental coincidences are independent Poisson terms.

use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::rng::{binomial, poisson, stream, Channel};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("{what} must be finite and non-negative, got {value}")]
    Negative { what: &'static str, value: f64 },
    #[error("{what} must lie in [0, 1], got {value}")]
    NotAFraction { what: &'static str, value: f64 },
    #[error("{what} must be positive, got {value}")]
    NotPositive { what: &'static str, value: f64 },
    #[error("I_alpha + I_beta = {sum} is inconsistent with 2*I0 = {expected}")]
    InconsistentIntensities { sum: f64, expected: f64 },
    #[error("photon-number-resolving detectors are not modeled")]
    NumberResolving,
}

pub type Result<T> = std::result::Result<T, StatsError>;

fn non_negative(what: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() && value >= 0.0 {
        Ok(value)
    } else {
        Err(StatsError::Negative { what, value })
    }
}

fn fraction(what: &'static str, value: f64) -> Result<f64> {
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(StatsError::NotAFraction { what, value })
    }
}

fn positive(what: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(StatsError::NotPositive { what, value })
    }
}

/// Photon-number law of the source.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StatisticsMode {
    Poisson,
    /// Narrowed law with a Fano-like factor in `[0, 1]`; `1` is Poisson.
    SubPoisson(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SourceModel {
    /// Mean photon number per detection gate.
    pub mean_photon_number: f64,
    /// Photon events per second reaching the interferometer.
    pub singles_rate: f64,
    /// Pair events per single event.
    pub pair_fraction: f64,
    /// Triple events per pair event.
    pub triple_fraction: f64,
    pub statistics: StatisticsMode,
}

impl Default for SourceModel {
    fn default() -> Self {
        Self {
            mean_photon_number: 0.04,
            singles_rate: 1.0e4,
            pair_fraction: 0.01,
            triple_fraction: 0.01,
            statistics: StatisticsMode::Poisson,
        }
    }
}

impl SourceModel {
    pub fn check(&self) -> Result<()> {
        non_negative("mean photon number", self.mean_photon_number)?;
        non_negative("singles rate", self.singles_rate)?;
        fraction("pair fraction", self.pair_fraction)?;
        fraction("triple fraction", self.triple_fraction)?;
        if let StatisticsMode::SubPoisson(f) = self.statistics {
            fraction("sub-Poisson factor", f)?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetectorModel {
    /// Dark counts per second.
    pub dark_rate: f64,
    pub efficiency: f64,
    pub pulse_width_ns: f64,
    pub number_resolving: bool,
}

impl Default for DetectorModel {
    fn default() -> Self {
        Self {
            dark_rate: 27.0,
            efficiency: 1.0,
            pulse_width_ns: 10.0,
            number_resolving: false,
        }
    }
}

impl DetectorModel {
    pub fn check(&self) -> Result<()> {
        non_negative("dark rate", self.dark_rate)?;
        fraction("efficiency", self.efficiency)?;
        positive("pulse width", self.pulse_width_ns)?;
        if self.number_resolving {
            return Err(StatsError::NumberResolving);
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoincidenceModel {
    pub window_ns: f64,
    /// Leave accidental coincidences out of `c12`, as if they had been
    /// subtracted.
    pub accidental_correction: bool,
}

impl Default for CoincidenceModel {
    fn default() -> Self {
        Self {
            window_ns: 10.0,
            accidental_correction: false,
        }
    }
}

impl CoincidenceModel {
    pub fn check(&self) -> Result<()> {
        positive("coincidence window", self.window_ns).map(|_| ())
    }
}

/// Click probability of a threshold detector seeing `mu` photons on
/// average.
pub fn click_probability(mu: f64, efficiency: f64) -> Result<f64> {
    if mu.is_nan() || mu < 0.0 {
        return Err(StatsError::Negative {
            what: "expected photon number",
            value: mu,
        });
    }
    fraction("efficiency", efficiency)?;
    Ok(-(-efficiency * mu).exp_m1())
}

/// Mean accidental coincidences per bin for singles `l1`, `l2` counted in
/// the same bin: `2·R1·R2·τ·bin`.
pub fn accidentals(l1: f64, l2: f64, window_ns: f64, bin: f64) -> f64 {
    if bin <= 0.0 {
        return 0.0;
    }
    2.0 * (l1 * l2) * window_ns * 1e-9 / bin
}

/// Everything needed to sample one bin, plus the resulting means.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BinExpectation {
    /// Mean number of emitted events, `R1·bin`.
    pub emitted: f64,
    pub statistics: StatisticsMode,
    /// Routing probabilities to D1 and D2 before detection.
    pub p1: f64,
    pub p2: f64,
    pub efficiency: f64,
    pub pair_fraction: f64,
    pub triple_fraction: f64,
    /// Probability that a pair gives a D1/D2 coincidence.
    pub pair_click: f64,
    pub dark1: f64,
    pub dark2: f64,
    /// Mean accidental coincidences; zero when corrected.
    pub accidentals: f64,
}

impl BinExpectation {
    pub fn lambda1(&self) -> f64 {
        self.emitted * self.p1 * self.efficiency + self.dark1
    }

    pub fn lambda2(&self) -> f64 {
        self.emitted * self.p2 * self.efficiency + self.dark2
    }

    /// Coincidences from genuine pairs.
    pub fn pair_coincidences(&self) -> f64 {
        self.emitted * self.pair_fraction * self.pair_click
    }

    pub fn lambda12(&self) -> f64 {
        self.pair_coincidences() + self.accidentals
    }

    pub fn means(&self) -> (f64, f64, f64) {
        (self.lambda1(), self.lambda2(), self.lambda12())
    }
}

/// Relative tolerance on `I_α + I_β = 2·I0`.
pub const INTENSITY_SUM_TOLERANCE: f64 = 1e-9;

pub fn expected_bin_counts(
    i_alpha: f64,
    i_beta: f64,
    i0: f64,
    source: &SourceModel,
    detector: &DetectorModel,
    coincidence: &CoincidenceModel,
    bin: f64,
) -> Result<BinExpectation> {
    source.check()?;
    detector.check()?;
    coincidence.check()?;
    non_negative("bin length", bin)?;
    non_negative("I_alpha", i_alpha)?;
    non_negative("I_beta", i_beta)?;
    positive("I0", i0)?;
    let sum = i_alpha + i_beta;
    if (sum - 2.0 * i0).abs() > INTENSITY_SUM_TOLERANCE * 2.0 * i0 {
        return Err(StatsError::InconsistentIntensities {
            sum,
            expected: 2.0 * i0,
        });
    }
    let eff = detector.efficiency;
    let mut exp = BinExpectation {
        emitted: source.singles_rate * bin,
        statistics: source.statistics,
        p1: i_alpha / (2.0 * i0),
        p2: i_beta / (2.0 * i0),
        efficiency: eff,
        pair_fraction: source.pair_fraction,
        triple_fraction: source.triple_fraction,
        pair_click: ((i_alpha * i_beta) / (i0 * i0) * eff * eff).min(1.0),
        dark1: detector.dark_rate * bin,
        dark2: detector.dark_rate * bin,
        accidentals: 0.0,
    };
    if !coincidence.accidental_correction {
        exp.accidentals = accidentals(exp.lambda1(), exp.lambda2(), coincidence.window_ns, bin);
    }
    Ok(exp)
}

/// Sampled counts for one bin.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BinCounts {
    pub n1: u64,
    pub n2: u64,
    pub c12: u64,
    pub emitted: u64,
    pub pairs: u64,
    pub triples: u64,
}

/// Event count with mean `m`: Poisson, or `Bin(⌈m/(1−f)⌉, m/n)` whose
/// variance is about `f·m`.
fn emission_count(rng: &mut ChaCha8Rng, m: f64, mode: StatisticsMode) -> u64 {
    match mode {
        StatisticsMode::SubPoisson(f) if f < 1.0 && m > 0.0 => {
            let n = (m / (1.0 - f)).ceil().max(1.0) as u64;
            binomial(rng, n, m / n as f64)
        }
        _ => poisson(rng, m),
    }
}

/// Draw one bin. Deterministic in `(seed, bin_index)`.
pub fn sample_bin(exp: &BinExpectation, seed: u64, bin_index: u64) -> BinCounts {
    let emitted = emission_count(
        &mut stream(seed, bin_index, Channel::Emission),
        exp.emitted,
        exp.statistics,
    );
    let pairs = binomial(
        &mut stream(seed, bin_index, Channel::Pairs),
        emitted,
        exp.pair_fraction,
    );
    let triples = binomial(
        &mut stream(seed, bin_index, Channel::Triples),
        pairs,
        exp.triple_fraction,
    );

    let q1 = exp.p1 * exp.efficiency;
    let q2 = exp.p2 * exp.efficiency;
    let mut routing = stream(seed, bin_index, Channel::Routing);
    let det1 = binomial(&mut routing, emitted, q1);
    let rest = if q1 < 1.0 { q2 / (1.0 - q1) } else { 0.0 };
    let det2 = binomial(&mut routing, emitted - det1, rest);

    let dark1 = poisson(&mut stream(seed, bin_index, Channel::Dark1), exp.dark1);
    let dark2 = poisson(&mut stream(seed, bin_index, Channel::Dark2), exp.dark2);
    let genuine = binomial(
        &mut stream(seed, bin_index, Channel::PairClicks),
        pairs,
        exp.pair_click,
    );
    let accidental = poisson(
        &mut stream(seed, bin_index, Channel::Accidentals),
        exp.accidentals,
    );

    BinCounts {
        n1: det1 + dark1,
        n2: det2 + dark2,
        c12: genuine + accidental,
        emitted,
        pairs,
        triples,
    }
}

/// Probability of `n` photons in a gate with mean `mu`.
///
/// Sub-Poisson mode keeps the vacuum and single-photon terms of a Poisson
/// draw and thins every multi-photon event: an `n ≥ 2` event keeps its
/// first photon and each further photon with probability `f`.
pub fn photon_number_pmf(mode: StatisticsMode, mu: f64, n: u64) -> f64 {
    let poisson_pmf = |k: u64| (k as f64 * mu.ln() - mu - ln_factorial(k)).exp();
    if mu <= 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    let f = match mode {
        StatisticsMode::Poisson => return poisson_pmf(n),
        StatisticsMode::SubPoisson(f) => f,
    };
    match n {
        0 => poisson_pmf(0),
        _ => {
            // P'(n) = Σ_{k ≥ max(n,2)} P(k)·C(k−1, n−1)·fⁿ⁻¹(1−f)ᵏ⁻ⁿ, plus P(1) when n = 1.
            let mut total = if n == 1 { poisson_pmf(1) } else { 0.0 };
            let mut k = n.max(2);
            loop {
                let pk = poisson_pmf(k);
                let term = pk * binomial_pmf(k - 1, n - 1, f);
                total += term;
                if k > n + 20 && pk < 1e-300_f64.max(total * 1e-18) {
                    break;
                }
                k += 1;
                if k > 10_000 {
                    break;
                }
            }
            total
        }
    }
}

fn ln_factorial(n: u64) -> f64 {
    (1..=n).map(|k| (k as f64).ln()).sum()
}

fn binomial_pmf(n: u64, k: u64, p: f64) -> f64 {
    if k > n {
        return 0.0;
    }
    let ln_choose = ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k);
    let a = if k == 0 { 0.0 } else { k as f64 * p.ln() };
    let b = if n == k {
        0.0
    } else {
        (n - k) as f64 * (1.0 - p).ln()
    };
    (ln_choose + a + b).exp()
}

/// `P(2)/P(1)` of the gate photon-number law.
pub fn pair_single_ratio(mode: StatisticsMode, mu: f64) -> f64 {
    photon_number_pmf(mode, mu, 2) / photon_number_pmf(mode, mu, 1)
}

/// Sub-Poisson factor whose `P(2)/P(1)` equals `target`, by bisection.
/// `None` when the target is above the Poisson ratio or not positive.
pub fn tune_sub_poisson_factor(mu: f64, target: f64) -> Option<f64> {
    if !(mu > 0.0 && target > 0.0) || target > pair_single_ratio(StatisticsMode::Poisson, mu) {
        return None;
    }
    let ratio = |f: f64| pair_single_ratio(StatisticsMode::SubPoisson(f), mu);
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if ratio(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Photon number of one gate.
pub fn sample_gate_photons(rng: &mut ChaCha8Rng, mode: StatisticsMode, mu: f64) -> u64 {
    let n = poisson(rng, mu);
    match mode {
        StatisticsMode::SubPoisson(f) if n >= 2 => 1 + binomial(rng, n - 1, f),
        _ => n,
    }
}

/// Histogram of photon numbers over `gates` gates; index `n` holds the
/// number of gates with `n` photons (the last bin collects the tail).
pub fn gate_histogram(mode: StatisticsMode, mu: f64, gates: u64, seed: u64) -> [u64; 4] {
    let mut rng = stream(seed, 0, Channel::Gates);
    let mut hist = [0u64; 4];
    for _ in 0..gates {
        let n = sample_gate_photons(&mut rng, mode, mu) as usize;
        hist[n.min(3)] += 1;
    }
    hist
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn click_probability_examples() {
        assert_eq!(click_probability(0.0, 1.0).unwrap(), 0.0);
        assert_eq!(click_probability(1e6, 1.0).unwrap(), 1.0);
        // 1 − e^{−x} = x − x²/2 + x³/6 − x⁴/24 + …
        let x: f64 = 0.04;
        let series = x - x * x / 2.0 + x.powi(3) / 6.0 - x.powi(4) / 24.0 + x.powi(5) / 120.0;
        assert_abs_diff_eq!(
            click_probability(0.04, 1.0).unwrap(),
            series,
            epsilon = 1e-10
        );
        assert!(click_probability(-0.1, 1.0).is_err());
        assert!(click_probability(0.1, 1.5).is_err());
    }

    fn expect(i_alpha: f64, i_beta: f64) -> BinExpectation {
        expected_bin_counts(
            i_alpha,
            i_beta,
            1.0,
            &SourceModel::default(),
            &DetectorModel::default(),
            &CoincidenceModel::default(),
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn dark_fringe_leaves_only_darks() {
        let e = expect(0.0, 2.0);
        assert_eq!(e.lambda1(), 27.0);
        assert_eq!(e.pair_coincidences(), 0.0);
    }

    #[test]
    fn symmetric_point() {
        let e = expect(1.0, 1.0);
        assert_eq!(e.lambda1(), e.lambda2());
        assert_abs_diff_eq!(e.pair_coincidences(), 0.01 * 1e4, epsilon = 1e-12);
    }

    #[test]
    fn accidental_rate_example() {
        // 2 · 5000/s · 5000/s · 10 ns · 1 s
        assert_abs_diff_eq!(accidentals(5000.0, 5000.0, 10.0, 1.0), 0.5, epsilon = 1e-12);
        let corrected = expected_bin_counts(
            1.0,
            1.0,
            1.0,
            &SourceModel::default(),
            &DetectorModel::default(),
            &CoincidenceModel {
                accidental_correction: true,
                ..Default::default()
            },
            1.0,
        )
        .unwrap();
        assert_eq!(corrected.accidentals, 0.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let s = SourceModel::default();
        let d = DetectorModel::default();
        let c = CoincidenceModel::default();
        assert!(matches!(
            expected_bin_counts(1.0, 0.5, 1.0, &s, &d, &c, 1.0),
            Err(StatsError::InconsistentIntensities { .. })
        ));
        let bad = SourceModel {
            pair_fraction: 1.5,
            ..s
        };
        assert!(expected_bin_counts(1.0, 1.0, 1.0, &bad, &d, &c, 1.0).is_err());
        let resolving = DetectorModel {
            number_resolving: true,
            ..d
        };
        assert_eq!(
            expected_bin_counts(1.0, 1.0, 1.0, &s, &resolving, &c, 1.0),
            Err(StatsError::NumberResolving)
        );
        let zero_window = CoincidenceModel {
            window_ns: 0.0,
            ..c
        };
        assert!(expected_bin_counts(1.0, 1.0, 1.0, &s, &d, &zero_window, 1.0).is_err());
    }

    #[test]
    fn zero_means_sample_zero() {
        let source = SourceModel {
            singles_rate: 0.0,
            ..Default::default()
        };
        let det = DetectorModel {
            dark_rate: 0.0,
            ..Default::default()
        };
        let e = expected_bin_counts(
            1.0,
            1.0,
            1.0,
            &source,
            &det,
            &CoincidenceModel::default(),
            1.0,
        )
        .unwrap();
        for bin in 0..100 {
            assert_eq!(sample_bin(&e, 3, bin), BinCounts::default());
        }
    }

    #[test]
    fn sample_mean_within_clt_bound() {
        let source = SourceModel {
            singles_rate: 200.0,
            ..Default::default()
        };
        let det = DetectorModel {
            dark_rate: 0.0,
            ..Default::default()
        };
        let e = expected_bin_counts(
            1.0,
            1.0,
            1.0,
            &source,
            &det,
            &CoincidenceModel::default(),
            1.0,
        )
        .unwrap();
        assert_abs_diff_eq!(e.lambda1(), 100.0, epsilon = 1e-12);
        let n = 100_000u64;
        let total: u64 = (0..n).map(|b| sample_bin(&e, 11, b).n1).sum();
        let mean = total as f64 / n as f64;
        assert!(
            (mean - 100.0).abs() <= 3.0 * (100.0 / n as f64).sqrt(),
            "mean {mean}"
        );
    }

    #[test]
    fn sub_poisson_narrows_bin_counts() {
        let source = SourceModel {
            statistics: StatisticsMode::SubPoisson(0.25),
            ..Default::default()
        };
        let e = expected_bin_counts(
            1.0,
            1.0,
            1.0,
            &source,
            &DetectorModel::default(),
            &CoincidenceModel::default(),
            1.0,
        )
        .unwrap();
        let xs: Vec<f64> = (0..4000)
            .map(|b| sample_bin(&e, 5, b).emitted as f64)
            .collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        assert!((mean - 1e4).abs() < 5.0, "mean {mean}");
        let fano = var / mean;
        assert!((fano - 0.25).abs() < 0.03, "fano {fano}");
    }

    #[test]
    fn poisson_pmf_ratio_is_half_mean() {
        assert_abs_diff_eq!(
            pair_single_ratio(StatisticsMode::Poisson, 0.04),
            0.02,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            pair_single_ratio(StatisticsMode::SubPoisson(1.0), 0.04),
            0.02,
            epsilon = 1e-12
        );
    }

    #[test]
    fn sub_poisson_pmf_sums_to_one() {
        for &f in &[0.0, 0.3, 0.7] {
            let total: f64 = (0..60)
                .map(|n| photon_number_pmf(StatisticsMode::SubPoisson(f), 0.5, n))
                .sum();
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
        }
        // f = 0 collapses every multi-photon event to one photon.
        assert_eq!(
            photon_number_pmf(StatisticsMode::SubPoisson(0.0), 0.5, 2),
            0.0
        );
    }

    #[test]
    fn tuned_factor_hits_one_percent() {
        let f = tune_sub_poisson_factor(0.04, 0.01).unwrap();
        assert!(f > 0.45 && f < 0.55, "f = {f}");
        let ratio = pair_single_ratio(StatisticsMode::SubPoisson(f), 0.04);
        assert_abs_diff_eq!(ratio, 0.01, epsilon = 1e-12);
        assert_eq!(tune_sub_poisson_factor(0.04, 0.03), None);
    }

    #[test]
    fn empirical_gate_ratio_tracks_the_law() {
        let f = tune_sub_poisson_factor(0.04, 0.01).unwrap();
        let hist = gate_histogram(StatisticsMode::SubPoisson(f), 0.04, 1_000_000, 9);
        let ratio = hist[2] as f64 / hist[1] as f64;
        // σ of a ratio of counts ≈ ratio·√(1/n2 + 1/n1)
        let sigma = ratio * (1.0 / hist[2] as f64 + 1.0 / hist[1] as f64).sqrt();
        assert!(
            (ratio - 0.01).abs() < 3.0 * sigma,
            "ratio {ratio} ± {sigma}"
        );
    }

    proptest! {
        #[test]
        fn coincidence_mean_monotone_in_product(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            // I_α·I_β = 1 − x² for I_α = 1 − x.
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let wide = expect(1.0 - hi, 1.0 + hi);
            let narrow = expect(1.0 - lo, 1.0 + lo);
            prop_assert!(narrow.lambda12() >= wide.lambda12());
        }

        #[test]
        fn sampling_is_deterministic(seed in any::<u64>(), bin in 0u64..1_000_000, ia in 0.0f64..2.0) {
            let e = expect(ia, 2.0 - ia);
            prop_assert_eq!(sample_bin(&e, seed, bin), sample_bin(&e, seed, bin));
        }
    }
}
