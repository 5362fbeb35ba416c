//! Run configuration: defaults, `key = value` files, `FRANSONSIM_*`
//! environment variables and command-line overrides, applied in that order.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use fransonsim_core::numfmt::sig9;
use fransonsim_core::runner::{Mode, RunSettings, ThetaModel};
use fransonsim_core::stats::StatisticsMode;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const ENV_PREFIX: &str = "FRANSONSIM_";
pub const DEFAULT_CIRCUIT: &str = "franson_modified";

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("bad value for `{key}`: {message}")]
    BadValue { key: String, message: String },
    #[error("{path}:{line}: expected `key = value`")]
    Syntax { path: String, line: usize },
    #[error("{origin}: {source}")]
    At {
        origin: String,
        #[source]
        source: Box<ConfigError>,
    },
}

impl ConfigError {
    fn at(self, origin: impl Into<String>) -> Self {
        ConfigError::At {
            origin: origin.into(),
            source: Box::new(self),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    /// Circuit file path or builtin name.
    pub circuit: String,
    pub settings: RunSettings,
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            circuit: DEFAULT_CIRCUIT.to_string(),
            settings: RunSettings::default(),
            seed: None,
            output: None,
        }
    }
}

/// Every accepted key with its unit, for `--help` and error messages.
pub const KEYS: &[(&str, &str)] = &[
    ("circuit", "path or builtin name"),
    ("seed", "integer"),
    ("output", "path"),
    ("mode", "analytic | monte-carlo"),
    ("duration", "s"),
    ("bin", "s"),
    ("scan_period", "s"),
    ("voltage_max", "V"),
    ("displacement", "nm"),
    ("wavelength", "nm"),
    ("seam_drop", "bins per half-scan"),
    (
        "theta",
        "constant:X | linear:RATE[:START] | drift[:SIGMA[:TAU[:STEP]]]",
    ),
    ("psi", "rad or deg"),
    ("mean_photon_number", "photons per gate"),
    ("singles_rate", "1/s"),
    ("pair_fraction", "fraction"),
    ("triple_fraction", "fraction"),
    ("statistics", "poisson | sub-poisson:F"),
    ("dark_rate", "1/s"),
    ("efficiency", "fraction"),
    ("pulse_width", "ns"),
    ("number_resolving", "true | false"),
    ("coincidence_window", "ns"),
    ("accidental_correction", "true | false"),
];

const ANGLE: &[(&str, f64)] = &[("deg", std::f64::consts::PI / 180.0), ("rad", 1.0)];
const LENGTH: &[(&str, f64)] = &[("nm", 1.0), ("um", 1000.0)];
const SECONDS: &[(&str, f64)] = &[("ms", 1e-3), ("s", 1.0)];
const NANOS: &[(&str, f64)] = &[("ns", 1.0), ("us", 1000.0)];
const VOLTS: &[(&str, f64)] = &[("V", 1.0)];
const RATE: &[(&str, f64)] = &[("/s", 1.0)];
const PLAIN: &[(&str, f64)] = &[];

/// A number with an optional unit suffix, converted to the first unit's
/// scale (`532nm`, `22.5 deg`, `10ns`).
fn quantity(value: &str, units: &[(&str, f64)]) -> Result<f64, String> {
    let value = value.trim();
    let (number, factor) = units
        .iter()
        .find_map(|(suffix, f)| value.strip_suffix(suffix).map(|n| (n.trim_end(), *f)))
        .unwrap_or((value, 1.0));
    let x: f64 = number
        .parse()
        .map_err(|_| format!("malformed number `{value}`"))?;
    if !x.is_finite() {
        return Err(format!("`{value}` is not finite"));
    }
    Ok(x * factor)
}

fn boolean(value: &str) -> Result<bool, String> {
    match value.trim() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        other => Err(format!("expected true or false, found `{other}`")),
    }
}

fn statistics(value: &str) -> Result<StatisticsMode, String> {
    match value.trim().split_once(':') {
        None if value.trim() == "poisson" => Ok(StatisticsMode::Poisson),
        Some(("sub-poisson", f)) => quantity(f, PLAIN).map(StatisticsMode::SubPoisson),
        _ => Err(format!(
            "expected poisson or sub-poisson:F, found `{value}`"
        )),
    }
}

fn statistics_text(mode: StatisticsMode) -> String {
    match mode {
        StatisticsMode::Poisson => "poisson".into(),
        StatisticsMode::SubPoisson(f) => format!("sub-poisson:{}", sig9(f)),
    }
}

impl RunConfig {
    pub fn apply(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let bad = |message: String| ConfigError::BadValue {
            key: key.to_string(),
            message,
        };
        let s = &mut self.settings;
        let num = |units| quantity(value, units).map_err(bad);
        match key {
            "circuit" => self.circuit = value.trim().to_string(),
            "seed" => {
                let v = value.trim();
                self.seed =
                    if v == "none" {
                        None
                    } else {
                        Some(v.parse().map_err(|_| {
                            bad(format!("expected an unsigned integer, found `{v}`"))
                        })?)
                    };
            }
            "output" => self.output = Some(PathBuf::from(value.trim())),
            "mode" => s.mode = value.trim().parse::<Mode>().map_err(bad)?,
            "duration" => s.schedule.duration_s = num(SECONDS)?,
            "bin" => s.schedule.bin_s = num(SECONDS)?,
            "scan_period" => s.scan.period_s = num(SECONDS)?,
            "voltage_max" => s.scan.voltage_max = num(VOLTS)?,
            "displacement" => s.scan.displacement_nm = num(LENGTH)?,
            "wavelength" => s.scan.wavelength_nm = num(LENGTH)?,
            "seam_drop" => {
                s.scan.seam_drop = value
                    .trim()
                    .parse()
                    .map_err(|_| bad(format!("expected a bin count, found `{}`", value.trim())))?
            }
            "theta" => s.theta = value.trim().parse::<ThetaModel>().map_err(bad)?,
            "psi" => s.psi = num(ANGLE)?,
            "mean_photon_number" => s.source.mean_photon_number = num(PLAIN)?,
            "singles_rate" => s.source.singles_rate = num(RATE)?,
            "pair_fraction" => s.source.pair_fraction = num(PLAIN)?,
            "triple_fraction" => s.source.triple_fraction = num(PLAIN)?,
            "statistics" => s.source.statistics = statistics(value).map_err(bad)?,
            "dark_rate" => s.detector.dark_rate = num(RATE)?,
            "efficiency" => s.detector.efficiency = num(PLAIN)?,
            "pulse_width" => s.detector.pulse_width_ns = num(NANOS)?,
            "number_resolving" => s.detector.number_resolving = boolean(value).map_err(bad)?,
            "coincidence_window" => s.coincidence.window_ns = num(NANOS)?,
            "accidental_correction" => {
                s.coincidence.accidental_correction = boolean(value).map_err(bad)?
            }
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Apply a `key = value` file. Blank lines and `#` comments are skipped.
    pub fn apply_file_text(&mut self, text: &str, path: &Path) -> Result<(), ConfigError> {
        let origin = path.display().to_string();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                path: origin.clone(),
                line: i + 1,
            })?;
            self.apply(key.trim(), value.trim())
                .map_err(|e| e.at(format!("{origin}:{}", i + 1)))?;
        }
        Ok(())
    }

    /// Apply every `FRANSONSIM_<KEY>` variable in `vars`.
    pub fn apply_env<I>(&mut self, vars: I) -> Result<(), ConfigError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut pairs: Vec<(String, String)> = vars
            .into_iter()
            .filter_map(|(k, v)| {
                let key = k.strip_prefix(ENV_PREFIX)?.to_ascii_lowercase();
                KEYS.iter()
                    .any(|(name, _)| *name == key)
                    .then_some((key, v))
            })
            .collect();
        pairs.sort();
        for (key, value) in pairs {
            let origin = format!("{ENV_PREFIX}{}", key.to_ascii_uppercase());
            self.apply(&key, &value).map_err(|e| e.at(origin))?;
        }
        Ok(())
    }

    /// Resolved settings as sorted `key = value` lines, one per key except
    /// `output`. Hashing this text identifies the run.
    pub fn canonical(&self) -> String {
        let s = &self.settings;
        let mut pairs: Vec<(&str, String)> = vec![
            ("circuit", self.circuit.clone()),
            ("seed", self.seed.map_or("none".into(), |x| x.to_string())),
            ("mode", s.mode.name().into()),
            ("duration", sig9(s.schedule.duration_s)),
            ("bin", sig9(s.schedule.bin_s)),
            ("scan_period", sig9(s.scan.period_s)),
            ("voltage_max", sig9(s.scan.voltage_max)),
            ("displacement", sig9(s.scan.displacement_nm)),
            ("wavelength", sig9(s.scan.wavelength_nm)),
            ("seam_drop", s.scan.seam_drop.to_string()),
            ("theta", s.theta.to_string()),
            ("psi", sig9(s.psi)),
            ("mean_photon_number", sig9(s.source.mean_photon_number)),
            ("singles_rate", sig9(s.source.singles_rate)),
            ("pair_fraction", sig9(s.source.pair_fraction)),
            ("triple_fraction", sig9(s.source.triple_fraction)),
            ("statistics", statistics_text(s.source.statistics)),
            ("dark_rate", sig9(s.detector.dark_rate)),
            ("efficiency", sig9(s.detector.efficiency)),
            ("pulse_width", sig9(s.detector.pulse_width_ns)),
            ("number_resolving", s.detector.number_resolving.to_string()),
            ("coincidence_window", sig9(s.coincidence.window_ns)),
            (
                "accidental_correction",
                s.coincidence.accidental_correction.to_string(),
            ),
        ];
        pairs.sort();
        let mut out = String::new();
        for (k, v) in pairs {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn hash(&self) -> String {
        Sha256::digest(self.canonical().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}
