//! Optical-bench netlists: parse, validate, serialize, and compile into an
//! evaluation plan over [`crate::optics`] elements.
//!
//! The text format is line oriented:
//!
//! ```text
//! # comment
//! source laser { pol = 90deg, intensity = 4, wavelength = 532nm }
//! element hwp : HWP { angle = 22.5deg }
//! element pzt : PHASE { phase = scan_phi, applies = both }
//! detector D1 : SPCM
//! connect laser.out -> hwp.in
//! ```
//!
//! Two-port elements (`BS`, `PBS`) expose `in1`, `in2`, `out1`, `out2`;
//! one-port elements (`HWP`, `PHASE`, `MIRROR`) expose `in` and `out`;
//! sources expose `out` and detectors `in`. Output ports left unconnected
//! are open: light leaving through them is lost from the bench, but it is
//! still tracked so that losslessness can be checked.

pub mod builtin;
mod parse;
mod plan;
mod serialize;
mod validate;

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::optics::{JonesVector, PhaseScope};

pub use parse::parse;
pub use plan::{compile, Bindings, EvaluationPlan, PlanStep, TransferMatrix};
pub use serialize::serialize;
pub use validate::{validate, ValidationReport, Violation};

/// The three phases the experiment scans.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ScanVar {
    /// Bob's interferometer phase, driven by the PZT.
    Phi,
    /// Alice's interferometer phase.
    Psi,
    /// Global phase between the two parties.
    Theta,
}

impl ScanVar {
    pub const ALL: [ScanVar; 3] = [ScanVar::Phi, ScanVar::Psi, ScanVar::Theta];

    pub fn symbol(self) -> &'static str {
        match self {
            ScanVar::Phi => "scan_phi",
            ScanVar::Psi => "scan_psi",
            ScanVar::Theta => "scan_theta",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Self> {
        match s {
            "scan_phi" => Some(ScanVar::Phi),
            "scan_psi" => Some(ScanVar::Psi),
            "scan_theta" => Some(ScanVar::Theta),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ScanVar::Phi => "phi",
            ScanVar::Psi => "psi",
            ScanVar::Theta => "theta",
        }
    }
}

impl fmt::Display for ScanVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A parameter value. Numbers are stored in canonical units: radians for
/// angles, nanometres for wavelengths.
#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Number(f64),
    Scan(ScanVar),
    Symbol(String),
}

pub type Params = BTreeMap<String, Value>;

/// Element kinds that may appear in an `element` statement.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ElementType {
    Bs,
    Pbs,
    Hwp,
    Phase,
    Mirror,
}

impl ElementType {
    pub fn keyword(self) -> &'static str {
        match self {
            ElementType::Bs => "BS",
            ElementType::Pbs => "PBS",
            ElementType::Hwp => "HWP",
            ElementType::Phase => "PHASE",
            ElementType::Mirror => "MIRROR",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Self> {
        match s {
            "BS" => Some(ElementType::Bs),
            "PBS" => Some(ElementType::Pbs),
            "HWP" => Some(ElementType::Hwp),
            "PHASE" => Some(ElementType::Phase),
            "MIRROR" => Some(ElementType::Mirror),
            _ => None,
        }
    }

    pub fn input_ports(self) -> &'static [&'static str] {
        match self {
            ElementType::Bs | ElementType::Pbs => &["in1", "in2"],
            _ => &["in"],
        }
    }

    pub fn output_ports(self) -> &'static [&'static str] {
        match self {
            ElementType::Bs | ElementType::Pbs => &["out1", "out2"],
            _ => &["out"],
        }
    }
}

/// The unit class a parameter accepts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum ParamClass {
    /// Radians, or degrees with a `deg` suffix.
    Angle,
    /// Angle or a scan symbol.
    ScanAngle,
    /// Nanometres; the `nm` suffix is optional.
    Length,
    /// Unitless non-negative number.
    Scalar,
    /// One of `both`, `H`, `V`.
    Scope,
}

pub(crate) fn source_param(key: &str) -> Option<ParamClass> {
    match key {
        "pol" | "phase" => Some(ParamClass::Angle),
        "intensity" => Some(ParamClass::Scalar),
        "wavelength" => Some(ParamClass::Length),
        _ => None,
    }
}

pub(crate) fn element_param(kind: ElementType, key: &str) -> Option<ParamClass> {
    match (kind, key) {
        (ElementType::Hwp, "angle") => Some(ParamClass::Angle),
        (ElementType::Phase, "phase") => Some(ParamClass::ScanAngle),
        (ElementType::Phase, "applies") => Some(ParamClass::Scope),
        _ => None,
    }
}

pub(crate) const DETECTOR_MODELS: &[&str] = &["SPCM"];

#[derive(Clone, Debug, PartialEq)]
pub struct SourceDecl {
    pub name: String,
    pub params: Params,
}

impl SourceDecl {
    fn number(&self, key: &str, default: f64) -> f64 {
        match self.params.get(key) {
            Some(Value::Number(x)) => *x,
            _ => default,
        }
    }

    /// Linear polarization angle from horizontal; defaults to H.
    pub fn polarization_angle(&self) -> f64 {
        self.number("pol", 0.0)
    }

    pub fn polarization(&self) -> JonesVector {
        JonesVector::linear(self.polarization_angle())
    }

    pub fn intensity(&self) -> f64 {
        self.number("intensity", 1.0)
    }

    pub fn wavelength_nm(&self) -> f64 {
        self.number("wavelength", 532.0)
    }

    pub fn phase(&self) -> f64 {
        self.number("phase", 0.0)
    }

    /// The emitted field: `√I · e^{i·phase} · pol`.
    pub fn field(&self) -> JonesVector {
        let amp = crate::optics::unit_phasor(self.phase()) * self.intensity().sqrt();
        self.polarization().scale(amp)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ElementDecl {
    pub name: String,
    pub kind: ElementType,
    pub params: Params,
}

impl ElementDecl {
    pub fn hwp_angle(&self) -> f64 {
        match self.params.get("angle") {
            Some(Value::Number(x)) => *x,
            _ => 0.0,
        }
    }

    pub fn phase_scope(&self) -> PhaseScope {
        match self.params.get("applies") {
            Some(Value::Symbol(s)) => PhaseScope::from_symbol(s).unwrap_or(PhaseScope::Both),
            _ => PhaseScope::Both,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DetectorDecl {
    pub name: String,
    pub model: String,
}

impl DetectorDecl {
    /// Detectors are addressed by name; the name doubles as channel label.
    pub fn channel(&self) -> &str {
        &self.name
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PortRef {
    pub element: String,
    pub port: String,
}

impl PortRef {
    pub fn new(element: impl Into<String>, port: impl Into<String>) -> Self {
        Self {
            element: element.into(),
            port: port.into(),
        }
    }
}

impl fmt::Display for PortRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.element, self.port)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Connection {
    pub from: PortRef,
    pub to: PortRef,
}

/// A parsed optical bench. Each list keeps declaration order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CircuitSpec {
    pub sources: Vec<SourceDecl>,
    pub elements: Vec<ElementDecl>,
    pub detectors: Vec<DetectorDecl>,
    pub connections: Vec<Connection>,
}

impl CircuitSpec {
    /// Element parameters bound to a scan variable, keyed by
    /// `(element, parameter)`.
    pub fn scan_bindings(&self) -> BTreeMap<(String, String), ScanVar> {
        let mut out = BTreeMap::new();
        for e in &self.elements {
            for (key, value) in &e.params {
                if let Value::Scan(var) = value {
                    out.insert((e.name.clone(), key.clone()), *var);
                }
            }
        }
        out
    }

    pub fn element(&self, name: &str) -> Option<&ElementDecl> {
        self.elements.iter().find(|e| e.name == name)
    }

    pub fn element_mut(&mut self, name: &str) -> Option<&mut ElementDecl> {
        self.elements.iter_mut().find(|e| e.name == name)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CircuitError {
    #[error("syntax error at {line}:{column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unknown element kind `{kind}` at {line}:{column}")]
    UnknownKind {
        line: usize,
        column: usize,
        kind: String,
    },
    #[error("duplicate name `{name}` at {line}:{column}")]
    DuplicateName {
        line: usize,
        column: usize,
        name: String,
    },
    #[error("unknown parameter `{key}` for `{owner}` at {line}:{column}")]
    UnknownParameter {
        line: usize,
        column: usize,
        owner: String,
        key: String,
    },
    #[error("invalid value for `{key}` at {line}:{column}: {message}")]
    InvalidValue {
        line: usize,
        column: usize,
        key: String,
        message: String,
    },
    #[error(transparent)]
    Invalid(#[from] Violation),
    #[error("no binding supplied for scan variable {0}")]
    MissingBinding(ScanVar),
    #[error("expected {expected} source fields, got {got}")]
    SourceCount { expected: usize, got: usize },
}

impl CircuitError {
    /// Stable machine-readable identifier for the error class.
    pub fn code(&self) -> &'static str {
        match self {
            CircuitError::Syntax { .. } => "syntax",
            CircuitError::UnknownKind { .. } => "unknown-kind",
            CircuitError::DuplicateName { .. } => "duplicate-name",
            CircuitError::UnknownParameter { .. } => "unknown-parameter",
            CircuitError::InvalidValue { .. } => "invalid-value",
            CircuitError::Invalid(v) => v.code(),
            CircuitError::MissingBinding(_) => "missing-binding",
            CircuitError::SourceCount { .. } => "source-count",
        }
    }
}

pub type Result<T> = std::result::Result<T, CircuitError>;

/// Parse, validate, and compile in one go. The first violation, if any,
/// is returned as the error.
pub fn load(text: &str) -> Result<(CircuitSpec, EvaluationPlan)> {
    let spec = parse(text)?;
    let report = validate(&spec);
    if let Some(v) = report.violations.into_iter().next() {
        return Err(v.into());
    }
    let plan = compile(&spec)?;
    Ok((spec, plan))
}
