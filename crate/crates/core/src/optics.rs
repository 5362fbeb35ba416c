//! Coherent field propagation through polarization optics.
//!
//! Fields are polarization-resolved complex amplitudes (Jones vectors) on
//! named spatial ports. Every element is a fixed linear map on one or two
//! Jones vectors. Conventions:
//!
//! * A beam splitter reflects with a factor `i` and transmits with `1`,
//!   both scaled by `1/√2`.
//! * A polarizing beam splitter transmits H and reflects V, again with a
//!   reflection factor `i`.
//! * A mirror multiplies the field by `-1`. This is a global factor per
//!   path and never shows up in intensities.
//! * A half-wave plate is parameterized by its physical plate angle `η`
//!   measured from the fast axis; its Jones matrix uses `2η`.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2};
use std::fmt;

use num_complex::Complex64;

/// Dimensionless complex field amplitude.
pub type ComplexAmp = Complex64;

const ZERO: ComplexAmp = Complex64 { re: 0.0, im: 0.0 };

/// Multiply by `i` without going through a complex product.
#[inline]
pub fn mul_i(z: ComplexAmp) -> ComplexAmp {
    Complex64::new(-z.im, z.re)
}

/// `(cos x, sin x)` that is exact when `x` is an integer multiple of `π/2`.
///
/// `cos(π/2)` evaluates to `6.1e-17` in floating point, which would leak a
/// tiny cross-polarized component into otherwise pure states and break exact
/// symmetries such as `e^{iπ} = -1`.
pub fn cos_sin(angle: f64) -> (f64, f64) {
    let quarter_turns = angle / FRAC_PI_2;
    if quarter_turns.fract() == 0.0 && quarter_turns.abs() < 9.0e15 {
        match (quarter_turns as i64).rem_euclid(4) {
            0 => (1.0, 0.0),
            1 => (0.0, 1.0),
            2 => (-1.0, 0.0),
            _ => (0.0, -1.0),
        }
    } else {
        (angle.cos(), angle.sin())
    }
}

/// `e^{i·angle}` with exact values on multiples of `π/2`.
pub fn unit_phasor(angle: f64) -> ComplexAmp {
    let (c, s) = cos_sin(angle);
    Complex64::new(c, s)
}

/// Horizontal/vertical field components of one spatial mode.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct JonesVector {
    pub h: ComplexAmp,
    pub v: ComplexAmp,
}

impl JonesVector {
    pub const ZERO: JonesVector = JonesVector { h: ZERO, v: ZERO };

    pub fn new(h: ComplexAmp, v: ComplexAmp) -> Self {
        Self { h, v }
    }

    /// Real-valued components, the common case for input states.
    pub fn real(h: f64, v: f64) -> Self {
        Self::new(Complex64::new(h, 0.0), Complex64::new(v, 0.0))
    }

    pub fn horizontal() -> Self {
        Self::real(1.0, 0.0)
    }

    pub fn vertical() -> Self {
        Self::real(0.0, 1.0)
    }

    /// Unit-intensity linear polarization at `angle` from horizontal.
    pub fn linear(angle: f64) -> Self {
        let (c, s) = cos_sin(angle);
        Self::real(c, s)
    }

    pub fn intensity(&self) -> f64 {
        intensity(self)
    }

    pub fn is_finite(&self) -> bool {
        self.h.is_finite() && self.v.is_finite()
    }

    pub fn scale(&self, k: ComplexAmp) -> Self {
        Self::new(self.h * k, self.v * k)
    }

    /// Hermitian inner product `⟨self|other⟩` over the polarization basis.
    pub fn inner(&self, other: &JonesVector) -> ComplexAmp {
        self.h.conj() * other.h + self.v.conj() * other.v
    }

    fn map(&self, f: impl Fn(ComplexAmp) -> ComplexAmp) -> Self {
        Self::new(f(self.h), f(self.v))
    }
}

impl std::ops::Add for JonesVector {
    type Output = JonesVector;

    fn add(self, rhs: JonesVector) -> JonesVector {
        JonesVector::new(self.h + rhs.h, self.v + rhs.v)
    }
}

impl std::ops::Sub for JonesVector {
    type Output = JonesVector;

    fn sub(self, rhs: JonesVector) -> JonesVector {
        JonesVector::new(self.h - rhs.h, self.v - rhs.v)
    }
}

impl std::ops::Mul<ComplexAmp> for JonesVector {
    type Output = JonesVector;

    fn mul(self, k: ComplexAmp) -> JonesVector {
        self.scale(k)
    }
}

impl fmt::Display for JonesVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(h={}, v={})", self.h, self.v)
    }
}

/// `|h|² + |v|²`.
pub fn intensity(field: &JonesVector) -> f64 {
    field.h.norm_sqr() + field.v.norm_sqr()
}

/// Which polarization components a phase element acts on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PhaseScope {
    Both,
    HOnly,
    VOnly,
}

impl PhaseScope {
    pub fn symbol(self) -> &'static str {
        match self {
            PhaseScope::Both => "both",
            PhaseScope::HOnly => "H",
            PhaseScope::VOnly => "V",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Self> {
        match s {
            "both" => Some(PhaseScope::Both),
            "H" => Some(PhaseScope::HOnly),
            "V" => Some(PhaseScope::VOnly),
            _ => None,
        }
    }
}

/// The optical element kinds available on the bench.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ElementKind {
    Bs,
    Pbs,
    /// Half-wave plate; `angle` is the physical plate angle in radians.
    Hwp {
        angle: f64,
    },
    Phase {
        phase: f64,
        scope: PhaseScope,
    },
    Mirror,
    Source,
    Detector,
}

impl ElementKind {
    /// Number of (input, output) spatial ports.
    pub fn port_counts(&self) -> (usize, usize) {
        match self {
            ElementKind::Bs | ElementKind::Pbs => (2, 2),
            ElementKind::Hwp { .. } | ElementKind::Phase { .. } | ElementKind::Mirror => (1, 1),
            ElementKind::Source => (0, 1),
            ElementKind::Detector => (1, 0),
        }
    }

    /// Apply the element to its input ports. Sources and detectors are the
    /// identity on whatever they carry.
    pub fn apply(&self, inputs: &[JonesVector]) -> Vec<JonesVector> {
        match *self {
            ElementKind::Bs => {
                let (a, b) = bs_apply(inputs[0], inputs[1]);
                vec![a, b]
            }
            ElementKind::Pbs => {
                let (a, b) = pbs_apply(inputs[0], inputs[1]);
                vec![a, b]
            }
            ElementKind::Hwp { angle } => vec![hwp_apply(inputs[0], angle)],
            ElementKind::Phase { phase, scope } => vec![phase_apply(inputs[0], phase, scope)],
            ElementKind::Mirror => vec![mirror_apply(inputs[0])],
            ElementKind::Source | ElementKind::Detector => inputs.to_vec(),
        }
    }
}

/// Lossless 50/50 beam splitter: `out1 = (in1 + i·in2)/√2`,
/// `out2 = (i·in1 + in2)/√2`, per polarization component.
pub fn bs_apply(in1: JonesVector, in2: JonesVector) -> (JonesVector, JonesVector) {
    let k = Complex64::new(FRAC_1_SQRT_2, 0.0);
    let out1 = (in1 + in2.map(mul_i)).scale(k);
    let out2 = (in1.map(mul_i) + in2).scale(k);
    (out1, out2)
}

/// Polarizing beam splitter: H transmits straight through, V reflects to
/// the other output with a factor `i`.
pub fn pbs_apply(in1: JonesVector, in2: JonesVector) -> (JonesVector, JonesVector) {
    let out1 = JonesVector::new(in1.h, mul_i(in2.v));
    let out2 = JonesVector::new(in2.h, mul_i(in1.v));
    (out1, out2)
}

/// Half-wave plate at physical angle `plate_angle`:
/// `[[cos 2η, sin 2η], [sin 2η, −cos 2η]]`.
pub fn hwp_apply(input: JonesVector, plate_angle: f64) -> JonesVector {
    let (c, s) = cos_sin(2.0 * plate_angle);
    JonesVector::new(input.h * c + input.v * s, input.h * s - input.v * c)
}

pub fn phase_apply(input: JonesVector, phase: f64, scope: PhaseScope) -> JonesVector {
    let p = unit_phasor(phase);
    match scope {
        PhaseScope::Both => JonesVector::new(input.h * p, input.v * p),
        PhaseScope::HOnly => JonesVector::new(input.h * p, input.v),
        PhaseScope::VOnly => JonesVector::new(input.h, input.v * p),
    }
}

pub fn mirror_apply(input: JonesVector) -> JonesVector {
    JonesVector::new(-input.h, -input.v)
}

/// Fields on a set of named spatial ports.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ModeField {
    ports: BTreeMap<String, JonesVector>,
}

impl ModeField {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the previous field if the port was already present.
    pub fn insert(&mut self, port: impl Into<String>, field: JonesVector) -> Option<JonesVector> {
        self.ports.insert(port.into(), field)
    }

    pub fn get(&self, port: &str) -> Option<&JonesVector> {
        self.ports.get(port)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &JonesVector)> {
        self.ports.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.ports.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ports.is_empty()
    }

    pub fn total_intensity(&self) -> f64 {
        self.ports.values().map(intensity).sum()
    }
}

impl FromIterator<(String, JonesVector)> for ModeField {
    fn from_iter<T: IntoIterator<Item = (String, JonesVector)>>(iter: T) -> Self {
        Self {
            ports: iter.into_iter().collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    const S: f64 = FRAC_1_SQRT_2;

    fn c(re: f64, im: f64) -> ComplexAmp {
        Complex64::new(re, im)
    }

    fn assert_jones(actual: JonesVector, expected: JonesVector) {
        assert_abs_diff_eq!(actual.h.re, expected.h.re, epsilon = 1e-15);
        assert_abs_diff_eq!(actual.h.im, expected.h.im, epsilon = 1e-15);
        assert_abs_diff_eq!(actual.v.re, expected.v.re, epsilon = 1e-15);
        assert_abs_diff_eq!(actual.v.im, expected.v.im, epsilon = 1e-15);
    }

    #[test]
    fn beam_splitter_examples() {
        let (o1, o2) = bs_apply(JonesVector::horizontal(), JonesVector::ZERO);
        assert_jones(o1, JonesVector::real(S, 0.0));
        assert_jones(o2, JonesVector::new(c(0.0, S), c(0.0, 0.0)));

        let (o1, o2) = bs_apply(JonesVector::ZERO, JonesVector::ZERO);
        assert_eq!(o1, JonesVector::ZERO);
        assert_eq!(o2, JonesVector::ZERO);

        // in2 = i·in1: all light leaves through out2.
        let (o1, o2) = bs_apply(
            JonesVector::horizontal(),
            JonesVector::new(c(0.0, 1.0), c(0.0, 0.0)),
        );
        assert_jones(o1, JonesVector::ZERO);
        assert_jones(o2, JonesVector::new(c(0.0, 2.0f64.sqrt()), c(0.0, 0.0)));
    }

    #[test]
    fn polarizing_splitter_examples() {
        let (o1, o2) = pbs_apply(JonesVector::horizontal(), JonesVector::ZERO);
        assert_eq!(o1, JonesVector::horizontal());
        assert_eq!(o2, JonesVector::ZERO);

        let (o1, o2) = pbs_apply(JonesVector::vertical(), JonesVector::ZERO);
        assert_eq!(o1, JonesVector::ZERO);
        assert_eq!(o2, JonesVector::new(c(0.0, 0.0), c(0.0, 1.0)));

        let (o1, o2) = pbs_apply(JonesVector::real(S, S), JonesVector::ZERO);
        assert_jones(o1, JonesVector::real(S, 0.0));
        assert_jones(o2, JonesVector::new(c(0.0, 0.0), c(0.0, S)));
    }

    #[test]
    fn half_wave_plate_examples() {
        let out = hwp_apply(JonesVector::vertical(), 22.5f64.to_radians());
        assert_jones(out, JonesVector::real(S, -S));
        assert_eq!(
            hwp_apply(JonesVector::horizontal(), 0.0),
            JonesVector::horizontal()
        );
        assert_eq!(
            hwp_apply(JonesVector::horizontal(), 45f64.to_radians()),
            JonesVector::vertical()
        );
    }

    #[test]
    fn phase_examples() {
        assert_eq!(
            phase_apply(JonesVector::horizontal(), 0.0, PhaseScope::Both),
            JonesVector::horizontal()
        );
        assert_eq!(
            phase_apply(JonesVector::horizontal(), PI, PhaseScope::Both),
            JonesVector::real(-1.0, 0.0)
        );
        let out = phase_apply(JonesVector::real(S, S), PI / 2.0, PhaseScope::VOnly);
        assert_jones(out, JonesVector::new(c(S, 0.0), c(0.0, S)));
    }

    #[test]
    fn intensity_examples() {
        assert_eq!(intensity(&JonesVector::horizontal()), 1.0);
        assert_abs_diff_eq!(
            intensity(&JonesVector::new(c(S, 0.0), c(0.0, S))),
            1.0,
            epsilon = 1e-15
        );
        assert_eq!(intensity(&JonesVector::new(c(1.0, 0.0), c(0.0, 1.0))), 2.0);
    }

    #[test]
    fn exact_quarter_turns() {
        assert_eq!(cos_sin(FRAC_PI_2), (0.0, 1.0));
        assert_eq!(cos_sin(PI), (-1.0, 0.0));
        assert_eq!(cos_sin(-FRAC_PI_2), (0.0, -1.0));
        assert_eq!(cos_sin(90f64.to_radians()), (0.0, 1.0));
        assert_eq!(cos_sin(0.3), (0.3f64.cos(), 0.3f64.sin()));
    }

    #[test]
    fn fresnel_arago_no_fringe() {
        // Orthogonal inputs on a beam splitter do not interfere.
        let reference = bs_apply(JonesVector::horizontal(), JonesVector::ZERO);
        for k in 0..64 {
            let phi = k as f64 * 0.1;
            let in2 = JonesVector::new(c(0.0, 0.0), unit_phasor(phi));
            let (o1, o2) = bs_apply(JonesVector::horizontal(), in2);
            assert_abs_diff_eq!(
                intensity(&o1),
                intensity(&reference.0) + 0.5,
                epsilon = 1e-14
            );
            assert_abs_diff_eq!(
                intensity(&o2),
                intensity(&reference.1) + 0.5,
                epsilon = 1e-14
            );
        }
    }

    #[test]
    fn beam_splitter_composition_is_matrix_square() {
        // B² = (1/2)[[1 + i², 2i], [2i, i² + 1]] = [[0, i], [i, 0]]
        let in1 = JonesVector::new(c(0.3, -0.2), c(0.1, 0.7));
        let in2 = JonesVector::new(c(-0.5, 0.4), c(0.9, 0.05));
        let (a, b) = bs_apply(in1, in2);
        let (o1, o2) = bs_apply(a, b);
        assert_jones(o1, in2.map(mul_i));
        assert_jones(o2, in1.map(mul_i));
    }

    fn amp() -> impl Strategy<Value = ComplexAmp> {
        (-10.0f64..10.0, -10.0f64..10.0).prop_map(|(re, im)| c(re, im))
    }

    fn jones() -> impl Strategy<Value = JonesVector> {
        (amp(), amp()).prop_map(|(h, v)| JonesVector::new(h, v))
    }

    fn two_port(kind: u8, a: JonesVector, b: JonesVector, angle: f64) -> Vec<JonesVector> {
        match kind {
            0 => ElementKind::Bs.apply(&[a, b]),
            1 => ElementKind::Pbs.apply(&[a, b]),
            2 => vec![hwp_apply(a, angle), b],
            3 => vec![phase_apply(a, angle, PhaseScope::Both), b],
            4 => vec![phase_apply(a, angle, PhaseScope::HOnly), b],
            5 => vec![phase_apply(a, angle, PhaseScope::VOnly), b],
            _ => vec![mirror_apply(a), b],
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]

        #[test]
        fn elements_are_unitary(kind in 0u8..7, a in jones(), b in jones(), angle in -7.0f64..7.0) {
            let before = intensity(&a) + intensity(&b);
            let out = two_port(kind, a, b, angle);
            let after: f64 = out.iter().map(intensity).sum();
            prop_assert!(out.iter().all(JonesVector::is_finite));
            prop_assert!((after - before).abs() <= 1e-12 * before.max(1.0));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2_000))]

        #[test]
        fn elements_are_linear(
            kind in 0u8..7,
            x in (jones(), jones()),
            y in (jones(), jones()),
            ka in amp(),
            kb in amp(),
            angle in -7.0f64..7.0,
        ) {
            let mixed = two_port(kind, x.0 * ka + y.0 * kb, x.1 * ka + y.1 * kb, angle);
            let fx = two_port(kind, x.0, x.1, angle);
            let fy = two_port(kind, y.0, y.1, angle);
            for port in 0..2 {
                let expected = fx[port] * ka + fy[port] * kb;
                let diff = mixed[port] - expected;
                prop_assert!(intensity(&diff).sqrt() <= 1e-12 * 400.0);
            }
        }
    }
}
