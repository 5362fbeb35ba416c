//! Closed-form intensities, coincidence rate and fringe visibilities.
//!
//! `φ` is Bob's interferometer phase, `ψ` Alice's, `θ` the global phase
//! between the two parties. Only `φ − ψ` and `θ` are observable.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use crate::numfmt::sig9;

/// Coincidence rate of the original unbalanced-interferometer scheme.
/// The global phase does not enter.
pub fn eq3_coincidence(phi: f64, psi: f64, i0: f64) -> f64 {
    0.5 * i0 * (1.0 + (phi - psi).cos())
}

/// `cos θ + cos(φ − ψ − θ)`, the interference term shared by both outputs.
fn cross_term(phi: f64, psi: f64, theta: f64) -> f64 {
    theta.cos() + (phi - psi - theta).cos()
}

/// Output intensities `(I_α, I_β)` after the final beam splitter.
pub fn eq45_intensities(phi: f64, psi: f64, theta: f64, i0: f64) -> (f64, f64) {
    let c = cross_term(phi, psi, theta);
    (0.5 * i0 * (2.0 - c), 0.5 * i0 * (2.0 + c))
}

/// Visibility of `I_α` (or `I_β`) over a full `φ` sweep at fixed `θ`.
///
/// `I_α ∝ 2 − cos θ − cos x` with `x` free, so the extremes are
/// `1 − cos θ` and `3 − cos θ`.
pub fn singles_visibility(theta: f64) -> f64 {
    1.0 / (2.0 - theta.cos())
}

/// Visibility of `I_α·I_β` over a full `φ` sweep at fixed `θ`.
///
/// `I_α·I_β ∝ 4 − c²` with `c = cos θ + cos x`; `c²` ranges over
/// `[0, (1 + |cos θ|)²]` since `c` always changes sign or touches zero.
pub fn product_visibility(theta: f64) -> f64 {
    let a = 1.0 + theta.cos().abs();
    let a2 = a * a;
    a2 / (8.0 - a2)
}

/// `|I_α − I_β| / (I_α + I_β)` at a single point.
pub fn point_contrast(phi: f64, psi: f64, theta: f64) -> f64 {
    0.5 * cross_term(phi, psi, theta).abs()
}

/// One row of the closed-form model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnalyticPoint {
    pub phi: f64,
    pub psi: f64,
    pub theta: f64,
    pub i0: f64,
    pub i_alpha: f64,
    pub i_beta: f64,
    pub r_ab: f64,
    pub product: f64,
}

impl AnalyticPoint {
    pub fn at(phi: f64, psi: f64, theta: f64, i0: f64) -> Self {
        let (i_alpha, i_beta) = eq45_intensities(phi, psi, theta, i0);
        Self {
            phi,
            psi,
            theta,
            i0,
            i_alpha,
            i_beta,
            r_ab: eq3_coincidence(phi, psi, i0),
            product: i_alpha * i_beta,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AxisError {
    #[error("malformed number `{0}`")]
    Number(String),
    #[error("expected `value` or `start:step:stop`, got `{0}`")]
    Shape(String),
    #[error("grid step must be positive and finite, got {0}")]
    Step(f64),
    #[error("grid would have more than {max} points")]
    TooLarge { max: usize },
}

/// A 1-D grid: a single value or an inclusive `start:step:stop` range.
/// A range with `stop < start` is empty.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Axis {
    pub start: f64,
    pub step: f64,
    pub stop: f64,
}

impl Axis {
    pub const MAX_POINTS: usize = 100_000_000;

    pub fn single(value: f64) -> Self {
        Self {
            start: value,
            step: 1.0,
            stop: value,
        }
    }

    pub fn range(start: f64, step: f64, stop: f64) -> Result<Self, AxisError> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(AxisError::Step(step));
        }
        let axis = Self { start, step, stop };
        if axis.len() > Self::MAX_POINTS {
            return Err(AxisError::TooLarge {
                max: Self::MAX_POINTS,
            });
        }
        Ok(axis)
    }

    /// Number of points. The stop value is included when it lies within a
    /// relative `1e-9` step of the last grid point, so `0:0.1:1` has 11.
    pub fn len(&self) -> usize {
        if self.stop < self.start {
            return 0;
        }
        let span = (self.stop - self.start) / self.step;
        (span + 1e-9).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(move |k| self.start + k as f64 * self.step)
    }
}

impl FromStr for Axis {
    type Err = AxisError;

    fn from_str(s: &str) -> Result<Self, AxisError> {
        let num = |t: &str| {
            let t = t.trim();
            t.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| AxisError::Number(t.to_string()))
        };
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            [v] => Ok(Axis::single(num(v)?)),
            [a, b, c] => Axis::range(num(a)?, num(b)?, num(c)?),
            _ => Err(AxisError::Shape(s.to_string())),
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.start == self.stop {
            write!(f, "{}", self.start)
        } else {
            write!(f, "{}:{}:{}", self.start, self.step, self.stop)
        }
    }
}

/// Evaluate on the product grid, `θ` outermost and `φ` innermost.
pub fn sweep(phi: &Axis, psi: &Axis, theta: &Axis, i0: f64) -> Vec<AnalyticPoint> {
    let mut out = Vec::with_capacity(phi.len() * psi.len() * theta.len());
    for t in theta.values() {
        for p in psi.values() {
            for f in phi.values() {
                out.push(AnalyticPoint::at(f, p, t, i0));
            }
        }
    }
    out
}

pub const SWEEP_HEADER: &str = "phi,psi,theta,I_alpha,I_beta,R_AB,product";

pub fn write_sweep_csv<W: Write>(points: &[AnalyticPoint], out: W) -> io::Result<()> {
    let mut out = io::BufWriter::new(out);
    writeln!(out, "{SWEEP_HEADER}")?;
    for p in points {
        let cells = [
            p.phi, p.psi, p.theta, p.i_alpha, p.i_beta, p.r_ab, p.product,
        ]
        .map(sig9);
        writeln!(out, "{}", cells.join(","))?;
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI, TAU};

    #[test]
    fn coincidence_examples() {
        assert_abs_diff_eq!(eq3_coincidence(0.4, 0.4, 1.0), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(eq3_coincidence(PI, 0.0, 1.0), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(eq3_coincidence(FRAC_PI_2, 0.0, 2.0), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn intensity_examples() {
        let (a, b) = eq45_intensities(0.3, 0.3, 0.0, 1.0);
        assert_abs_diff_eq!(a, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(b, 2.0, epsilon = 1e-15);
        let (a, b) = eq45_intensities(FRAC_PI_2, 0.0, FRAC_PI_2, 1.0);
        assert_abs_diff_eq!(a, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(b, 1.5, epsilon = 1e-15);
    }

    #[test]
    fn visibility_examples() {
        assert_abs_diff_eq!(singles_visibility(0.0), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(singles_visibility(FRAC_PI_2), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(singles_visibility(PI), 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(product_visibility(0.0), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(product_visibility(FRAC_PI_2), 1.0 / 7.0, epsilon = 1e-12);
        assert_abs_diff_eq!(product_visibility(PI), 1.0, epsilon = 1e-15);
    }

    /// Max and min of `f` over `[0, 2π)` on a grid of `n` points.
    fn extremes(n: usize, f: impl Fn(f64) -> f64) -> (f64, f64) {
        (0..n)
            .map(|k| f(TAU * k as f64 / n as f64))
            .fold((f64::MIN, f64::MAX), |(hi, lo), y| (hi.max(y), lo.min(y)))
    }

    fn contrast((hi, lo): (f64, f64)) -> f64 {
        (hi - lo) / (hi + lo)
    }

    #[test]
    fn closed_forms_match_brute_force_extremization() {
        // Step 2π/8000 < 1e-3 rad.
        let n = 8000;
        for k in 0..64 {
            let theta = -PI + TAU * k as f64 / 64.0 + 0.0123;
            let singles = contrast(extremes(n, |phi| eq45_intensities(phi, 0.0, theta, 1.0).0));
            let product = contrast(extremes(n, |phi| {
                let (a, b) = eq45_intensities(phi, 0.0, theta, 1.0);
                a * b
            }));
            assert_abs_diff_eq!(singles, singles_visibility(theta), epsilon = 1e-6);
            assert_abs_diff_eq!(product, product_visibility(theta), epsilon = 1e-6);
        }
    }

    #[test]
    fn brute_force_product_minimum_at_quarter_turn() {
        let v = contrast(extremes(20_000, |phi| {
            let (a, b) = eq45_intensities(phi, 0.0, FRAC_PI_2, 1.0);
            a * b
        }));
        assert_abs_diff_eq!(v, product_visibility(FRAC_PI_2), epsilon = 1e-6);
    }

    #[test]
    fn product_visibility_extremes() {
        for n in -4..=4 {
            let at_multiple = product_visibility(n as f64 * PI);
            let at_odd_half = product_visibility((2 * n + 1) as f64 * FRAC_PI_2);
            assert_abs_diff_eq!(at_multiple, 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(at_odd_half, 1.0 / 7.0, epsilon = 1e-12);
        }
        for k in 0..1000 {
            let v = product_visibility(k as f64 * 0.00731);
            assert!((1.0 / 7.0 - 1e-12..=1.0 + 1e-12).contains(&v));
        }
    }

    #[test]
    fn axis_parsing() {
        assert_eq!("0:0.1:1".parse::<Axis>().unwrap().len(), 11);
        assert_eq!("0:0.01:6.2832".parse::<Axis>().unwrap().len(), 629);
        assert_eq!(
            "2.5".parse::<Axis>().unwrap().values().collect::<Vec<_>>(),
            [2.5]
        );
        assert!("1:0.1:0".parse::<Axis>().unwrap().is_empty());
        assert!(matches!("0:0:1".parse::<Axis>(), Err(AxisError::Step(_))));
        assert!(matches!("0:1".parse::<Axis>(), Err(AxisError::Shape(_))));
        assert!(matches!("x".parse::<Axis>(), Err(AxisError::Number(_))));
        assert!(matches!(
            "0:1e-12:1e6".parse::<Axis>(),
            Err(AxisError::TooLarge { .. })
        ));
    }

    #[test]
    fn sweep_order_and_csv() {
        let pts = sweep(
            &"0:1:1".parse().unwrap(),
            &Axis::single(0.0),
            &"0:2:2".parse().unwrap(),
            1.0,
        );
        let coords: Vec<(f64, f64)> = pts.iter().map(|p| (p.theta, p.phi)).collect();
        assert_eq!(coords, [(0.0, 0.0), (0.0, 1.0), (2.0, 0.0), (2.0, 1.0)]);

        let single = sweep(
            &Axis::single(0.0),
            &Axis::single(0.0),
            &Axis::single(0.0),
            1.0,
        );
        assert_eq!(single.len(), 1);
        let mut buf = Vec::new();
        write_sweep_csv(&single, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            format!("{SWEEP_HEADER}\n0,0,0,0,2,1,0\n")
        );
    }

    fn phase() -> impl Strategy<Value = f64> {
        -20.0f64..20.0
    }

    proptest! {
        #[test]
        fn point_invariants(phi in phase(), psi in phase(), theta in phase(), i0 in 0.0f64..10.0) {
            let p = AnalyticPoint::at(phi, psi, theta, i0);
            prop_assert!((p.i_alpha + p.i_beta - 2.0 * i0).abs() <= 1e-12 * i0.max(1.0));
            prop_assert!(p.r_ab >= 0.0 && p.r_ab <= i0 * (1.0 + 1e-15));
            prop_assert!(p.product >= 0.0);
            let c = point_contrast(phi, psi, theta);
            if p.i_alpha + p.i_beta > 0.0 {
                prop_assert!((c - (p.i_alpha - p.i_beta).abs() / (p.i_alpha + p.i_beta)).abs() < 1e-12);
            }
        }

        #[test]
        fn periodic_in_every_phase(phi in phase(), psi in phase(), theta in phase(), which in 0usize..3) {
            let mut shifted = [phi, psi, theta];
            shifted[which] += TAU;
            let a = AnalyticPoint::at(phi, psi, theta, 1.0);
            let b = AnalyticPoint::at(shifted[0], shifted[1], shifted[2], 1.0);
            prop_assert!((a.i_alpha - b.i_alpha).abs() < 1e-12);
            prop_assert!((a.r_ab - b.r_ab).abs() < 1e-12);
            prop_assert!((a.product - b.product).abs() < 1e-12);
        }

        #[test]
        fn coincidence_ignores_global_phase(phi in phase(), psi in phase(), t1 in phase(), t2 in phase()) {
            prop_assert_eq!(AnalyticPoint::at(phi, psi, t1, 1.0).r_ab, AnalyticPoint::at(phi, psi, t2, 1.0).r_ab);
        }
    }
}
