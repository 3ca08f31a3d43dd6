//! Frequency-response primitives.
//!
//! Transfer functions are written in a per-unit Laplace variable: `s` is
//! normalized by `OMEGA_BASE = 2*pi*F_BASE_HZ`, so nominal frequency is
//! 1 pu. Users supply and receive frequencies in Hz; conversion happens
//! here and nowhere else.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::poly::Poly;

/// Nominal system frequency.
pub const F_BASE_HZ: f64 = 60.0;
/// Base angular frequency in rad/s.
pub const OMEGA_BASE: f64 = 2.0 * PI * F_BASE_HZ;

/// Per-unit angular frequency of a frequency in Hz.
#[inline]
pub fn pu_omega(f_hz: f64) -> f64 {
    2.0 * PI * f_hz / OMEGA_BASE
}

/// Inverse of [`pu_omega`].
#[inline]
pub fn hz_from_pu(omega_pu: f64) -> f64 {
    omega_pu * OMEGA_BASE / (2.0 * PI)
}

/// Converts a time constant in seconds to the per-unit time scale.
#[inline]
pub fn pu_time(seconds: f64) -> f64 {
    seconds * OMEGA_BASE
}

/// Real-coefficient rational function `N(s)/D(s)` of the per-unit `s`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTf", into = "RawTf")]
pub struct RationalTf {
    num: Poly,
    den: Poly,
}

#[derive(Serialize, Deserialize)]
struct RawTf {
    numerator: Vec<f64>,
    denominator: Vec<f64>,
}

impl TryFrom<RawTf> for RationalTf {
    type Error = Error;
    fn try_from(raw: RawTf) -> Result<Self> {
        RationalTf::new(raw.numerator, raw.denominator)
    }
}

impl From<RationalTf> for RawTf {
    fn from(tf: RationalTf) -> Self {
        RawTf {
            numerator: tf.num.coeffs().to_vec(),
            denominator: tf.den.coeffs().to_vec(),
        }
    }
}

impl RationalTf {
    /// Coefficients ascending in `s`.
    pub fn new(numerator: Vec<f64>, denominator: Vec<f64>) -> Result<Self> {
        if numerator
            .iter()
            .chain(denominator.iter())
            .any(|c| !c.is_finite())
        {
            return Err(invalid("transfer function coefficients must be finite"));
        }
        Self::from_polys(Poly::new(numerator), Poly::new(denominator))
    }

    pub fn from_polys(num: Poly, den: Poly) -> Result<Self> {
        if den.is_zero() {
            return Err(invalid("denominator must have a nonzero coefficient"));
        }
        Ok(RationalTf { num, den })
    }

    pub fn constant(k: f64) -> Self {
        RationalTf {
            num: Poly::constant(k),
            den: Poly::constant(1.0),
        }
    }

    /// `k / (tau s + 1)` with `tau` already in per-unit time.
    pub fn first_order(k: f64, tau_pu: f64) -> Self {
        RationalTf {
            num: Poly::constant(k),
            den: Poly::new(vec![1.0, tau_pu]),
        }
    }

    pub fn numerator(&self) -> &Poly {
        &self.num
    }

    pub fn denominator(&self) -> &Poly {
        &self.den
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    /// `deg D - deg N`; negative for improper functions.
    pub fn relative_degree(&self) -> i64 {
        if self.num.is_zero() {
            return i64::MAX;
        }
        self.den.degree() as i64 - self.num.degree() as i64
    }

    pub fn is_proper(&self) -> bool {
        self.relative_degree() >= 0
    }

    /// Evaluation at an arbitrary complex per-unit `s`.
    pub fn eval_s(&self, s: Complex64) -> Option<Complex64> {
        let d = self.den.eval(s);
        if d == Complex64::new(0.0, 0.0) {
            return None;
        }
        Some(self.num.eval(s) / d)
    }

    /// Value on the imaginary axis at `f_hz` (negative frequencies allowed).
    pub fn eval_hz(&self, f_hz: f64) -> Result<Complex64> {
        if !f_hz.is_finite() {
            return Err(invalid("frequency must be finite"));
        }
        self.eval_s(Complex64::new(0.0, pu_omega(f_hz)))
            .ok_or(Error::PoleOnImaginaryAxis { f_hz })
    }

    /// `N(0)/D(0)`, `None` for a pole at the origin.
    pub fn dc_gain(&self) -> Option<f64> {
        let d0 = self.den.coeffs()[0];
        (d0 != 0.0).then(|| self.num.coeffs()[0] / d0)
    }

    pub fn poles(&self) -> Result<Vec<Complex64>> {
        self.den.roots()
    }

    pub fn mul(&self, other: &RationalTf) -> RationalTf {
        RationalTf {
            num: self.num.mul(&other.num),
            den: self.den.mul(&other.den),
        }
    }

    pub fn scale(&self, k: f64) -> RationalTf {
        RationalTf {
            num: self.num.scale(k),
            den: self.den.clone(),
        }
    }

    pub fn reciprocal(&self) -> Result<RationalTf> {
        RationalTf::from_polys(self.den.clone(), self.num.clone())
    }
}

/// Strictly increasing list of positive perturbation frequencies (Hz).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FrequencyGrid {
    points: Vec<f64>,
}

impl TryFrom<Vec<f64>> for FrequencyGrid {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        FrequencyGrid::new(v)
    }
}

impl From<FrequencyGrid> for Vec<f64> {
    fn from(g: FrequencyGrid) -> Self {
        g.points
    }
}

impl FrequencyGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(invalid("frequency grid is empty"));
        }
        if points.iter().any(|f| !f.is_finite() || *f <= 0.0) {
            return Err(invalid("grid frequencies must be finite and positive"));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("grid frequencies must be strictly increasing"));
        }
        Ok(FrequencyGrid { points })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

impl Default for FrequencyGrid {
    /// 61 points from 0.1 Hz to 120 Hz.
    fn default() -> Self {
        log_grid(0.1, 120.0, 61).expect("default grid is valid")
    }
}

/// `n` logarithmically spaced points with exact endpoints.
pub fn log_grid(f_min: f64, f_max: f64, n: usize) -> Result<FrequencyGrid> {
    if !(f_min.is_finite() && f_max.is_finite()) || f_min <= 0.0 || f_min >= f_max {
        return Err(invalid(format!(
            "log grid needs 0 < f_min < f_max (got {f_min}, {f_max})"
        )));
    }
    if n < 2 {
        return Err(invalid("log grid needs at least two points"));
    }
    let (a, b) = (f_min.ln(), f_max.ln());
    let step = (b - a) / (n - 1) as f64;
    let mut points: Vec<f64> = (0..n).map(|i| (a + step * i as f64).exp()).collect();
    points[0] = f_min;
    points[n - 1] = f_max;
    FrequencyGrid::new(points)
}

/// One sampled value of a frequency response.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyResponseSample {
    pub f_hz: f64,
    #[serde(with = "crate::cjson")]
    pub value: Complex64,
}

impl FrequencyResponseSample {
    pub fn new(f_hz: f64, value: Complex64) -> Result<Self> {
        if !(f_hz.is_finite() && f_hz > 0.0) {
            return Err(invalid("sample frequency must be positive"));
        }
        if !(value.re.is_finite() && value.im.is_finite()) {
            return Err(invalid(format!("non-finite response at {f_hz} Hz")));
        }
        Ok(FrequencyResponseSample { f_hz, value })
    }
}

/// Samples `tf` on every grid point.
pub fn sample_tf(tf: &RationalTf, grid: &FrequencyGrid) -> Result<Vec<FrequencyResponseSample>> {
    grid.points()
        .iter()
        .map(|&f| FrequencyResponseSample::new(f, tf.eval_hz(f)?))
        .collect()
}

/// Gain in dB and principal phase in degrees, phase in (-180, 180].
pub fn gain_phase(value: Complex64) -> Result<(f64, f64)> {
    let mag = value.norm();
    if mag == 0.0 {
        return Err(Error::ZeroMagnitude);
    }
    let mut phase = value.arg().to_degrees();
    if phase <= -180.0 {
        phase += 360.0;
    }
    Ok((20.0 * mag.log10(), phase))
}

/// Removes 360 degree jumps from a phase trace for plotting.
pub fn unwrap_phase_deg(phases: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(phases.len());
    let mut offset = 0.0;
    for (i, &p) in phases.iter().enumerate() {
        if i > 0 {
            let prev = phases[i - 1];
            let jump = p - prev;
            if jump > 180.0 {
                offset -= 360.0;
            } else if jump < -180.0 {
                offset += 360.0;
            }
        }
        out.push(p + offset);
    }
    out
}

/// Least-squares slope of `log10 |value|` against `log10 f`.
pub fn loglog_slope(samples: &[(f64, f64)]) -> Option<f64> {
    if samples.len() < 2 {
        return None;
    }
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .map(|&(f, g)| (f.log10(), g.log10()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn constant_tf() {
        let tf = RationalTf::new(vec![0.05], vec![1.0]).unwrap();
        assert_eq!(tf.eval_hz(10.0).unwrap(), Complex64::new(0.05, 0.0));
    }

    #[test]
    fn first_order_at_unit_frequency() {
        let tf = RationalTf::new(vec![1.0], vec![1.0, 1.0]).unwrap();
        let v = tf.eval_hz(F_BASE_HZ).unwrap();
        assert_relative_eq!(v.re, 0.5, epsilon = 1e-15);
        assert_relative_eq!(v.im, -0.5, epsilon = 1e-15);
    }

    #[test]
    fn line_denominator_at_dc() {
        // 1 / (s^2 + 0.2 s + 1.01)
        let tf = RationalTf::new(vec![1.0], vec![1.01, 0.2, 1.0]).unwrap();
        assert_relative_eq!(tf.eval_hz(1e-12).unwrap().re, 1.0 / 1.01, epsilon = 1e-12);
        assert_relative_eq!(tf.dc_gain().unwrap(), 0.990_099_009_9, epsilon = 1e-10);
    }

    #[test]
    fn pole_on_axis_is_reported() {
        let tf = RationalTf::new(vec![1.0], vec![1.0, 0.0, 1.0]).unwrap();
        assert!(matches!(
            tf.eval_hz(F_BASE_HZ),
            Err(Error::PoleOnImaginaryAxis { .. })
        ));
    }

    #[test]
    fn rejects_invalid_tf() {
        assert!(RationalTf::new(vec![1.0], vec![0.0, 0.0]).is_err());
        assert!(RationalTf::new(vec![f64::NAN], vec![1.0]).is_err());
    }

    #[test]
    fn log_grid_decades() {
        let g = log_grid(1.0, 100.0, 3).unwrap();
        assert_eq!(g.points()[0], 1.0);
        assert_relative_eq!(g.points()[1], 10.0, epsilon = 1e-12);
        assert_eq!(g.points()[2], 100.0);
    }

    #[test]
    fn log_grid_rejects_degenerate_range() {
        assert!(log_grid(0.1, 0.1, 2).is_err());
        assert!(log_grid(1.0, 0.5, 4).is_err());
        assert!(log_grid(0.0, 1.0, 4).is_err());
        assert!(log_grid(1.0, 2.0, 1).is_err());
    }

    #[test]
    fn default_grid_has_constant_ratio() {
        let g = FrequencyGrid::default();
        assert_eq!(g.len(), 61);
        let ratio = 1200f64.powf(1.0 / 60.0);
        for w in g.points().windows(2) {
            assert_relative_eq!(w[1] / w[0], ratio, max_relative = 1e-12);
        }
    }

    #[test]
    fn gain_phase_examples() {
        let (g, p) = gain_phase(Complex64::new(0.05, 0.0)).unwrap();
        assert_relative_eq!(g, -26.0206, epsilon = 1e-4);
        assert_eq!(p, 0.0);
        let (g, p) = gain_phase(Complex64::from_polar(0.03, PI / 2.0)).unwrap();
        assert_relative_eq!(g, -30.4576, epsilon = 1e-4);
        assert_relative_eq!(p, 90.0, epsilon = 1e-12);
        let (g, p) = gain_phase(Complex64::new(0.0, 1.0)).unwrap();
        assert_eq!(g, 0.0);
        assert_eq!(p, 90.0);
        assert!(matches!(
            gain_phase(Complex64::new(0.0, 0.0)),
            Err(Error::ZeroMagnitude)
        ));
        // -180 maps onto the closed end of the interval
        let (_, p) = gain_phase(Complex64::new(-1.0, -0.0)).unwrap();
        assert_eq!(p, 180.0);
    }

    #[test]
    fn unwrap_removes_jumps() {
        let u = unwrap_phase_deg(&[170.0, -175.0, -160.0]);
        assert_eq!(u, vec![170.0, 185.0, 200.0]);
    }

    #[test]
    fn slope_of_power_law() {
        let pts: Vec<(f64, f64)> = (0..10)
            .map(|i| {
                let f = 10f64.powf(i as f64 / 5.0);
                (f, 3.0 * f.powi(2))
            })
            .collect();
        assert_relative_eq!(loglog_slope(&pts).unwrap(), 2.0, epsilon = 1e-12);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn conjugate_symmetry(
                n in proptest::collection::vec(-10.0f64..10.0, 1..4),
                d in proptest::collection::vec(0.1f64..10.0, 1..4),
                f in 0.01f64..500.0,
            ) {
                let tf = RationalTf::new(n, d).unwrap();
                if let (Ok(a), Ok(b)) = (tf.eval_hz(f), tf.eval_hz(-f)) {
                    prop_assert!((a.conj() - b).norm() <= 1e-12 * (1.0 + a.norm()));
                }
            }

            #[test]
            fn dc_value_is_coefficient_ratio(
                n in proptest::collection::vec(-10.0f64..10.0, 1..4),
                d in proptest::collection::vec(0.1f64..10.0, 1..4),
            ) {
                let tf = RationalTf::new(n.clone(), d.clone()).unwrap();
                let v = tf.eval_hz(0.0).unwrap();
                prop_assert!((v.re - n[0] / d[0]).abs() <= 1e-12 * (1.0 + v.re.abs()));
                prop_assert_eq!(v.im, 0.0);
            }

            #[test]
            fn gain_phase_polar_roundtrip(mag in 1e-6f64..1e6, ph in -179.999f64..180.0) {
                let z = Complex64::from_polar(mag, ph.to_radians());
                let (g, p) = gain_phase(z).unwrap();
                let back = Complex64::from_polar(10f64.powf(g / 20.0), p.to_radians());
                prop_assert!((back - z).norm() <= 1e-12 * mag);
            }
        }
    }
}
