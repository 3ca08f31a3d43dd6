//! Dynamic transmission-line model and its bound parameters.
//!
//! The normalized line response is
//! `mu(s) = 1 / (s^2 + 2 rho s + omega0^2 + rho^2)` in per-unit `s`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::freqresp::{hz_from_pu, pu_omega, RationalTf};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineParams {
    /// Inductance in pu.
    pub ell: f64,
    /// Resistance-inductance ratio `r / ell` in pu.
    pub rho: f64,
    #[serde(default = "one")]
    pub v_n: f64,
    #[serde(default = "one")]
    pub v_k: f64,
    #[serde(default = "one")]
    pub omega0: f64,
}

fn one() -> f64 {
    1.0
}

impl LineParams {
    pub fn new(ell: f64, rho: f64) -> Self {
        LineParams {
            ell,
            rho,
            v_n: 1.0,
            v_k: 1.0,
            omega0: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ell.is_finite() && self.ell > 0.0) {
            return Err(invalid(format!("line inductance must be positive (got {})", self.ell)));
        }
        if !(self.rho.is_finite() && self.rho >= 0.0) {
            return Err(invalid(format!("rho must be non-negative (got {})", self.rho)));
        }
        if !(self.v_n > 0.0 && self.v_k > 0.0 && self.omega0 > 0.0) {
            return Err(invalid("line voltages and omega0 must be positive"));
        }
        Ok(())
    }
}

/// `mu` at a complex per-unit `s`.
pub fn mu_at(rho: f64, omega0: f64, s: Complex64) -> Complex64 {
    1.0 / (s * s + 2.0 * rho * s + omega0 * omega0 + rho * rho)
}

pub fn line_mu(rho: f64, omega0: f64, f_hz: f64) -> Complex64 {
    mu_at(rho, omega0, Complex64::new(0.0, pu_omega(f_hz)))
}

pub fn line_mu_tf(rho: f64, omega0: f64) -> RationalTf {
    RationalTf::new(vec![1.0], vec![omega0 * omega0 + rho * rho, 2.0 * rho, 1.0])
        .expect("line denominator is monic")
}

/// Line stiffness `omega0 V_n V_k / ell`.
pub fn line_kappa(params: &LineParams) -> f64 {
    params.omega0 * params.v_n * params.v_k / params.ell
}

/// Maps `(dtheta_nk, dV_nk)` to `(dp_nk, dq_nk)` at `f_hz`.
pub fn line_power_matrix(params: &LineParams, f_hz: f64) -> [[Complex64; 2]; 2] {
    let s = Complex64::new(0.0, pu_omega(f_hz));
    let g = line_kappa(params) * mu_at(params.rho, params.omega0, s);
    let coupling = s + params.rho;
    [
        [g, g * coupling / (params.omega0 * params.v_k)],
        [g * coupling / params.omega0, g / params.v_k],
    ]
}

/// Additive uncertainty weight `W(s) = beta omega_delta s / (s + omega_delta)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyWeight {
    pub beta: f64,
    /// Corner frequency in per-unit.
    pub omega_delta: f64,
}

impl Default for UncertaintyWeight {
    /// Corner at nominal frequency; `|W|` there is about 20 % of the peak
    /// line gain for `rho = 0.1`.
    fn default() -> Self {
        UncertaintyWeight {
            beta: 1.4,
            omega_delta: 1.0,
        }
    }
}

impl UncertaintyWeight {
    pub fn none() -> Self {
        UncertaintyWeight {
            beta: 0.0,
            omega_delta: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(invalid("uncertainty gain beta must be non-negative"));
        }
        if !(self.omega_delta.is_finite() && self.omega_delta > 0.0) {
            return Err(invalid("uncertainty corner frequency must be positive"));
        }
        Ok(())
    }

    pub fn tf(&self) -> RationalTf {
        RationalTf::new(
            vec![0.0, self.beta * self.omega_delta],
            vec![self.omega_delta, 1.0],
        )
        .expect("weight denominator is valid")
    }
}

pub fn uncertainty_weight(w: &UncertaintyWeight, f_hz: f64) -> Complex64 {
    let s = Complex64::new(0.0, pu_omega(f_hz));
    w.beta * w.omega_delta * s / (s + w.omega_delta)
}

/// `mu + W delta` for one value of the normalized uncertainty.
pub fn perturbed_mu(rho: f64, omega0: f64, w: &UncertaintyWeight, delta: Complex64, f_hz: f64) -> Complex64 {
    line_mu(rho, omega0, f_hz) + uncertainty_weight(w, f_hz) * delta
}

/// Envelope of the line response used by every Bode template.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineBounds {
    pub rho: f64,
    pub omega0: f64,
    /// DC gain.
    pub mu0: f64,
    /// Gain at nominal frequency.
    pub mu_hat: f64,
    pub eps_l: f64,
    /// `|mu| <= mu0 + eps_l` for all `f <= f_eps`.
    pub f_eps: f64,
    /// `-angle mu` at `f_eps`.
    pub delta_eps: f64,
    pub delta_l: f64,
    /// `angle mu >= -delta_l` for all `f <= f_delta`.
    pub f_delta: f64,
    pub nu_l: f64,
    /// `angle mu <= nu_l - pi` for all `f >= f_nu`.
    pub f_nu: f64,
}

pub fn mu_dc(rho: f64, omega0: f64) -> f64 {
    1.0 / (omega0 * omega0 + rho * rho)
}

/// `|mu(j omega0)| = 1 / (rho sqrt(rho^2 + 4 omega0^2))`. The true maximum
/// of `|mu|`, `1 / (2 rho omega0)`, is slightly larger for `rho > 0`.
pub fn mu_peak(rho: f64, omega0: f64) -> f64 {
    1.0 / (rho * (rho * rho + 4.0 * omega0 * omega0).sqrt())
}

const BISECTION_TOL_PU: f64 = 1e-9 / crate::freqresp::F_BASE_HZ;

/// Bisection for the crossing of an increasing predicate-valued function on
/// `[lo, hi]` (pu angular frequency). `below(w)` must be true at `lo` and
/// false at `hi`.
fn bisect(mut lo: f64, mut hi: f64, below: impl Fn(f64) -> bool) -> f64 {
    while hi - lo > BISECTION_TOL_PU * 1e-3 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if below(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn mu_pu(rho: f64, omega0: f64, w: f64) -> Complex64 {
    mu_at(rho, omega0, Complex64::new(0.0, w))
}

/// Frequency (Hz) where `|mu|` first reaches `level`, or `None` when the
/// level exceeds the resonant maximum.
pub fn gain_crossing_hz(rho: f64, omega0: f64, level: f64) -> Option<f64> {
    let mu0 = mu_dc(rho, omega0);
    if level <= mu0 {
        return Some(0.0);
    }
    // |mu| increases monotonically up to sqrt(omega0^2 - rho^2).
    let w_peak = (omega0 * omega0 - rho * rho).max(0.0).sqrt();
    if w_peak == 0.0 || mu_pu(rho, omega0, w_peak).norm() <= level {
        return None;
    }
    let w = bisect(0.0, w_peak, |w| mu_pu(rho, omega0, w).norm() <= level);
    Some(hz_from_pu(w))
}

/// Frequency (Hz) where `angle mu` falls to `-phase_lag` (radians,
/// `0 < phase_lag < pi`).
pub fn phase_crossing_hz(rho: f64, omega0: f64, phase_lag: f64) -> Option<f64> {
    if !(phase_lag > 0.0 && phase_lag < std::f64::consts::PI) || rho <= 0.0 {
        return None;
    }
    let mut hi = omega0.max(1.0);
    while mu_pu(rho, omega0, hi).arg() > -phase_lag {
        hi *= 2.0;
        if hi > 1e12 {
            return None;
        }
    }
    let w = bisect(0.0, hi, |w| mu_pu(rho, omega0, w).arg() > -phase_lag);
    Some(hz_from_pu(w))
}

pub fn extract_line_bounds(
    rho: f64,
    omega0: f64,
    eps_l: f64,
    delta_l: f64,
    nu_l: f64,
) -> Result<LineBounds> {
    use std::f64::consts::PI;
    if !(rho > 0.0 && rho.is_finite() && omega0 > 0.0) {
        return Err(invalid("line bounds need rho > 0 and omega0 > 0"));
    }
    if !(eps_l > 0.0 && delta_l > 0.0 && nu_l > 0.0) {
        return Err(invalid("eps_l, delta_l and nu_l must be positive"));
    }
    if delta_l >= PI || nu_l >= PI {
        return Err(invalid("phase thresholds must be below pi"));
    }
    if delta_l + nu_l >= PI {
        return Err(invalid(format!(
            "delta_l + nu_l must be below pi so that f_delta < f_nu (got {:.4} rad)",
            delta_l + nu_l
        )));
    }
    let mu0 = mu_dc(rho, omega0);
    let f_eps = gain_crossing_hz(rho, omega0, mu0 + eps_l).ok_or_else(|| {
        invalid(format!(
            "eps_l = {eps_l} is unreachable: |mu| never exceeds mu0 + eps_l"
        ))
    })?;
    let f_delta = phase_crossing_hz(rho, omega0, delta_l)
        .ok_or_else(|| invalid("delta_l threshold unreachable"))?;
    let f_nu = phase_crossing_hz(rho, omega0, PI - nu_l)
        .ok_or_else(|| invalid("nu_l threshold unreachable"))?;
    let delta_eps = -line_mu(rho, omega0, f_eps).arg();
    Ok(LineBounds {
        rho,
        omega0,
        mu0,
        mu_hat: mu_peak(rho, omega0),
        eps_l,
        f_eps,
        delta_eps,
        delta_l,
        f_delta,
        nu_l,
        f_nu,
    })
}

/// Inverse direction: the thresholds realized by fixed frequencies.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RealizedThresholds {
    /// `max_{f' <= f} |mu| - mu0`
    pub eps_l: f64,
    /// `-angle mu(f)`
    pub delta_l: f64,
    /// `angle mu(f) + pi`
    pub nu_l: f64,
}

pub fn thresholds_at(rho: f64, omega0: f64, f_hz: f64) -> RealizedThresholds {
    let mu0 = mu_dc(rho, omega0);
    let w = pu_omega(f_hz);
    let w_peak = (omega0 * omega0 - rho * rho).max(0.0).sqrt();
    let max_gain = if w >= w_peak {
        mu_pu(rho, omega0, w_peak).norm()
    } else {
        mu_pu(rho, omega0, w).norm()
    };
    let phase = line_mu(rho, omega0, f_hz).arg();
    RealizedThresholds {
        eps_l: max_gain - mu0,
        delta_l: -phase,
        nu_l: phase + std::f64::consts::PI,
    }
}
