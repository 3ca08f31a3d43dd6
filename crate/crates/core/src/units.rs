//! Analytic reference models of grid-connected units.
//!
//! Each model yields the 2x2 dynamic droop matrix
//! `[dw; dV] = -[[m_p, zeta_q], [zeta_p, m_q]] [dp; dq]`.
//! Time constants are given in seconds and converted to per-unit time.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::freqresp::{pu_omega, pu_time, RationalTf};
use crate::poly::Poly;

/// Droop with a first-order power filter, `m_p0 / (tau s + 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GfmDroopParams {
    pub m_p0: f64,
    /// seconds
    pub tau: f64,
}

/// Virtual synchronous machine swing dynamics, `1 / (2 H s + D)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VsmParams {
    /// Inertia constant in seconds.
    pub h: f64,
    /// Damping, the inverse of the steady-state droop.
    pub d: f64,
}

/// Grid-following unit with an SRF-PLL and frequency droop.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GflPllParams {
    /// PLL proportional gain (per-unit s).
    pub k_p: f64,
    /// PLL integral gain (per-unit s).
    pub k_i: f64,
    /// Differentiator filter time constant in seconds.
    pub tau_d: f64,
    pub d: f64,
}

impl Default for GflPllParams {
    /// About 10 Hz PLL bandwidth at damping ratio 1/sqrt(2), 10 ms filter, 5 % droop.
    fn default() -> Self {
        let wn = pu_omega(10.0);
        GflPllParams {
            k_p: std::f64::consts::SQRT_2 * wn,
            k_i: wn * wn,
            tau_d: 0.01,
            d: 20.0,
        }
    }
}

/// First-order Q-V droop used for the voltage channel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QvDroopParams {
    pub m_q0: f64,
    /// seconds
    pub tau_q: f64,
}

impl Default for QvDroopParams {
    fn default() -> Self {
        QvDroopParams {
            m_q0: 0.05,
            tau_q: 0.02,
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be positive and finite (got {v})")))
    }
}

impl GfmDroopParams {
    pub fn validate(&self) -> Result<()> {
        positive("m_p0", self.m_p0)?;
        positive("tau", self.tau)
    }
}

impl VsmParams {
    pub fn validate(&self) -> Result<()> {
        positive("H", self.h)?;
        positive("D", self.d)
    }

    /// Cut-off frequency `pi D / H` used by the inertia specification.
    pub fn cutoff_hz(&self) -> f64 {
        std::f64::consts::PI * self.d / self.h
    }

    /// Frequency of the pole of `1/(2Hs + D)`, i.e. `D / (4 pi H)` Hz.
    pub fn pole_hz(&self) -> f64 {
        self.d / (4.0 * std::f64::consts::PI * self.h)
    }
}

impl GflPllParams {
    pub fn validate(&self) -> Result<()> {
        positive("k_p", self.k_p)?;
        positive("k_i", self.k_i)?;
        positive("tau_d", self.tau_d)?;
        positive("D", self.d)
    }
}

impl QvDroopParams {
    pub fn validate(&self) -> Result<()> {
        positive("m_q0", self.m_q0)?;
        positive("tau_q", self.tau_q)
    }
}

pub fn gfm_droop_tf(params: &GfmDroopParams) -> Result<RationalTf> {
    params.validate()?;
    Ok(RationalTf::first_order(params.m_p0, pu_time(params.tau)))
}

pub fn vsm_tf(params: &VsmParams) -> Result<RationalTf> {
    params.validate()?;
    RationalTf::new(vec![1.0], vec![params.d, 2.0 * pu_time(params.h)])
}

/// `(s^2 + k_p s + k_i)(tau_d s + 1) / ((k_p s + k_i) D)`. Improper with
/// relative degree -2; the causal direction is its reciprocal.
pub fn gfl_srf_pll_tf(params: &GflPllParams) -> Result<RationalTf> {
    params.validate()?;
    let pll_den = Poly::new(vec![params.k_i, params.k_p, 1.0]);
    let filter = Poly::new(vec![1.0, pu_time(params.tau_d)]);
    let den = Poly::new(vec![params.k_i * params.d, params.k_p * params.d]);
    RationalTf::from_polys(pll_den.mul(&filter), den)
}

/// The causal power response `g_D g_PLL`, i.e. the reciprocal of
/// [`gfl_srf_pll_tf`].
pub fn gfl_power_response_tf(params: &GflPllParams) -> Result<RationalTf> {
    gfl_srf_pll_tf(params)?.reciprocal()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitKind {
    GfmDroop,
    Vsm,
    GflPll,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum UnitParams {
    GfmDroop(GfmDroopParams),
    Vsm(VsmParams),
    GflPll(GflPllParams),
}

/// A unit's dynamic droop matrix and rating.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitModel {
    pub m_p: RationalTf,
    pub m_q: RationalTf,
    pub zeta_p: RationalTf,
    pub zeta_q: RationalTf,
    pub psi: f64,
}

impl UnitModel {
    pub fn new(m_p: RationalTf, m_q: RationalTf, psi: f64) -> Result<Self> {
        positive("psi", psi)?;
        Ok(UnitModel {
            m_p,
            m_q,
            zeta_p: RationalTf::constant(0.0),
            zeta_q: RationalTf::constant(0.0),
            psi,
        })
    }

    pub fn with_cross_coupling(mut self, zeta_p: RationalTf, zeta_q: RationalTf) -> Self {
        self.zeta_p = zeta_p;
        self.zeta_q = zeta_q;
        self
    }

    /// True when every pole of `m_p` lies in the open left half-plane.
    pub fn m_p_poles_stable(&self) -> Result<bool> {
        Ok(self.m_p.poles()?.iter().all(|p| p.re < 0.0))
    }
}

/// Assembles a unit with the default Q-V channel.
pub fn unit_droop_matrix(kind: UnitKind, params: &UnitParams, psi: f64) -> Result<UnitModel> {
    unit_droop_matrix_with_qv(kind, params, psi, &QvDroopParams::default())
}

pub fn unit_droop_matrix_with_qv(
    kind: UnitKind,
    params: &UnitParams,
    psi: f64,
    qv: &QvDroopParams,
) -> Result<UnitModel> {
    let m_p = match (kind, params) {
        (UnitKind::GfmDroop, UnitParams::GfmDroop(p)) => gfm_droop_tf(p)?,
        (UnitKind::Vsm, UnitParams::Vsm(p)) => vsm_tf(p)?,
        (UnitKind::GflPll, UnitParams::GflPll(p)) => gfl_srf_pll_tf(p)?,
        _ => {
            return Err(invalid(format!(
                "parameters {params:?} do not match unit kind {kind:?}"
            )))
        }
    };
    qv.validate()?;
    let m_q = RationalTf::first_order(qv.m_q0, pu_time(qv.tau_q));
    UnitModel::new(m_p, m_q, psi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::freqresp::{gain_phase, loglog_slope};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn gfm() -> GfmDroopParams {
        GfmDroopParams {
            m_p0: 0.05,
            tau: 0.05,
        }
    }

    #[test]
    fn gfm_dc_and_corner() {
        let tf = gfm_droop_tf(&gfm()).unwrap();
        let (g, p) = gain_phase(tf.eval_hz(1e-6).unwrap()).unwrap();
        assert_relative_eq!(10f64.powf(g / 20.0), 0.05, max_relative = 1e-6);
        assert!(p.abs() < 1e-3);
        let corner = 1.0 / (2.0 * PI * 0.05);
        let v = tf.eval_hz(corner).unwrap();
        assert_relative_eq!(v.norm(), 0.05 / 2f64.sqrt(), max_relative = 1e-12);
        assert_relative_eq!(v.arg().to_degrees(), -45.0, epsilon = 1e-10);
    }

    #[test]
    fn gfm_rolls_off_one_decade_per_decade() {
        let tf = gfm_droop_tf(&gfm()).unwrap();
        let corner = 1.0 / (2.0 * PI * 0.05);
        let pts: Vec<(f64, f64)> = (0..=20)
            .map(|i| {
                let f = 10.0 * corner * 10f64.powf(i as f64 / 10.0);
                (f, tf.eval_hz(f).unwrap().norm())
            })
            .collect();
        assert!((loglog_slope(&pts).unwrap() + 1.0).abs() < 0.02);
    }

    #[test]
    fn vsm_matches_equivalent_droop_filter() {
        let p = VsmParams { h: 2.0, d: 20.0 };
        let vsm = vsm_tf(&p).unwrap();
        assert_relative_eq!(vsm.eval_hz(0.0).unwrap().re, 0.05);
        let droop = gfm_droop_tf(&GfmDroopParams {
            m_p0: 1.0 / p.d,
            tau: 2.0 * p.h / p.d,
        })
        .unwrap();
        for f in [0.01, 0.3, 1.0, 7.0, 60.0, 500.0] {
            let a = vsm.eval_hz(f).unwrap();
            let b = droop.eval_hz(f).unwrap();
            assert!((a - b).norm() < 1e-14 * a.norm().max(1e-3));
        }
        // high-frequency asymptote 1/(2 H s)
        let v = vsm.eval_hz(100.0).unwrap().norm();
        let asym = 1.0 / (2.0 * pu_time(2.0) * pu_omega(100.0));
        assert_relative_eq!(v, asym, max_relative = 1e-4);
    }

    #[test]
    fn gfl_dc_gain_is_inverse_damping() {
        for (kp, ki, td) in [(0.1, 0.01, 0.001), (1.0, 3.0, 0.05), (0.24, 0.028, 0.01)] {
            let tf = gfl_srf_pll_tf(&GflPllParams {
                k_p: kp,
                k_i: ki,
                tau_d: td,
                d: 20.0,
            })
            .unwrap();
            assert_relative_eq!(tf.dc_gain().unwrap(), 0.05, max_relative = 1e-14);
            assert_eq!(tf.relative_degree(), -2);
        }
    }

    #[test]
    fn gfl_asymptotics() {
        let tf = gfl_srf_pll_tf(&GflPllParams::default()).unwrap();
        let pts: Vec<(f64, f64)> = (0..=20)
            .map(|i| {
                let f = 100.0 * 10f64.powf(i as f64 / 20.0);
                (f, tf.eval_hz(f).unwrap().norm())
            })
            .collect();
        let slope = loglog_slope(&pts).unwrap();
        assert!((slope - 2.0).abs() < 0.1, "slope {slope}");
        assert!(tf.eval_hz(1e5).unwrap().norm() > tf.eval_hz(1e3).unwrap().norm() * 1e3);
        let (_, phase) = gain_phase(tf.eval_hz(1000.0).unwrap()).unwrap();
        assert!((phase.abs() - 180.0).abs() < 5.0);
    }

    #[test]
    fn assembled_units() {
        let u = unit_droop_matrix(UnitKind::GfmDroop, &UnitParams::GfmDroop(gfm()), 1.0).unwrap();
        assert_relative_eq!(u.m_p.dc_gain().unwrap(), 0.05);
        let gfl = unit_droop_matrix(
            UnitKind::GflPll,
            &UnitParams::GflPll(GflPllParams::default()),
            0.1,
        )
        .unwrap();
        assert_relative_eq!(gfl.m_p.dc_gain().unwrap(), 0.05, max_relative = 1e-14);
        assert_eq!(gfl.psi, 0.1);
        for f in [0.1, 10.0, 100.0] {
            assert_eq!(gfl.zeta_p.eval_hz(f).unwrap().norm(), 0.0);
            assert_eq!(gfl.zeta_q.eval_hz(f).unwrap().norm(), 0.0);
        }
    }

    #[test]
    fn mismatched_kind_is_rejected() {
        let r = unit_droop_matrix(UnitKind::Vsm, &UnitParams::GfmDroop(gfm()), 1.0);
        assert!(r.is_err());
        assert!(gfm_droop_tf(&GfmDroopParams { m_p0: -1.0, tau: 1.0 }).is_err());
        assert!(unit_droop_matrix(UnitKind::GfmDroop, &UnitParams::GfmDroop(gfm()), 0.0).is_err());
    }

    #[test]
    fn common_steady_state_droop() {
        let a = gfm_droop_tf(&gfm()).unwrap();
        let b = vsm_tf(&VsmParams { h: 3.0, d: 20.0 }).unwrap();
        let c = gfl_srf_pll_tf(&GflPllParams::default()).unwrap();
        for tf in [a, b, c] {
            let v = tf.eval_hz(1e-4).unwrap().norm();
            assert!((v - 0.05).abs() / 0.05 < 1e-3);
        }
    }
}
