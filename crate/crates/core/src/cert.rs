//! Decentralized frequency-stability certificate.
//!
//! For a unit at bus `n` the loop response `h(jw) = gamma/(psi w) mu(jw) m_p(jw)`
//! must satisfy `Re{e^{j(alpha - pi/2)} (j + h(jw))} > 0` at every frequency
//! for one common rotation `alpha` in `[0, pi/2)`. Units that pass with the
//! same `alpha` under a shared network envelope yield a stable network.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::freqresp::{loglog_slope, pu_omega, FrequencyGrid};
use crate::ident::DroopDataset;
use crate::lines::{line_mu, mu_dc, uncertainty_weight, LineParams, UncertaintyWeight};
use crate::units::UnitModel;

/// Abstract description of the grid a unit may be connected to.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkEnvelope {
    pub ell_min: f64,
    pub e_max: usize,
    #[serde(default = "one")]
    pub v_max: f64,
    #[serde(default = "one")]
    pub omega0: f64,
    pub rho: f64,
    #[serde(default = "UncertaintyWeight::none")]
    pub uncertainty: UncertaintyWeight,
}

fn one() -> f64 {
    1.0
}

impl NetworkEnvelope {
    pub fn new(ell_min: f64, e_max: usize, rho: f64) -> Self {
        NetworkEnvelope {
            ell_min,
            e_max,
            v_max: 1.0,
            omega0: 1.0,
            rho,
            uncertainty: UncertaintyWeight::none(),
        }
    }

    pub fn with_uncertainty(mut self, w: UncertaintyWeight) -> Self {
        self.uncertainty = w;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ell_min.is_finite() && self.ell_min > 0.0) {
            return Err(invalid("ell_min must be positive"));
        }
        if self.e_max < 1 {
            return Err(invalid("e_max must be at least 1"));
        }
        if !(self.v_max > 0.0 && self.omega0 > 0.0 && self.rho > 0.0) {
            return Err(invalid("v_max, omega0 and rho must be positive"));
        }
        self.uncertainty.validate()
    }
}

/// Coupling strength and rating of one bus.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BusContext {
    pub gamma: f64,
    pub psi: f64,
}

impl BusContext {
    pub fn new(gamma: f64, psi: f64) -> Result<Self> {
        let ctx = BusContext { gamma, psi };
        ctx.validate()?;
        Ok(ctx)
    }

    /// Worst-case context under the envelope.
    pub fn from_envelope(env: &NetworkEnvelope, psi: f64) -> Result<Self> {
        env.validate()?;
        BusContext::new(gamma_bar(env), psi)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma > 0.0 && self.psi.is_finite() && self.psi > 0.0) {
            return Err(invalid("gamma and psi must be positive"));
        }
        Ok(())
    }
}

/// `2 sum omega0 V_n V_k / ell` over the lines incident to a bus.
pub fn gamma_bus(lines: &[LineParams]) -> Result<f64> {
    if lines.is_empty() {
        return Err(invalid("a bus needs at least one incident line"));
    }
    let mut sum = 0.0;
    for l in lines {
        l.validate()?;
        sum += l.omega0 * l.v_n * l.v_k / l.ell;
    }
    Ok(2.0 * sum)
}

pub fn gamma_bar(env: &NetworkEnvelope) -> f64 {
    2.0 * env.e_max as f64 * env.omega0 * env.v_max * env.v_max / env.ell_min
}

/// Line model used inside the loop response.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineModel {
    #[default]
    Dynamic,
    /// Static `mu0` in place of `mu(jw)`.
    QuasiSteady,
}

fn check_freq(f_hz: f64) -> Result<()> {
    if f_hz > 0.0 && f_hz.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("loop response needs f > 0 (got {f_hz})")))
    }
}

/// `h(jw) = gamma/(psi w) mu(jw) m_p(jw)` with `w` in per-unit.
pub fn bus_loop_response(f_hz: f64, m_p: Complex64, ctx: &BusContext, rho: f64, omega0: f64) -> Result<Complex64> {
    bus_loop_response_with(f_hz, m_p, ctx, rho, omega0, LineModel::Dynamic)
}

pub fn bus_loop_response_with(
    f_hz: f64,
    m_p: Complex64,
    ctx: &BusContext,
    rho: f64,
    omega0: f64,
    model: LineModel,
) -> Result<Complex64> {
    check_freq(f_hz)?;
    let mu = match model {
        LineModel::Dynamic => line_mu(rho, omega0, f_hz),
        LineModel::QuasiSteady => Complex64::new(mu_dc(rho, omega0), 0.0),
    };
    Ok(mu * m_p * (ctx.gamma / (ctx.psi * pu_omega(f_hz))))
}

/// Radius `gamma/(psi w) |W(jw)| |m_p(jw)|` of the uncertainty disk around `h`.
pub fn robust_radius(f_hz: f64, m_p: Complex64, ctx: &BusContext, w: &UncertaintyWeight) -> Result<f64> {
    check_freq(f_hz)?;
    Ok(ctx.gamma / (ctx.psi * pu_omega(f_hz)) * uncertainty_weight(w, f_hz).norm() * m_p.norm())
}

/// Interval of rotations, open at both ends except that `lo = 0` is
/// attained.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaInterval {
    pub lo: f64,
    pub hi: f64,
}

impl AlphaInterval {
    pub const FULL: AlphaInterval = AlphaInterval { lo: 0.0, hi: FRAC_PI_2 };

    pub fn contains(&self, alpha: f64) -> bool {
        (alpha > self.lo || (self.lo == 0.0 && alpha == 0.0)) && alpha < self.hi
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn intersect(&self, other: &AlphaInterval) -> Option<AlphaInterval> {
        let iv = AlphaInterval {
            lo: self.lo.max(other.lo),
            hi: self.hi.min(other.hi),
        };
        (iv.hi > iv.lo).then_some(iv)
    }
}

/// Admissible rotations for one sample at positive frequency, where the
/// disk of radius `r` around `h` must stay strictly inside the rotated
/// half-plane. `None` when the admissible set misses `[0, pi/2)`.
pub fn sample_interval(h: Complex64, r: f64) -> Option<AlphaInterval> {
    let z = Complex64::new(0.0, 1.0) + h;
    let mag = z.norm();
    if !(mag > r) || !mag.is_finite() {
        return None;
    }
    let half = (r / mag).acos();
    let center = FRAC_PI_2 - z.arg();
    // centers repeat every 2 pi; at most one copy can meet [0, pi/2)
    [-2.0 * PI, 0.0, 2.0 * PI].iter().find_map(|shift| {
        AlphaInterval::FULL.intersect(&AlphaInterval {
            lo: center + shift - half,
            hi: center + shift + half,
        })
    })
}

/// Maps a sample at negative frequency onto its positive-frequency mirror
/// via `h(-w) = -conj(h(w))`.
fn fold(f_hz: f64, h: Complex64) -> Complex64 {
    if f_hz < 0.0 {
        -h.conj()
    } else {
        h
    }
}

/// Intersection of the per-sample intervals, or `None`.
pub fn alpha_feasible(h_samples: &[(f64, Complex64)]) -> Option<AlphaInterval> {
    h_samples.iter().try_fold(AlphaInterval::FULL, |acc, &(f, h)| {
        sample_interval(fold(f, h), 0.0).and_then(|iv| acc.intersect(&iv))
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyMargin {
    pub f_hz: f64,
    #[serde(with = "crate::cjson")]
    pub h: Complex64,
    pub interval: Option<AlphaInterval>,
    pub radius: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub f_hz: f64,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateResult {
    pub alpha_interval: Option<AlphaInterval>,
    pub suggested_alpha: Option<f64>,
    pub per_freq: Vec<FrequencyMargin>,
    pub robust: bool,
    pub violations: Vec<Violation>,
    pub warnings: Vec<String>,
    pub assumptions: Vec<String>,
}

impl CertificateResult {
    pub fn feasible(&self) -> bool {
        self.alpha_interval.is_some()
    }

    /// Nyquist trace with disk radii: `f_hz,h_re,h_im,radius`.
    pub fn nyquist_csv(&self) -> String {
        let mut out = String::from("f_hz,h_re,h_im,radius\n");
        for m in &self.per_freq {
            out.push_str(&format!("{:e},{:e},{:e},{:e}\n", m.f_hz, m.h.re, m.h.im, m.radius));
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CertOptions {
    pub robust: bool,
    pub line_model: LineModel,
    pub min_points_per_decade: f64,
}

impl Default for CertOptions {
    fn default() -> Self {
        CertOptions {
            robust: false,
            line_model: LineModel::Dynamic,
            min_points_per_decade: 10.0,
        }
    }
}

pub fn certify_unit(dataset: &DroopDataset, env: &NetworkEnvelope, ctx: &BusContext, robust: bool) -> Result<CertificateResult> {
    certify_unit_with(dataset, env, ctx, &CertOptions { robust, ..CertOptions::default() })
}

fn check_density(freqs: &[f64], min_ppd: f64) -> Result<()> {
    if freqs.len() < 2 {
        return Err(invalid("certification needs at least two samples"));
    }
    let max_gap = 1.0 / min_ppd;
    for w in freqs.windows(2) {
        if !(w[0] > 0.0) || !(w[1] > w[0]) {
            return Err(invalid("frequencies must be positive and increasing"));
        }
        let gap = (w[1] / w[0]).log10();
        if gap > max_gap + 1e-12 {
            return Err(invalid(format!(
                "grid too sparse between {} Hz and {} Hz ({:.2} points per decade, need {min_ppd})",
                w[0],
                w[1],
                1.0 / gap
            )));
        }
    }
    Ok(())
}

/// Samples within the top decade of the grid, at least two.
fn last_decade<T: Copy>(freqs: &[f64], values: &[T]) -> Vec<(f64, T)> {
    let f_max = *freqs.last().unwrap();
    let start = freqs
        .iter()
        .position(|&f| f >= f_max / 10.0)
        .unwrap_or(0)
        .min(freqs.len() - 2);
    freqs[start..].iter().copied().zip(values[start..].iter().copied()).collect()
}

pub fn certify_unit_with(
    dataset: &DroopDataset,
    env: &NetworkEnvelope,
    ctx: &BusContext,
    opts: &CertOptions,
) -> Result<CertificateResult> {
    env.validate()?;
    ctx.validate()?;
    dataset.validate()?;
    let freqs = dataset.frequencies();
    check_density(&freqs, opts.min_points_per_decade)?;

    let per_freq: Vec<FrequencyMargin> = dataset
        .samples
        .par_iter()
        .map(|s| {
            let h = bus_loop_response_with(s.f_hz, s.m_p, ctx, env.rho, env.omega0, opts.line_model)?;
            let radius = if opts.robust {
                robust_radius(s.f_hz, s.m_p, ctx, &env.uncertainty)?
            } else {
                0.0
            };
            Ok(FrequencyMargin {
                f_hz: s.f_hz,
                h,
                interval: sample_interval(h, radius),
                radius,
            })
        })
        .collect::<Result<_>>()?;

    let mut violations = Vec::new();
    let mut warnings = Vec::new();

    let m0 = dataset.samples[0].m_p;
    if m0.norm() == 0.0 || m0.arg().abs() >= FRAC_PI_2 {
        violations.push(Violation {
            f_hz: 0.0,
            reason: format!(
                "low-frequency limit: m_p phase {:.1} deg at {} Hz is outside (-90, 90) deg",
                m0.arg().to_degrees(),
                freqs[0]
            ),
        });
    }

    let f_top = *freqs.last().unwrap();
    let hs: Vec<Complex64> = per_freq.iter().map(|m| m.h).collect();
    let tail = last_decade(&freqs, &hs);
    let gain_tail: Vec<(f64, f64)> = tail.iter().map(|&(f, h)| (f, h.norm())).collect();
    let decaying = loglog_slope(&gain_tail).is_some_and(|k| k < 0.0);
    let dissipative = hs.last().is_some_and(|h| h.re > 0.0);
    if !(decaying || dissipative) {
        violations.push(Violation {
            f_hz: f_top,
            reason: "high-frequency limit: |h| does not decay over the last decade and its phase is not dissipative".into(),
        });
    }
    if opts.robust && env.uncertainty.beta > 0.0 {
        let radii: Vec<f64> = per_freq.iter().map(|m| m.radius).collect();
        let tail: Vec<(f64, f64)> = last_decade(&freqs, &radii);
        if !loglog_slope(&tail).is_some_and(|k| k < 0.0) {
            violations.push(Violation {
                f_hz: f_top,
                reason: "high-frequency limit: uncertainty disk does not shrink over the last decade".into(),
            });
        }
    }

    let mut acc = Some(AlphaInterval::FULL);
    for m in &per_freq {
        match m.interval {
            None => {
                let reason = if m.radius > 0.0 && (Complex64::new(0.0, 1.0) + m.h).norm() <= m.radius {
                    "uncertainty disk contains the critical point -j".to_string()
                } else {
                    "no rotation in [0, 90) deg keeps the sample in the half-plane".to_string()
                };
                violations.push(Violation { f_hz: m.f_hz, reason });
                acc = None;
            }
            Some(iv) => {
                if let Some(cur) = acc {
                    acc = cur.intersect(&iv);
                    if acc.is_none() {
                        violations.push(Violation {
                            f_hz: m.f_hz,
                            reason: format!(
                                "admissible rotations ({:.2}, {:.2}) deg are disjoint from those at lower frequencies ({:.2}, {:.2}) deg",
                                iv.lo.to_degrees(),
                                iv.hi.to_degrees(),
                                cur.lo.to_degrees(),
                                cur.hi.to_degrees()
                            ),
                        });
                    }
                }
            }
        }
    }
    let alpha_interval = if violations.is_empty() { acc } else { None };

    if let Some(iv) = alpha_interval {
        // interpolate h between samples (linear in log f) and flag any
        // midpoint that would leave the certified interval
        for w in per_freq.windows(2) {
            let h_mid = 0.5 * (w[0].h + w[1].h);
            let r_mid = 0.5 * (w[0].radius + w[1].radius);
            let ok = sample_interval(h_mid, r_mid).is_some_and(|s| s.contains(iv.midpoint()));
            if !ok {
                warnings.push(format!(
                    "interpolated response between {} Hz and {} Hz leaves the suggested rotation",
                    w[0].f_hz, w[1].f_hz
                ));
            }
        }
    }

    Ok(CertificateResult {
        alpha_interval,
        suggested_alpha: alpha_interval.map(|iv| iv.midpoint()),
        per_freq,
        robust: opts.robust,
        violations,
        warnings,
        assumptions: vec![
            "all poles of mu(s) m_p(s) lie in the open left half-plane (not checkable from sampled data)".into(),
        ],
    })
}

/// Certifies an analytic model sampled on `grid`. The pole condition is
/// checked from the model instead of assumed.
pub fn certify_model(
    unit_id: &str,
    unit: &UnitModel,
    grid: &FrequencyGrid,
    env: &NetworkEnvelope,
    ctx: &BusContext,
    opts: &CertOptions,
) -> Result<CertificateResult> {
    let dataset = DroopDataset::from_model(unit_id, unit, grid)?;
    let mut res = certify_unit_with(&dataset, env, ctx, opts)?;
    let stable = unit.m_p_poles_stable()?;
    res.assumptions.clear();
    if !stable {
        res.violations.push(Violation {
            f_hz: 0.0,
            reason: "m_p has a pole outside the open left half-plane".into(),
        });
        res.alpha_interval = None;
        res.suggested_alpha = None;
    }
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::freqresp::{log_grid, pu_time, RationalTf};
    use crate::units::{gfl_srf_pll_tf, gfm_droop_tf, GfmDroopParams, GflPllParams};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn base_env() -> NetworkEnvelope {
        NetworkEnvelope::new(0.197, 2, 0.1)
    }

    fn unit(m_p: RationalTf, psi: f64) -> UnitModel {
        UnitModel::new(m_p, RationalTf::first_order(0.05, pu_time(0.02)), psi).unwrap()
    }

    fn gfm(psi: f64) -> UnitModel {
        unit(gfm_droop_tf(&GfmDroopParams { m_p0: 0.05, tau: 0.05 }).unwrap(), psi)
    }

    fn gfl() -> UnitModel {
        unit(gfl_srf_pll_tf(&GflPllParams::default()).unwrap(), 0.1)
    }

    #[test]
    fn coupling_constants() {
        assert_relative_eq!(gamma_bus(&[LineParams::new(1.0, 0.1)]).unwrap(), 2.0);
        let two = [LineParams::new(0.197, 0.1), LineParams::new(0.197, 0.1)];
        assert_relative_eq!(gamma_bus(&two).unwrap(), 4.0 / 0.197, max_relative = 1e-14);
        assert!(gamma_bus(&[]).is_err());
        assert_relative_eq!(gamma_bar(&base_env()), 20.304568527918782, max_relative = 1e-14);
        assert_relative_eq!(gamma_bar(&NetworkEnvelope::new(1.0, 1, 0.1)), 2.0);
        let mut env = base_env();
        env.ell_min *= 2.0;
        assert_relative_eq!(gamma_bar(&env), 0.5 * gamma_bar(&base_env()), max_relative = 1e-14);
    }

    #[test]
    fn loop_response_product() {
        let ctx = BusContext::new(20.0, 1.0).unwrap();
        let h = bus_loop_response(60.0, c(0.05, 0.0), &ctx, 0.1, 1.0).unwrap();
        let expect = line_mu(0.1, 1.0, 60.0) * 1.0;
        assert!((h - expect).norm() < 1e-14);
        assert_relative_eq!(h.norm(), 1.0 / (0.1 * (0.01f64 + 4.0).sqrt()), max_relative = 1e-12);
        let h2 = bus_loop_response(60.0, c(0.05, 0.0), &BusContext::new(40.0, 0.5).unwrap(), 0.1, 1.0).unwrap();
        assert!((h2 - 4.0 * h).norm() < 1e-12);
        assert!(bus_loop_response(0.0, c(0.05, 0.0), &ctx, 0.1, 1.0).is_err());
        let qss = bus_loop_response_with(60.0, c(0.05, 0.0), &ctx, 0.1, 1.0, LineModel::QuasiSteady).unwrap();
        assert_relative_eq!(qss.re, 1.0 / 1.01, max_relative = 1e-14);
    }

    #[test]
    fn trivial_alpha_cases() {
        let zero: Vec<_> = (1..20).map(|k| (k as f64, c(0.0, 0.0))).collect();
        assert_eq!(alpha_feasible(&zero), Some(AlphaInterval::FULL));
        assert_eq!(alpha_feasible(&[(1.0, c(0.0, -2.0))]), None);
        // z = 1 + j: admissible alpha in (-45, 135) deg
        let iv = alpha_feasible(&[(1.0, c(1.0, 0.0))]).unwrap();
        assert_eq!(iv, AlphaInterval::FULL);
        // z = -1 + j: alpha in (-135, 45) deg
        let iv = alpha_feasible(&[(1.0, c(-1.0, 0.0))]).unwrap();
        assert_relative_eq!(iv.hi, PI / 4.0, epsilon = 1e-15);
        assert_eq!(iv.lo, 0.0);
    }

    #[test]
    fn disk_shrinks_interval_exactly() {
        let h = c(-1.0, 0.0);
        let z = c(-1.0, 1.0);
        let r = 0.5;
        let iv = sample_interval(h, r).unwrap();
        for alpha in [iv.lo + 1e-9, iv.midpoint(), iv.hi - 1e-9] {
            let dist = (Complex64::from_polar(1.0, alpha - FRAC_PI_2) * z).re;
            assert!(dist > r - 1e-8);
        }
        let dist = (Complex64::from_polar(1.0, iv.hi + 1e-6 - FRAC_PI_2) * z).re;
        assert!(dist < r);
        assert!(sample_interval(h, 2f64.sqrt()).is_none());
        assert_eq!(robust_radius(3.0, c(0.05, 0.0), &BusContext::new(20.0, 1.0).unwrap(), &UncertaintyWeight::none()).unwrap(), 0.0);
    }

    #[test]
    fn constant_droop_under_base_envelope_is_not_certifiable() {
        let env = base_env();
        let ctx = BusContext::from_envelope(&env, 0.1).unwrap();
        let grid = log_grid(0.1, 120.0, 61).unwrap();
        let ds = DroopDataset::from_model("cd", &unit(RationalTf::constant(0.05), 0.1), &grid).unwrap();
        let res = certify_unit(&ds, &env, &ctx, false).unwrap();
        assert!(!res.feasible());
        assert!(!res.violations.is_empty());
    }

    #[test]
    fn gfm_feasible_robustly_and_gfl_only_nominally() {
        let w = UncertaintyWeight::default();
        let env = base_env().with_uncertainty(w);
        let grid = log_grid(0.1, 120.0, 61).unwrap();
        let opts = |robust| CertOptions { robust, ..CertOptions::default() };

        let ctx = BusContext::from_envelope(&env, 1.0).unwrap();
        let nominal = certify_model("gfm", &gfm(1.0), &grid, &env, &ctx, &opts(false)).unwrap();
        let iv = nominal.alpha_interval.unwrap();
        assert!((iv.lo.to_degrees() - 59.5).abs() < 0.5 && (iv.hi.to_degrees() - 74.0).abs() < 0.5, "{iv:?}");
        assert!(!certify_model("gfm", &gfm(1.0), &grid, &env, &ctx, &opts(true)).unwrap().feasible());

        let ctx = BusContext::from_envelope(&env, 2.0).unwrap();
        let res = certify_model("gfm", &gfm(2.0), &grid, &env, &ctx, &opts(true)).unwrap();
        assert!(res.feasible(), "{:?}", res.violations);
        let iv = res.alpha_interval.unwrap();
        assert!((iv.lo.to_degrees() - 60.6).abs() < 0.5 && (iv.hi.to_degrees() - 80.5).abs() < 0.5, "{iv:?}");
        assert!(res.violations.is_empty());

        let ctx = BusContext::from_envelope(&env, 0.1).unwrap();
        let nominal = certify_model("gfl", &gfl(), &grid, &env, &ctx, &opts(false)).unwrap();
        assert!(nominal.feasible(), "{:?}", nominal.violations);
        let robust = certify_model("gfl", &gfl(), &grid, &env, &ctx, &opts(true)).unwrap();
        assert!(!robust.feasible());
        assert!(robust.alpha_interval.is_none() && !robust.violations.is_empty());
    }

    #[test]
    fn gfm_radius_decays_gfl_radius_grows() {
        let w = UncertaintyWeight::default();
        let ctx = BusContext::new(20.3, 1.0).unwrap();
        let r = |u: &UnitModel, f: f64| robust_radius(f, u.m_p.eval_hz(f).unwrap(), &ctx, &w).unwrap();
        assert!(r(&gfm(1.0), 100.0) < 0.1 * r(&gfm(1.0), 10.0));
        assert!(r(&gfl(), 1000.0) > 5.0 * r(&gfl(), 100.0));
    }

    #[test]
    fn large_beta_is_infeasible() {
        let grid = log_grid(0.1, 120.0, 61).unwrap();
        let env = NetworkEnvelope::new(0.197, 2, 0.1).with_uncertainty(UncertaintyWeight {
            beta: 50.0,
            omega_delta: 1.0,
        });
        let ctx = BusContext::from_envelope(&env, 1.0).unwrap();
        let opts = CertOptions { robust: true, ..CertOptions::default() };
        let res = certify_model("gfm", &gfm(1.0), &grid, &env, &ctx, &opts).unwrap();
        assert!(!res.feasible());
    }

    #[test]
    fn sparse_grid_rejected() {
        let grid = log_grid(0.1, 120.0, 20).unwrap();
        let ds = DroopDataset::from_model("g", &gfm(1.0), &grid).unwrap();
        let env = base_env();
        let ctx = BusContext::from_envelope(&env, 1.0).unwrap();
        assert!(certify_unit(&ds, &env, &ctx, false).is_err());
    }

    #[test]
    fn unstable_model_pole_is_a_violation() {
        let grid = log_grid(0.1, 120.0, 61).unwrap();
        let bad = unit(RationalTf::new(vec![0.05], vec![-1.0, 100.0]).unwrap(), 1.0);
        let env = base_env();
        let ctx = BusContext::from_envelope(&env, 1.0).unwrap();
        let res = certify_model("bad", &bad, &grid, &env, &ctx, &CertOptions::default()).unwrap();
        assert!(!res.feasible());
    }

    #[test]
    fn nyquist_csv_layout() {
        let grid = log_grid(1.0, 10.0, 11).unwrap();
        let env = base_env();
        let ctx = BusContext::from_envelope(&env, 1.0).unwrap();
        let ds = DroopDataset::from_model("g", &gfm(1.0), &grid).unwrap();
        let res = certify_unit(&ds, &env, &ctx, false).unwrap();
        let csv = res.nyquist_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "f_hz,h_re,h_im,radius");
        assert_eq!(lines.len(), 12);
        assert_eq!(lines[1].split(',').count(), 4);
    }

    fn arb_h() -> impl Strategy<Value = Vec<(f64, Complex64)>> {
        prop::collection::vec((0.01f64..100.0, -3.0f64..3.0, -3.0f64..3.0), 1..12)
            .prop_map(|v| v.into_iter().map(|(f, re, im)| (f, c(re, im))).collect())
    }

    proptest! {
        #[test]
        fn mirrored_negative_frequencies_change_nothing(h in arb_h()) {
            let mut mirrored = h.clone();
            mirrored.extend(h.iter().map(|&(f, z)| (-f, -z.conj())));
            prop_assert_eq!(alpha_feasible(&h), alpha_feasible(&mirrored));
        }

        #[test]
        fn weaker_coupling_never_shrinks_interval(h in arb_h(), t in 0.0f64..1.0) {
            if let Some(iv) = alpha_feasible(&h) {
                let scaled: Vec<_> = h.iter().map(|&(f, z)| (f, z * t)).collect();
                let sv = alpha_feasible(&scaled).expect("scaled loop must stay feasible");
                prop_assert!(sv.lo <= iv.lo + 1e-12 && sv.hi >= iv.hi - 1e-12);
            }
        }

        #[test]
        fn interval_members_satisfy_half_plane(h in arb_h(), u in 0.0f64..1.0) {
            if let Some(iv) = alpha_feasible(&h) {
                let alpha = iv.lo + u * iv.width();
                if iv.contains(alpha) {
                    for &(_, z) in &h {
                        let v = (Complex64::from_polar(1.0, alpha - FRAC_PI_2) * (c(0.0, 1.0) + z)).re;
                        prop_assert!(v > -1e-12);
                    }
                }
            }
        }
    }
}
