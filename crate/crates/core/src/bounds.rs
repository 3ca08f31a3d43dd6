//! Bode-plot templates for `m_p`, performance specifications and
//! minimum-inductance formulas.
//!
//! Gain ceilings of the stability templates rise in proportion to the
//! per-unit probe frequency, so a segment stores the coefficient `k` of
//! the ceiling `k * w_p`.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::cert::BusContext;
use crate::error::{invalid, Result};
use crate::freqresp::{loglog_slope, pu_omega, unwrap_phase_deg};
use crate::ident::DroopDataset;
use crate::lines::{gain_crossing_hz, line_mu, mu_dc, LineBounds};
use crate::units::VsmParams;

/// Default margin applied to strict inequalities (pu for gains, rad for
/// phases).
pub const STRICT_MARGIN: f64 = 1e-6;

/// Tolerance on the inertia roll-off slope in decades per decade.
pub const SLOPE_TOLERANCE: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateCase {
    LowGain,
    Passive,
}

/// One frequency band of a template. The band is `(f_lo, f_hi]`, except
/// that the first band also contains `f_lo`; `f_hi = None` is unbounded.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemplateSegment {
    pub region: String,
    pub f_lo: f64,
    pub f_hi: Option<f64>,
    /// Ceiling `gain_coeff * w_p` (pu).
    pub gain_coeff: Option<f64>,
    pub gain_strict: bool,
    pub phase_min: Option<f64>,
    pub phase_min_strict: bool,
    pub phase_max: Option<f64>,
}

impl TemplateSegment {
    fn new(region: &str, f_lo: f64, f_hi: f64) -> Self {
        TemplateSegment {
            region: region.to_string(),
            f_lo,
            f_hi: f_hi.is_finite().then_some(f_hi),
            gain_coeff: None,
            gain_strict: false,
            phase_min: None,
            phase_min_strict: false,
            phase_max: None,
        }
    }

    fn gain(mut self, coeff: f64, strict: bool) -> Self {
        self.gain_coeff = Some(coeff);
        self.gain_strict = strict;
        self
    }

    fn phase(mut self, lo: f64, lo_strict: bool, hi: f64) -> Self {
        self.phase_min = Some(lo);
        self.phase_min_strict = lo_strict;
        self.phase_max = Some(hi);
        self
    }

    pub fn gain_max(&self, f_hz: f64) -> Option<f64> {
        self.gain_coeff.map(|k| k * pu_omega(f_hz))
    }

    fn covers(&self, f_hz: f64, first: bool) -> bool {
        let above = f_hz > self.f_lo || (first && f_hz >= self.f_lo);
        above && self.f_hi.map_or(true, |hi| f_hz <= hi)
    }

    fn is_empty(&self) -> bool {
        self.f_hi.is_some_and(|hi| hi <= self.f_lo)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemplateParams {
    pub alpha: f64,
    /// `delta_eps` (low-gain) or `delta_l` (passive).
    pub delta: f64,
    pub nu_l: Option<f64>,
    pub eps_l: f64,
    pub gamma: f64,
    pub psi: f64,
    pub line: LineBounds,
    pub f_alpha: Option<f64>,
    pub f_dblprime: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundTemplate {
    pub case: TemplateCase,
    pub segments: Vec<TemplateSegment>,
    pub params: TemplateParams,
    pub margin: f64,
    pub notes: Vec<String>,
}

/// Shifts `phi` by multiples of `2 pi` towards the center of `[lo, hi]`.
fn wrap_near(phi: f64, lo: f64, hi: f64) -> f64 {
    let c = 0.5 * (lo + hi);
    phi - 2.0 * PI * ((phi - c) / (2.0 * PI)).round()
}

fn log_interp(f0: f64, f1: f64, y0: f64, y1: f64, target: f64) -> f64 {
    if y1 == y0 {
        return f1;
    }
    let t = (target - y0) / (y1 - y0);
    10f64.powf(f0.log10() + t * (f1.log10() - f0.log10()))
}

/// Frequencies bounding the low-gain regions for a given dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryFreqs {
    /// `None` when the combined phase never reaches `alpha` on the grid.
    pub f_alpha: Option<f64>,
    pub f_dblprime: Option<f64>,
    pub warnings: Vec<String>,
}

/// Lowest frequencies where `|angle mu + angle m_p|` reaches `alpha` and
/// `pi/2`, by bracketing on the sampled combined phase and interpolating
/// linearly in log frequency.
pub fn boundary_freqs_low_gain(dataset: &DroopDataset, bounds: &LineBounds, alpha: f64) -> Result<BoundaryFreqs> {
    if dataset.samples.len() < 2 {
        return Err(invalid("boundary search needs at least two samples"));
    }
    let freqs = dataset.frequencies();
    let m_phase: Vec<f64> = unwrap_phase_deg(
        &dataset.samples.iter().map(|s| s.m_p.arg().to_degrees()).collect::<Vec<_>>(),
    )
    .into_iter()
    .map(f64::to_radians)
    .collect();
    let combined: Vec<f64> = freqs
        .iter()
        .zip(&m_phase)
        .map(|(&f, &p)| (line_mu(bounds.rho, bounds.omega0, f).arg() + p).abs())
        .collect();
    let mut warnings = Vec::new();
    let mut crossing = |level: f64, name: &str| -> Option<f64> {
        let i = combined.iter().position(|&c| c >= level)?;
        let f = if i == 0 {
            freqs[0]
        } else {
            log_interp(freqs[i - 1], freqs[i], combined[i - 1], combined[i], level)
        };
        if combined[i..].iter().any(|&c| c < level) {
            warnings.push(format!(
                "combined phase crosses the {name} level more than once; using the lowest crossing"
            ));
        }
        Some(f)
    };
    let f_alpha = crossing(alpha, "alpha");
    let f_dblprime = crossing(FRAC_PI_2, "90 deg");
    Ok(BoundaryFreqs {
        f_alpha,
        f_dblprime,
        warnings,
    })
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < FRAC_PI_2 {
        Ok(())
    } else {
        Err(invalid(format!("alpha must lie in (0, 90) deg (got {:.3} deg)", alpha.to_degrees())))
    }
}

/// Low-gain template. Infinite boundary frequencies are allowed. The R1
/// and R2 phase bounds rely on `angle mu >= -delta_eps`, which holds only
/// up to `f_eps`, so both boundaries are capped there.
pub fn low_gain_template(bounds: &LineBounds, ctx: &BusContext, alpha: f64, f_alpha: f64, f_dblprime: f64) -> Result<BoundTemplate> {
    check_alpha(alpha)?;
    ctx.validate()?;
    if !(f_alpha >= 0.0 && f_alpha <= f_dblprime) {
        return Err(invalid(format!("need 0 <= f_alpha <= f'' (got {f_alpha}, {f_dblprime})")));
    }
    let mut notes = Vec::new();
    let f_eps = bounds.f_eps;
    let fpp = if f_dblprime > f_eps {
        notes.push(format!("f'' = {f_dblprime} Hz capped at f_eps = {f_eps} Hz"));
        f_eps
    } else {
        f_dblprime
    };
    let fa = f_alpha.min(fpp);
    let d = bounds.delta_eps;
    let k0 = ctx.psi / (ctx.gamma * (bounds.mu0 + bounds.eps_l));
    let k_hat = ctx.psi / (ctx.gamma * (bounds.mu_hat + bounds.eps_l));
    let segments: Vec<TemplateSegment> = vec![
        TemplateSegment::new("R1", 0.0, fa).phase(-alpha + d, false, alpha),
        TemplateSegment::new("R2", fa, fpp).gain(k0, true).phase(-FRAC_PI_2 + d, false, FRAC_PI_2),
        TemplateSegment::new("R3a", fpp, f_eps).gain(alpha.cos() * k0, false),
        TemplateSegment::new("R3b", f_eps, f64::INFINITY).gain(alpha.cos() * k_hat, false),
    ]
    .into_iter()
    .filter(|s| !s.is_empty())
    .collect();
    Ok(BoundTemplate {
        case: TemplateCase::LowGain,
        segments,
        params: TemplateParams {
            alpha,
            delta: d,
            nu_l: None,
            eps_l: bounds.eps_l,
            gamma: ctx.gamma,
            psi: ctx.psi,
            line: *bounds,
            f_alpha: f_alpha.is_finite().then_some(f_alpha),
            f_dblprime: f_dblprime.is_finite().then_some(f_dblprime),
        },
        margin: STRICT_MARGIN,
        notes,
    })
}

/// Low-gain template with boundaries taken from the dataset's own phase.
pub fn low_gain_template_for(dataset: &DroopDataset, bounds: &LineBounds, ctx: &BusContext, alpha: f64) -> Result<BoundTemplate> {
    let b = boundary_freqs_low_gain(dataset, bounds, alpha)?;
    let fa = b.f_alpha.unwrap_or(f64::INFINITY);
    let fpp = b.f_dblprime.unwrap_or(f64::INFINITY);
    let mut t = low_gain_template(bounds, ctx, alpha, fa.min(fpp), fpp)?;
    t.notes.extend(b.warnings);
    Ok(t)
}

/// Passive template with `alpha = pi/2 - delta_alpha`.
pub fn passive_template(bounds: &LineBounds, ctx: &BusContext, alpha: f64) -> Result<BoundTemplate> {
    check_alpha(alpha)?;
    ctx.validate()?;
    let dl = bounds.delta_l;
    let nu = bounds.nu_l;
    let k_hat = ctx.psi / (ctx.gamma * (bounds.mu_hat + bounds.eps_l));
    let segments: Vec<TemplateSegment> = vec![
        TemplateSegment::new("R1", 0.0, bounds.f_delta).phase(-alpha + dl, false, alpha),
        TemplateSegment::new("R2a", bounds.f_delta, bounds.f_nu)
            .gain(k_hat, true)
            .phase(FRAC_PI_2 - nu, true, FRAC_PI_2 + dl),
        TemplateSegment::new("R2b", bounds.f_nu, f64::INFINITY)
            .gain(k_hat, true)
            .phase(FRAC_PI_2, true, 1.5 * PI - nu),
    ]
    .into_iter()
    .filter(|s| !s.is_empty())
    .collect();
    Ok(BoundTemplate {
        case: TemplateCase::Passive,
        segments,
        params: TemplateParams {
            alpha,
            delta: dl,
            nu_l: Some(nu),
            eps_l: bounds.eps_l,
            gamma: ctx.gamma,
            psi: ctx.psi,
            line: *bounds,
            f_alpha: None,
            f_dblprime: None,
        },
        margin: STRICT_MARGIN,
        notes: Vec::new(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentReport {
    pub region: String,
    pub samples: usize,
    /// Smallest distance below the gain ceiling (positive inside).
    pub worst_gain_margin_db: Option<f64>,
    /// Smallest distance inside the phase window (positive inside).
    pub worst_phase_margin_deg: Option<f64>,
    /// Fitted log-log slope, for roll-off requirements.
    pub fitted_slope: Option<f64>,
    pub violations: Vec<f64>,
}

impl SegmentReport {
    fn new(region: &str) -> Self {
        SegmentReport {
            region: region.to_string(),
            samples: 0,
            worst_gain_margin_db: None,
            worst_phase_margin_deg: None,
            fitted_slope: None,
            violations: Vec::new(),
        }
    }

    fn gain_margin(&mut self, db: f64) {
        self.worst_gain_margin_db = Some(self.worst_gain_margin_db.map_or(db, |m| m.min(db)));
    }

    fn phase_margin(&mut self, deg: f64) {
        self.worst_phase_margin_deg = Some(self.worst_phase_margin_deg.map_or(deg, |m| m.min(deg)));
    }

    fn violate(&mut self, f_hz: f64) {
        if self.violations.last() != Some(&f_hz) {
            self.violations.push(f_hz);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplianceReport {
    pub pass: bool,
    pub per_segment: Vec<SegmentReport>,
    pub warnings: Vec<String>,
}

impl ComplianceReport {
    fn finish(per_segment: Vec<SegmentReport>, warnings: Vec<String>) -> Self {
        ComplianceReport {
            pass: per_segment.iter().all(|s| s.violations.is_empty()),
            per_segment,
            warnings,
        }
    }

    pub fn segment(&self, region: &str) -> Option<&SegmentReport> {
        self.per_segment.iter().find(|s| s.region == region)
    }
}

fn db(x: f64) -> f64 {
    20.0 * x.log10()
}

/// Tests one sample against upper/lower gain and phase limits, updating the
/// report.
#[allow(clippy::too_many_arguments)]
fn test_sample(
    rep: &mut SegmentReport,
    f_hz: f64,
    gain: f64,
    phase: f64,
    gain_max: Option<(f64, bool)>,
    gain_min: Option<f64>,
    phase_win: Option<(f64, bool, f64)>,
    margin: f64,
) {
    rep.samples += 1;
    if let Some((ceil, strict)) = gain_max {
        rep.gain_margin(db(ceil) - db(gain));
        let limit = if strict { ceil - margin } else { ceil };
        if !(gain <= limit) {
            rep.violate(f_hz);
        }
    }
    if let Some(floor) = gain_min {
        rep.gain_margin(db(gain) - db(floor));
        if !(gain >= floor) {
            rep.violate(f_hz);
        }
    }
    if let Some((lo, lo_strict, hi)) = phase_win {
        let phi = wrap_near(phase, lo, hi);
        rep.phase_margin((phi - lo).min(hi - phi).to_degrees());
        let lo_limit = if lo_strict { lo + margin } else { lo };
        if !(phi >= lo_limit && phi <= hi) {
            rep.violate(f_hz);
        }
    }
}

pub fn check_against_template(dataset: &DroopDataset, template: &BoundTemplate) -> Result<ComplianceReport> {
    if dataset.samples.is_empty() {
        return Err(invalid("dataset has no samples"));
    }
    let mut reports: Vec<SegmentReport> = template.segments.iter().map(|s| SegmentReport::new(&s.region)).collect();
    let mut uncovered = Vec::new();
    for s in &dataset.samples {
        let hit = template
            .segments
            .iter()
            .enumerate()
            .find(|(i, seg)| seg.covers(s.f_hz, *i == 0));
        let Some((i, seg)) = hit else {
            uncovered.push(s.f_hz);
            continue;
        };
        test_sample(
            &mut reports[i],
            s.f_hz,
            s.m_p.norm(),
            s.m_p.arg(),
            seg.gain_max(s.f_hz).map(|g| (g, seg.gain_strict)),
            None,
            seg.phase_min.zip(seg.phase_max).map(|(lo, hi)| (lo, seg.phase_min_strict, hi)),
            template.margin,
        );
    }
    let mut warnings = Vec::new();
    if !uncovered.is_empty() {
        warnings.push(format!("{} samples lie outside every template segment", uncovered.len()));
    }
    Ok(ComplianceReport::finish(reports, warnings))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerfSpec {
    pub m_p0: f64,
    pub eps_d: f64,
    pub delta_d: f64,
    pub f_d: f64,
    pub m_bar_p: f64,
    pub f_c: f64,
}

impl PerfSpec {
    pub fn validate(&self) -> Result<()> {
        let all = [self.m_p0, self.eps_d, self.delta_d, self.f_d, self.m_bar_p, self.f_c];
        if all.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(invalid("performance specification values must be positive"));
        }
        if self.eps_d >= self.m_p0 {
            return Err(invalid("eps_d must be smaller than m_p0"));
        }
        Ok(())
    }
}

/// Cut-off frequency of a VSM used by the inertia specification.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutoffMode {
    /// `pi D / H`
    #[default]
    Damping,
    /// The model pole, `D / (4 pi H)`.
    Pole,
}

pub fn vsm_cutoff_hz(vsm: &VsmParams, mode: CutoffMode) -> f64 {
    match mode {
        CutoffMode::Damping => vsm.cutoff_hz(),
        CutoffMode::Pole => vsm.pole_hz(),
    }
}

/// Steady-state droop (`f <= f_d`), transient damping (`f <= f_c`) and
/// inertia roll-off (`f > f_c`) checks.
pub fn perf_check(dataset: &DroopDataset, spec: &PerfSpec) -> Result<ComplianceReport> {
    spec.validate()?;
    if dataset.samples.is_empty() {
        return Err(invalid("dataset has no samples"));
    }
    let tail: Vec<(f64, f64)> = dataset
        .samples
        .iter()
        .filter(|s| s.f_hz > spec.f_c)
        .map(|s| (s.f_hz, s.m_p.norm()))
        .collect();
    let span = match (tail.first(), tail.last()) {
        (Some(a), Some(b)) => (b.0 / a.0).log10(),
        _ => 0.0,
    };
    if tail.len() < 3 || span < 1.0 - 1e-9 {
        return Err(invalid(format!(
            "inertia check needs at least one decade of samples above f_c = {} Hz",
            spec.f_c
        )));
    }

    let mut steady = SegmentReport::new("steady_state");
    let mut transient = SegmentReport::new("transient");
    let mut inertia = SegmentReport::new("inertia");
    for s in &dataset.samples {
        let (g, p) = (s.m_p.norm(), s.m_p.arg());
        if s.f_hz <= spec.f_d {
            test_sample(
                &mut steady,
                s.f_hz,
                g,
                p,
                Some((spec.m_p0 + spec.eps_d, false)),
                Some(spec.m_p0 - spec.eps_d),
                Some((-spec.delta_d, false, spec.delta_d)),
                0.0,
            );
        }
        if s.f_hz <= spec.f_c {
            test_sample(
                &mut transient,
                s.f_hz,
                g,
                p,
                Some((spec.m_bar_p, false)),
                None,
                Some((-FRAC_PI_2, false, FRAC_PI_2)),
                0.0,
            );
        }
    }
    let slope = loglog_slope(&tail).unwrap_or(0.0);
    inertia.samples = tail.len();
    inertia.fitted_slope = Some(slope);
    if slope > -1.0 + SLOPE_TOLERANCE {
        inertia.violations = tail.iter().map(|p| p.0).collect();
    }
    let mut warnings = Vec::new();
    if steady.samples == 0 {
        warnings.push(format!("no samples at or below f_d = {} Hz", spec.f_d));
    }
    Ok(ComplianceReport::finish(vec![steady, transient, inertia], warnings))
}

/// Frequencies where the performance windows are not inside the template's
/// allowance: the steady-state window (gain and phase) and the transient
/// gain window.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InclusionReport {
    pub steady_state: Vec<f64>,
    pub transient_gain: Vec<f64>,
}

impl InclusionReport {
    pub fn contained(&self) -> bool {
        self.steady_state.is_empty() && self.transient_gain.is_empty()
    }
}

pub fn perf_within_template(spec: &PerfSpec, template: &BoundTemplate, freqs: &[f64]) -> Result<InclusionReport> {
    spec.validate()?;
    let mut out = InclusionReport::default();
    for &f in freqs {
        let Some((i, seg)) = template.segments.iter().enumerate().find(|(i, s)| s.covers(f, *i == 0)) else {
            continue;
        };
        let _ = i;
        let ceiling = seg.gain_max(f).map(|g| if seg.gain_strict { g - template.margin } else { g });
        if f <= spec.f_d {
            let gain_ok = ceiling.map_or(true, |c| spec.m_p0 + spec.eps_d <= c);
            let phase_ok = match (seg.phase_min, seg.phase_max) {
                (Some(lo), Some(hi)) => -spec.delta_d >= lo && spec.delta_d <= hi,
                _ => true,
            };
            if !(gain_ok && phase_ok) {
                out.steady_state.push(f);
            }
        } else if f <= spec.f_c && ceiling.is_some_and(|c| spec.m_bar_p > c) {
            out.transient_gain.push(f);
        }
    }
    Ok(out)
}

/// Regularized `eps_l` for the minimum-inductance formulas.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsL {
    Absolute(f64),
    /// Fraction of `mu0` at the evaluated `rho`.
    RelativeToMu0(f64),
}

impl EpsL {
    pub fn value(&self, rho: f64) -> f64 {
        match *self {
            EpsL::Absolute(e) => e,
            EpsL::RelativeToMu0(r) => r * mu_dc(rho, 1.0),
        }
    }
}

fn all_positive(vals: &[f64]) -> Result<()> {
    if vals.iter().all(|v| v.is_finite() && *v > 0.0) {
        Ok(())
    } else {
        Err(invalid("minimum-inductance inputs must be positive"))
    }
}

/// Transient-range bound
/// `2 e_max / (psi 2 pi f_alpha) (1/(rho^2 + 1) + eps_l) m_bar_p`, with
/// `2 pi f_alpha` in rad/s as printed.
pub fn min_inductance_transient(m_bar_p: f64, rho: f64, e_max: f64, psi: f64, f_alpha: f64, eps_l: f64) -> Result<f64> {
    all_positive(&[m_bar_p, rho, e_max, psi, f_alpha, eps_l])?;
    Ok(2.0 * e_max / (psi * 2.0 * PI * f_alpha) * (mu_dc(rho, 1.0) + eps_l) * m_bar_p)
}

/// Where the inertia-range condition is evaluated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InertiaForm {
    /// Ceiling and roll-off both taken at `f''`.
    #[default]
    AtDblPrime,
    /// Ceiling at `f_c`, roll-off at `f''`.
    Printed,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InertiaInputs {
    pub m_bar_p: f64,
    /// seconds
    pub h: f64,
    pub d: f64,
    pub rho: f64,
    pub e_max: f64,
    pub psi: f64,
    pub alpha: f64,
    pub eps_l: f64,
}

/// Inertia-range bound. `f''` solves `|mu(j 2 pi f'')| = mu0 + eps_l` and
/// `f_c = pi D / H`.
pub fn min_inductance_inertia(p: &InertiaInputs, form: InertiaForm) -> Result<f64> {
    all_positive(&[p.m_bar_p, p.h, p.d, p.rho, p.e_max, p.psi, p.eps_l])?;
    if !(p.alpha >= 0.0 && p.alpha < FRAC_PI_2) {
        return Err(invalid("alpha must lie in [0, 90) deg"));
    }
    let mu0 = mu_dc(p.rho, 1.0);
    let f_pp = gain_crossing_hz(p.rho, 1.0, mu0 + p.eps_l)
        .filter(|f| *f > 0.0)
        .ok_or_else(|| invalid(format!("f'' unsolvable: |mu| never reaches mu0 + eps_l = {}", mu0 + p.eps_l)))?;
    let f_c = PI * p.d / p.h;
    let f_eval = match form {
        InertiaForm::AtDblPrime => f_pp,
        InertiaForm::Printed => f_c,
    };
    let rolloff = ((f_pp / f_c).powi(2) + 1.0).sqrt();
    Ok(2.0 * p.e_max / (p.alpha.cos() * p.psi * 2.0 * PI * f_eval) * (mu0 + p.eps_l) * p.m_bar_p / rolloff)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContourFormula {
    Transient,
    Inertia,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContourAxis {
    MBarP,
    Rho,
    H,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisRange {
    pub axis: ContourAxis,
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

impl AxisRange {
    pub fn values(&self) -> Result<Vec<f64>> {
        if self.n == 0 || !(self.min > 0.0 && self.max >= self.min) {
            return Err(invalid("axis range needs 0 < min <= max and n >= 1"));
        }
        if self.n == 1 {
            return Ok(vec![self.min]);
        }
        let step = (self.max - self.min) / (self.n - 1) as f64;
        Ok((0..self.n).map(|i| self.min + step * i as f64).collect())
    }
}

/// Fixed parameters for a contour sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContourFixed {
    pub m_bar_p: f64,
    pub rho: f64,
    pub h: f64,
    pub d: f64,
    pub e_max: f64,
    pub psi: f64,
    pub f_alpha: f64,
    pub alpha: f64,
    pub eps_l: EpsL,
    #[serde(default)]
    pub inertia_form: InertiaForm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContourGrid {
    pub formula: ContourFormula,
    pub axis1: ContourAxis,
    pub axis1_values: Vec<f64>,
    pub axis2: ContourAxis,
    pub axis2_values: Vec<f64>,
    /// `values[i][j]` at `axis1_values[i]`, `axis2_values[j]`.
    pub values: Vec<Vec<f64>>,
}

impl ContourGrid {
    /// Long-format CSV: `axis1,axis2,ell_min`.
    pub fn to_csv(&self) -> String {
        let name = |a: ContourAxis| match a {
            ContourAxis::MBarP => "m_bar_p",
            ContourAxis::Rho => "rho",
            ContourAxis::H => "h",
        };
        let mut out = format!("{},{},ell_min\n", name(self.axis1), name(self.axis2));
        for (i, a) in self.axis1_values.iter().enumerate() {
            for (j, b) in self.axis2_values.iter().enumerate() {
                out.push_str(&format!("{a:e},{b:e},{:e}\n", self.values[i][j]));
            }
        }
        out
    }
}

pub fn contour_eval(formula: ContourFormula, p: &ContourFixed) -> Result<f64> {
    let eps = p.eps_l.value(p.rho);
    match formula {
        ContourFormula::Transient => min_inductance_transient(p.m_bar_p, p.rho, p.e_max, p.psi, p.f_alpha, eps),
        ContourFormula::Inertia => min_inductance_inertia(
            &InertiaInputs {
                m_bar_p: p.m_bar_p,
                h: p.h,
                d: p.d,
                rho: p.rho,
                e_max: p.e_max,
                psi: p.psi,
                alpha: p.alpha,
                eps_l: eps,
            },
            p.inertia_form,
        ),
    }
}

pub fn contour_grid(formula: ContourFormula, axis1: &AxisRange, axis2: &AxisRange, fixed: &ContourFixed) -> Result<ContourGrid> {
    if axis1.axis == axis2.axis {
        return Err(invalid("contour axes must differ"));
    }
    let v1 = axis1.values()?;
    let v2 = axis2.values()?;
    let set = |p: &mut ContourFixed, axis: ContourAxis, v: f64| match axis {
        ContourAxis::MBarP => p.m_bar_p = v,
        ContourAxis::Rho => p.rho = v,
        ContourAxis::H => p.h = v,
    };
    let mut values = Vec::with_capacity(v1.len());
    for &a in &v1 {
        let mut row = Vec::with_capacity(v2.len());
        for &b in &v2 {
            let mut p = *fixed;
            set(&mut p, axis1.axis, a);
            set(&mut p, axis2.axis, b);
            row.push(contour_eval(formula, &p)?);
        }
        values.push(row);
    }
    Ok(ContourGrid {
        formula,
        axis1: axis1.axis,
        axis1_values: v1,
        axis2: axis2.axis,
        axis2_values: v2,
        values,
    })
}
