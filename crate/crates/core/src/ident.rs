//! Two-bus identification harness.
//!
//! The unit under test is connected through a coupling line to an ideal
//! source that modulates either its frequency or its voltage magnitude at a
//! single probe frequency. The linearized interconnection is solved in
//! closed form as a polynomial system, realized in state space and
//! integrated with the trapezoidal rule. Single-bin Fourier projections of
//! the terminal angle, voltage and powers give `Y` and `U`, and the droop
//! matrix follows as `M = -Y U^-1`.

use std::f64::consts::PI;

use nalgebra::DVector;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::freqresp::{pu_omega, pu_time, FrequencyGrid, FrequencyResponseSample, F_BASE_HZ, OMEGA_BASE};
use crate::lines::{line_kappa, LineParams};
use crate::lti::{realize_common_denominator, StateSpaceModel, Trapezoidal};
use crate::poly::Poly;
use crate::units::UnitModel;

pub type Mat2 = [[Complex64; 2]; 2];

/// Probe amplitude cap in pu.
pub const MAX_PROBE_AMPLITUDE: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeSpec {
    /// Voltage-magnitude amplitude (pu).
    pub a_v: f64,
    /// Frequency amplitude (pu).
    pub a_omega: f64,
    pub f_hz: f64,
    pub v_star: f64,
    pub f0_hz: f64,
}

impl ProbeSpec {
    pub fn frequency(a_omega: f64, f_hz: f64) -> Self {
        ProbeSpec {
            a_v: 0.0,
            a_omega,
            f_hz,
            v_star: 1.0,
            f0_hz: F_BASE_HZ,
        }
    }

    pub fn voltage(a_v: f64, f_hz: f64) -> Self {
        ProbeSpec {
            a_v,
            a_omega: 0.0,
            f_hz,
            v_star: 1.0,
            f0_hz: F_BASE_HZ,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.f_hz.is_finite() && self.f_hz > 0.0) {
            return Err(invalid("probe frequency must be positive"));
        }
        if self.a_v != 0.0 && self.a_omega != 0.0 {
            return Err(invalid("perturb either voltage or frequency, not both"));
        }
        if self.a_v.abs() > MAX_PROBE_AMPLITUDE || self.a_omega.abs() > MAX_PROBE_AMPLITUDE {
            return Err(invalid(format!(
                "probe amplitude above the small-signal cap of {MAX_PROBE_AMPLITUDE} pu"
            )));
        }
        if !(self.v_star > 0.0 && self.f0_hz > 0.0) {
            return Err(invalid("nominal voltage and frequency must be positive"));
        }
        Ok(())
    }

    fn omega0_pu(&self) -> f64 {
        self.f0_hz / F_BASE_HZ
    }
}

/// Source voltage magnitude and frequency (both pu) at time `t` seconds.
pub fn probe_signal(spec: &ProbeSpec, t: f64) -> (f64, f64) {
    let phase = 2.0 * PI * spec.f_hz * t;
    (
        spec.v_star + spec.a_v * phase.sin(),
        spec.omega0_pu() + spec.a_omega * phase.sin(),
    )
}

/// Source angle and voltage deviations at time `t` seconds. The angle is
/// the integral of the frequency deviation over per-unit time.
fn source_deviation(spec: &ProbeSpec, t: f64) -> (f64, f64) {
    let w = pu_omega(spec.f_hz);
    let phase = 2.0 * PI * spec.f_hz * t;
    (
        spec.a_omega * (1.0 - phase.cos()) / w,
        spec.a_v * phase.sin(),
    )
}

/// Settings of the simulated test bench.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TestbedConfig {
    /// Coupling line between source and unit.
    pub line: LineParams,
    pub a_omega: f64,
    pub a_v: f64,
    pub samples_per_period: usize,
    pub settle_periods: f64,
    pub settle_time_constants: f64,
    pub window_periods: usize,
    /// Largest accepted condition number of `U`.
    pub max_condition: f64,
}

impl Default for TestbedConfig {
    fn default() -> Self {
        TestbedConfig {
            line: LineParams::new(0.1, 0.5),
            a_omega: 0.001,
            a_v: 0.01,
            samples_per_period: 200,
            settle_periods: 20.0,
            settle_time_constants: 12.0,
            window_periods: 10,
            max_condition: 1e8,
        }
    }
}

/// Sampled terminal signals of one experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    /// seconds
    pub dt: f64,
    /// Index of the first sample after the transient-discard window.
    pub settle_index: usize,
    pub theta: Vec<f64>,
    pub v: Vec<f64>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Channel {
    Theta,
    V,
    P,
    Q,
}

impl TimeSeries {
    pub fn channel(&self, ch: Channel) -> &[f64] {
        match ch {
            Channel::Theta => &self.theta,
            Channel::V => &self.v,
            Channel::P => &self.p,
            Channel::Q => &self.q,
        }
    }

    /// Phasor of a channel over the settled window.
    pub fn phasor(&self, ch: Channel, f_hz: f64) -> Result<Complex64> {
        let data = &self.channel(ch)[self.settle_index..];
        extract_phasor(data, self.dt, self.settle_index as f64 * self.dt, f_hz)
    }
}

/// Single-bin Fourier projection at `f_hz`, cosine reference:
/// `x(t) ~ Re{c e^{j 2 pi f t}}` with `t = t0 + k dt`. The window is trimmed
/// to the largest whole number of periods.
pub fn extract_phasor(samples: &[f64], dt: f64, t0: f64, f_hz: f64) -> Result<Complex64> {
    if !(dt > 0.0 && f_hz > 0.0) {
        return Err(invalid("phasor extraction needs dt > 0 and f > 0"));
    }
    let per_period = 1.0 / (f_hz * dt);
    let periods = (samples.len() as f64 / per_period + 1e-9).floor();
    if periods < 1.0 {
        return Err(invalid(format!(
            "window of {} samples is shorter than one period at {f_hz} Hz",
            samples.len()
        )));
    }
    let n = ((periods * per_period).round() as usize).min(samples.len());
    let w = 2.0 * PI * f_hz;
    let sum: Complex64 = samples[..n]
        .iter()
        .enumerate()
        .map(|(k, &x)| x * Complex64::from_polar(1.0, -w * (t0 + k as f64 * dt)))
        .sum();
    Ok(sum * (2.0 / n as f64))
}

/// Frequency-deviation phasor `j omega_p theta` (per-unit).
pub fn derive_frequency(theta_phasor: Complex64, f_hz: f64) -> Complex64 {
    Complex64::new(0.0, pu_omega(f_hz)) * theta_phasor
}

/// Outputs `Y` (rows dw, dV) and inputs `U` (rows dp, dq); columns are the
/// frequency and voltage experiments.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExperimentPair {
    pub y: Mat2,
    pub u: Mat2,
}

/// 2-norm condition number of a complex 2x2 matrix.
pub fn condition_number(m: &Mat2) -> f64 {
    let fro2: f64 = m.iter().flatten().map(|z| z.norm_sqr()).sum();
    let det = (m[0][0] * m[1][1] - m[0][1] * m[1][0]).norm();
    if det == 0.0 {
        return f64::INFINITY;
    }
    // sigma_max / sigma_min from the trace and determinant of M^H M
    let disc = (fro2 * fro2 - 4.0 * det * det).max(0.0).sqrt();
    let smax2 = 0.5 * (fro2 + disc);
    let smin2 = det * det / smax2;
    (smax2 / smin2).sqrt()
}

fn inverse(m: &Mat2) -> Mat2 {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    [
        [m[1][1] / det, -m[0][1] / det],
        [-m[1][0] / det, m[0][0] / det],
    ]
}

fn matmul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = [[Complex64::new(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

/// `M = -Y U^-1`, rejecting `U` with condition number above `max_condition`.
pub fn recover_droop_matrix(pair: &ExperimentPair, max_condition: f64) -> Result<(Mat2, f64)> {
    let cond = condition_number(&pair.u);
    if !(cond.is_finite() && cond <= max_condition) {
        return Err(Error::IllConditioned { cond });
    }
    let mut m = matmul(&pair.y, &inverse(&pair.u));
    for z in m.iter_mut().flatten() {
        *z = -*z;
    }
    Ok((m, cond))
}

/// Determinant of a square polynomial matrix by cofactor expansion.
fn poly_det(m: &[Vec<Poly>]) -> Poly {
    let n = m.len();
    match n {
        0 => Poly::constant(1.0),
        1 => m[0][0].clone(),
        _ => {
            let mut acc = Poly::zero();
            for col in 0..n {
                if m[0][col].is_zero() {
                    continue;
                }
                let minor: Vec<Vec<Poly>> = m[1..]
                    .iter()
                    .map(|row| {
                        row.iter()
                            .enumerate()
                            .filter(|(j, _)| *j != col)
                            .map(|(_, p)| p.clone())
                            .collect()
                    })
                    .collect();
                let term = m[0][col].mul(&poly_det(&minor));
                acc = if col % 2 == 0 { acc.add(&term) } else { acc.sub(&term) };
            }
            acc
        }
    }
}

/// Closed loop of unit, coupling line and source as a state-space model.
/// Inputs: source angle or voltage deviation (one per model); outputs:
/// `theta, V, p, q` at the unit terminal.
#[derive(Clone, Debug)]
pub struct TwoBusLoop {
    /// Realization driven by the source angle.
    pub from_angle: StateSpaceModel,
    /// Realization driven by the source voltage magnitude.
    pub from_voltage: StateSpaceModel,
    pub poles: Vec<Complex64>,
}

impl TwoBusLoop {
    pub fn new(unit: &UnitModel, line: &LineParams) -> Result<Self> {
        line.validate()?;
        let kappa = line_kappa(line);
        let d = Poly::new(vec![
            line.omega0 * line.omega0 + line.rho * line.rho,
            2.0 * line.rho,
            1.0,
        ]);
        let c = Poly::new(vec![line.rho / line.omega0, 1.0 / line.omega0]);
        let k = Poly::constant(kappa);
        let kc = c.scale(kappa);
        let zero = Poly::zero();
        let (nmp, dmp) = (unit.m_p.numerator(), unit.m_p.denominator());
        let (nmq, dmq) = (unit.m_q.numerator(), unit.m_q.denominator());
        let (nzp, dzp) = (unit.zeta_p.numerator(), unit.zeta_p.denominator());
        let (nzq, dzq) = (unit.zeta_q.numerator(), unit.zeta_q.denominator());

        // unknowns (theta, V, p, q)
        let system = vec![
            vec![k.scale(-1.0), kc.scale(-1.0 / line.v_k), d.clone(), zero.clone()],
            vec![kc.scale(-1.0), k.scale(-1.0 / line.v_k), zero.clone(), d.clone()],
            vec![dmp.mul(dzq).mul(&Poly::s()), zero.clone(), nmp.mul(dzq), nzq.mul(dmp)],
            vec![zero.clone(), dzp.mul(dmq), nzp.mul(dmq), nmq.mul(dzp)],
        ];
        let drive_angle = [k.scale(-1.0), kc.scale(-1.0), zero.clone(), zero.clone()];
        let drive_voltage = [
            kc.scale(-1.0 / line.v_k),
            k.scale(-1.0 / line.v_k),
            zero.clone(),
            zero,
        ];
        let den = poly_det(&system);
        if den.is_zero() {
            return Err(invalid("two-bus interconnection is singular"));
        }
        let numerators = |drive: &[Poly; 4]| -> Vec<Poly> {
            (0..4)
                .map(|col| {
                    let replaced: Vec<Vec<Poly>> = system
                        .iter()
                        .enumerate()
                        .map(|(r, row)| {
                            let mut row = row.clone();
                            row[col] = drive[r].clone();
                            row
                        })
                        .collect();
                    poly_det(&replaced)
                })
                .collect()
        };
        let from_angle = realize_common_denominator(&numerators(&drive_angle), &den)?;
        let from_voltage = realize_common_denominator(&numerators(&drive_voltage), &den)?;
        let poles = den.roots()?;
        Ok(TwoBusLoop {
            from_angle,
            from_voltage,
            poles,
        })
    }

    pub fn max_real(&self) -> f64 {
        self.poles.iter().map(|p| p.re).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Time grid chosen for one experiment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExperimentPlan {
    /// seconds
    pub dt: f64,
    pub settle_samples: usize,
    pub total_samples: usize,
}

fn plan(loop_: &TwoBusLoop, f_hz: f64, cfg: &TestbedConfig) -> ExperimentPlan {
    let slowest = loop_
        .poles
        .iter()
        .map(|p| -p.re)
        .fold(f64::INFINITY, f64::min);
    let fastest = loop_.poles.iter().map(|p| p.norm()).fold(0.0, f64::max);
    let tau_dom = if slowest.is_finite() && slowest > 0.0 {
        1.0 / (slowest * OMEGA_BASE)
    } else {
        0.0
    };
    let period = 1.0 / f_hz;
    let mut per_period = cfg.samples_per_period.max(50);
    if fastest > 0.0 {
        // Tustin maps very stiff poles close to -1, where they ring for a
        // long time; a moderate bound keeps them decaying quickly.
        let dt_fast = 20.0 / (fastest * OMEGA_BASE);
        per_period = per_period.max((period / dt_fast).ceil() as usize);
    }
    let dt = period / per_period as f64;
    let settle_time = (cfg.settle_periods * period).max(cfg.settle_time_constants * tau_dom);
    let settle_periods = (settle_time / period).ceil() as usize;
    ExperimentPlan {
        dt,
        settle_samples: settle_periods * per_period,
        total_samples: (settle_periods + cfg.window_periods.max(1)) * per_period,
    }
}

/// Integrates the two-bus testbed for one probe experiment.
pub fn simulate_two_bus(
    unit: &UnitModel,
    spec: &ProbeSpec,
    duration: f64,
    dt: f64,
    cfg: &TestbedConfig,
) -> Result<TimeSeries> {
    spec.validate()?;
    let tb = TwoBusLoop::new(unit, &cfg.line)?;
    let max_real = tb.max_real();
    if max_real >= 0.0 {
        return Err(Error::TestbedUnstable {
            f_hz: spec.f_hz,
            max_real,
        });
    }
    let p = plan(&tb, spec.f_hz, cfg);
    if !(dt > 0.0 && duration > dt) {
        return Err(invalid("simulation needs 0 < dt < duration"));
    }
    let samples = (duration / dt).round() as usize + 1;
    run(&tb, spec, dt, samples, p.settle_samples.min(samples.saturating_sub(1)))
}

fn run(tb: &TwoBusLoop, spec: &ProbeSpec, dt: f64, samples: usize, settle: usize) -> Result<TimeSeries> {
    let angle_driven = spec.a_omega != 0.0 || spec.a_v == 0.0;
    let model = if angle_driven { &tb.from_angle } else { &tb.from_voltage };
    let integ = Trapezoidal::new(model, pu_time(dt))?;
    let input = |k: usize| {
        let (th, v) = source_deviation(spec, k as f64 * dt);
        DVector::from_element(1, if angle_driven { th } else { v })
    };
    let mut ts = TimeSeries {
        dt,
        settle_index: settle,
        theta: Vec::with_capacity(samples),
        v: Vec::with_capacity(samples),
        p: Vec::with_capacity(samples),
        q: Vec::with_capacity(samples),
    };
    // start from the equilibrium of the unperturbed source
    let mut x = DVector::zeros(model.states());
    let mut u = input(0);
    for k in 0..samples {
        if k > 0 {
            let u_next = input(k);
            x = integ.step(&x, &u, &u_next);
            u = u_next;
        }
        let y = integ.output(&x, &u);
        ts.theta.push(y[0]);
        ts.v.push(y[1]);
        ts.p.push(y[2]);
        ts.q.push(y[3]);
    }
    Ok(ts)
}

/// Runs the frequency and voltage experiments at one probe frequency.
pub fn identify_point(unit: &UnitModel, f_hz: f64, cfg: &TestbedConfig) -> Result<(ExperimentPair, Mat2, f64)> {
    let tb = TwoBusLoop::new(unit, &cfg.line)?;
    let max_real = tb.max_real();
    if max_real >= 0.0 {
        return Err(Error::TestbedUnstable { f_hz, max_real });
    }
    let p = plan(&tb, f_hz, cfg);
    let mut y = [[Complex64::new(0.0, 0.0); 2]; 2];
    let mut u = y;
    let specs = [ProbeSpec::frequency(cfg.a_omega, f_hz), ProbeSpec::voltage(cfg.a_v, f_hz)];
    for (col, spec) in specs.iter().enumerate() {
        spec.validate()?;
        let ts = run(&tb, spec, p.dt, p.total_samples, p.settle_samples)?;
        y[0][col] = derive_frequency(ts.phasor(Channel::Theta, f_hz)?, f_hz);
        y[1][col] = ts.phasor(Channel::V, f_hz)?;
        u[0][col] = ts.phasor(Channel::P, f_hz)?;
        u[1][col] = ts.phasor(Channel::Q, f_hz)?;
    }
    let pair = ExperimentPair { y, u };
    let (m, cond) = recover_droop_matrix(&pair, cfg.max_condition)?;
    Ok((pair, m, cond))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerBase {
    pub s_base_va: f64,
    pub f_base_hz: f64,
}

impl Default for PowerBase {
    fn default() -> Self {
        PowerBase {
            s_base_va: 1e6,
            f_base_hz: F_BASE_HZ,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DroopSample {
    pub f_hz: f64,
    #[serde(with = "crate::cjson")]
    pub m_p: Complex64,
    #[serde(with = "crate::cjson")]
    pub m_q: Complex64,
    #[serde(with = "crate::cjson")]
    pub zeta_p: Complex64,
    #[serde(with = "crate::cjson")]
    pub zeta_q: Complex64,
    /// Condition number of `U`; 1 for analytically sampled data.
    pub cond: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailedPoint {
    pub f_hz: f64,
    pub reason: String,
}

/// Sampled dynamic droop matrix of one unit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DroopDataset {
    pub unit_id: String,
    pub base: PowerBase,
    pub samples: Vec<DroopSample>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<FailedPoint>,
}

impl DroopDataset {
    pub fn validate(&self) -> Result<()> {
        if self.samples.windows(2).any(|w| w[1].f_hz <= w[0].f_hz) {
            return Err(invalid("dataset frequencies must be strictly increasing"));
        }
        for s in &self.samples {
            let finite = [s.m_p, s.m_q, s.zeta_p, s.zeta_q]
                .iter()
                .all(|z| z.re.is_finite() && z.im.is_finite());
            if !finite || !(s.f_hz > 0.0 && s.f_hz.is_finite()) {
                return Err(invalid(format!("non-finite dataset entry at {} Hz", s.f_hz)));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ds: DroopDataset = serde_json::from_str(text)?;
        ds.validate()?;
        Ok(ds)
    }

    /// Exact samples of an analytic model.
    pub fn from_model(unit_id: &str, unit: &UnitModel, grid: &FrequencyGrid) -> Result<Self> {
        let samples = grid
            .points()
            .iter()
            .map(|&f| {
                Ok(DroopSample {
                    f_hz: f,
                    m_p: unit.m_p.eval_hz(f)?,
                    m_q: unit.m_q.eval_hz(f)?,
                    zeta_p: unit.zeta_p.eval_hz(f)?,
                    zeta_q: unit.zeta_q.eval_hz(f)?,
                    cond: 1.0,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(DroopDataset {
            unit_id: unit_id.to_string(),
            base: PowerBase::default(),
            samples,
            failures: Vec::new(),
        })
    }

    pub fn m_p_samples(&self) -> Vec<FrequencyResponseSample> {
        self.samples
            .iter()
            .map(|s| FrequencyResponseSample {
                f_hz: s.f_hz,
                value: s.m_p,
            })
            .collect()
    }

    pub fn frequencies(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.f_hz).collect()
    }
}

/// Identifies the droop matrix on every grid point. Points that fail are
/// recorded in `failures` and left out of `samples`.
pub fn run_sweep(unit_id: &str, unit: &UnitModel, grid: &FrequencyGrid, cfg: &TestbedConfig) -> Result<DroopDataset> {
    if cfg.a_omega == 0.0 || cfg.a_v == 0.0 {
        return Err(invalid("both probe amplitudes must be nonzero for a sweep"));
    }
    let results: Vec<(f64, Result<(ExperimentPair, Mat2, f64)>)> = grid
        .points()
        .par_iter()
        .map(|&f| (f, identify_point(unit, f, cfg)))
        .collect();
    let mut samples = Vec::new();
    let mut failures = Vec::new();
    for (f, r) in results {
        match r {
            Ok((_, m, cond)) => samples.push(DroopSample {
                f_hz: f,
                m_p: m[0][0],
                zeta_q: m[0][1],
                zeta_p: m[1][0],
                m_q: m[1][1],
                cond,
            }),
            Err(e) => failures.push(FailedPoint {
                f_hz: f,
                reason: e.to_string(),
            }),
        }
    }
    Ok(DroopDataset {
        unit_id: unit_id.to_string(),
        base: PowerBase::default(),
        samples,
        failures,
    })
}
