//! Brute-force closed-loop model of a multi-unit network.
//!
//! Each bus obeys `dw_n = -(m_n(s)/psi_n)(dp_n + delta_n)` with
//! `s dtheta = dw` and `dp = mu(s) L dtheta`. All lines share one `rho`
//! and `omega0`, so `mu` acts on the bus vector as a scalar filter.
//!
//! Units with improper `m_p` (relative degree -2, the grid-following case)
//! are realized in the causal direction `dp_n + delta_n = -psi_n g(s) dw_n`
//! with `g = 1/m_p`. Their line power is then fixed by the unit state, and
//! the bus frequency is solved from the second derivative of that relation.
//! The state vector always starts with the bus angles.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cert::{certify_model, BusContext, CertOptions, NetworkEnvelope};
use crate::error::{invalid, Error, Result};
use crate::freqresp::{pu_time, FrequencyGrid, RationalTf};
use crate::lines::{line_kappa, LineParams};
use crate::lti::{realize_common_denominator, StateSpaceModel, Trapezoidal};
use crate::units::UnitModel;

/// Zero-mode magnitude tolerance relative to `max(1, |A|_F)`.
pub const REFERENCE_TOL: f64 = 1e-8;
/// Minimum cosine similarity between a zero mode and the uniform-angle
/// direction.
pub const REFERENCE_ALIGNMENT: f64 = 0.999;
/// Largest real part accepted as stable.
pub const STABILITY_MARGIN: f64 = -1e-9;
/// State norm treated as divergence in simulations.
pub const DIVERGENCE_NORM: f64 = 1e6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub n: usize,
    pub k: usize,
    #[serde(flatten)]
    pub line: LineParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGraph", into = "RawGraph")]
pub struct NetworkGraph {
    buses: usize,
    edges: Vec<Edge>,
}

#[derive(Serialize, Deserialize)]
struct RawGraph {
    buses: usize,
    edges: Vec<Edge>,
}

impl TryFrom<RawGraph> for NetworkGraph {
    type Error = Error;
    fn try_from(r: RawGraph) -> Result<Self> {
        NetworkGraph::new(r.buses, r.edges)
    }
}

impl From<NetworkGraph> for RawGraph {
    fn from(g: NetworkGraph) -> Self {
        RawGraph {
            buses: g.buses,
            edges: g.edges,
        }
    }
}

impl NetworkGraph {
    pub fn new(buses: usize, edges: Vec<Edge>) -> Result<Self> {
        if buses == 0 {
            return Err(invalid("a network needs at least one bus"));
        }
        let mut seen = BTreeSet::new();
        for e in &edges {
            if e.n >= buses || e.k >= buses {
                return Err(invalid(format!("edge ({}, {}) refers to a missing bus", e.n, e.k)));
            }
            if e.n == e.k {
                return Err(invalid(format!("self-loop at bus {}", e.n)));
            }
            if !seen.insert((e.n.min(e.k), e.n.max(e.k))) {
                return Err(invalid(format!("duplicate edge ({}, {})", e.n, e.k)));
            }
            e.line.validate()?;
        }
        let g = NetworkGraph { buses, edges };
        if !g.is_connected() {
            return Err(invalid("network graph is not connected"));
        }
        Ok(g)
    }

    pub fn buses(&self) -> usize {
        self.buses
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.buses];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(b) = stack.pop() {
            for e in &self.edges {
                let other = if e.n == b {
                    e.k
                } else if e.k == b {
                    e.n
                } else {
                    continue;
                };
                if !seen[other] {
                    seen[other] = true;
                    stack.push(other);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Oriented incidence matrix, `+1` at `n` and `-1` at `k` per column.
    pub fn incidence(&self) -> DMatrix<f64> {
        let mut b = DMatrix::zeros(self.buses, self.edges.len());
        for (j, e) in self.edges.iter().enumerate() {
            b[(e.n, j)] = 1.0;
            b[(e.k, j)] = -1.0;
        }
        b
    }

    pub fn incident_lines(&self, bus: usize) -> Vec<LineParams> {
        self.edges
            .iter()
            .filter(|e| e.n == bus || e.k == bus)
            .map(|e| e.line)
            .collect()
    }

    pub fn degree(&self, bus: usize) -> usize {
        self.edges.iter().filter(|e| e.n == bus || e.k == bus).count()
    }

    /// Shared `(rho, omega0)` of all lines, `None` without lines.
    pub fn uniform_line(&self) -> Result<Option<(f64, f64)>> {
        let Some(first) = self.edges.first() else {
            return Ok(None);
        };
        let (rho, w0) = (first.line.rho, first.line.omega0);
        if self.edges.iter().any(|e| e.line.rho != rho || e.line.omega0 != w0) {
            return Err(invalid("all lines must share rho and omega0"));
        }
        Ok(Some((rho, w0)))
    }
}

/// `L = B K B^T` with `K = diag(kappa)`.
pub fn laplacian(graph: &NetworkGraph) -> DMatrix<f64> {
    let b = graph.incidence();
    let k = DMatrix::from_diagonal(&DVector::from_iterator(
        graph.edges.len(),
        graph.edges.iter().map(|e| line_kappa(&e.line)),
    ));
    &b * k * b.transpose()
}

/// Largest eigenvalue of the (symmetric) Laplacian.
pub fn laplacian_lambda_max(graph: &NetworkGraph) -> f64 {
    laplacian(graph).symmetric_eigenvalues().max()
}

/// Closed-loop realization with the bus deltas as inputs and the bus
/// frequency deviations as outputs. States `0..buses` are the bus angles.
#[derive(Clone, Debug)]
pub struct ClosedLoop {
    pub model: StateSpaceModel,
    pub buses: usize,
}

impl ClosedLoop {
    /// Unit vector along a uniform shift of all bus angles.
    pub fn reference_direction(&self) -> DVector<f64> {
        let mut v = DVector::zeros(self.model.states());
        let w = 1.0 / (self.buses as f64).sqrt();
        v.rows_mut(0, self.buses).fill(w);
        v
    }
}

enum UnitForm {
    /// `m_p / psi` realized directly.
    Droop(StateSpaceModel),
    /// `g = 1/m_p` with relative degree 2.
    Admittance(StateSpaceModel),
}

fn unit_form(m_p: &RationalTf) -> Result<UnitForm> {
    let rd = m_p.relative_degree();
    if rd == i64::MAX {
        return Err(invalid("m_p is identically zero"));
    }
    if rd >= 0 {
        let ss = realize_common_denominator(&[m_p.numerator().clone()], m_p.denominator())?;
        return Ok(UnitForm::Droop(ss));
    }
    if rd == -2 {
        let g = m_p.reciprocal()?;
        let ss = realize_common_denominator(&[g.numerator().clone()], g.denominator())?;
        return Ok(UnitForm::Admittance(ss));
    }
    Err(invalid(format!("m_p with relative degree {rd} is not supported")))
}

/// Assembles the closed loop of `graph` with `units[n]` at bus `n`.
pub fn assemble_closed_loop(graph: &NetworkGraph, units: &[UnitModel]) -> Result<ClosedLoop> {
    let nb = graph.buses();
    if units.len() != nb {
        return Err(invalid(format!("{} units for {nb} buses", units.len())));
    }
    let line = graph.uniform_line()?;
    let lap = laplacian(graph);
    let forms = units.iter().map(|u| unit_form(&u.m_p)).collect::<Result<Vec<_>>>()?;
    if line.is_none() && forms.iter().any(|f| matches!(f, UnitForm::Admittance(_))) {
        return Err(invalid("a grid-following unit needs at least one line"));
    }
    let (rho, c0) = line.map_or((0.0, 0.0), |(r, w0)| (r, w0 * w0 + r * r));

    // State offsets: per bus optional (p, p') then the unit states.
    let mut power = vec![None; nb];
    let mut unit_at = vec![0; nb];
    let mut nx = nb;
    for (n, f) in forms.iter().enumerate() {
        if line.is_some() && matches!(f, UnitForm::Droop(_)) {
            power[n] = Some(nx);
            nx += 2;
        }
        unit_at[n] = nx;
        nx += match f {
            UnitForm::Droop(s) | UnitForm::Admittance(s) => s.states(),
        };
    }

    // Bus frequency as a linear function of the state and the inputs.
    let mut c = DMatrix::zeros(nb, nx);
    let mut d = DMatrix::zeros(nb, nb);
    for (n, f) in forms.iter().enumerate() {
        let psi = units[n].psi;
        let u0 = unit_at[n];
        match f {
            UnitForm::Droop(s) => {
                for j in 0..s.states() {
                    c[(n, u0 + j)] = -s.c[(0, j)] / psi;
                }
                let feed = -s.d[(0, 0)] / psi;
                if let Some(p) = power[n] {
                    c[(n, p)] += feed;
                }
                d[(n, n)] = feed;
            }
            UnitForm::Admittance(s) => {
                let cab = (&s.c * &s.a * &s.b)[(0, 0)];
                if s.d[(0, 0)] != 0.0 || (&s.c * &s.b)[(0, 0)] != 0.0 || cab == 0.0 {
                    return Err(Error::Numerical("admittance realization lost its relative degree".into()));
                }
                let k = &s.c * &s.a * &s.a + &s.c * &s.a * (2.0 * rho) + &s.c * c0;
                let scale = -1.0 / (psi * cab);
                for j in 0..nb {
                    c[(n, j)] = scale * lap[(n, j)];
                }
                for j in 0..s.states() {
                    c[(n, u0 + j)] = scale * psi * k[(0, j)];
                }
                d[(n, n)] = scale * c0;
            }
        }
    }

    let mut a = DMatrix::zeros(nx, nx);
    let mut b = DMatrix::zeros(nx, nb);
    a.rows_mut(0, nb).copy_from(&c);
    b.rows_mut(0, nb).copy_from(&d);
    for (n, f) in forms.iter().enumerate() {
        let u0 = unit_at[n];
        match f {
            UnitForm::Droop(s) => {
                let ns = s.states();
                a.view_mut((u0, u0), (ns, ns)).copy_from(&s.a);
                for i in 0..ns {
                    b[(u0 + i, n)] += s.b[(i, 0)];
                    if let Some(p) = power[n] {
                        a[(u0 + i, p)] += s.b[(i, 0)];
                    }
                }
                if let Some(p) = power[n] {
                    a[(p, p + 1)] = 1.0;
                    for j in 0..nb {
                        a[(p + 1, j)] = lap[(n, j)];
                    }
                    a[(p + 1, p)] = -c0;
                    a[(p + 1, p + 1)] = -2.0 * rho;
                }
            }
            UnitForm::Admittance(s) => {
                let ns = s.states();
                a.view_mut((u0, u0), (ns, ns)).copy_from(&s.a);
                for i in 0..ns {
                    let bi = s.b[(i, 0)];
                    if bi != 0.0 {
                        for j in 0..nx {
                            a[(u0 + i, j)] += bi * c[(n, j)];
                        }
                        b[(u0 + i, n)] += bi * d[(n, n)];
                    }
                }
            }
        }
    }
    Ok(ClosedLoop {
        model: StateSpaceModel::new(a, b, c, d)?,
        buses: nb,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    #[serde(with = "crate::cjson::vec")]
    pub eigenvalues: Vec<Complex64>,
    /// Index into `eigenvalues` of the excluded reference mode.
    pub reference_mode: Option<usize>,
    pub max_real_excl_ref: f64,
    pub stable: bool,
}

/// Eigenvalues of `A`. When `reference` is given, the zero mode whose
/// eigenvector aligns with it is excluded from the verdict.
pub fn spectrum(model: &StateSpaceModel, reference: Option<&DVector<f64>>) -> Result<SpectrumReport> {
    let eig = model.eigenvalues()?;
    let scale = model.a.norm().max(1.0);
    let mut reference_mode = None;
    if let Some(dir) = reference {
        let nearest = eig
            .iter()
            .enumerate()
            .min_by(|x, y| x.1.norm().total_cmp(&y.1.norm()))
            .filter(|(_, l)| l.norm() < REFERENCE_TOL * scale);
        if let Some((i, _)) = nearest {
            if null_alignment(&model.a, dir)? > REFERENCE_ALIGNMENT {
                reference_mode = Some(i);
            }
        }
    }
    let max_real_excl_ref = eig
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != reference_mode)
        .map(|(_, l)| l.re)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(SpectrumReport {
        eigenvalues: eig,
        reference_mode,
        max_real_excl_ref,
        stable: max_real_excl_ref < STABILITY_MARGIN,
    })
}

/// `|cos|` between the right singular vector of `a` with the smallest
/// singular value and `dir`.
fn null_alignment(a: &DMatrix<f64>, dir: &DVector<f64>) -> Result<f64> {
    let svd = a.clone().svd(false, true);
    let vt = svd
        .v_t
        .ok_or_else(|| Error::Numerical("singular vectors unavailable".into()))?;
    let (i, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.total_cmp(y.1))
        .ok_or_else(|| Error::Numerical("empty state matrix".into()))?;
    let v = vt.row(i).transpose();
    Ok(v.dot(dir).abs() / (v.norm() * dir.norm()))
}

pub fn closed_loop_spectrum(cl: &ClosedLoop) -> Result<SpectrumReport> {
    spectrum(&cl.model, Some(&cl.reference_direction()))
}

/// Bus frequency deviations after a load step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepResponse {
    /// seconds
    pub dt: f64,
    pub t: Vec<f64>,
    /// `omega[k][n]` at `t[k]` for bus `n`.
    pub omega: Vec<Vec<f64>>,
    pub diverged: bool,
}

impl StepResponse {
    pub fn final_omega(&self) -> &[f64] {
        self.omega.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn peak_abs(&self) -> f64 {
        self.omega.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Trapezoidal response to a step of `delta_p` pu at `bus`, applied at
/// `t = 0` from rest. Times are in seconds.
pub fn simulate_step(model: &StateSpaceModel, bus: usize, delta_p: f64, duration: f64, dt: f64) -> Result<StepResponse> {
    if bus >= model.inputs() {
        return Err(invalid(format!("bus {bus} out of range")));
    }
    if !(duration > 0.0 && dt > 0.0 && dt <= duration && delta_p.is_finite()) {
        return Err(invalid("need 0 < dt <= duration and a finite step"));
    }
    let integ = Trapezoidal::new(model, pu_time(dt))?;
    let steps = (duration / dt).round() as usize;
    let mut u = DVector::zeros(model.inputs());
    u[bus] = delta_p;
    let mut x = DVector::zeros(model.states());
    let mut out = StepResponse {
        dt,
        t: Vec::with_capacity(steps + 1),
        omega: Vec::with_capacity(steps + 1),
        diverged: false,
    };
    out.t.push(0.0);
    out.omega.push(integ.output(&x, &u).iter().copied().collect());
    for k in 1..=steps {
        x = integ.step(&x, &u, &u);
        if !x.iter().all(|v| v.is_finite()) || x.norm() > DIVERGENCE_NORM {
            out.diverged = true;
            break;
        }
        out.t.push(k as f64 * dt);
        out.omega.push(integ.output(&x, &u).iter().copied().collect());
    }
    Ok(out)
}

/// Common steady-state frequency `-sum delta / sum(psi_n / m_n(0))`.
pub fn static_frequency_deviation(units: &[UnitModel], deltas: &[f64]) -> Result<f64> {
    let mut stiffness = 0.0;
    for u in units {
        let m0 = u
            .m_p
            .dc_gain()
            .filter(|g| *g > 0.0)
            .ok_or_else(|| invalid("static prediction needs a positive finite m_p(0)"))?;
        stiffness += u.psi / m0;
    }
    Ok(-deltas.iter().sum::<f64>() / stiffness)
}

/// Random connected topology with `buses` drawn from `bus_range`, at most
/// `e_max` lines per bus, `ell` in `[ell_min, 3 ell_min]` and the
/// envelope's `rho`.
pub fn random_network(seed: u64, bus_range: (usize, usize), env: &NetworkEnvelope) -> Result<NetworkGraph> {
    env.validate()?;
    let (lo, hi) = bus_range;
    if lo < 1 || lo > hi {
        return Err(invalid("bus range needs 1 <= min <= max"));
    }
    if env.e_max < 2 && hi > 2 {
        return Err(invalid("e_max = 1 only admits two-bus networks"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(lo..=hi);
    let line = |rng: &mut ChaCha8Rng| {
        let mut l = LineParams::new(env.ell_min * rng.gen_range(1.0..3.0), env.rho);
        l.omega0 = env.omega0;
        l.v_n = env.v_max;
        l.v_k = env.v_max;
        l
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut degree = vec![0usize; n];
    let mut pairs = BTreeSet::new();
    let mut edges = Vec::new();
    for i in 1..n {
        let open: Vec<usize> = order[..i].iter().copied().filter(|&b| degree[b] < env.e_max).collect();
        let &parent = open.choose(&mut rng).expect("a leaf always has spare degree");
        let child = order[i];
        degree[parent] += 1;
        degree[child] += 1;
        pairs.insert((parent.min(child), parent.max(child)));
        edges.push(Edge {
            n: parent,
            k: child,
            line: line(&mut rng),
        });
    }
    let extra = rng.gen_range(0..=n / 2);
    for _ in 0..extra {
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        let key = (a.min(b), a.max(b));
        if a == b || degree[a] >= env.e_max || degree[b] >= env.e_max || pairs.contains(&key) {
            continue;
        }
        degree[a] += 1;
        degree[b] += 1;
        pairs.insert(key);
        edges.push(Edge { n: a, k: b, line: line(&mut rng) });
    }
    NetworkGraph::new(n, edges)
}

/// A unit model offered to the soundness harness.
#[derive(Clone, Debug)]
pub struct Candidate {
    pub id: String,
    pub unit: UnitModel,
}

/// Candidates certified with one common rotation.
#[derive(Clone, Debug)]
pub struct CertifiedPool {
    pub alpha: f64,
    pub members: Vec<Candidate>,
    pub rejected: Vec<String>,
}

/// Certifies every candidate on `grid` and keeps, in order, those whose
/// feasible interval still meets the running intersection.
pub fn certified_pool(candidates: &[Candidate], env: &NetworkEnvelope, grid: &FrequencyGrid, opts: &CertOptions) -> Result<CertifiedPool> {
    let results = candidates
        .par_iter()
        .map(|c| {
            let ctx = BusContext::from_envelope(env, c.unit.psi)?;
            certify_model(&c.id, &c.unit, grid, env, &ctx, opts)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut common: Option<crate::cert::AlphaInterval> = None;
    let mut members = Vec::new();
    let mut rejected = Vec::new();
    for (c, r) in candidates.iter().zip(results) {
        let next = match (r.alpha_interval, common) {
            (None, _) => None,
            (Some(iv), None) => Some(iv),
            (Some(iv), Some(cur)) => cur.intersect(&iv),
        };
        match next {
            Some(iv) => {
                common = Some(iv);
                members.push(c.clone());
            }
            None => rejected.push(c.id.clone()),
        }
    }
    let alpha = common
        .ok_or_else(|| invalid("no candidate unit is certifiable under the envelope"))?
        .midpoint();
    Ok(CertifiedPool { alpha, members, rejected })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub seed: u64,
    pub buses: usize,
    pub lines: usize,
    pub units: Vec<String>,
    pub lambda_max: f64,
    pub max_real_excl_ref: f64,
    pub stable: bool,
}

/// One randomized network populated from `pool`.
pub fn soundness_trial(seed: u64, bus_range: (usize, usize), env: &NetworkEnvelope, pool: &CertifiedPool) -> Result<TrialOutcome> {
    if pool.members.is_empty() {
        return Err(invalid("empty unit pool"));
    }
    let graph = random_network(seed, bus_range, env)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let picks: Vec<&Candidate> = (0..graph.buses())
        .map(|_| pool.members.choose(&mut rng).expect("non-empty pool"))
        .collect();
    let units: Vec<UnitModel> = picks.iter().map(|c| c.unit.clone()).collect();
    let cl = assemble_closed_loop(&graph, &units)?;
    let rep = closed_loop_spectrum(&cl)?;
    Ok(TrialOutcome {
        seed,
        buses: graph.buses(),
        lines: graph.edges().len(),
        units: picks.iter().map(|c| c.id.clone()).collect(),
        lambda_max: laplacian_lambda_max(&graph),
        max_real_excl_ref: rep.max_real_excl_ref,
        stable: rep.stable,
    })
}

/// Runs `soundness_trial` for every seed in parallel.
pub fn soundness_sweep(seeds: &[u64], bus_range: (usize, usize), env: &NetworkEnvelope, pool: &CertifiedPool) -> Result<Vec<TrialOutcome>> {
    seeds
        .par_iter()
        .map(|&s| soundness_trial(s, bus_range, env, pool))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cert::gamma_bar;
    use crate::freqresp::log_grid;
    use crate::poly::Poly;
    use crate::units::{gfl_srf_pll_tf, gfm_droop_tf, vsm_tf, GfmDroopParams, GflPllParams, VsmParams};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn unit(m_p: RationalTf, psi: f64) -> UnitModel {
        UnitModel::new(m_p, RationalTf::constant(0.05), psi).unwrap()
    }

    fn pair(ell: f64, rho: f64) -> NetworkGraph {
        NetworkGraph::new(2, vec![Edge { n: 0, k: 1, line: LineParams::new(ell, rho) }]).unwrap()
    }

    fn sorted(mut v: Vec<Complex64>) -> Vec<Complex64> {
        v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        v
    }

    #[test]
    fn two_bus_laplacian() {
        let l = laplacian(&pair(1.0, 0.1));
        assert_eq!(l, DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
    }

    #[test]
    fn graph_validation() {
        let e = |n, k| Edge { n, k, line: LineParams::new(0.2, 0.1) };
        assert!(NetworkGraph::new(2, vec![e(0, 0)]).is_err());
        assert!(NetworkGraph::new(3, vec![e(0, 1)]).is_err());
        assert!(NetworkGraph::new(2, vec![e(0, 2)]).is_err());
        assert!(NetworkGraph::new(2, vec![e(0, 1), e(1, 0)]).is_err());
        let g = NetworkGraph::new(3, vec![e(0, 1), e(2, 1)]).unwrap();
        let b = g.incidence();
        for j in 0..2 {
            let col: Vec<f64> = b.column(j).iter().copied().collect();
            assert_eq!(col.iter().filter(|v| **v == 1.0).count(), 1);
            assert_eq!(col.iter().filter(|v| **v == -1.0).count(), 1);
        }
        let json = serde_json::to_string(&g).unwrap();
        assert_eq!(serde_json::from_str::<NetworkGraph>(&json).unwrap(), g);
        assert!(serde_json::from_str::<NetworkGraph>(r#"{"buses":2,"edges":[]}"#).is_err());
    }

    #[test]
    fn diagonal_spectrum() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, -2.0]));
        let m = StateSpaceModel::new(a, DMatrix::zeros(2, 1), DMatrix::zeros(1, 2), DMatrix::zeros(1, 1)).unwrap();
        let r = spectrum(&m, None).unwrap();
        let ev = sorted(r.eigenvalues.clone());
        assert_relative_eq!(ev[0].re, -2.0, epsilon = 1e-12);
        assert_relative_eq!(ev[1].re, -1.0, epsilon = 1e-12);
        assert!(r.stable);
        assert_eq!(r.max_real_excl_ref, -1.0);
    }

    #[test]
    fn single_bus_spectrum_is_unit_poles() {
        let g = NetworkGraph::new(1, vec![]).unwrap();
        let u = unit(gfm_droop_tf(&GfmDroopParams { m_p0: 0.05, tau: 0.05 }).unwrap(), 1.0);
        let cl = assemble_closed_loop(&g, &[u]).unwrap();
        let rep = closed_loop_spectrum(&cl).unwrap();
        assert_eq!(rep.eigenvalues.len(), 2);
        assert!(rep.reference_mode.is_some());
        assert_relative_eq!(rep.max_real_excl_ref, -1.0 / pu_time(0.05), max_relative = 1e-10);
        let gfl = unit(gfl_srf_pll_tf(&GflPllParams::default()).unwrap(), 1.0);
        assert!(assemble_closed_loop(&g, &[gfl]).is_err());
    }

    #[test]
    fn two_bus_constant_droop_matches_polynomial() {
        let (ell, rho, m0, psi) = (0.2, 0.1, 0.05, 10.0);
        let units = vec![unit(RationalTf::constant(m0), psi); 2];
        let cl = assemble_closed_loop(&pair(ell, rho), &units).unwrap();
        let rep = closed_loop_spectrum(&cl).unwrap();
        // common mode: s (s^2 + 2 rho s + 1 + rho^2); differential: psi s den_mu + 2 m0 kappa
        let c0 = 1.0 + rho * rho;
        let den_mu = Poly::new(vec![c0, 2.0 * rho, 1.0]);
        let diff = Poly::new(vec![2.0 * m0 / ell, psi * c0, 2.0 * rho * psi, psi]);
        let mut expect = vec![Complex64::new(0.0, 0.0)];
        expect.extend(den_mu.roots().unwrap());
        expect.extend(diff.roots().unwrap());
        let got = sorted(rep.eigenvalues.clone());
        let expect = sorted(expect);
        assert_eq!(got.len(), expect.len());
        for (g, e) in got.iter().zip(&expect) {
            assert!((g - e).norm() < 1e-8, "{g} vs {e}");
        }
        assert!(rep.reference_mode.is_some());
        assert!(rep.stable);
    }

    #[test]
    fn uniform_angle_shift_is_a_zero_mode() {
        let units = vec![
            unit(vsm_tf(&VsmParams { h: 2.0, d: 20.0 }).unwrap(), 1.0),
            unit(gfl_srf_pll_tf(&GflPllParams::default()).unwrap(), 0.5),
        ];
        let cl = assemble_closed_loop(&pair(0.3, 0.1), &units).unwrap();
        let r = &cl.model.a * cl.reference_direction();
        assert!(r.norm() < 1e-12);
    }

    #[test]
    fn gfl_improper_model_matches_transfer_loop() {
        // |I + diag(m/psi) mu L / s| vanishes at each closed-loop eigenvalue
        let p = GflPllParams::default();
        let units = vec![
            unit(gfl_srf_pll_tf(&p).unwrap(), 0.5),
            unit(gfm_droop_tf(&GfmDroopParams { m_p0: 0.05, tau: 0.02 }).unwrap(), 1.0),
        ];
        let g = pair(0.3, 0.1);
        let cl = assemble_closed_loop(&g, &units).unwrap();
        let lap = laplacian(&g);
        let rep = closed_loop_spectrum(&cl).unwrap();
        let mut checked = 0;
        for (i, &s) in rep.eigenvalues.iter().enumerate() {
            if Some(i) == rep.reference_mode {
                continue;
            }
            let m: Vec<Complex64> = units.iter().map(|u| u.m_p.eval_s(s).unwrap() / u.psi).collect();
            let mu = crate::lines::mu_at(0.1, 1.0, s);
            // scaled by the GFL denominator to stay finite near its zeros
            let g0 = m[0].inv();
            let row0 = [g0 + mu * lap[(0, 0)] / s, mu * lap[(0, 1)] / s];
            let row1 = [m[1] * mu * lap[(1, 0)] / s, 1.0 + m[1] * mu * lap[(1, 1)] / s];
            let det = row0[0] * row1[1] - row0[1] * row1[0];
            let size = (row0[0].norm() + row0[1].norm()) * (row1[0].norm() + row1[1].norm());
            if mu.norm() > 1e6 || size < 1e-9 {
                continue;
            }
            assert!(det.norm() < 1e-6 * size, "s = {s}: det {det}");
            checked += 1;
        }
        assert!(checked >= 4);
    }

    #[test]
    fn zero_step_gives_zero_response() {
        let units = vec![unit(RationalTf::constant(0.05), 1.0); 2];
        let cl = assemble_closed_loop(&pair(0.2, 0.1), &units).unwrap();
        let r = simulate_step(&cl.model, 0, 0.0, 1.0, 1e-3).unwrap();
        assert!(r.peak_abs() == 0.0 && !r.diverged);
    }

    #[test]
    fn single_unit_static_droop() {
        let g = NetworkGraph::new(1, vec![]).unwrap();
        let u = unit(RationalTf::constant(0.05), 1.0);
        let cl = assemble_closed_loop(&g, &[u.clone()]).unwrap();
        let r = simulate_step(&cl.model, 0, 0.1, 1.0, 1e-3).unwrap();
        assert_relative_eq!(r.final_omega()[0], -0.005, epsilon = 1e-12);
        assert_relative_eq!(static_frequency_deviation(&[u], &[0.1]).unwrap(), -0.005);
    }

    fn mixed_units() -> Vec<UnitModel> {
        vec![
            unit(gfm_droop_tf(&GfmDroopParams { m_p0: 0.05, tau: 0.05 }).unwrap(), 1.0),
            unit(gfm_droop_tf(&GfmDroopParams { m_p0: 0.04, tau: 0.02 }).unwrap(), 2.0),
            unit(gfl_srf_pll_tf(&GflPllParams::default()).unwrap(), 0.1),
        ]
    }

    #[test]
    fn step_settles_at_static_prediction() {
        let e = |n, k| Edge { n, k, line: LineParams::new(0.3, 0.1) };
        let g = NetworkGraph::new(3, vec![e(0, 1), e(1, 2)]).unwrap();
        let units = mixed_units();
        let cl = assemble_closed_loop(&g, &units).unwrap();
        assert!(closed_loop_spectrum(&cl).unwrap().stable);
        let r = simulate_step(&cl.model, 2, 0.1, 100.0, 2e-3).unwrap();
        assert!(!r.diverged);
        let expect = static_frequency_deviation(&units, &[0.0, 0.0, 0.1]).unwrap();
        for w in r.final_omega() {
            assert_relative_eq!(*w, expect, max_relative = 0.01);
        }
    }

    #[test]
    fn aggressive_gfl_pair_is_unstable_in_both_views() {
        // Search for a fast-PLL pair the spectrum flags as unstable.
        let mut found = None;
        'search: for bw in [20.0, 40.0, 80.0] {
            for tau_d in [0.01, 0.001] {
                for (ell, psi, d) in [(0.2, 1.0, 20.0), (0.05, 1.0, 20.0), (0.2, 0.01, 500.0)] {
                    let wn = crate::freqresp::pu_omega(bw);
                    let p = GflPllParams { k_p: std::f64::consts::SQRT_2 * wn, k_i: wn * wn, tau_d, d };
                    let units = vec![unit(gfl_srf_pll_tf(&p).unwrap(), psi); 2];
                    let cl = assemble_closed_loop(&pair(ell, 0.1), &units).unwrap();
                    let rep = closed_loop_spectrum(&cl).unwrap();
                    if rep.max_real_excl_ref > 1e-3 {
                        found = Some((cl, rep));
                        break 'search;
                    }
                }
            }
        }
        let (cl, rep) = found.expect("no unstable configuration in the search range");
        assert!(!rep.stable);
        let r = simulate_step(&cl.model, 0, 0.01, 100.0, 1e-3).unwrap();
        assert!(r.diverged || r.peak_abs() > 1e3);
    }

    fn base_env() -> NetworkEnvelope {
        NetworkEnvelope::new(0.197, 2, 0.1)
    }

    #[test]
    fn random_networks_respect_the_envelope() {
        let env = base_env();
        for seed in 0..50 {
            let g = random_network(seed, (2, 6), &env).unwrap();
            assert_eq!(g, random_network(seed, (2, 6), &env).unwrap());
            assert!((2..=6).contains(&g.buses()));
            for b in 0..g.buses() {
                assert!(g.degree(b) <= env.e_max);
                let gb = crate::cert::gamma_bus(&g.incident_lines(b)).unwrap();
                assert!(gb <= gamma_bar(&env) * (1.0 + 1e-12));
            }
            assert!(g.edges().iter().all(|e| e.line.ell >= env.ell_min));
            assert!(laplacian_lambda_max(&g) <= gamma_bar(&env) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn certified_networks_are_stable() {
        let env = base_env();
        let grid = log_grid(0.01, 1000.0, 101).unwrap();
        let candidates: Vec<Candidate> = mixed_units()
            .into_iter()
            .enumerate()
            .map(|(i, u)| Candidate { id: format!("u{i}"), unit: u })
            .collect();
        let pool = certified_pool(&candidates, &env, &grid, &CertOptions::default()).unwrap();
        assert!(pool.members.len() >= 2, "{:?}", pool.rejected);
        let seeds: Vec<u64> = (0..20).collect();
        for t in soundness_sweep(&seeds, (2, 6), &env, &pool).unwrap() {
            assert!(t.stable, "{t:?}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn laplacian_rows_sum_to_zero(seed in any::<u64>()) {
            let g = random_network(seed, (1, 6), &base_env()).unwrap();
            let l = laplacian(&g);
            for r in 0..l.nrows() {
                prop_assert!(l.row(r).sum().abs() < 1e-12);
            }
            prop_assert!(l.symmetric_eigenvalues().min() > -1e-9);
        }

        #[test]
        fn spectrum_agrees_with_simulation(seed in 0u64..1000, psi in 0.02f64..2.0) {
            let g = random_network(seed, (2, 4), &base_env()).unwrap();
            let units = vec![unit(RationalTf::constant(0.05), psi); g.buses()];
            let cl = assemble_closed_loop(&g, &units).unwrap();
            let rep = closed_loop_spectrum(&cl).unwrap();
            prop_assume!(rep.max_real_excl_ref.abs() > 1e-3);
            let r = simulate_step(&cl.model, 0, 0.01, 100.0, 5e-3).unwrap();
            let bounded = !r.diverged && r.peak_abs() < 10.0;
            prop_assert_eq!(rep.stable, bounded);
        }
    }
}
