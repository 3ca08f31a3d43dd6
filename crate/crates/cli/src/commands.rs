use std::path::PathBuf;

use anyhow::{anyhow, Context, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use droopcert_core::bounds::{
    check_against_template, contour_grid, low_gain_template, low_gain_template_for, passive_template,
    perf_check, perf_within_template, BoundTemplate, ComplianceReport, InclusionReport, TemplateCase,
};
use droopcert_core::cert::{certify_unit_with, gamma_bar, gamma_bus, BusContext};
use droopcert_core::freqresp::{FrequencyGrid, log_grid};
use droopcert_core::ident::{run_sweep, DroopDataset};
use droopcert_core::lines::{extract_line_bounds, mu_dc, UncertaintyWeight};
use droopcert_core::oracle::{
    assemble_closed_loop, certified_pool, closed_loop_spectrum, laplacian_lambda_max, simulate_step,
    soundness_sweep, Candidate, NetworkGraph, SpectrumReport,
};

use crate::config::{GridConfig, RunConfig, TemplateConfig, UnitSpec};
use crate::output::{csv, svg_plot, OutDir, Series};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    fn from(pass: bool) -> Self {
        if pass {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }
}

/// Inputs shared by all subcommands after merging flags and config.
pub struct Ctx {
    pub cfg: RunConfig,
    pub out: OutDir,
    pub dataset: Option<PathBuf>,
    pub network: Option<PathBuf>,
    pub grid: Option<GridConfig>,
    pub seed: u64,
    pub robust: bool,
    pub svg: bool,
}

impl Ctx {
    fn grid(&self) -> Result<FrequencyGrid> {
        match self.grid.or(self.cfg.grid) {
            Some(g) => g.build(),
            None => Ok(FrequencyGrid::default()),
        }
    }

    fn dataset(&self) -> Result<DroopDataset> {
        let path = self
            .dataset
            .as_ref()
            .ok_or_else(|| anyhow!("no dataset given (--dataset or `dataset` in the config)"))?;
        let text = std::fs::read_to_string(path).with_context(|| format!("reading dataset {}", path.display()))?;
        DroopDataset::from_json(&text).with_context(|| format!("parsing dataset {}", path.display()))
    }
}

fn db(z: Complex64) -> f64 {
    20.0 * z.norm().log10()
}

fn deg(z: Complex64) -> f64 {
    z.arg().to_degrees()
}

fn bode_csv(ds: &DroopDataset) -> String {
    let header = [
        "f_hz",
        "m_p_gain_db",
        "m_p_phase_deg",
        "m_q_gain_db",
        "m_q_phase_deg",
        "zeta_p_gain_db",
        "zeta_p_phase_deg",
        "zeta_q_gain_db",
        "zeta_q_phase_deg",
        "cond",
    ];
    csv(
        &header,
        ds.samples.iter().map(|s| {
            vec![
                s.f_hz,
                db(s.m_p),
                deg(s.m_p),
                db(s.m_q),
                deg(s.m_q),
                db(s.zeta_p),
                deg(s.zeta_p),
                db(s.zeta_q),
                deg(s.zeta_q),
                s.cond,
            ]
        }),
    )
}

fn gain_series(ds: &DroopDataset) -> Series {
    Series {
        name: format!("|m_p| {}", ds.unit_id),
        points: ds.samples.iter().map(|s| (s.f_hz, db(s.m_p))).collect(),
    }
}

pub fn identify(ctx: &Ctx, analytic: bool) -> Result<Verdict> {
    let spec = ctx.cfg.unit.as_ref().ok_or_else(|| anyhow!("config needs a [unit] section"))?;
    let unit = spec.build()?;
    let grid = ctx.grid()?;
    let ds = if analytic {
        DroopDataset::from_model(&spec.id(), &unit, &grid)?
    } else {
        let tb = ctx.cfg.testbed.unwrap_or_default();
        run_sweep(&spec.id(), &unit, &grid, &tb)?
    };
    let path = ctx.out.json("dataset.json", &ds)?;
    ctx.out.write("bode.csv", &bode_csv(&ds))?;
    if ctx.svg {
        let phase = Series {
            name: "phase m_p (deg)".into(),
            points: ds.samples.iter().map(|s| (s.f_hz, deg(s.m_p))).collect(),
        };
        ctx.out
            .write("bode_gain.svg", &svg_plot("m_p gain", "f (Hz)", "dB", &[gain_series(&ds)], true))?;
        ctx.out.write("bode_phase.svg", &svg_plot("m_p phase", "f (Hz)", "deg", &[phase], true))?;
    }
    for f in &ds.failures {
        eprintln!("warning: {} Hz failed: {}", f.f_hz, f.reason);
    }
    println!(
        "identified {} of {} points for {} -> {}",
        ds.samples.len(),
        grid.len(),
        ds.unit_id,
        path.display()
    );
    Ok(Verdict::from(ds.failures.is_empty()))
}

pub fn certify(ctx: &Ctx) -> Result<Verdict> {
    let ds = ctx.dataset()?;
    let mut env = ctx.cfg.envelope()?;
    let c = ctx.cfg.certify.unwrap_or_default();
    let opts = c.options(ctx.robust);
    if opts.robust && env.uncertainty == UncertaintyWeight::none() {
        env.uncertainty = UncertaintyWeight::default();
        eprintln!(
            "note: robust check with the default uncertainty weight (beta = {}, omega_delta = {})",
            env.uncertainty.beta, env.uncertainty.omega_delta
        );
    }
    let bus = BusContext::from_envelope(&env, c.psi)?;
    let res = certify_unit_with(&ds, &env, &bus, &opts)?;
    ctx.out.json("certificate.json", &res)?;
    ctx.out.write("nyquist.csv", &res.nyquist_csv())?;
    if ctx.svg {
        let h = Series {
            name: format!("h {}", ds.unit_id),
            points: res.per_freq.iter().map(|m| (m.h.re, m.h.im)).collect(),
        };
        ctx.out.write("nyquist.svg", &svg_plot("bus loop response", "Re h", "Im h", &[h], false))?;
    }
    for w in &res.warnings {
        eprintln!("warning: {w}");
    }
    match res.alpha_interval {
        Some(iv) => println!(
            "feasible: alpha in ({:.3}, {:.3}) deg, suggested {:.3} deg (gamma = {:.4}, psi = {}, robust = {})",
            iv.lo.to_degrees(),
            iv.hi.to_degrees(),
            iv.midpoint().to_degrees(),
            bus.gamma,
            bus.psi,
            opts.robust
        ),
        None => {
            println!("infeasible (robust = {})", opts.robust);
            for v in res.violations.iter().take(5) {
                println!("  {:.4} Hz: {}", v.f_hz, v.reason);
            }
        }
    }
    Ok(Verdict::from(res.feasible()))
}

fn build_template(cfg: &RunConfig, t: &TemplateConfig, ds: Option<&DroopDataset>) -> Result<BoundTemplate> {
    let env = cfg.envelope;
    let rho = t
        .rho
        .or(env.map(|e| e.rho))
        .ok_or_else(|| anyhow!("[template] needs rho or an [envelope]"))?;
    let omega0 = env.map_or(1.0, |e| e.omega0);
    let eps = match (t.eps_l, t.eps_l_rel) {
        (Some(e), None) => e,
        (None, Some(r)) => r * mu_dc(rho, omega0),
        (None, None) => 0.2 * mu_dc(rho, omega0),
        (Some(_), Some(_)) => return Err(anyhow!("give eps_l or eps_l_rel, not both")),
    };
    let b = extract_line_bounds(rho, omega0, eps, t.delta_l_deg.to_radians(), t.nu_l_deg.to_radians())?;
    let gamma = match (t.gamma, env) {
        (Some(g), _) => g,
        (None, Some(e)) => gamma_bar(&e),
        (None, None) => return Err(anyhow!("[template] needs gamma or an [envelope]")),
    };
    let bus = BusContext::new(gamma, t.psi)?;
    let alpha = t.alpha_deg.to_radians();
    Ok(match t.case {
        TemplateCase::Passive => passive_template(&b, &bus, alpha)?,
        TemplateCase::LowGain => match (t.f_alpha, ds) {
            (Some(fa), _) => low_gain_template(&b, &bus, alpha, fa, t.f_dblprime.unwrap_or(b.f_eps))?,
            (None, Some(ds)) => low_gain_template_for(ds, &b, &bus, alpha)?,
            (None, None) => return Err(anyhow!("[template] needs f_alpha")),
        },
    })
}

fn template_series(t: &BoundTemplate, ds: &DroopDataset) -> Vec<Series> {
    t.segments
        .iter()
        .filter(|s| s.gain_coeff.is_some())
        .map(|seg| Series {
            name: format!("{} ceiling", seg.region),
            points: ds
                .samples
                .iter()
                .filter(|s| s.f_hz > seg.f_lo && seg.f_hi.map_or(true, |h| s.f_hz <= h))
                .map(|s| (s.f_hz, 20.0 * seg.gain_max(s.f_hz).unwrap_or(f64::NAN).log10()))
                .collect(),
        })
        .collect()
}

fn print_report(rep: &ComplianceReport) {
    for s in &rep.per_segment {
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.3}"));
        println!(
            "  {:<12} samples {:>4}  gain margin {:>9} dB  phase margin {:>9} deg  slope {:>7}  violations {}",
            s.region,
            s.samples,
            fmt(s.worst_gain_margin_db),
            fmt(s.worst_phase_margin_deg),
            fmt(s.fitted_slope),
            s.violations.len()
        );
    }
    for w in &rep.warnings {
        eprintln!("warning: {w}");
    }
}

pub fn bounds(ctx: &Ctx) -> Result<Verdict> {
    let ds = ctx.dataset()?;
    let t = ctx.cfg.template.ok_or_else(|| anyhow!("config needs a [template] section"))?;
    let template = build_template(&ctx.cfg, &t, Some(&ds))?;
    let rep = check_against_template(&ds, &template)?;
    ctx.out.json("template.json", &template)?;
    ctx.out.json("compliance.json", &rep)?;
    if ctx.svg {
        let mut series = vec![gain_series(&ds)];
        series.extend(template_series(&template, &ds));
        ctx.out
            .write("bounds.svg", &svg_plot("m_p against gain template", "f (Hz)", "dB", &series, true))?;
    }
    for n in &template.notes {
        eprintln!("note: {n}");
    }
    println!("{:?} template: {}", template.case, if rep.pass { "pass" } else { "fail" });
    print_report(&rep);
    Ok(Verdict::from(rep.pass))
}

#[derive(Serialize)]
struct PerfOutput<'a> {
    report: &'a ComplianceReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    inclusion: Option<InclusionReport>,
}

pub fn perf(ctx: &Ctx) -> Result<Verdict> {
    let ds = ctx.dataset()?;
    let p = ctx.cfg.perf.ok_or_else(|| anyhow!("config needs a [perf] section"))?;
    let spec = p.spec()?;
    let rep = perf_check(&ds, &spec)?;
    let inclusion = match ctx.cfg.template {
        Some(t) => {
            let template = build_template(&ctx.cfg, &t, Some(&ds))?;
            Some(perf_within_template(&spec, &template, &ds.frequencies())?)
        }
        None => None,
    };
    ctx.out.json("perf.json", &PerfOutput { report: &rep, inclusion: inclusion.clone() })?;
    if ctx.svg {
        let band = |v: f64, lo: f64, hi: f64, name: &str| Series {
            name: name.into(),
            points: vec![(lo, 20.0 * v.log10()), (hi, 20.0 * v.log10())],
        };
        let f0 = ds.samples.first().map_or(spec.f_d, |s| s.f_hz);
        let series = vec![
            gain_series(&ds),
            band(spec.m_p0 + spec.eps_d, f0, spec.f_d, "steady-state max"),
            band(spec.m_p0 - spec.eps_d, f0, spec.f_d, "steady-state min"),
            band(spec.m_bar_p, f0, spec.f_c, "transient max"),
        ];
        ctx.out.write("perf.svg", &svg_plot("performance windows", "f (Hz)", "dB", &series, true))?;
    }
    println!("performance: {} (f_c = {:.4} Hz)", if rep.pass { "pass" } else { "fail" }, spec.f_c);
    print_report(&rep);
    let contained = inclusion.as_ref().map_or(true, InclusionReport::contained);
    if let Some(inc) = &inclusion {
        println!(
            "  window inside template: {} ({} steady-state, {} transient exceptions)",
            inc.contained(),
            inc.steady_state.len(),
            inc.transient_gain.len()
        );
    }
    Ok(Verdict::from(rep.pass && contained))
}

pub fn minl(ctx: &Ctx) -> Result<Verdict> {
    let m = ctx.cfg.minl.ok_or_else(|| anyhow!("config needs a [minl] section"))?;
    let grid = contour_grid(m.formula, &m.axis1, &m.axis2, &m.fixed)?;
    ctx.out.write("contour.csv", &grid.to_csv())?;
    ctx.out.json("contour.json", &grid)?;
    if ctx.svg {
        let series: Vec<Series> = grid
            .axis2_values
            .iter()
            .enumerate()
            .map(|(j, v)| Series {
                name: format!("{:?} = {v:.4}", grid.axis2),
                points: grid.axis1_values.iter().zip(&grid.values).map(|(a, row)| (*a, row[j])).collect(),
            })
            .collect();
        ctx.out.write(
            "contour.svg",
            &svg_plot("minimum inductance", &format!("{:?}", grid.axis1), "ell_min (pu)", &series, false),
        )?;
    }
    let all = grid.values.iter().flatten();
    let lo = all.clone().copied().fold(f64::INFINITY, f64::min);
    let hi = all.copied().fold(f64::NEG_INFINITY, f64::max);
    println!(
        "{:?} contour {}x{}: ell_min in [{lo:.4}, {hi:.4}] pu",
        grid.formula,
        grid.axis1_values.len(),
        grid.axis2_values.len()
    );
    Ok(Verdict::Pass)
}

/// Network description read by `oracle --network`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkFile {
    pub graph: NetworkGraph,
    pub units: Vec<UnitSpec>,
}

#[derive(Serialize)]
struct NetworkReport {
    buses: usize,
    lines: usize,
    lambda_max: f64,
    gamma: Vec<f64>,
    spectrum: SpectrumReport,
}

pub fn oracle(ctx: &Ctx) -> Result<Verdict> {
    match &ctx.network {
        Some(path) => oracle_network(ctx, path),
        None => oracle_random(ctx),
    }
}

fn oracle_network(ctx: &Ctx, path: &PathBuf) -> Result<Verdict> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading network {}", path.display()))?;
    let net: NetworkFile = serde_json::from_str(&text).with_context(|| format!("parsing network {}", path.display()))?;
    let units = net.units.iter().map(UnitSpec::build).collect::<Result<Vec<_>>>()?;
    let cl = assemble_closed_loop(&net.graph, &units)?;
    let spectrum = closed_loop_spectrum(&cl)?;
    let gamma = (0..net.graph.buses())
        .map(|b| {
            let lines = net.graph.incident_lines(b);
            if lines.is_empty() {
                Ok(0.0)
            } else {
                gamma_bus(&lines)
            }
        })
        .collect::<droopcert_core::Result<Vec<_>>>()?;
    let report = NetworkReport {
        buses: net.graph.buses(),
        lines: net.graph.edges().len(),
        lambda_max: laplacian_lambda_max(&net.graph),
        gamma,
        spectrum,
    };
    ctx.out.json("spectrum.json", &report)?;
    if let Some(step) = ctx.cfg.oracle.as_ref().and_then(|o| o.step.clone()) {
        let r = simulate_step(&cl.model, step.bus, step.delta_p, step.duration, step.dt)?;
        let mut header = vec!["t_s".to_string()];
        header.extend((0..cl.buses).map(|b| format!("omega_{b}")));
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        let rows = r.t.iter().zip(&r.omega).map(|(t, w)| {
            let mut row = vec![*t];
            row.extend(w);
            row
        });
        ctx.out.write("step.csv", &csv(&header, rows))?;
        if r.diverged {
            println!("step response diverged at t = {:.3} s", r.t.last().copied().unwrap_or(0.0));
        }
    }
    let s = &report.spectrum;
    println!(
        "{}: {} eigenvalues, max real part excluding reference = {:.6e}",
        if s.stable { "stable" } else { "unstable" },
        s.eigenvalues.len(),
        s.max_real_excl_ref
    );
    Ok(Verdict::from(s.stable))
}

fn oracle_random(ctx: &Ctx) -> Result<Verdict> {
    let o = ctx
        .cfg
        .oracle
        .as_ref()
        .ok_or_else(|| anyhow!("no --network given and config has no [oracle] section"))?;
    if o.candidates.is_empty() {
        return Err(anyhow!("[oracle] needs candidate units"));
    }
    let env = ctx.cfg.envelope()?;
    let grid = match o.grid {
        Some(g) => g.build()?,
        None => log_grid(0.01, 1000.0, 101)?,
    };
    let candidates = o
        .candidates
        .iter()
        .map(|c| Ok(Candidate { id: c.id(), unit: c.build()? }))
        .collect::<Result<Vec<_>>>()?;
    let opts = ctx.cfg.certify.unwrap_or_default().options(ctx.robust);
    let pool = certified_pool(&candidates, &env, &grid, &opts)?;
    let seeds: Vec<u64> = (0..o.trials as u64).map(|i| ctx.seed.wrapping_add(i)).collect();
    let trials = soundness_sweep(&seeds, (o.bus_min, o.bus_max), &env, &pool)?;
    #[derive(Serialize)]
    struct Out<'a> {
        alpha: f64,
        pool: Vec<String>,
        rejected: &'a [String],
        trials: &'a [droopcert_core::oracle::TrialOutcome],
    }
    ctx.out.json(
        "trials.json",
        &Out {
            alpha: pool.alpha,
            pool: pool.members.iter().map(|c| c.id.clone()).collect(),
            rejected: &pool.rejected,
            trials: &trials,
        },
    )?;
    let unstable: Vec<u64> = trials.iter().filter(|t| !t.stable).map(|t| t.seed).collect();
    println!(
        "{} certified units at alpha = {:.3} deg; {} networks, {} unstable{}",
        pool.members.len(),
        pool.alpha.to_degrees(),
        trials.len(),
        unstable.len(),
        if unstable.is_empty() { String::new() } else { format!(" (seeds {unstable:?})") }
    );
    if trials.len() == 1 {
        println!("{}", if trials[0].stable { "stable" } else { "unstable" });
    }
    Ok(Verdict::from(unstable.is_empty()))
}
