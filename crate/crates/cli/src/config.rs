//! TOML run configuration. Every section is optional; each subcommand
//! checks for the sections it needs. Relative paths resolve against the
//! directory of the config file.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::Deserialize;

use droopcert_core::bounds::{AxisRange, ContourFixed, ContourFormula, CutoffMode, PerfSpec, TemplateCase};
use droopcert_core::cert::{CertOptions, LineModel, NetworkEnvelope};
use droopcert_core::freqresp::{log_grid, FrequencyGrid};
use droopcert_core::ident::TestbedConfig;
use droopcert_core::units::{unit_droop_matrix, GflPllParams, UnitKind, UnitModel, UnitParams, VsmParams};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub network: Option<PathBuf>,
    pub seed: Option<u64>,
    pub grid: Option<GridConfig>,
    pub unit: Option<UnitSpec>,
    pub testbed: Option<TestbedConfig>,
    pub envelope: Option<NetworkEnvelope>,
    pub certify: Option<CertifyConfig>,
    pub template: Option<TemplateConfig>,
    pub perf: Option<PerfConfig>,
    pub minl: Option<MinlConfig>,
    pub oracle: Option<OracleConfig>,
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub f_min: f64,
    pub f_max: f64,
    pub n: usize,
}

impl GridConfig {
    pub fn build(&self) -> Result<FrequencyGrid> {
        Ok(log_grid(self.f_min, self.f_max, self.n)?)
    }
}

/// Parses `fmin,fmax,n`.
pub fn parse_grid(s: &str) -> Result<GridConfig, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [a, b, n] = parts.as_slice() else {
        return Err("expected fmin,fmax,n".into());
    };
    let num = |v: &str| v.parse::<f64>().map_err(|e| format!("{v}: {e}"));
    Ok(GridConfig {
        f_min: num(a)?,
        f_max: num(b)?,
        n: n.parse().map_err(|e| format!("{n}: {e}"))?,
    })
}

#[derive(Clone, Debug, Deserialize, serde::Serialize)]
#[serde(deny_unknown_fields)]
pub struct UnitSpec {
    #[serde(default)]
    pub id: Option<String>,
    pub kind: UnitKind,
    /// Optional only for `gfl_pll`, which then uses its defaults.
    #[serde(default)]
    pub params: Option<UnitParams>,
    #[serde(default = "one")]
    pub psi: f64,
}

fn one() -> f64 {
    1.0
}

impl UnitSpec {
    pub fn id(&self) -> String {
        self.id.clone().unwrap_or_else(|| {
            match self.kind {
                UnitKind::GfmDroop => "gfm_droop",
                UnitKind::Vsm => "vsm",
                UnitKind::GflPll => "gfl_pll",
            }
            .to_string()
        })
    }

    pub fn build(&self) -> Result<UnitModel> {
        let params = match (self.params, self.kind) {
            (Some(p), _) => p,
            (None, UnitKind::GflPll) => UnitParams::GflPll(GflPllParams::default()),
            (None, k) => bail!("unit kind {k:?} needs params"),
        };
        Ok(unit_droop_matrix(self.kind, &params, self.psi)?)
    }
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifyConfig {
    #[serde(default = "one")]
    pub psi: f64,
    #[serde(default)]
    pub robust: bool,
    #[serde(default)]
    pub line_model: LineModel,
    #[serde(default = "ten")]
    pub min_points_per_decade: f64,
}

fn ten() -> f64 {
    10.0
}

impl Default for CertifyConfig {
    fn default() -> Self {
        CertifyConfig {
            psi: 1.0,
            robust: false,
            line_model: LineModel::Dynamic,
            min_points_per_decade: 10.0,
        }
    }
}

impl CertifyConfig {
    pub fn options(&self, robust: bool) -> CertOptions {
        CertOptions {
            robust: robust || self.robust,
            line_model: self.line_model,
            min_points_per_decade: self.min_points_per_decade,
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateConfig {
    #[serde(default = "low_gain")]
    pub case: TemplateCase,
    pub alpha_deg: f64,
    /// Absolute `eps_l`; exclusive with `eps_l_rel`.
    pub eps_l: Option<f64>,
    /// `eps_l` as a fraction of `mu0`.
    pub eps_l_rel: Option<f64>,
    #[serde(default = "ten")]
    pub delta_l_deg: f64,
    #[serde(default = "thirty")]
    pub nu_l_deg: f64,
    /// Prescribed boundary; taken from the dataset when absent.
    pub f_alpha: Option<f64>,
    /// Defaults to `f_eps`.
    pub f_dblprime: Option<f64>,
    /// Overrides the envelope's `gamma_bar`.
    pub gamma: Option<f64>,
    #[serde(default = "one")]
    pub psi: f64,
    /// Overrides the envelope's `rho`.
    pub rho: Option<f64>,
}

fn low_gain() -> TemplateCase {
    TemplateCase::LowGain
}

fn thirty() -> f64 {
    30.0
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerfConfig {
    pub m_p0: f64,
    pub eps_d: f64,
    pub delta_d_deg: f64,
    pub f_d: f64,
    pub m_bar_p: f64,
    /// Explicit cut-off; otherwise derived from `vsm`.
    pub f_c: Option<f64>,
    pub vsm: Option<VsmParams>,
    #[serde(default)]
    pub cutoff: CutoffMode,
}

impl PerfConfig {
    pub fn spec(&self) -> Result<PerfSpec> {
        let f_c = match (self.f_c, self.vsm) {
            (Some(f), _) => f,
            (None, Some(v)) => droopcert_core::bounds::vsm_cutoff_hz(&v, self.cutoff),
            (None, None) => bail!("[perf] needs f_c or vsm"),
        };
        let spec = PerfSpec {
            m_p0: self.m_p0,
            eps_d: self.eps_d,
            delta_d: self.delta_d_deg.to_radians(),
            f_d: self.f_d,
            m_bar_p: self.m_bar_p,
            f_c,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinlConfig {
    pub formula: ContourFormula,
    pub axis1: AxisRange,
    pub axis2: AxisRange,
    pub fixed: ContourFixed,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepConfig {
    pub bus: usize,
    pub delta_p: f64,
    /// seconds
    pub duration: f64,
    /// seconds
    #[serde(default = "step_dt")]
    pub dt: f64,
}

fn step_dt() -> f64 {
    1e-3
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    #[serde(default = "one_usize")]
    pub trials: usize,
    #[serde(default = "two")]
    pub bus_min: usize,
    #[serde(default = "six")]
    pub bus_max: usize,
    /// Units offered to randomized networks.
    #[serde(default)]
    pub candidates: Vec<UnitSpec>,
    /// Certification grid for the candidates.
    pub grid: Option<GridConfig>,
    pub step: Option<StepConfig>,
}

fn one_usize() -> usize {
    1
}

fn two() -> usize {
    2
}

fn six() -> usize {
    6
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.dataset, &mut cfg.network].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn envelope(&self) -> Result<NetworkEnvelope> {
        let env = self.envelope.ok_or_else(|| anyhow!("config needs an [envelope] section"))?;
        env.validate()?;
        Ok(env)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_flag() {
        let g = parse_grid("0.1, 120,61").unwrap();
        assert_eq!((g.f_min, g.f_max, g.n), (0.1, 120.0, 61));
        assert!(parse_grid("1,2").is_err());
        assert!(parse_grid("a,2,3").is_err());
    }

    #[test]
    fn unit_sections() {
        let cfg: RunConfig = toml::from_str(
            "[unit]\nkind = \"gfm_droop\"\nparams = { m_p0 = 0.05, tau = 0.05 }\n",
        )
        .unwrap();
        let u = cfg.unit.unwrap();
        assert_eq!(u.id(), "gfm_droop");
        assert!(u.build().is_ok());
        let gfl: UnitSpec = toml::from_str("kind = \"gfl_pll\"\npsi = 0.1").unwrap();
        assert_eq!(gfl.build().unwrap().psi, 0.1);
        let bare: UnitSpec = toml::from_str("kind = \"vsm\"").unwrap();
        assert!(bare.build().is_err());
        let wrong: UnitSpec = toml::from_str("kind = \"vsm\"\nparams = { m_p0 = 0.05, tau = 0.05 }").unwrap();
        assert!(wrong.build().is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<RunConfig>("[grid]\nf_min = 1\nf_max = 2\nn = 3\nextra = 1").is_err());
        assert!(toml::from_str::<RunConfig>("bogus = 1").is_err());
    }
}
