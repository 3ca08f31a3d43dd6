//! `droopcert`: identify dynamic droop coefficients, certify them against a
//! network envelope, check Bode templates and run the network oracle.
//!
//! Exit codes: 0 pass/feasible, 1 fail/infeasible, 2 usage or input error.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use commands::{Ctx, Verdict};
use config::{parse_grid, GridConfig, RunConfig};
use output::OutDir;

#[derive(Parser)]
#[command(name = "droopcert", version, about = "Dynamic droop identification and decentralized stability checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Probe a unit model and write its droop dataset and Bode CSV.
    Identify {
        #[command(flatten)]
        common: Common,
        /// Sample the analytic model instead of simulating the test bench.
        #[arg(long)]
        analytic: bool,
    },
    /// Check a dataset against the decentralized stability condition.
    Certify(Common),
    /// Check a dataset against a low-gain or passive Bode template.
    Bounds(Common),
    /// Check a dataset against performance specifications.
    Perf(Common),
    /// Minimum-inductance contour grid.
    Minl(Common),
    /// Closed-loop spectrum of a network file, or randomized trials.
    Oracle(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    network: Option<PathBuf>,
    #[arg(long, env = "DROOPCERT_OUT", default_value = "droopcert-out")]
    out: PathBuf,
    #[arg(long)]
    robust: bool,
    /// Also write SVG plots.
    #[arg(long)]
    svg: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Log grid `fmin,fmax,n` in Hz.
    #[arg(long, value_parser = parse_grid)]
    grid: Option<GridConfig>,
}

impl Common {
    fn context(&self) -> Result<Ctx> {
        let cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        Ok(Ctx {
            dataset: self.dataset.clone().or_else(|| cfg.dataset.clone()),
            network: self.network.clone().or_else(|| cfg.network.clone()),
            grid: self.grid,
            seed: self.seed.or(cfg.seed).unwrap_or(0),
            robust: self.robust,
            svg: self.svg,
            out: OutDir::create(&self.out)?,
            cfg,
        })
    }
}

fn run(cli: Cli) -> Result<Verdict> {
    match cli.command {
        Command::Identify { common, analytic } => commands::identify(&common.context()?, analytic),
        Command::Certify(c) => commands::certify(&c.context()?),
        Command::Bounds(c) => commands::bounds(&c.context()?),
        Command::Perf(c) => commands::perf(&c.context()?),
        Command::Minl(c) => commands::minl(&c.context()?),
        Command::Oracle(c) => commands::oracle(&c.context()?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Verdict::Pass) => ExitCode::SUCCESS,
        Ok(Verdict::Fail) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
