//! Command-line driver: one subcommand per dataset, configured from a TOML
//! file and a few flags, writing CSV or JSON files.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::config::{Format, RateTable, RunConfig};
use crate::error::CliError;
use crate::output::Sink;

#[derive(Debug, Parser)]
#[command(name = "paramosc", version, about = "Near-threshold parametric oscillator toolkit")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Stability boundaries, phase line and saddle-node line.
    Bifurcation,
    /// Stationary densities over an f_p sweep.
    Distribution,
    /// Activation energies and switching rates over a (mu_p, f_p) window.
    Rates {
        #[arg(long, value_enum)]
        table: Option<RateTable>,
    },
    /// Scaled slowest decrement curves in the critical region.
    Fpe {
        #[arg(long)]
        grid_n: Option<usize>,
        #[arg(long)]
        reference_d: Option<f64>,
        #[arg(long)]
        k_eigs: Option<usize>,
    },
    /// Langevin ensembles at the configured operating point.
    Simulate {
        #[arg(long)]
        dt: Option<f64>,
        /// Production steps per autocorrelation trajectory.
        #[arg(long)]
        steps: Option<u64>,
        /// First-passage runs per channel.
        #[arg(long)]
        ensemble: Option<u64>,
        #[arg(long)]
        decimation: Option<u64>,
        /// Also write a single trace of this many steps.
        #[arg(long)]
        trace_steps: Option<u64>,
    },
    /// Cross-checks rates, spectrum and simulation; exits 3 on failure.
    Validate,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Bifurcation => "bifurcation",
            Command::Distribution => "distribution",
            Command::Rates { .. } => "rates",
            Command::Fpe { .. } => "fpe",
            Command::Simulate { .. } => "simulate",
            Command::Validate => "validate",
        }
    }
}

/// Loads the configuration file and applies command-line overrides.
pub fn resolve(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(format) = cli.format {
        cfg.format = format;
    }
    match &cli.command {
        Command::Rates { table } => {
            if let Some(t) = table {
                cfg.rates.table = *t;
            }
        }
        Command::Fpe {
            grid_n,
            reference_d,
            k_eigs,
        } => {
            let fpe = &mut cfg.fpe;
            fpe.grid_n = grid_n.unwrap_or(fpe.grid_n);
            fpe.reference_noise = reference_d.unwrap_or(fpe.reference_noise);
            fpe.k_eigs = k_eigs.unwrap_or(fpe.k_eigs);
        }
        Command::Simulate {
            dt,
            steps,
            ensemble,
            decimation,
            trace_steps,
        } => {
            let sim = &mut cfg.simulate;
            sim.dt = dt.or(sim.dt);
            sim.steps = steps.or(sim.steps);
            sim.decimation = decimation.or(sim.decimation);
            sim.ensemble = ensemble.unwrap_or(sim.ensemble);
            sim.trace_steps = trace_steps.unwrap_or(sim.trace_steps);
        }
        Command::Bifurcation | Command::Distribution | Command::Validate => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Runs one subcommand and returns the files it wrote.
pub fn run(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    let cfg = resolve(cli)?;
    let mut sink = Sink::new(&cfg, cli.command.name())?;
    let result = match cli.command {
        Command::Bifurcation => commands::bifurcation(&cfg, &mut sink),
        Command::Distribution => commands::distribution(&cfg, &mut sink),
        Command::Rates { .. } => commands::rates(&cfg, &mut sink),
        Command::Fpe { .. } => commands::fpe(&cfg, &mut sink),
        Command::Simulate { .. } => commands::simulate(&cfg, &mut sink),
        Command::Validate => commands::validate(&cfg, &mut sink),
    };
    result.map(|_| sink.written)
}
