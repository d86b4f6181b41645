//! `lvkinetic`: runs the predator-prey model and writes CSV tables for plotting.

mod commands;
mod figures;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use lvkinetic::config::RunConfig;
use lvkinetic::io::RunManifest;
use lvkinetic::params::{ValidateOptions, ValidationReport};
use lvkinetic::{MeanState, ModelParams, Variant};

#[derive(Parser, Debug)]
#[command(
    name = "lvkinetic",
    version,
    about = "Kinetic predator-prey experiments"
)]
struct Cli {
    /// `key = value` configuration file; reference parameters when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides the seed of the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; all cores when absent.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Mean and variance trajectories and their distances to the local equilibria.
    Moments,
    /// Particle Monte Carlo run with moment series and histograms.
    Mc,
    /// Fokker-Planck grid run with density snapshots and moment series.
    Fp,
    /// Fixed points and equilibrium density tables.
    Equilibria,
    /// Plot data of the standard experiments; every preset when none is named.
    Figures {
        #[arg(value_parser = figures::PRESETS)]
        name: Option<String>,
        #[arg(long, value_parser = figures::PRESETS, conflicts_with = "name")]
        preset: Option<String>,
    },
}

/// Parameters rejected by the admissibility checks.
#[derive(Debug)]
pub struct Rejected(pub ValidationReport);

impl std::fmt::Display for Rejected {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "inadmissible parameters\n{}", self.0)
    }
}

impl std::error::Error for Rejected {}

/// Runs the full admissibility check, including the checks that need the initial means.
pub fn check(
    params: &ModelParams,
    variant: Variant,
    initial: MeanState,
    epsilon: Option<f64>,
) -> Result<()> {
    let report = params.validate_with(
        variant,
        &ValidateOptions {
            initial: Some(initial),
            epsilon,
        },
    );
    if report.is_admissible() {
        Ok(())
    } else {
        Err(Rejected(report).into())
    }
}

/// An output directory together with the manifest describing it.
pub struct Output {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    started: Instant,
}

impl Output {
    pub fn create(dir: &Path, subcommand: &str, cfg: &RunConfig) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        let mut manifest = RunManifest::new(subcommand, cfg.params.hash_hex(), cfg.run.seed);
        let r = &cfg.run;
        manifest.set("variant", r.variant);
        manifest.set("p", cfg.params.p);
        manifest.set("dt", r.dt);
        manifest.set("t_end", r.t_end);
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest,
            started: Instant::now(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn finish(mut self) -> Result<()> {
        self.manifest.wall_clock_secs = self.started.elapsed().as_secs_f64();
        self.manifest
            .write(&self.dir)
            .with_context(|| format!("cannot write manifest in {}", self.dir.display()))
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.run.seed = seed;
    }
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("cannot configure the thread pool")?;
    }
    match cli.command {
        Command::Moments => commands::moments(&cfg, &cli.out),
        Command::Mc => commands::mc(&cfg, &cli.out),
        Command::Fp => commands::fp(&cfg, &cli.out),
        Command::Equilibria => commands::equilibria(&cfg, &cli.out),
        Command::Figures { name, preset } => {
            figures::run(&cfg, &cli.out, name.or(preset).as_deref())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.downcast_ref::<Rejected>().is_some() => {
            eprintln!("{e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_as_argument_or_flag() {
        let a = Cli::try_parse_from(["lvkinetic", "figures", "fig3"]).unwrap();
        let b = Cli::try_parse_from(["lvkinetic", "figures", "--preset", "fig3", "--seed", "4"])
            .unwrap();
        assert!(matches!(a.command, Command::Figures { name: Some(ref n), .. } if n == "fig3"));
        assert!(matches!(b.command, Command::Figures { preset: Some(ref n), .. } if n == "fig3"));
        assert_eq!(b.seed, Some(4));
        assert!(Cli::try_parse_from(["lvkinetic", "figures", "fig9"]).is_err());
        assert!(Cli::try_parse_from(["lvkinetic", "figures", "fig1", "--preset", "fig2"]).is_err());
    }

    #[test]
    fn check_returns_the_report() {
        let p = ModelParams {
            beta: 2.0,
            ..ModelParams::reference()
        };
        let err = check(&p, Variant::Malthusian, MeanState::new(0.0, 4.0, 3.0), None).unwrap_err();
        let rejected = err.downcast_ref::<Rejected>().unwrap();
        assert!(rejected.0.violates("beta_in_unit_interval"));
        assert!(check(
            &ModelParams::reference(),
            Variant::Malthusian,
            MeanState::new(0.0, 4.0, 3.0),
            None
        )
        .is_ok());
    }
}
