//! `windcov` command-line front end.
//!
//! Every command reads one TOML configuration, writes CSV and JSON tables
//! into the output directory, and finishes with `resolved_config.toml` (the
//! configuration after overrides, which reproduces the run) and
//! `manifest.json`.

pub mod commands;
pub mod config;
pub mod error;

use std::path::PathBuf;

use clap::{Parser, ValueEnum};
use serde::Serialize;

pub use config::Config;
pub use error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandName {
    /// Draw Gaussian random fields from `[model]` on `[grid]`.
    Sample,
    /// Run the particle transport simulator.
    Transport,
    /// Directional empirical variogram of `variogram.data`.
    Variogram,
    /// Maximum likelihood fit to `fit.data`.
    Fit,
    /// Original and deformed covariance surfaces on `[grid]`.
    Surface,
    /// Image of the unit circle and axes under a stretch.
    DeformDemo,
    /// Generate data, then estimate the variogram and fit.
    Pipeline,
}

impl CommandName {
    fn allows_replicates(self) -> bool {
        matches!(self, CommandName::Sample | CommandName::Transport | CommandName::Pipeline)
    }
}

#[derive(Debug, Clone, Parser)]
#[command(name = "windcov", version, about = "Wind-deformed anisotropic covariance toolkit")]
pub struct Args {
    #[arg(value_enum)]
    pub command: CommandName,
    /// TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Independent runs with seeds `seed, seed + 1, ...`.
    #[arg(long, default_value_t = 1)]
    pub replicates: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: CommandName,
    pub config_path: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub seed: Option<u64>,
    pub replicates: usize,
    pub tool_version: &'static str,
    /// Files written, relative to `output_dir`.
    pub outputs: Vec<String>,
}

pub fn run(args: &Args) -> Result<Manifest, CliError> {
    if args.replicates == 0 {
        return Err(CliError::Usage("--replicates must be at least 1".into()));
    }
    if args.replicates > 1 && !args.command.allows_replicates() {
        return Err(CliError::Usage(format!("{:?} does not take --replicates", args.command)));
    }
    let mut config = match &args.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(seed) = args.seed {
        config.apply_seed(seed);
    }
    // built-in defaults are written out so the echoed configuration is complete
    match args.command {
        CommandName::Surface if config.model.is_none() => config.model = Some((&commands::default_surface_model()).into()),
        CommandName::DeformDemo if config.deform.is_none() => config.deform = Some(Default::default()),
        _ => {}
    }

    let mut out = commands::Outputs::new(&args.out)?;
    match args.command {
        CommandName::Sample => commands::sample(&config, args.replicates, &mut out)?,
        CommandName::Transport => commands::transport(&config, args.replicates, &mut out)?,
        CommandName::Variogram => commands::variogram(&config, &mut out)?,
        CommandName::Fit => commands::fit_command(&config, &mut out)?,
        CommandName::Surface => commands::surface(&config, &mut out)?,
        CommandName::DeformDemo => commands::deform_demo(&config, &mut out)?,
        CommandName::Pipeline => {
            commands::pipeline(&config, args.replicates, &mut out)?;
        }
    }
    out.text("resolved_config.toml", &config.to_toml()?)?;

    let mut outputs = out.written().to_vec();
    outputs.sort();
    let manifest = Manifest {
        command: args.command,
        config_path: args.config.clone(),
        output_dir: args.out.clone(),
        seed: args.seed,
        replicates: args.replicates,
        tool_version: env!("CARGO_PKG_VERSION"),
        outputs,
    };
    out.json("manifest.json", &manifest)?;
    Ok(manifest)
}
