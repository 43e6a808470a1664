use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches, Parser};
use serde::de::{value::StrDeserializer, DeserializeOwned, IntoDeserializer};
use stokes_cli::{dispatch, CliError, Command, RunConfig, RunOptions};
use stokes_core::experiments::DomainChoice;
use stokes_core::mesh::RegionSpec;
use stokes_core::solver::ConstraintMode;

fn parse_name<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    let de: StrDeserializer<'_, serde::de::value::Error> = s.into_deserializer();
    T::deserialize(de).map_err(|e| e.to_string())
}

/// Band-constrained Stokes solver and experiment driver.
///
/// Settings come from the defaults below, then the `--config` file, then the flags.
/// Outputs and `manifest.json` go to `--output`, else $STOKES_BAND_OUTPUT_DIR, else ./output.
/// Exit status: 0 success, 1 usage/configuration/I/O error, 2 numerical failure.
#[derive(Debug, Parser)]
#[command(name = "stokes-band", version)]
struct Cli {
    /// What to run.
    command: Command,

    /// TOML run configuration (see the defaults below).
    #[arg(short, long)]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(short, long)]
    output: Option<PathBuf>,

    /// Worker threads for the experiment grids [default: all cores].
    #[arg(long)]
    workers: Option<usize>,

    /// Exit with status 2 when any grid point fails.
    #[arg(long)]
    strict: bool,

    /// Treat guideline warnings as errors.
    #[arg(long)]
    strict_guidelines: bool,

    /// Domain for `mesh` and `solve`: square or disk.
    #[arg(long, value_parser = parse_name::<DomainChoice>)]
    domain: Option<DomainChoice>,

    /// Cells per side (square) or rings (disk) for `mesh` and `solve`.
    #[arg(long)]
    size: Option<usize>,

    /// Pressure constraint for `solve`: zero_mean, band_zero, boundary_zero or point_zero.
    #[arg(long, value_parser = parse_name::<ConstraintMode>)]
    constraint: Option<ConstraintMode>,

    /// Δ as a boundary band of this width, for `mesh` and `solve`.
    #[arg(long)]
    band_width: Option<f64>,

    /// Perturbation sizes δ for `couple` and `divergence` (comma separated).
    #[arg(long = "delta", value_delimiter = ',')]
    deltas: Vec<f64>,

    /// Largest acceptable relative residual of a `solve`.
    #[arg(long)]
    max_residual: Option<f64>,

    /// Print the resolved configuration as TOML and exit.
    #[arg(long)]
    print_config: bool,
}

impl Cli {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut c = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        c.command = self.command;
        if let Some(dir) = &self.output {
            c.output.dir = Some(dir.clone());
        }
        if let Some(d) = self.domain {
            c.mesh.domain = d;
        }
        if let Some(n) = self.size {
            c.mesh.size = n;
        }
        if let Some(m) = self.constraint {
            c.solve.constraint = m;
        }
        if let Some(width) = self.band_width {
            c.region = RegionSpec::BoundaryBand { width };
        }
        if !self.deltas.is_empty() {
            c.couple.deltas = self.deltas.clone();
            c.divergence.deltas = self.deltas.clone();
        }
        if let Some(r) = self.max_residual {
            c.tolerances.max_relative_residual = r;
        }
        Ok(c)
    }
}

fn main() -> ExitCode {
    let defaults = format!("Default configuration:\n\n{}", RunConfig::default().to_toml());
    let matches = match Cli::command().after_long_help(defaults).try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    let config = match cli.resolve() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code());
        }
    };
    if cli.print_config {
        print!("{}", config.to_toml());
        return ExitCode::SUCCESS;
    }
    for w in stokes_cli::guideline_warnings(&config) {
        eprintln!("warning: {w}");
    }
    let options = RunOptions {
        strict: cli.strict,
        strict_guidelines: cli.strict_guidelines,
        workers: cli.workers,
    };
    match dispatch(&config, &options) {
        Ok(outcome) => {
            let m = &outcome.manifest;
            eprintln!(
                "{}: {} files in {} ({:.1} s, {} failures)",
                m.command,
                m.files.len(),
                outcome.output_dir.display(),
                m.wall_seconds,
                m.failures
            );
            ExitCode::from(outcome.exit_code)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
