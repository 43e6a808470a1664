//! Run configuration, read from a sectioned TOML file.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stokes_core::experiments::{
    CDeltaConfig, ConditionConfig, ConvergenceConfig, CouplingConfig, DivergenceConfig, DomainChoice, InfsupConfig,
};
use stokes_core::mesh::{Point, RegionSpec};
use stokes_core::solver::ConstraintMode;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Generate a mesh and select Δ.
    Mesh,
    /// Solve one Stokes problem and export the fields.
    Solve,
    /// C_Δ ratios on the mesh and by polar quadrature.
    Cdelta,
    /// Condition numbers of the constrained saddle matrix.
    Cond,
    /// Subdomain coupling to a perturbed global solution.
    Couple,
    /// Divergence of band-constrained solutions.
    Divergence,
    /// Discrete inf-sup constants.
    Infsup,
    /// Manufactured-solution convergence.
    Convergence,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Mesh => "mesh",
            Command::Solve => "solve",
            Command::Cdelta => "cdelta",
            Command::Cond => "cond",
            Command::Couple => "couple",
            Command::Divergence => "divergence",
            Command::Infsup => "infsup",
            Command::Convergence => "convergence",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Falls back to `$STOKES_BAND_OUTPUT_DIR`, then `./output`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    pub formats: Vec<Format>,
    /// Per-dof field exports (`solve`, and the finest `couple` level).
    pub fields: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: None,
            formats: vec![Format::Csv, Format::Json],
            fields: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// A solve whose relative residual exceeds this counts as a failure.
    pub max_relative_residual: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            max_relative_residual: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshConfig {
    pub domain: DomainChoice,
    /// Cells per side of the square, or rings of the disk.
    pub size: usize,
    /// Boundary vertices of the disk; `6 * size` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub angular: Option<usize>,
}

impl Default for MeshConfig {
    fn default() -> Self {
        MeshConfig {
            domain: DomainChoice::Square,
            size: 16,
            angular: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveConfig {
    pub constraint: ConstraintMode,
    /// Value prescribed by the band, boundary and point constraints.
    pub pressure_value: f64,
    /// Target of `point_zero`; the nearest vertex is pinned.
    pub point: Point,
    pub load: [f64; 2],
    pub boundary_velocity: [f64; 2],
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            constraint: ConstraintMode::BandZero,
            pressure_value: 0.0,
            point: [0.0, 0.0],
            load: [0.0, -1.0],
            boundary_velocity: [0.0, 0.0],
        }
    }
}

/// Everything a run needs. Each experiment reads its own section; `mesh`,
/// `region` and `solve` drive the `mesh` and `solve` commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    pub output: OutputConfig,
    pub tolerances: Tolerances,
    pub mesh: MeshConfig,
    /// Δ for `mesh` and `solve`. A band of fixed width, so it does not shrink with h.
    pub region: RegionSpec,
    pub solve: SolveConfig,
    pub cdelta: CDeltaConfig,
    pub cond: ConditionConfig,
    pub couple: CouplingConfig,
    pub divergence: DivergenceConfig,
    pub infsup: InfsupConfig,
    pub convergence: ConvergenceConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            command: Command::Solve,
            output: OutputConfig::default(),
            tolerances: Tolerances::default(),
            mesh: MeshConfig::default(),
            region: RegionSpec::BoundaryBand { width: 0.1 },
            solve: SolveConfig::default(),
            cdelta: CDeltaConfig::default(),
            cond: ConditionConfig::default(),
            couple: CouplingConfig::default(),
            divergence: DivergenceConfig::default(),
            infsup: InfsupConfig::default(),
            convergence: ConvergenceConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configuration is representable in TOML")
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// `output.dir`, else `$STOKES_BAND_OUTPUT_DIR`, else `./output`.
    pub fn output_dir(&self) -> PathBuf {
        self.output
            .dir
            .clone()
            .or_else(|| {
                std::env::var_os(OUTPUT_ENV)
                    .filter(|v| !v.is_empty())
                    .map(PathBuf::from)
            })
            .unwrap_or_else(|| PathBuf::from("output"))
    }
}

pub const OUTPUT_ENV: &str = "STOKES_BAND_OUTPUT_DIR";
