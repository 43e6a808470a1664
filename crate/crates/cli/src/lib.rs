//! Command-line frontend: configuration, dispatch to the solver and the experiments,
//! report files and the run manifest.

use std::path::PathBuf;

pub mod config;
mod run;

pub use config::{Command, Format, RunConfig, OUTPUT_ENV};
pub use run::{dispatch, guideline_warnings, write_report, Manifest, Outcome, RunOptions, Status, Versions};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Write {
        path: PathBuf,
        #[source]
        source: stokes_core::Error,
    },

    #[error(transparent)]
    Core(#[from] stokes_core::Error),

    #[error("guideline violated under --strict-guidelines: {0}")]
    Guideline(String),
}

impl CliError {
    /// 1 for usage, configuration and I/O problems, 2 for numerical failures.
    pub fn exit_code(&self) -> u8 {
        use stokes_core::Error as E;
        match self {
            CliError::Core(
                E::SingularMatrix { .. } | E::Convergence { .. } | E::DegenerateInput(_) | E::DegenerateTriangle { .. },
            ) => 2,
            CliError::Core(E::InvalidData(_) | E::DimensionMismatch { .. } | E::IndexOutOfRange { .. }) => 2,
            _ => 1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(
            CliError::Core(stokes_core::Error::SingularMatrix { column: 3 }).exit_code(),
            2
        );
        assert_eq!(CliError::Core(stokes_core::Error::EmptySelection).exit_code(), 1);
        assert_eq!(CliError::Config("x".into()).exit_code(), 1);
    }
}
