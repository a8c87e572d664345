//! Config-driven runs, identity refinement studies and canned experiments
//! over `graphflow-core`, writing CSV and JSON artifacts.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod experiments;
pub mod monitors;

use std::path::PathBuf;

pub use artifacts::{ArtifactWriter, REPORT_SCHEMA_VERSION};
pub use commands::{cmd_run, cmd_verify_identities};
pub use config::{FormSpec, IdentityConfig, IdentityName, MonitorKind, MonitorSpec, RunConfig};
pub use experiments::{cmd_experiment, ExperimentName};

/// Process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    /// Every asserted check passed.
    Pass,
    /// A monitor or convergence check failed.
    Violation,
    /// The flow stopped on a singular metric or a non-finite value.
    NumericalHalt,
    /// Bad command line or config; no artifacts were written.
    Usage,
}

impl Outcome {
    pub fn code(self) -> i32 {
        match self {
            Outcome::Pass => 0,
            Outcome::Violation => 1,
            Outcome::NumericalHalt => 2,
            Outcome::Usage => 64,
        }
    }

    /// The more severe of two outcomes.
    pub fn worst(self, other: Outcome) -> Outcome {
        fn rank(o: Outcome) -> u8 {
            match o {
                Outcome::Pass => 0,
                Outcome::Violation => 1,
                Outcome::NumericalHalt => 2,
                Outcome::Usage => 3,
            }
        }
        if rank(other) > rank(self) {
            other
        } else {
            self
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),

    #[error("cannot read config {path}: {source}")]
    ReadConfig {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("invalid config {path}: {source}")]
    ParseConfig {
        path: PathBuf,
        source: serde_json::Error,
    },

    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] graphflow_core::Error),
}

impl CliError {
    /// Config and setup problems are usage errors; failures while writing or
    /// computing after the run started count as violations.
    pub fn outcome(&self) -> Outcome {
        match self {
            CliError::Usage(_) | CliError::ReadConfig { .. } | CliError::ParseConfig { .. } => {
                Outcome::Usage
            }
            CliError::Write { .. } | CliError::Core(_) => Outcome::Violation,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Caps the global thread pool from `GRAPHFLOW_THREADS` when set.
pub fn configure_threads(value: Option<&str>) -> CliResult<()> {
    let Some(raw) = value else {
        return Ok(());
    };
    let threads: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        CliError::Usage(format!(
            "GRAPHFLOW_THREADS must be a positive integer, got {raw:?}"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot configure {threads} threads: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_contract() {
        assert_eq!(Outcome::Pass.code(), 0);
        assert_eq!(Outcome::Violation.code(), 1);
        assert_eq!(Outcome::NumericalHalt.code(), 2);
        assert_eq!(Outcome::Usage.code(), 64);
        assert_eq!(
            Outcome::Pass.worst(Outcome::NumericalHalt),
            Outcome::NumericalHalt
        );
        assert_eq!(
            Outcome::NumericalHalt.worst(Outcome::Violation),
            Outcome::NumericalHalt
        );
    }

    #[test]
    fn thread_setting_is_validated() {
        assert!(configure_threads(None).is_ok());
        for bad in ["0", "-1", "many"] {
            assert!(matches!(
                configure_threads(Some(bad)),
                Err(CliError::Usage(_))
            ));
        }
    }
}
