//! Scenario files, experiment execution and result files.

mod aggregate;
mod run;
mod runfile;
mod scenario;
mod table1;

use std::path::PathBuf;

use thiserror::Error;

pub use aggregate::{aggregate, aggregate_files, Aggregate, Series, Summary, AGGREGATE_FORMAT};
pub use run::{run_experiment, run_file_name, simulate_run, ExperimentOutput, RunSpec};
pub use runfile::{parse_run_file, write_run_file, RunFile, RunMeta, RunRow};
pub use scenario::{Scenario, SCENARIO_VERSION};
pub use table1::{table1_check, Table1Row, TABLE1};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid scenario: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("run files come from different scenarios ({first} and {other})")]
    MixedScenarios { first: String, other: String },
    #[error("no run files to aggregate")]
    NoRuns,
}

impl HarnessError {
    fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.into(), source }
    }
}
