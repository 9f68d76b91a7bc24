use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::metrics::RunMetrics;
use crate::network::simulate;
use crate::node_stack::Strategy;
use crate::topology::Topology;

use super::{aggregate, parse_run_file, write_run_file, Aggregate, HarnessError, RunFile, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct RunSpec {
    pub strategy: Strategy,
    pub payload: usize,
    pub seed: u64,
}

impl Scenario {
    /// Every run, ordered by strategy, payload and seed position.
    pub fn runs_to_do(&self) -> Vec<RunSpec> {
        let mut v = Vec::new();
        for &strategy in &self.strategies {
            for &payload in &self.payloads {
                for &seed in &self.seeds {
                    v.push(RunSpec { strategy, payload, seed });
                }
            }
        }
        v
    }
}

pub fn run_file_name(r: &RunSpec) -> String {
    format!("{}_{}B_seed{}.csv", r.strategy, r.payload, r.seed)
}

pub fn simulate_run(scenario: &Scenario, topo: &Topology, r: RunSpec) -> RunMetrics {
    simulate(topo, scenario.network_config(r.strategy, r.payload, r.seed)).metrics
}

/// Result of [`run_experiment`].
#[derive(Debug)]
pub struct ExperimentOutput {
    pub run_files: Vec<PathBuf>,
    pub aggregate_file: PathBuf,
    pub aggregate: Aggregate,
}

/// Validates the scenario, executes all runs in parallel, writes one CSV per
/// run into `out_dir` and folds them into `aggregate.json`.
pub fn run_experiment(scenario: &Scenario, out_dir: &Path) -> Result<ExperimentOutput, HarnessError> {
    let topo = scenario.validate()?;
    let id = scenario.id(&topo);
    std::fs::create_dir_all(out_dir).map_err(|e| HarnessError::io(out_dir, e))?;
    let specs = scenario.runs_to_do();
    let texts: Vec<(PathBuf, String)> = specs
        .par_iter()
        .map(|r| {
            let m = simulate_run(scenario, &topo, *r);
            (out_dir.join(run_file_name(r)), write_run_file(&RunFile::from_metrics(&m, &id)))
        })
        .collect();
    let mut files = Vec::with_capacity(texts.len());
    for (path, text) in &texts {
        std::fs::write(path, text).map_err(|e| HarnessError::io(path, e))?;
        files.push(parse_run_file(text, path)?);
    }
    let agg = aggregate(&files)?;
    let aggregate_file = out_dir.join("aggregate.json");
    std::fs::write(&aggregate_file, agg.to_json()).map_err(|e| HarnessError::io(&aggregate_file, e))?;
    Ok(ExperimentOutput { run_files: texts.into_iter().map(|(p, _)| p).collect(), aggregate_file, aggregate: agg })
}
