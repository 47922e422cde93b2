//! Experiment runner for the multiple-model trajectory PHD filter: seeded
//! Monte Carlo sweeps over the L-scan window, configuration checks, and
//! scoring of exported estimates.

pub mod config;
pub mod experiment;
pub mod plot;

use std::collections::BTreeMap;

use anyhow::Result;
use trajphd::filter::TrajectoryEstimate;
use trajphd::metric::MetricParams;
use trajphd::sim::GroundTruthTrajectory;

pub use config::{ExperimentConfig, FilterSettings, ScenarioSource};
pub use experiment::{run_experiment, write_artifacts, ExperimentResult};

/// Per-step distances for steps `1..=K`, where `K` is the last time present
/// in either input. Steps missing from `estimates` score an empty set.
pub fn score(
    truth: &[GroundTruthTrajectory],
    estimates: &BTreeMap<usize, Vec<TrajectoryEstimate>>,
    params: &MetricParams,
    positions: &[usize],
) -> Result<Vec<f64>> {
    let last_truth = truth.iter().map(|t| t.death).max().unwrap_or(0);
    let last_est = estimates.keys().next_back().copied().unwrap_or(0);
    let dims = truth
        .iter()
        .flat_map(|t| t.states.iter())
        .chain(estimates.values().flatten().flat_map(|e| e.states.iter()))
        .map(|s| s.len())
        .min();
    if let (Some(d), Some(&i)) = (dims, positions.iter().max()) {
        anyhow::ensure!(i < d, "position index {i} outside state dimension {d}");
    }
    anyhow::ensure!(!positions.is_empty(), "no position indices");
    let empty = Vec::new();
    (1..=last_truth.max(last_est))
        .map(|k| {
            experiment::score_step(
                truth,
                estimates.get(&k).unwrap_or(&empty),
                k,
                params,
                positions,
            )
        })
        .collect()
}
