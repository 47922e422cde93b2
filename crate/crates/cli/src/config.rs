//! Experiment configuration file.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use trajphd::filter::{FilterConfig, LScan};
use trajphd::metric::MetricParams;
use trajphd::models::{maneuvering_scenario_config, ScenarioConfig};
use trajphd::sim::ScenarioScript;

/// Where the scenario comes from: a path to a scenario JSON file (relative
/// to the experiment file) or the scenario itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScenarioSource {
    Path(PathBuf),
    Inline(Box<ScenarioConfig>),
}

/// Mixture-reduction settings; probabilities and clutter come from the
/// scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSettings {
    #[serde(default = "default_prune")]
    pub prune_threshold: f64,
    #[serde(default = "default_absorb")]
    pub absorb_threshold: f64,
    #[serde(default = "default_cap")]
    pub max_components: usize,
}

fn default_prune() -> f64 {
    1e-5
}
fn default_absorb() -> f64 {
    4.0
}
fn default_cap() -> usize {
    30
}

impl Default for FilterSettings {
    fn default() -> Self {
        Self {
            prune_threshold: default_prune(),
            absorb_threshold: default_absorb(),
            max_components: default_cap(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Defaults to the built-in maneuvering-target scenario.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioSource>,
    #[serde(default = "ScenarioScript::maneuvering")]
    pub script: ScenarioScript,
    #[serde(default)]
    pub filter: FilterSettings,
    #[serde(default = "default_lscan")]
    pub lscan: Vec<LScan>,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    #[serde(default = "default_snapshots")]
    pub snapshot_steps: Vec<usize>,
    #[serde(default)]
    pub metric: MetricParams,
    /// State components scored by the metric (positions by default).
    #[serde(default = "default_positions")]
    pub position_indices: Vec<usize>,
    /// Worker threads; defaults to the available parallelism.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
}

fn default_lscan() -> Vec<LScan> {
    vec![LScan::Window(1), LScan::Window(2), LScan::Window(5), LScan::Full]
}
fn default_runs() -> usize {
    1
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}
fn default_snapshots() -> Vec<usize> {
    vec![8, 24, 45, 56]
}
fn default_positions() -> Vec<usize> {
    vec![0, 2]
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl ExperimentConfig {
    /// Reads a config file. A scenario given by path is loaded relative to
    /// the file's directory and inlined.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: Self = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        if let Some(ScenarioSource::Path(rel)) = &cfg.scenario {
            let full = path.parent().unwrap_or(Path::new(".")).join(rel);
            let text = std::fs::read_to_string(&full)
                .with_context(|| format!("reading scenario {}", full.display()))?;
            let sc: ScenarioConfig = serde_json::from_str(&text)
                .with_context(|| format!("parsing scenario {}", full.display()))?;
            cfg.scenario = Some(ScenarioSource::Inline(Box::new(sc)));
        }
        Ok(cfg)
    }

    /// The scenario as configured; paths must already be resolved.
    pub fn scenario_config(&self) -> Result<ScenarioConfig> {
        match &self.scenario {
            None => Ok(maneuvering_scenario_config()),
            Some(ScenarioSource::Inline(sc)) => Ok((**sc).clone()),
            Some(ScenarioSource::Path(p)) => {
                anyhow::bail!("scenario path {} was not resolved", p.display())
            }
        }
    }

    pub fn filter_config(&self, base: FilterConfig, lscan: LScan) -> FilterConfig {
        FilterConfig {
            prune_threshold: self.filter.prune_threshold,
            absorb_threshold: self.filter.absorb_threshold,
            max_components: self.filter.max_components,
            lscan,
            ..base
        }
    }

    /// Every problem with the configuration, one line each.
    pub fn diagnostics(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.runs < 1 {
            out.push("runs must be >= 1".into());
        }
        if self.lscan.is_empty() {
            out.push("lscan list is empty".into());
        }
        if self.jobs == Some(0) {
            out.push("jobs must be >= 1".into());
        }
        if let Err(e) = self.metric.validate() {
            out.push(format!("metric: {e}"));
        }
        for &s in &self.snapshot_steps {
            if s < 1 || s > self.script.duration {
                out.push(format!(
                    "snapshot step {s} outside [1, {}]",
                    self.script.duration
                ));
            }
        }
        let sc = match self.scenario_config() {
            Ok(sc) => sc,
            Err(e) => {
                out.push(format!("scenario: {e}"));
                return out;
            }
        };
        out.extend(sc.diagnostics().into_iter().map(|d| format!("scenario: {d}")));
        if let Ok(scenario) = sc.build() {
            let base = FilterConfig::for_scenario(&scenario.params);
            for &l in &self.lscan {
                out.extend(
                    self.filter_config(base, l)
                        .diagnostics()
                        .into_iter()
                        .map(|d| format!("filter: {d}")),
                );
            }
            out.extend(
                self.script
                    .diagnostics(scenario.birth.locations().len(), scenario.modes.len())
                    .into_iter()
                    .map(|d| format!("script: {d}")),
            );
            let nx = scenario.modes.state_dim();
            if self.position_indices.is_empty() {
                out.push("position_indices is empty".into());
            }
            for &i in &self.position_indices {
                if i >= nx {
                    out.push(format!("position index {i} outside state dimension {nx}"));
                }
            }
        }
        out.dedup();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = ExperimentConfig::default();
        assert_eq!(c.runs, 1);
        assert_eq!(c.lscan.len(), 4);
        assert_eq!(c.snapshot_steps, vec![8, 24, 45, 56]);
        assert!(c.diagnostics().is_empty(), "{:?}", c.diagnostics());
    }

    #[test]
    fn lscan_list_parses() {
        let c: ExperimentConfig = serde_json::from_str(r#"{"lscan": [1, "full", 20]}"#).unwrap();
        assert_eq!(c.lscan, vec![LScan::Window(1), LScan::Full, LScan::Window(20)]);
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"lscan": [0]}"#).is_err());
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn named_violations() {
        let mut c = ExperimentConfig::default();
        c.filter.prune_threshold = -1.0;
        c.runs = 0;
        let d = c.diagnostics();
        assert!(d.iter().any(|l| l.contains("prune_threshold")), "{d:?}");
        assert!(d.iter().any(|l| l.contains("runs")), "{d:?}");

        let mut sc = maneuvering_scenario_config();
        sc.tpm[0] = vec![0.8, 0.05, 0.05];
        let c = ExperimentConfig {
            scenario: Some(ScenarioSource::Inline(Box::new(sc))),
            ..ExperimentConfig::default()
        };
        let d = c.diagnostics();
        assert!(d.iter().any(|l| l.starts_with("scenario:") && l.contains("row 0")), "{d:?}");
    }
}
