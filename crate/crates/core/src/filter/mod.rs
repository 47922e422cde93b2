//! Gaussian-mixture multiple-model trajectory PHD filter.
//!
//! One filter step at time `k` is
//!
//! 1. [`predict`]: newborn components plus every surviving component extended
//!    by one state under each mode,
//! 2. [`lscan_truncate`]: states older than the window are frozen,
//! 3. [`update`]: miss and detection components (fused with pruning),
//! 4. [`prune`], [`absorb`], [`cap`],
//! 5. [`extract_estimates`].
//!
//! Every step is a pure function of the previous mixture and the scan, and
//! components are emitted in a fixed order (input component, then mode, then
//! measurement), so runs are reproducible bit-for-bit.

mod predict;
mod reduce;
mod update;

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{BirthModel, MeasurementModel, ModeSet, ScenarioParams};
use crate::trajgauss::TrajectoryMixture;

pub use predict::predict;
pub use reduce::{absorb, cap, extract_estimates, lscan_truncate, prune, TrajectoryEstimate};
pub use update::{detection_weights, gaussian_density, update, update_pruned, GaussianLikelihood};

/// Length of the joint-Gaussian window kept per trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "LScanRepr", into = "LScanRepr")]
pub enum LScan {
    Window(usize),
    Full,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum LScanRepr {
    Window(usize),
    Name(String),
}

impl TryFrom<LScanRepr> for LScan {
    type Error = Error;

    fn try_from(r: LScanRepr) -> Result<Self> {
        match r {
            LScanRepr::Window(0) => Err(Error::param("L-scan window must be >= 1")),
            LScanRepr::Window(l) => Ok(LScan::Window(l)),
            LScanRepr::Name(s) => s.parse(),
        }
    }
}

impl From<LScan> for LScanRepr {
    fn from(l: LScan) -> Self {
        match l {
            LScan::Window(l) => LScanRepr::Window(l),
            LScan::Full => LScanRepr::Name("full".into()),
        }
    }
}

impl FromStr for LScan {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "full" | "Full" | "~" => Ok(LScan::Full),
            t => match t.parse::<usize>() {
                Ok(0) | Err(_) => Err(Error::param(format!(
                    "L-scan must be a positive integer or \"full\", got {t:?}"
                ))),
                Ok(l) => Ok(LScan::Window(l)),
            },
        }
    }
}

impl fmt::Display for LScan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LScan::Window(l) => write!(f, "{l}"),
            LScan::Full => f.write_str("full"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub survival_prob: f64,
    pub detection_prob: f64,
    /// Clutter intensity per unit measurement-space volume.
    pub clutter_intensity: f64,
    pub prune_threshold: f64,
    /// Mahalanobis distance (not squared) on the newest state.
    pub absorb_threshold: f64,
    pub max_components: usize,
    pub lscan: LScan,
}

impl FilterConfig {
    /// Reduction settings of the maneuvering-target experiment:
    /// `Γ_p = 1e-5`, `Γ_a = 4`, at most 30 components, no L-scan.
    pub fn for_scenario(params: &ScenarioParams) -> Self {
        Self {
            survival_prob: params.survival_prob,
            detection_prob: params.detection_prob,
            clutter_intensity: params.clutter_intensity(),
            prune_threshold: 1e-5,
            absorb_threshold: 4.0,
            max_components: 30,
            lscan: LScan::Full,
        }
    }

    pub fn with_lscan(self, lscan: LScan) -> Self {
        Self { lscan, ..self }
    }

    pub fn diagnostics(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (name, v) in [
            ("survival_prob", self.survival_prob),
            ("detection_prob", self.detection_prob),
        ] {
            if !(0.0..=1.0).contains(&v) {
                out.push(format!("{name} {v} outside [0, 1]"));
            }
        }
        if !(self.clutter_intensity.is_finite() && self.clutter_intensity >= 0.0) {
            out.push(format!(
                "clutter_intensity {} must be >= 0",
                self.clutter_intensity
            ));
        }
        if !(self.prune_threshold >= 0.0) {
            out.push(format!(
                "prune_threshold {} must be >= 0",
                self.prune_threshold
            ));
        }
        if !(self.absorb_threshold >= 0.0) {
            out.push(format!(
                "absorb_threshold {} must be >= 0",
                self.absorb_threshold
            ));
        }
        if self.max_components < 1 {
            out.push("max_components must be >= 1".into());
        }
        if self.lscan == LScan::Window(0) {
            out.push("lscan window must be >= 1".into());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        match self.diagnostics().into_iter().next() {
            Some(first) => Err(Error::Parameter(first)),
            None => Ok(()),
        }
    }
}

/// The unlabeled measurement set received at time `time`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanSet {
    pub time: usize,
    pub measurements: Vec<DVector<f64>>,
}

impl ScanSet {
    pub fn new(time: usize, measurements: Vec<DVector<f64>>) -> Self {
        Self { time, measurements }
    }

    pub fn empty(time: usize) -> Self {
        Self::new(time, Vec::new())
    }

    pub fn len(&self) -> usize {
        self.measurements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measurements.is_empty()
    }
}

/// Step-wise filter: holds the models and the current posterior mixture.
#[derive(Debug, Clone)]
pub struct MmTphdFilter {
    modes: ModeSet,
    birth: BirthModel,
    measurement: MeasurementModel,
    config: FilterConfig,
    posterior: TrajectoryMixture,
}

impl MmTphdFilter {
    pub fn new(
        modes: ModeSet,
        birth: BirthModel,
        measurement: MeasurementModel,
        config: FilterConfig,
    ) -> Result<Self> {
        config.validate()?;
        let nx = modes.state_dim();
        if measurement.state_dim() != nx {
            return Err(Error::dim(format!(
                "measurement matrix has {} columns, state dimension is {nx}",
                measurement.state_dim()
            )));
        }
        for c in birth.components() {
            if c.mean.len() != nx {
                return Err(Error::dim("birth mean does not match state dimension"));
            }
            if c.mode >= modes.len() {
                return Err(Error::Range {
                    what: "mode",
                    index: c.mode,
                    lo: 0,
                    hi: modes.len() - 1,
                });
            }
        }
        Ok(Self {
            modes,
            birth,
            measurement,
            config,
            posterior: TrajectoryMixture::empty(0, nx),
        })
    }

    pub fn time(&self) -> usize {
        self.posterior.time()
    }

    pub fn posterior(&self) -> &TrajectoryMixture {
        &self.posterior
    }

    pub fn config(&self) -> &FilterConfig {
        &self.config
    }

    /// Processes the scan for the next time step and returns the estimated
    /// alive trajectories.
    pub fn step(&mut self, scan: &ScanSet) -> Result<Vec<TrajectoryEstimate>> {
        let expected = self.time() + 1;
        if scan.time != expected {
            return Err(Error::Sequencing {
                expected,
                got: scan.time,
            });
        }
        let cfg = &self.config;
        let predicted = predict(&self.posterior, &self.modes, &self.birth, cfg)?;
        let windowed = lscan_truncate(&predicted, cfg.lscan);
        let updated = update_pruned(
            &windowed,
            scan,
            &self.measurement,
            cfg,
            cfg.prune_threshold,
        )?;
        let absorbed = absorb(&updated, cfg.absorb_threshold);
        self.posterior = cap(&absorbed, cfg.max_components);
        Ok(extract_estimates(&self.posterior))
    }
}

/// Per-step outputs of [`run_filter`].
#[derive(Debug, Clone)]
pub struct FilterOutput {
    pub estimates: Vec<Vec<TrajectoryEstimate>>,
    pub mixtures: Vec<TrajectoryMixture>,
}

/// Runs the filter over scans stamped `1..=K` and keeps every posterior.
pub fn run_filter(
    scans: &[ScanSet],
    modes: &ModeSet,
    birth: &BirthModel,
    measurement: &MeasurementModel,
    config: &FilterConfig,
) -> Result<FilterOutput> {
    let mut filter = MmTphdFilter::new(
        modes.clone(),
        birth.clone(),
        measurement.clone(),
        *config,
    )?;
    let mut out = FilterOutput {
        estimates: Vec::with_capacity(scans.len()),
        mixtures: Vec::with_capacity(scans.len()),
    };
    for scan in scans {
        out.estimates.push(filter.step(scan)?);
        out.mixtures.push(filter.posterior().clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::maneuvering_scenario;

    #[test]
    fn lscan_parses_and_serializes() {
        assert_eq!("full".parse::<LScan>().unwrap(), LScan::Full);
        assert_eq!("5".parse::<LScan>().unwrap(), LScan::Window(5));
        assert!("0".parse::<LScan>().is_err());
        assert!("abc".parse::<LScan>().is_err());
        let v: Vec<LScan> = serde_json::from_str(r#"[1, 2, "full"]"#).unwrap();
        assert_eq!(v, vec![LScan::Window(1), LScan::Window(2), LScan::Full]);
        assert_eq!(serde_json::to_string(&v).unwrap(), r#"[1,2,"full"]"#);
        assert!(serde_json::from_str::<LScan>("0").is_err());
    }

    #[test]
    fn config_diagnostics() {
        let s = maneuvering_scenario();
        let cfg = FilterConfig::for_scenario(&s.params);
        assert!(cfg.diagnostics().is_empty());
        let bad = FilterConfig {
            prune_threshold: -1.0,
            max_components: 0,
            ..cfg
        };
        let d = bad.diagnostics();
        assert!(d.iter().any(|l| l.contains("prune_threshold")));
        assert!(d.iter().any(|l| l.contains("max_components")));
    }

    #[test]
    fn empty_run() {
        let s = maneuvering_scenario();
        let cfg = FilterConfig::for_scenario(&s.params);
        let out = run_filter(&[], &s.modes, &s.birth, &s.measurement, &cfg).unwrap();
        assert!(out.estimates.is_empty() && out.mixtures.is_empty());
    }

    #[test]
    fn time_gap_is_sequencing_error() {
        let s = maneuvering_scenario();
        let cfg = FilterConfig::for_scenario(&s.params);
        let scans = [ScanSet::empty(1), ScanSet::empty(3)];
        let err = run_filter(&scans, &s.modes, &s.birth, &s.measurement, &cfg).unwrap_err();
        assert_eq!(
            err,
            Error::Sequencing {
                expected: 2,
                got: 3
            }
        );
    }
}
