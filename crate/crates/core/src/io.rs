//! JSON mixture dumps and CSV tables for truth, scans, estimates and errors.
//!
//! CSV files carry a header row; state columns are `x0, x1, …` and
//! measurement columns `z0, z1, …`. Numbers use Rust's shortest round-trip
//! formatting, so writing is deterministic and reading is lossless.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{ScanSet, TrajectoryEstimate};
use crate::models::{from_rows, to_rows};
use crate::sim::GroundTruthTrajectory;
use crate::trajgauss::{FrozenState, TrajectoryGaussian, TrajectoryMixture};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrozenDump {
    pub time: usize,
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
}

/// One component: `mean`/`cov` cover the live window, which ends at the
/// mixture time; `frozen` lists the older states oldest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentDump {
    pub beta: usize,
    pub length: usize,
    pub mode: usize,
    pub weight: f64,
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub frozen: Vec<FrozenDump>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureDump {
    pub time: usize,
    pub state_dim: usize,
    pub components: Vec<ComponentDump>,
}

impl MixtureDump {
    pub fn from_mixture(mix: &TrajectoryMixture) -> Self {
        let components = mix
            .components()
            .iter()
            .map(|c| ComponentDump {
                beta: c.birth(),
                length: c.length(),
                mode: c.mode(),
                weight: c.weight(),
                mean: c.live_mean().iter().copied().collect(),
                cov: to_rows(c.live_cov()),
                frozen: c
                    .frozen()
                    .iter()
                    .enumerate()
                    .map(|(s, f)| FrozenDump {
                        time: c.birth() + s,
                        mean: f.mean.iter().copied().collect(),
                        cov: to_rows(&f.cov),
                    })
                    .collect(),
            })
            .collect();
        Self {
            time: mix.time(),
            state_dim: mix.state_dim(),
            components,
        }
    }

    pub fn to_mixture(&self) -> Result<TrajectoryMixture> {
        let comps = self
            .components
            .iter()
            .map(|c| {
                let frozen = c
                    .frozen
                    .iter()
                    .map(|f| {
                        Ok(FrozenState {
                            mean: DVector::from_vec(f.mean.clone()),
                            cov: from_rows(&f.cov, "frozen covariance")?,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                let g = TrajectoryGaussian::with_frozen(
                    c.beta,
                    c.mode,
                    c.weight,
                    frozen,
                    DVector::from_vec(c.mean.clone()),
                    from_rows(&c.cov, "component covariance")?,
                    self.state_dim,
                )?;
                if g.length() != c.length {
                    return Err(Error::Format(format!(
                        "component length {} does not match its states ({})",
                        c.length,
                        g.length()
                    )));
                }
                Ok(g)
            })
            .collect::<Result<Vec<_>>>()?;
        TrajectoryMixture::new(self.time, self.state_dim, comps)
    }
}

pub fn mixture_to_json(mix: &TrajectoryMixture) -> Result<String> {
    Ok(serde_json::to_string_pretty(&MixtureDump::from_mixture(mix))?)
}

pub fn mixture_from_json(text: &str) -> Result<TrajectoryMixture> {
    serde_json::from_str::<MixtureDump>(text)?.to_mixture()
}

fn header(fixed: &[&str], prefix: &str, n: usize) -> Vec<String> {
    fixed
        .iter()
        .map(|s| s.to_string())
        .chain((0..n).map(|i| format!("{prefix}{i}")))
        .collect()
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, idx: usize, name: &str) -> Result<T> {
    let raw = rec
        .get(idx)
        .ok_or_else(|| Error::Format(format!("missing column {name}")))?;
    raw.trim()
        .parse()
        .map_err(|_| Error::Format(format!("bad {name} value {raw:?}")))
}

/// Columns of `prefix`-numbered values, in order, starting after `fixed`.
fn vector_columns(headers: &csv::StringRecord, fixed: &[&str], prefix: &str) -> Result<usize> {
    for (i, name) in fixed.iter().enumerate() {
        if headers.get(i).map(str::trim) != Some(*name) {
            return Err(Error::Format(format!("expected column {i} to be {name}")));
        }
    }
    let n = headers.len() - fixed.len();
    for i in 0..n {
        let want = format!("{prefix}{i}");
        if headers.get(fixed.len() + i).map(str::trim) != Some(want.as_str()) {
            return Err(Error::Format(format!("expected column {want}")));
        }
    }
    Ok(n)
}

fn vector(rec: &csv::StringRecord, from: usize, n: usize, prefix: &str) -> Result<DVector<f64>> {
    let v = (0..n)
        .map(|i| field(rec, from + i, &format!("{prefix}{i}")))
        .collect::<Result<Vec<f64>>>()?;
    Ok(DVector::from_vec(v))
}

fn row(fixed: Vec<String>, values: &DVector<f64>) -> Vec<String> {
    fixed
        .into_iter()
        .chain(values.iter().map(|v| v.to_string()))
        .collect()
}

const TRUTH_COLS: [&str; 3] = ["target", "time", "mode"];

/// One row per (target, time).
pub fn write_truth_csv<W: Write>(w: W, truth: &[GroundTruthTrajectory]) -> Result<()> {
    let n = truth.first().map_or(0, |t| t.states[0].len());
    let mut out = csv::Writer::from_writer(w);
    out.write_record(header(&TRUTH_COLS, "x", n))?;
    for (id, t) in truth.iter().enumerate() {
        for (s, (x, mode)) in t.states.iter().zip(&t.modes).enumerate() {
            out.write_record(row(
                vec![id.to_string(), (t.birth + s).to_string(), mode.to_string()],
                x,
            ))?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_truth_csv<R: Read>(r: R) -> Result<Vec<GroundTruthTrajectory>> {
    let mut rdr = csv::Reader::from_reader(r);
    let n = vector_columns(rdr.headers()?, &TRUTH_COLS, "x")?;
    let mut by_id: BTreeMap<usize, Vec<(usize, usize, DVector<f64>)>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let id: usize = field(&rec, 0, "target")?;
        by_id.entry(id).or_default().push((
            field(&rec, 1, "time")?,
            field(&rec, 2, "mode")?,
            vector(&rec, 3, n, "x")?,
        ));
    }
    by_id
        .into_iter()
        .map(|(id, mut rows)| {
            rows.sort_by_key(|r| r.0);
            let birth = rows[0].0;
            if rows.iter().enumerate().any(|(s, r)| r.0 != birth + s) {
                return Err(Error::Format(format!("target {id} has non-consecutive times")));
            }
            Ok(GroundTruthTrajectory {
                birth,
                death: birth + rows.len() - 1,
                modes: rows.iter().map(|r| r.1).collect(),
                states: rows.into_iter().map(|r| r.2).collect(),
            })
        })
        .collect()
}

const SCAN_COLS: [&str; 2] = ["time", "index"];

/// One row per (time, measurement).
pub fn write_scans_csv<W: Write>(w: W, scans: &[ScanSet]) -> Result<()> {
    let n = scans
        .iter()
        .find_map(|s| s.measurements.first().map(|z| z.len()))
        .unwrap_or(0);
    let mut out = csv::Writer::from_writer(w);
    out.write_record(header(&SCAN_COLS, "z", n))?;
    for s in scans {
        for (i, z) in s.measurements.iter().enumerate() {
            out.write_record(row(vec![s.time.to_string(), i.to_string()], z))?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Reads scans for times `1..=duration`; times without rows are empty scans.
pub fn read_scans_csv<R: Read>(r: R, duration: usize) -> Result<Vec<ScanSet>> {
    let mut rdr = csv::Reader::from_reader(r);
    let n = vector_columns(rdr.headers()?, &SCAN_COLS, "z")?;
    let mut scans: Vec<ScanSet> = (1..=duration).map(ScanSet::empty).collect();
    for rec in rdr.records() {
        let rec = rec?;
        let time: usize = field(&rec, 0, "time")?;
        if time == 0 || time > duration {
            return Err(Error::Range {
                what: "scan time",
                index: time,
                lo: 1,
                hi: duration,
            });
        }
        scans[time - 1].measurements.push(vector(&rec, 2, n, "z")?);
    }
    Ok(scans)
}

const ESTIMATE_COLS: [&str; 6] = ["step", "estimate", "birth", "time", "mode", "weight"];

/// One row per (step, estimate, time) for the estimate sets reported at each
/// listed step.
pub fn write_estimates_csv<W: Write>(
    w: W,
    steps: &[(usize, &[TrajectoryEstimate])],
) -> Result<()> {
    let n = steps
        .iter()
        .find_map(|(_, e)| e.first().map(|t| t.states[0].len()))
        .unwrap_or(0);
    let mut out = csv::Writer::from_writer(w);
    out.write_record(header(&ESTIMATE_COLS, "x", n))?;
    for (step, ests) in steps {
        for (id, e) in ests.iter().enumerate() {
            for (s, x) in e.states.iter().enumerate() {
                out.write_record(row(
                    vec![
                        step.to_string(),
                        id.to_string(),
                        e.birth.to_string(),
                        (e.birth + s).to_string(),
                        e.mode.to_string(),
                        e.weight.to_string(),
                    ],
                    x,
                ))?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// Estimate sets keyed by step. Steps without rows are absent.
pub fn read_estimates_csv<R: Read>(r: R) -> Result<BTreeMap<usize, Vec<TrajectoryEstimate>>> {
    let mut rdr = csv::Reader::from_reader(r);
    let n = vector_columns(rdr.headers()?, &ESTIMATE_COLS, "x")?;
    let mut out: BTreeMap<usize, BTreeMap<usize, TrajectoryEstimate>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let step: usize = field(&rec, 0, "step")?;
        let id: usize = field(&rec, 1, "estimate")?;
        let birth: usize = field(&rec, 2, "birth")?;
        let time: usize = field(&rec, 3, "time")?;
        let e = out.entry(step).or_default().entry(id).or_insert_with(|| TrajectoryEstimate {
            birth,
            states: Vec::new(),
            mode: 0,
            weight: 0.0,
        });
        if e.birth != birth || time != birth + e.states.len() {
            return Err(Error::Format(format!(
                "estimate {id} at step {step}: rows must be consecutive from its birth"
            )));
        }
        e.mode = field(&rec, 4, "mode")?;
        e.weight = field(&rec, 5, "weight")?;
        e.states.push(vector(&rec, 6, n, "x")?);
    }
    Ok(out
        .into_iter()
        .map(|(k, ests)| (k, ests.into_values().collect()))
        .collect())
}

/// Per-step errors as `step,error` rows, steps numbered from 1.
pub fn write_errors_csv<W: Write>(w: W, errors: &[f64]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["step", "error"])?;
    for (k, e) in errors.iter().enumerate() {
        out.write_record([(k + 1).to_string(), e.to_string()])?;
    }
    out.flush()?;
    Ok(())
}
