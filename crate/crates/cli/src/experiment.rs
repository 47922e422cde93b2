//! Seeded Monte Carlo sweeps over the L-scan window.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use anyhow::{Context, Result};
use nalgebra::DVector;
use serde::Serialize;
use trajphd::filter::{FilterConfig, LScan, MmTphdFilter, ScanSet, TrajectoryEstimate};
use trajphd::io::{write_estimates_csv, write_scans_csv, write_truth_csv};
use trajphd::metric::{lp_trajectory_distance, rms_error_curve, MetricParams, Trajectory};
use trajphd::models::Scenario;
use trajphd::sim::{simulate, GroundTruthTrajectory};

use crate::config::ExperimentConfig;
use crate::plot::{line_plot, Series};

fn project(x: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&i| x[i]))
}

/// Truth trajectories alive at `k`, with their histories up to `k`.
pub fn alive_truth(truth: &[GroundTruthTrajectory], k: usize, idx: &[usize]) -> Vec<Trajectory> {
    truth
        .iter()
        .filter(|t| t.is_alive(k))
        .map(|t| {
            Trajectory::new(
                t.birth,
                (t.birth..=k).map(|j| project(&t.states[j - t.birth], idx)).collect(),
            )
        })
        .collect()
}

pub fn estimate_trajectories(est: &[TrajectoryEstimate], idx: &[usize]) -> Vec<Trajectory> {
    est.iter()
        .map(|e| Trajectory::new(e.birth, e.states.iter().map(|s| project(s, idx)).collect()))
        .collect()
}

/// Distance at step `k` between the truths alive at `k` and the estimates
/// reported at `k`, over the window `[1, k]`.
pub fn score_step(
    truth: &[GroundTruthTrajectory],
    estimates: &[TrajectoryEstimate],
    k: usize,
    params: &MetricParams,
    idx: &[usize],
) -> Result<f64> {
    let x = alive_truth(truth, k, idx);
    let y = estimate_trajectories(estimates, idx);
    lp_trajectory_distance(&x, &y, params, 1..=k).with_context(|| format!("scoring step {k}"))
}

/// Outcome of one filter configuration on one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub errors: Vec<f64>,
    pub counts: Vec<usize>,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub seed: u64,
    /// One entry per configured L, in config order.
    pub tracks: Vec<Track>,
}

/// Full outputs of the first run, for snapshots and CSV export.
#[derive(Debug, Clone)]
pub struct FirstRun {
    pub truth: Vec<GroundTruthTrajectory>,
    pub scans: Vec<ScanSet>,
    /// Per L, per step.
    pub estimates: Vec<Vec<Vec<TrajectoryEstimate>>>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub lscan: Vec<LScan>,
    pub truth_counts: Vec<usize>,
    pub runs: Vec<RunResult>,
    pub first: FirstRun,
}

impl ExperimentResult {
    pub fn duration(&self) -> usize {
        self.truth_counts.len()
    }

    /// RMS error curve per L.
    pub fn rms_curves(&self) -> Vec<Vec<f64>> {
        (0..self.lscan.len())
            .map(|l| {
                let table: Vec<Vec<f64>> =
                    self.runs.iter().map(|r| r.tracks[l].errors.clone()).collect();
                rms_error_curve(&table).expect("at least one run of equal length")
            })
            .collect()
    }

    /// Mean estimated cardinality per L and step.
    pub fn mean_counts(&self) -> Vec<Vec<f64>> {
        let n = self.runs.len() as f64;
        (0..self.lscan.len())
            .map(|l| {
                (0..self.duration())
                    .map(|k| self.runs.iter().map(|r| r.tracks[l].counts[k] as f64).sum::<f64>() / n)
                    .collect()
            })
            .collect()
    }

    /// Mean wall-clock seconds per run, per L.
    pub fn mean_seconds(&self) -> Vec<f64> {
        let n = self.runs.len() as f64;
        (0..self.lscan.len())
            .map(|l| self.runs.iter().map(|r| r.tracks[l].seconds).sum::<f64>() / n)
            .collect()
    }
}

/// Runs the filter for each L on the same scans.
pub fn run_once(
    scenario: &Scenario,
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<(RunResult, FirstRun)> {
    let (truth, scans) = simulate(scenario, &cfg.script, seed)?;
    let base = FilterConfig::for_scenario(&scenario.params);
    let mut tracks = Vec::with_capacity(cfg.lscan.len());
    let mut all_estimates = Vec::with_capacity(cfg.lscan.len());
    for &l in &cfg.lscan {
        let mut filter = MmTphdFilter::new(
            scenario.modes.clone(),
            scenario.birth.clone(),
            scenario.measurement.clone(),
            cfg.filter_config(base, l),
        )?;
        let start = Instant::now();
        let estimates = scans
            .iter()
            .map(|s| filter.step(s))
            .collect::<trajphd::Result<Vec<_>>>()?;
        let seconds = start.elapsed().as_secs_f64();
        let errors = estimates
            .iter()
            .enumerate()
            .map(|(i, e)| score_step(&truth, e, i + 1, &cfg.metric, &cfg.position_indices))
            .collect::<Result<Vec<_>>>()?;
        tracks.push(Track {
            errors,
            counts: estimates.iter().map(Vec::len).collect(),
            seconds,
        });
        all_estimates.push(estimates);
    }
    Ok((
        RunResult { seed, tracks },
        FirstRun {
            truth,
            scans,
            estimates: all_estimates,
        },
    ))
}

/// Runs every Monte Carlo replica; run `r` uses seed `seed + r`. Results are
/// ordered by run index whatever the number of workers.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let problems = cfg.diagnostics();
    if !problems.is_empty() {
        anyhow::bail!("invalid configuration:\n  {}", problems.join("\n  "));
    }
    let scenario = cfg.scenario_config()?.build()?;
    let jobs = cfg
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .clamp(1, cfg.runs);

    type RunOutput = (RunResult, Option<FirstRun>);
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<RunOutput>>>> =
        Mutex::new((0..cfg.runs).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..jobs {
            s.spawn(|| loop {
                let r = next.fetch_add(1, Ordering::Relaxed);
                if r >= cfg.runs {
                    break;
                }
                let out = run_once(&scenario, cfg, cfg.seed.wrapping_add(r as u64))
                    .map(|(res, first)| (res, (r == 0).then_some(first)));
                let failed = out.is_err();
                slots.lock().unwrap()[r] = Some(out);
                if failed {
                    // stop handing out new work
                    next.store(cfg.runs, Ordering::Relaxed);
                }
            });
        }
    });

    let mut runs = Vec::with_capacity(cfg.runs);
    let mut first = None;
    for (r, slot) in slots.into_inner().unwrap().into_iter().enumerate() {
        let (res, f) = slot
            .unwrap_or_else(|| Err(anyhow::anyhow!("run {r} was not executed")))
            .with_context(|| format!("run {r}"))?;
        if f.is_some() {
            first = f;
        }
        runs.push(res);
    }
    Ok(ExperimentResult {
        lscan: cfg.lscan.clone(),
        truth_counts: cfg.script.alive_counts(),
        runs,
        first: first.expect("run 0 always executes"),
    })
}

fn label(l: LScan) -> String {
    format!("L={l}")
}

fn file_tag(l: LScan) -> String {
    format!("L{l}")
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    Ok(BufWriter::new(
        File::create(&path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

#[derive(Serialize)]
struct Metadata<'a> {
    config: &'a ExperimentConfig,
    metric_window: &'static str,
    metric_coordinates: &'a [usize],
    seeds: Vec<u64>,
    files: Vec<String>,
}

/// Writes every artifact into `dir`. All files except `timing.csv` are
/// byte-identical for identical configurations.
pub fn write_artifacts(result: &ExperimentResult, cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<String>> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut files = Vec::new();
    let k = result.duration();
    let rms = result.rms_curves();
    let counts = result.mean_counts();

    let mut w = csv::Writer::from_writer(create(dir, "rms.csv")?);
    w.write_record(std::iter::once("step".to_string()).chain(result.lscan.iter().map(|&l| label(l))))?;
    for t in 0..k {
        w.write_record(
            std::iter::once((t + 1).to_string()).chain(rms.iter().map(|c| c[t].to_string())),
        )?;
    }
    w.flush()?;
    files.push("rms.csv".to_string());

    let mut w = csv::Writer::from_writer(create(dir, "cardinality.csv")?);
    w.write_record(
        ["step", "truth"]
            .into_iter()
            .map(String::from)
            .chain(result.lscan.iter().map(|&l| label(l))),
    )?;
    for t in 0..k {
        w.write_record(
            [(t + 1).to_string(), result.truth_counts[t].to_string()]
                .into_iter()
                .chain(counts.iter().map(|c| c[t].to_string())),
        )?;
    }
    w.flush()?;
    files.push("cardinality.csv".to_string());

    let mut w = csv::Writer::from_writer(create(dir, "timing.csv")?);
    w.write_record(["run", "seed", "lscan", "seconds"])?;
    for (r, run) in result.runs.iter().enumerate() {
        for (l, tr) in result.lscan.iter().zip(&run.tracks) {
            w.write_record([r.to_string(), run.seed.to_string(), l.to_string(), tr.seconds.to_string()])?;
        }
    }
    w.flush()?;
    files.push("timing.csv".to_string());

    let first = &result.first;
    write_truth_csv(create(dir, "truth.csv")?, &first.truth)?;
    write_scans_csv(create(dir, "scans.csv")?, &first.scans)?;
    files.push("truth.csv".to_string());
    files.push("scans.csv".to_string());
    for (l, est) in result.lscan.iter().zip(&first.estimates) {
        let all: Vec<(usize, &[TrajectoryEstimate])> =
            est.iter().enumerate().map(|(i, e)| (i + 1, e.as_slice())).collect();
        let name = format!("estimates_{}.csv", file_tag(*l));
        write_estimates_csv(create(dir, &name)?, &all)?;
        files.push(name);
        let snaps: Vec<(usize, &[TrajectoryEstimate])> = cfg
            .snapshot_steps
            .iter()
            .map(|&s| (s, est[s - 1].as_slice()))
            .collect();
        let name = format!("snapshots_{}.csv", file_tag(*l));
        write_estimates_csv(create(dir, &name)?, &snaps)?;
        files.push(name);
    }

    let series: Vec<Series> = result
        .lscan
        .iter()
        .zip(&rms)
        .map(|(&l, c)| Series {
            label: label(l),
            values: c.clone(),
        })
        .collect();
    let svg = line_plot("RMS trajectory metric error", "time step", "RMS error", &series);
    create(dir, "rms.svg")?.write_all(svg.as_bytes())?;
    files.push("rms.svg".to_string());

    files.push("metadata.json".to_string());
    // worker count does not affect results, so keep it out of the record
    let recorded = ExperimentConfig {
        jobs: None,
        ..cfg.clone()
    };
    let meta = Metadata {
        config: &recorded,
        metric_window: "[1, k] at each step k",
        metric_coordinates: &cfg.position_indices,
        seeds: result.runs.iter().map(|r| r.seed).collect(),
        files: files.clone(),
    };
    let mut w = create(dir, "metadata.json")?;
    serde_json::to_writer_pretty(&mut w, &meta)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(files)
}
