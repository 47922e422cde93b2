use std::fs::File;
use std::io::{self, BufReader, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use trajphd::io::{read_estimates_csv, read_truth_csv, write_errors_csv};
use trajphd::metric::MetricParams;
use trajphd_cli::{run_experiment, score, write_artifacts, ExperimentConfig};

#[derive(Parser)]
#[command(name = "trajphd", version, about = "Multiple-model trajectory PHD filter experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo sweep over L and write CSV/SVG artifacts.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Check a configuration; exits 0 only when it is clean.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Score exported estimates against exported truth.
    Score {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        estimates: PathBuf,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        #[arg(long, default_value_t = 10.0)]
        c: f64,
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
        /// State components compared by the metric.
        #[arg(long, value_delimiter = ',', default_value = "0,2")]
        positions: Vec<usize>,
        /// Write the error table here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn open(path: &PathBuf) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    ))
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run {
            config,
            runs,
            seed,
            out,
            jobs,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(r) = runs {
                cfg.runs = r;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(o) = out {
                cfg.out_dir = o;
            }
            if jobs.is_some() {
                cfg.jobs = jobs;
            }
            let result = run_experiment(&cfg)?;
            let files = write_artifacts(&result, &cfg, &cfg.out_dir)?;
            let means: Vec<String> = result
                .lscan
                .iter()
                .zip(result.rms_curves())
                .map(|(l, c)| format!("L={l}: {:.3}", c.iter().sum::<f64>() / c.len() as f64))
                .collect();
            println!("{} runs; time-averaged RMS error {}", cfg.runs, means.join(", "));
            println!("wrote {} files to {}", files.len(), cfg.out_dir.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let problems = cfg.diagnostics();
            if problems.is_empty() {
                println!("ok");
                Ok(ExitCode::SUCCESS)
            } else {
                for p in &problems {
                    println!("violation: {p}");
                }
                Ok(ExitCode::from(1))
            }
        }
        Command::Score {
            truth,
            estimates,
            p,
            c,
            gamma,
            positions,
            out,
        } => {
            let params = MetricParams::new(p, c, gamma)?;
            let truth = read_truth_csv(open(&truth)?)?;
            let estimates = read_estimates_csv(open(&estimates)?)?;
            let errors = score(&truth, &estimates, &params, &positions)?;
            match out {
                Some(path) => write_errors_csv(
                    File::create(&path).with_context(|| format!("creating {}", path.display()))?,
                    &errors,
                )?,
                None => {
                    let stdout = io::stdout();
                    let mut lock = stdout.lock();
                    write_errors_csv(&mut lock, &errors)?;
                    lock.flush()?;
                }
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
