//! Ground-truth and measurement simulation.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::ScanSet;
use crate::models::{ModeSet, Region, Scenario};

/// Which mode drives the transition from `t` to `t + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeTiming {
    /// Draw `o^{t+1}` from the switching matrix, then move with `F(o^{t+1})`.
    #[default]
    SwitchThenMove,
    /// Move with `F(o^t)`, then draw `o^{t+1}`.
    MoveThenSwitch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetScript {
    pub birth: usize,
    /// Last time step at which the target is alive.
    pub death: usize,
    /// Index into the scenario's distinct birth locations; the target starts
    /// exactly at that mean.
    pub birth_component: usize,
    /// Initial mode; drawn from the birth mode distribution when absent.
    #[serde(default)]
    pub initial_mode: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioScript {
    pub targets: Vec<TargetScript>,
    pub duration: usize,
    pub region: Region,
    #[serde(default)]
    pub mode_timing: ModeTiming,
}

impl ScenarioScript {
    /// Five targets born at 1, 5, 5, 10, 10 and dying at 40, 40, 50, 50, 60,
    /// each starting at the matching birth location.
    pub fn maneuvering() -> Self {
        let births = [1, 5, 5, 10, 10];
        let deaths = [40, 40, 50, 50, 60];
        Self {
            targets: births
                .iter()
                .zip(deaths)
                .enumerate()
                .map(|(i, (&birth, death))| TargetScript {
                    birth,
                    death,
                    birth_component: i,
                    initial_mode: None,
                })
                .collect(),
            duration: 60,
            region: Region {
                x_min: 0.0,
                x_max: 10_000.0,
                y_min: 0.0,
                y_max: 10_000.0,
            },
            mode_timing: ModeTiming::SwitchThenMove,
        }
    }

    pub fn diagnostics(&self, n_locations: usize, n_modes: usize) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.region.area() > 0.0) {
            out.push("script region has non-positive area".into());
        }
        for (i, t) in self.targets.iter().enumerate() {
            if !(1 <= t.birth && t.birth <= t.death && t.death <= self.duration) {
                out.push(format!(
                    "target {i}: need 1 <= birth ({}) <= death ({}) <= duration ({})",
                    t.birth, t.death, self.duration
                ));
            }
            if t.birth_component >= n_locations {
                out.push(format!(
                    "target {i}: birth component {} out of range (have {n_locations})",
                    t.birth_component
                ));
            }
            if t.initial_mode.is_some_and(|m| m >= n_modes) {
                out.push(format!("target {i}: initial mode out of range"));
            }
        }
        out
    }

    /// Number of targets alive at each time `1..=duration`.
    pub fn alive_counts(&self) -> Vec<usize> {
        (1..=self.duration)
            .map(|k| {
                self.targets
                    .iter()
                    .filter(|t| t.birth <= k && k <= t.death)
                    .count()
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthTrajectory {
    pub birth: usize,
    pub death: usize,
    pub states: Vec<DVector<f64>>,
    pub modes: Vec<usize>,
}

impl GroundTruthTrajectory {
    pub fn is_alive(&self, k: usize) -> bool {
        self.birth <= k && k <= self.death
    }

    pub fn state_at(&self, k: usize) -> Option<&DVector<f64>> {
        if self.is_alive(k) {
            self.states.get(k - self.birth)
        } else {
            None
        }
    }
}

/// Matrix square root `G` with `G Gᵀ = cov` for a PSD `cov`; negative
/// round-off eigenvalues are clamped to zero.
fn psd_factor(cov: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new((cov + cov.transpose()) * 0.5);
    let sqrt = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&sqrt)
}

fn gaussian_noise(rng: &mut impl Rng, factor: &DMatrix<f64>) -> DVector<f64> {
    let n = DVector::from_iterator(
        factor.ncols(),
        (0..factor.ncols()).map(|_| rng.sample::<f64, _>(StandardNormal)),
    );
    factor * n
}

/// Simulates every scripted target. Deterministic in `seed`.
pub fn generate_truth(
    script: &ScenarioScript,
    modes: &ModeSet,
    birth_locations: &[DVector<f64>],
    seed: u64,
) -> Result<Vec<GroundTruthTrajectory>> {
    if let Some(first) = script
        .diagnostics(birth_locations.len(), modes.len())
        .into_iter()
        .next()
    {
        return Err(Error::Parameter(first));
    }
    let nx = modes.state_dim();
    if birth_locations.iter().any(|m| m.len() != nx) {
        return Err(Error::dim("birth location does not match state dimension"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let factors: Vec<DMatrix<f64>> = modes
        .models()
        .iter()
        .map(|m| psd_factor(&m.process_noise))
        .collect();
    let birth_dist = WeightedIndex::new(modes.birth_mode_probs().iter())
        .map_err(|e| Error::param(format!("birth mode distribution: {e}")))?;
    let rows: Vec<WeightedIndex<f64>> = modes
        .tpm()
        .row_iter()
        .map(|r| WeightedIndex::new(r.iter().copied()))
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::param(format!("switching matrix: {e}")))?;

    let mut out = Vec::with_capacity(script.targets.len());
    for t in &script.targets {
        let mut mode = t.initial_mode.unwrap_or_else(|| birth_dist.sample(&mut rng));
        let mut x = birth_locations[t.birth_component].clone();
        let mut states = vec![x.clone()];
        let mut mode_seq = vec![mode];
        for _ in t.birth..t.death {
            let drive = match script.mode_timing {
                ModeTiming::SwitchThenMove => {
                    mode = rows[mode].sample(&mut rng);
                    mode
                }
                ModeTiming::MoveThenSwitch => mode,
            };
            let model = modes.model(drive);
            x = &model.transition * &x + gaussian_noise(&mut rng, &factors[drive]);
            if script.mode_timing == ModeTiming::MoveThenSwitch {
                mode = rows[mode].sample(&mut rng);
            }
            states.push(x.clone());
            mode_seq.push(mode);
        }
        out.push(GroundTruthTrajectory {
            birth: t.birth,
            death: t.death,
            states,
            modes: mode_seq,
        });
    }
    Ok(out)
}

/// Sensor description used for scan generation. The noise covariance only
/// needs to be PSD here, so noiseless sensors can be simulated.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorParams {
    pub matrix: DMatrix<f64>,
    pub noise_cov: DMatrix<f64>,
    pub detection_prob: f64,
    pub clutter_rate: f64,
    /// Clutter is uniform over this region in the first two measurement
    /// coordinates.
    pub region: Region,
}

impl SensorParams {
    pub fn from_scenario(s: &Scenario) -> Self {
        Self {
            matrix: s.measurement.matrix.clone(),
            noise_cov: s.measurement.noise_cov.clone(),
            detection_prob: s.params.detection_prob,
            clutter_rate: s.params.clutter_rate,
            region: s.params.region,
        }
    }
}

/// Generates scans for times `1..=duration`: each alive target is detected
/// with probability `P_D`, clutter count is Poisson with uniform positions,
/// and each scan is shuffled. Deterministic in `seed`.
pub fn generate_scans(
    truth: &[GroundTruthTrajectory],
    sensor: &SensorParams,
    duration: usize,
    seed: u64,
) -> Result<Vec<ScanSet>> {
    let nz = sensor.matrix.nrows();
    if nz != 2 {
        return Err(Error::dim(format!(
            "clutter generation needs a 2-D measurement space, got {nz}"
        )));
    }
    if !(sensor.region.area() > 0.0) {
        return Err(Error::param("region has non-positive area"));
    }
    if !(0.0..=1.0).contains(&sensor.detection_prob) {
        return Err(Error::param("detection probability outside [0, 1]"));
    }
    let clutter = if sensor.clutter_rate > 0.0 {
        Some(
            Poisson::new(sensor.clutter_rate)
                .map_err(|e| Error::param(format!("clutter rate: {e}")))?,
        )
    } else if sensor.clutter_rate == 0.0 {
        None
    } else {
        return Err(Error::param("clutter rate must be >= 0"));
    };
    let factor = psd_factor(&sensor.noise_cov);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = sensor.region;

    let mut scans = Vec::with_capacity(duration);
    for k in 1..=duration {
        let mut zs = Vec::new();
        for t in truth {
            if let Some(x) = t.state_at(k) {
                if rng.gen::<f64>() < sensor.detection_prob {
                    zs.push(&sensor.matrix * x + gaussian_noise(&mut rng, &factor));
                }
            }
        }
        let n_clutter = clutter.map_or(0, |p| p.sample(&mut rng) as usize);
        for _ in 0..n_clutter {
            let x = rng.gen_range(r.x_min..r.x_max);
            let y = rng.gen_range(r.y_min..r.y_max);
            zs.push(DVector::from_vec(vec![x, y]));
        }
        zs.shuffle(&mut rng);
        scans.push(ScanSet::new(k, zs));
    }
    Ok(scans)
}

/// Truth and scans for one Monte Carlo run; scans use a seed derived from
/// `seed` so both streams are independent.
pub fn simulate(
    scenario: &Scenario,
    script: &ScenarioScript,
    seed: u64,
) -> Result<(Vec<GroundTruthTrajectory>, Vec<ScanSet>)> {
    let truth = generate_truth(script, &scenario.modes, &scenario.birth.locations(), seed)?;
    let scans = generate_scans(
        &truth,
        &SensorParams::from_scenario(scenario),
        script.duration,
        seed ^ 0x9E37_79B9_7F4A_7C15,
    )?;
    Ok((truth, scans))
}
