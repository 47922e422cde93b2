//! Jump-Markov model bank.
//!
//! State ordering throughout is `(p_x, v_x, p_y, v_y)`; positions in metres,
//! velocities in metres per second. Mode indices are zero-based.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajgauss::{check_psd, check_symmetric};

const STOCHASTIC_TOL: f64 = 1e-12;
const TURN_RATE_EPS: f64 = 1e-6;

/// Linear-Gaussian motion model `x' = F x + w`, `w ~ N(0, Q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionModel {
    pub transition: DMatrix<f64>,
    pub process_noise: DMatrix<f64>,
}

/// `σ² · I₂ ⊗ [[T⁴/4, T³/2], [T³/2, T²]]`
fn white_accel_noise(dt: f64, sigma: f64) -> DMatrix<f64> {
    let s2 = sigma * sigma;
    let b = [
        s2 * dt.powi(4) / 4.0,
        s2 * dt.powi(3) / 2.0,
        s2 * dt.powi(3) / 2.0,
        s2 * dt * dt,
    ];
    let mut q = DMatrix::zeros(4, 4);
    for blk in [0, 2] {
        q[(blk, blk)] = b[0];
        q[(blk, blk + 1)] = b[1];
        q[(blk + 1, blk)] = b[2];
        q[(blk + 1, blk + 1)] = b[3];
    }
    q
}

fn check_interval(dt: f64, sigma: f64) -> Result<()> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::param(format!(
            "sampling interval must be > 0, got {dt}"
        )));
    }
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::param(format!(
            "process noise std must be >= 0, got {sigma}"
        )));
    }
    Ok(())
}

impl MotionModel {
    pub fn new(transition: DMatrix<f64>, process_noise: DMatrix<f64>) -> Result<Self> {
        if !transition.is_square() || transition.shape() != process_noise.shape() {
            return Err(Error::dim(format!(
                "transition {:?} and process noise {:?} must be square and equal-sized",
                transition.shape(),
                process_noise.shape()
            )));
        }
        if transition.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("transition matrix has non-finite entries"));
        }
        check_psd(&process_noise, "process noise")?;
        Ok(Self {
            transition,
            process_noise,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.transition.nrows()
    }

    /// Nearly-constant-velocity model in two dimensions.
    pub fn constant_velocity(dt: f64, sigma: f64) -> Result<Self> {
        check_interval(dt, sigma)?;
        let mut f = DMatrix::identity(4, 4);
        f[(0, 1)] = dt;
        f[(2, 3)] = dt;
        Ok(Self {
            transition: f,
            process_noise: white_accel_noise(dt, sigma),
        })
    }

    /// Coordinated turn with known turn rate `omega` (rad/s, positive is
    /// counterclockwise). Falls back to the constant-velocity limit when
    /// `|omega·dt|` is below `1e-6`.
    pub fn coordinated_turn(omega: f64, dt: f64, sigma: f64) -> Result<Self> {
        check_interval(dt, sigma)?;
        if !omega.is_finite() {
            return Err(Error::param("turn rate must be finite"));
        }
        let wt = omega * dt;
        let (sin_over, vers_over, c, s) = if wt.abs() < TURN_RATE_EPS {
            (dt, 0.0, 1.0, 0.0)
        } else {
            (wt.sin() / omega, (1.0 - wt.cos()) / omega, wt.cos(), wt.sin())
        };
        #[rustfmt::skip]
        let f = DMatrix::from_row_slice(4, 4, &[
            1.0, sin_over,  0.0, -vers_over,
            0.0, c,         0.0, -s,
            0.0, vers_over, 1.0, sin_over,
            0.0, s,         0.0, c,
        ]);
        Ok(Self {
            transition: f,
            process_noise: white_accel_noise(dt, sigma),
        })
    }
}

/// Motion models indexed by mode, with the Markov switching matrix and the
/// mode distribution of newborn targets.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeSet {
    models: Vec<MotionModel>,
    /// Row `o'` holds `υ(· | o')`.
    tpm: DMatrix<f64>,
    birth_mode_probs: DVector<f64>,
}

/// Collects every violation of the mode-set invariants.
fn mode_set_violations(
    models: &[MotionModel],
    tpm: &DMatrix<f64>,
    birth_mode_probs: &DVector<f64>,
) -> Vec<String> {
    let mut out = Vec::new();
    let n = models.len();
    if n == 0 {
        out.push("mode set is empty".to_string());
        return out;
    }
    let nx = models[0].state_dim();
    for (i, m) in models.iter().enumerate() {
        if m.state_dim() != nx {
            out.push(format!("mode {i} has state dimension {}", m.state_dim()));
        }
    }
    if tpm.shape() != (n, n) {
        out.push(format!("tpm is {:?}, expected {n}x{n}", tpm.shape()));
    } else {
        for (r, row) in tpm.row_iter().enumerate() {
            if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                out.push(format!("tpm row {r} has entries outside [0, 1]"));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > STOCHASTIC_TOL {
                out.push(format!("tpm row {r} sums to {s}, expected 1"));
            }
        }
    }
    if birth_mode_probs.len() != n {
        out.push(format!(
            "birth mode distribution has {} entries, expected {n}",
            birth_mode_probs.len()
        ));
    } else {
        if birth_mode_probs.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            out.push("birth mode distribution has entries outside [0, 1]".to_string());
        }
        let s: f64 = birth_mode_probs.iter().sum();
        if (s - 1.0).abs() > STOCHASTIC_TOL {
            out.push(format!("birth mode distribution sums to {s}, expected 1"));
        }
    }
    out
}

impl ModeSet {
    pub fn new(
        models: Vec<MotionModel>,
        tpm: DMatrix<f64>,
        birth_mode_probs: DVector<f64>,
    ) -> Result<Self> {
        let v = mode_set_violations(&models, &tpm, &birth_mode_probs);
        if let Some(first) = v.into_iter().next() {
            return Err(Error::Parameter(first));
        }
        Ok(Self {
            models,
            tpm,
            birth_mode_probs,
        })
    }

    /// A single motion model with `υ = 1`.
    pub fn single(model: MotionModel) -> Self {
        Self {
            models: vec![model],
            tpm: DMatrix::from_element(1, 1, 1.0),
            birth_mode_probs: DVector::from_element(1, 1.0),
        }
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.models[0].state_dim()
    }

    pub fn models(&self) -> &[MotionModel] {
        &self.models
    }

    pub fn model(&self, mode: usize) -> &MotionModel {
        &self.models[mode]
    }

    pub fn tpm(&self) -> &DMatrix<f64> {
        &self.tpm
    }

    pub fn birth_mode_probs(&self) -> &DVector<f64> {
        &self.birth_mode_probs
    }

    /// `υ(next | prev)`.
    pub fn mode_switch_prob(&self, prev: usize, next: usize) -> Result<f64> {
        let n = self.len();
        for idx in [prev, next] {
            if idx >= n {
                return Err(Error::Range {
                    what: "mode",
                    index: idx,
                    lo: 0,
                    hi: n - 1,
                });
            }
        }
        Ok(self.tpm[(prev, next)])
    }
}

/// Linear-Gaussian measurement `z = H x + v`, `v ~ N(0, R)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementModel {
    pub matrix: DMatrix<f64>,
    pub noise_cov: DMatrix<f64>,
}

impl MeasurementModel {
    pub fn new(matrix: DMatrix<f64>, noise_cov: DMatrix<f64>) -> Result<Self> {
        if noise_cov.shape() != (matrix.nrows(), matrix.nrows()) {
            return Err(Error::dim(format!(
                "measurement noise {:?} does not match H {:?}",
                noise_cov.shape(),
                matrix.shape()
            )));
        }
        check_symmetric(&noise_cov, "measurement noise")?;
        if noise_cov.clone().cholesky().is_none() {
            return Err(Error::param("measurement noise must be positive definite"));
        }
        Ok(Self { matrix, noise_cov })
    }

    /// Position-only measurement of `(p_x, v_x, p_y, v_y)` with isotropic
    /// noise `sigma` (metres).
    pub fn position(sigma: f64) -> Result<Self> {
        #[rustfmt::skip]
        let h = DMatrix::from_row_slice(2, 4, &[
            1.0, 0.0, 0.0, 0.0,
            0.0, 0.0, 1.0, 0.0,
        ]);
        Self::new(h, DMatrix::identity(2, 2) * (sigma * sigma))
    }

    pub fn meas_dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn state_dim(&self) -> usize {
        self.matrix.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BirthComponent {
    pub weight: f64,
    pub mode: usize,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// Gaussian-mixture birth intensity; every component is a length-one
/// trajectory tagged with a mode.
#[derive(Debug, Clone, PartialEq)]
pub struct BirthModel {
    components: Vec<BirthComponent>,
}

impl BirthModel {
    pub fn new(components: Vec<BirthComponent>) -> Result<Self> {
        for (i, c) in components.iter().enumerate() {
            if !(c.weight.is_finite() && c.weight >= 0.0) {
                return Err(Error::param(format!(
                    "birth component {i} has weight {}",
                    c.weight
                )));
            }
            if c.cov.shape() != (c.mean.len(), c.mean.len()) {
                return Err(Error::dim(format!("birth component {i} covariance shape")));
            }
            check_psd(&c.cov, "birth covariance")?;
        }
        Ok(Self { components })
    }

    /// Expands mode-free components `(weight, mean, cov)` over every mode,
    /// giving component `(j, o)` weight `weight_j · p(o)`. Ordering is by
    /// component, then mode.
    pub fn expand_over_modes(
        base: &[(f64, DVector<f64>, DMatrix<f64>)],
        mode_probs: &DVector<f64>,
    ) -> Result<Self> {
        let comps = base
            .iter()
            .flat_map(|(w, m, p)| {
                mode_probs.iter().enumerate().map(move |(o, po)| BirthComponent {
                    weight: w * po,
                    mode: o,
                    mean: m.clone(),
                    cov: p.clone(),
                })
            })
            .collect();
        Self::new(comps)
    }

    pub fn components(&self) -> &[BirthComponent] {
        &self.components
    }

    pub fn total_mass(&self) -> f64 {
        self.components.iter().map(|c| c.weight).sum()
    }

    /// Distinct component means in order of first appearance.
    pub fn locations(&self) -> Vec<DVector<f64>> {
        let mut out: Vec<DVector<f64>> = Vec::new();
        for c in &self.components {
            if !out.contains(&c.mean) {
                out.push(c.mean.clone());
            }
        }
        out
    }
}

/// Axis-aligned rectangular surveillance region over `(x, y)` positions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Region {
    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        (self.x_min..=self.x_max).contains(&x) && (self.y_min..=self.y_max).contains(&y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    pub sampling_interval: f64,
    pub survival_prob: f64,
    pub detection_prob: f64,
    /// Expected number of clutter returns per scan.
    pub clutter_rate: f64,
    pub region: Region,
    /// Number of scans `K`.
    pub duration: usize,
}

impl ScenarioParams {
    /// Uniform clutter intensity `λ_c / area` per square metre.
    pub fn clutter_intensity(&self) -> f64 {
        self.clutter_rate / self.region.area()
    }
}

/// Everything needed to simulate and filter one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub modes: ModeSet,
    pub measurement: MeasurementModel,
    pub birth: BirthModel,
    pub params: ScenarioParams,
}

pub const BIRTH_MEANS: [[f64; 4]; 5] = [
    [2000.0, 0.0, 1000.0, 0.0],
    [1000.0, 0.0, 5000.0, 0.0],
    [1500.0, 0.0, 6000.0, 0.0],
    [8500.0, 0.0, 4000.0, 0.0],
    [6000.0, 0.0, 6000.0, 0.0],
];

/// The three-mode maneuvering scenario: CV, CT at +10°/s, CT at −10°/s over a
/// 10 km × 10 km region for 60 one-second scans.
pub fn maneuvering_scenario() -> Scenario {
    maneuvering_scenario_config()
        .build()
        .expect("built-in scenario is valid")
}

pub fn maneuvering_scenario_config() -> ScenarioConfig {
    let dt = 1.0;
    let sigma_p = 5.0;
    let turn = 10f64.to_radians();
    let models = [
        MotionModel::constant_velocity(dt, sigma_p),
        MotionModel::coordinated_turn(turn, dt, sigma_p),
        MotionModel::coordinated_turn(-turn, dt, sigma_p),
    ];
    let modes = models
        .into_iter()
        .map(|m| {
            let m = m.expect("valid motion model");
            MotionModelConfig {
                transition: to_rows(&m.transition),
                process_noise: to_rows(&m.process_noise),
            }
        })
        .collect();
    let birth_cov = to_rows(&DMatrix::from_diagonal_element(4, 4, 100.0));
    ScenarioConfig {
        modes,
        tpm: vec![
            vec![0.8, 0.1, 0.1],
            vec![0.1, 0.8, 0.1],
            vec![0.1, 0.1, 0.8],
        ],
        birth_mode_probs: vec![0.4, 0.3, 0.3],
        measurement: MeasurementConfig {
            matrix: vec![vec![1.0, 0.0, 0.0, 0.0], vec![0.0, 0.0, 1.0, 0.0]],
            noise_cov: vec![vec![100.0, 0.0], vec![0.0, 100.0]],
        },
        birth: BIRTH_MEANS
            .iter()
            .map(|m| BirthComponentConfig {
                weight: 0.2,
                mean: m.to_vec(),
                cov: birth_cov.clone(),
            })
            .collect(),
        params: ScenarioParams {
            sampling_interval: dt,
            survival_prob: 0.99,
            detection_prob: 0.98,
            clutter_rate: 60.0,
            region: Region {
                x_min: 0.0,
                x_max: 10_000.0,
                y_min: 0.0,
                y_max: 10_000.0,
            },
            duration: 60,
        },
    }
}

pub(crate) fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub(crate) fn from_rows(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let nr = rows.len();
    let nc = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != nc) {
        return Err(Error::dim(format!("{what} has ragged rows")));
    }
    Ok(DMatrix::from_row_iterator(
        nr,
        nc,
        rows.iter().flatten().copied(),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionModelConfig {
    pub transition: Vec<Vec<f64>>,
    pub process_noise: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementConfig {
    pub matrix: Vec<Vec<f64>>,
    pub noise_cov: Vec<Vec<f64>>,
}

/// A mode-free birth component; its weight is split over modes by the
/// birth mode distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BirthComponentConfig {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
}

/// JSON form of a [`Scenario`]. Matrices are lists of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub modes: Vec<MotionModelConfig>,
    pub tpm: Vec<Vec<f64>>,
    pub birth_mode_probs: Vec<f64>,
    pub measurement: MeasurementConfig,
    pub birth: Vec<BirthComponentConfig>,
    #[serde(flatten)]
    pub params: ScenarioParams,
}

impl ScenarioConfig {
    /// Every invariant violation, as human-readable lines. Empty when the
    /// configuration is clean.
    pub fn diagnostics(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut models = Vec::new();
        for (i, m) in self.modes.iter().enumerate() {
            let built = from_rows(&m.transition, "transition").and_then(|f| {
                from_rows(&m.process_noise, "process noise").and_then(|q| MotionModel::new(f, q))
            });
            match built {
                Ok(m) => models.push(m),
                Err(e) => out.push(format!("mode {i}: {e}")),
            }
        }
        if models.len() == self.modes.len() {
            match from_rows(&self.tpm, "tpm") {
                Ok(tpm) => out.extend(mode_set_violations(
                    &models,
                    &tpm,
                    &DVector::from_vec(self.birth_mode_probs.clone()),
                )),
                Err(e) => out.push(e.to_string()),
            }
        }
        let nx = models.first().map(|m| m.state_dim());
        match from_rows(&self.measurement.matrix, "measurement matrix").and_then(|h| {
            from_rows(&self.measurement.noise_cov, "measurement noise")
                .and_then(|r| MeasurementModel::new(h, r))
        }) {
            Ok(mm) => {
                if nx.is_some_and(|nx| nx != mm.state_dim()) {
                    out.push("measurement matrix width does not match state dimension".into());
                }
            }
            Err(e) => out.push(format!("measurement: {e}")),
        }
        for (i, b) in self.birth.iter().enumerate() {
            if !(b.weight.is_finite() && b.weight >= 0.0) {
                out.push(format!("birth component {i} has weight {}", b.weight));
            }
            if nx.is_some_and(|nx| nx != b.mean.len()) {
                out.push(format!("birth component {i} mean has wrong dimension"));
            }
            match from_rows(&b.cov, "birth covariance") {
                Ok(c) if c.shape() == (b.mean.len(), b.mean.len()) => {
                    if let Err(e) = check_psd(&c, "birth covariance") {
                        out.push(format!("birth component {i}: {e}"));
                    }
                }
                Ok(_) => out.push(format!("birth component {i} covariance has wrong shape")),
                Err(e) => out.push(format!("birth component {i}: {e}")),
            }
        }
        let p = &self.params;
        if !(p.sampling_interval > 0.0) {
            out.push(format!("sampling_interval {} must be > 0", p.sampling_interval));
        }
        for (name, v) in [
            ("survival_prob", p.survival_prob),
            ("detection_prob", p.detection_prob),
        ] {
            if !(0.0..=1.0).contains(&v) {
                out.push(format!("{name} {v} outside [0, 1]"));
            }
        }
        if !(p.clutter_rate >= 0.0) {
            out.push(format!("clutter_rate {} must be >= 0", p.clutter_rate));
        }
        if !(p.region.area() > 0.0) {
            out.push("region has non-positive area".into());
        }
        out
    }

    pub fn build(&self) -> Result<Scenario> {
        if let Some(first) = self.diagnostics().into_iter().next() {
            return Err(Error::Parameter(first));
        }
        let models = self
            .modes
            .iter()
            .map(|m| {
                MotionModel::new(
                    from_rows(&m.transition, "transition")?,
                    from_rows(&m.process_noise, "process noise")?,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let probs = DVector::from_vec(self.birth_mode_probs.clone());
        let modes = ModeSet::new(models, from_rows(&self.tpm, "tpm")?, probs.clone())?;
        let measurement = MeasurementModel::new(
            from_rows(&self.measurement.matrix, "measurement matrix")?,
            from_rows(&self.measurement.noise_cov, "measurement noise")?,
        )?;
        let base = self
            .birth
            .iter()
            .map(|b| {
                Ok((
                    b.weight,
                    DVector::from_vec(b.mean.clone()),
                    from_rows(&b.cov, "birth covariance")?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        let birth = BirthModel::expand_over_modes(&base, &probs)?;
        Ok(Scenario {
            modes,
            measurement,
            birth,
            params: self.params,
        })
    }
}
