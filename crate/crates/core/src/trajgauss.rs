//! Gaussian densities over whole trajectories.
//!
//! A trajectory born at time `β` with length `l` is the stacked vector
//! `x^{β}, …, x^{β+l-1}` (oldest first). A [`TrajectoryGaussian`] keeps the
//! joint Gaussian over the most recent *live* states and, once L-scan
//! truncation has run, a prefix of *frozen* states that are stored as
//! independent per-step Gaussians. Without truncation the frozen prefix is
//! empty and the live part covers the whole trajectory.

use std::ops::RangeInclusive;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-9;
const PSD_TOL: f64 = 1e-9;

fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Relative symmetry check: `‖U − Uᵀ‖_∞ ≤ 1e-9 (1 + ‖U‖_∞)`.
pub fn check_symmetric(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if !m.is_square() {
        return Err(Error::dim(format!(
            "{what} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::param(format!("{what} has non-finite entries")));
    }
    let asym = inf_norm(&(m - m.transpose()));
    if asym > SYMMETRY_TOL * (1.0 + inf_norm(m)) {
        return Err(Error::param(format!(
            "{what} is not symmetric (asymmetry {asym:e})"
        )));
    }
    Ok(())
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let sym = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Symmetric positive semidefinite check with eigenvalue floor
/// `-tol · ‖U‖_∞`.
pub fn check_psd_with(m: &DMatrix<f64>, what: &str, tol: f64) -> Result<()> {
    check_symmetric(m, what)?;
    let floor = -tol * inf_norm(m).max(f64::MIN_POSITIVE);
    let min_eig = min_eigenvalue(m);
    if min_eig < floor {
        return Err(Error::param(format!(
            "{what} is not positive semidefinite (min eigenvalue {min_eig:e})"
        )));
    }
    Ok(())
}

pub fn check_psd(m: &DMatrix<f64>, what: &str) -> Result<()> {
    check_psd_with(m, what, PSD_TOL)
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Mean and covariance of a single state.
#[derive(Debug, Clone, PartialEq)]
pub struct StateMarginal {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// A state outside the L-scan window, kept as an independent Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenState {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// One weighted Gaussian component over a trajectory, tagged with its birth
/// time and current motion mode.
///
/// Values are immutable once built. Covariances and the frozen prefix are
/// reference counted so that the many children of one component (one per
/// mode, one per measurement) share storage.
#[derive(Debug, Clone)]
pub struct TrajectoryGaussian {
    birth: usize,
    mode: usize,
    weight: f64,
    state_dim: usize,
    frozen: Arc<Vec<FrozenState>>,
    mean: DVector<f64>,
    cov: Arc<DMatrix<f64>>,
}

impl PartialEq for TrajectoryGaussian {
    fn eq(&self, other: &Self) -> bool {
        self.birth == other.birth
            && self.mode == other.mode
            && self.weight.to_bits() == other.weight.to_bits()
            && self.state_dim == other.state_dim
            && *self.frozen == *other.frozen
            && self.mean == other.mean
            && *self.cov == *other.cov
    }
}

impl TrajectoryGaussian {
    /// Builds a component with no frozen prefix; `mean` stacks `l` states of
    /// dimension `state_dim`, oldest first.
    pub fn new(
        birth: usize,
        mode: usize,
        weight: f64,
        mean: DVector<f64>,
        cov: DMatrix<f64>,
        state_dim: usize,
    ) -> Result<Self> {
        Self::with_frozen(birth, mode, weight, Vec::new(), mean, cov, state_dim)
    }

    /// Builds a component whose oldest states are the given frozen prefix and
    /// whose remaining states are jointly Gaussian.
    pub fn with_frozen(
        birth: usize,
        mode: usize,
        weight: f64,
        frozen: Vec<FrozenState>,
        mean: DVector<f64>,
        cov: DMatrix<f64>,
        state_dim: usize,
    ) -> Result<Self> {
        if birth < 1 {
            return Err(Error::param("birth time must be >= 1"));
        }
        if state_dim == 0 {
            return Err(Error::param("state dimension must be >= 1"));
        }
        if !(weight.is_finite() && weight >= 0.0) {
            return Err(Error::param(format!(
                "weight must be finite and >= 0, got {weight}"
            )));
        }
        if mean.is_empty() || !mean.len().is_multiple_of(state_dim) {
            return Err(Error::dim(format!(
                "mean length {} is not a positive multiple of {state_dim}",
                mean.len()
            )));
        }
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::dim(format!(
                "covariance is {}x{}, expected {n}x{n}",
                cov.nrows(),
                cov.ncols(),
                n = mean.len()
            )));
        }
        check_symmetric(&cov, "trajectory covariance")?;
        for f in &frozen {
            if f.mean.len() != state_dim || f.cov.shape() != (state_dim, state_dim) {
                return Err(Error::dim("frozen state has wrong dimension"));
            }
            check_symmetric(&f.cov, "frozen covariance")?;
        }
        Ok(Self::from_raw(
            birth,
            mode,
            weight,
            state_dim,
            Arc::new(frozen),
            mean,
            Arc::new(cov),
        ))
    }

    pub(crate) fn from_raw(
        birth: usize,
        mode: usize,
        weight: f64,
        state_dim: usize,
        frozen: Arc<Vec<FrozenState>>,
        mean: DVector<f64>,
        cov: Arc<DMatrix<f64>>,
    ) -> Self {
        debug_assert_eq!(mean.len() % state_dim, 0);
        debug_assert_eq!(cov.nrows(), mean.len());
        Self {
            birth,
            mode,
            weight,
            state_dim,
            frozen,
            mean,
            cov,
        }
    }

    pub fn birth(&self) -> usize {
        self.birth
    }

    pub fn mode(&self) -> usize {
        self.mode
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    /// Number of states `l`, frozen and live.
    pub fn length(&self) -> usize {
        self.frozen.len() + self.live_length()
    }

    pub fn live_length(&self) -> usize {
        self.mean.len() / self.state_dim
    }

    /// Time index of the newest state, `β + l − 1`.
    pub fn last_time(&self) -> usize {
        self.birth + self.length() - 1
    }

    /// Time index of the oldest jointly-Gaussian state.
    pub fn live_start(&self) -> usize {
        self.birth + self.frozen.len()
    }

    pub fn frozen(&self) -> &[FrozenState] {
        &self.frozen
    }

    pub fn live_mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn live_cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub(crate) fn frozen_arc(&self) -> &Arc<Vec<FrozenState>> {
        &self.frozen
    }

    pub fn with_weight(&self, weight: f64) -> Self {
        Self {
            weight,
            ..self.clone()
        }
    }

    fn check_time(&self, a: usize) -> Result<()> {
        if a < self.birth || a > self.last_time() {
            return Err(Error::Range {
                what: "time",
                index: a,
                lo: self.birth,
                hi: self.last_time(),
            });
        }
        Ok(())
    }

    /// State estimate for absolute time `a`.
    pub fn slice_mean(&self, a: usize) -> Result<DVector<f64>> {
        self.check_time(a)?;
        let n = self.state_dim;
        let idx = a - self.birth;
        if idx < self.frozen.len() {
            Ok(self.frozen[idx].mean.clone())
        } else {
            let off = (idx - self.frozen.len()) * n;
            Ok(self.mean.rows(off, n).into_owned())
        }
    }

    /// Covariance block with rows for times `rows` and columns for times
    /// `cols`. Blocks pairing a frozen state with any other state are zero.
    pub fn slice_cov(
        &self,
        rows: RangeInclusive<usize>,
        cols: RangeInclusive<usize>,
    ) -> Result<DMatrix<f64>> {
        for r in [&rows, &cols] {
            if r.is_empty() {
                return Err(Error::param("empty time range"));
            }
            self.check_time(*r.start())?;
            self.check_time(*r.end())?;
        }
        let n = self.state_dim;
        let nr = (rows.end() - rows.start() + 1) * n;
        let nc = (cols.end() - cols.start() + 1) * n;
        let live0 = self.live_start();
        let mut out = DMatrix::zeros(nr, nc);
        for (bi, a) in rows.clone().enumerate() {
            for (bj, b) in cols.clone().enumerate() {
                let block = if a >= live0 && b >= live0 {
                    Some(
                        self.cov
                            .view(((a - live0) * n, (b - live0) * n), (n, n))
                            .into_owned(),
                    )
                } else if a == b {
                    Some(self.frozen[a - self.birth].cov.clone())
                } else {
                    None
                };
                if let Some(block) = block {
                    out.view_mut((bi * n, bj * n), (n, n)).copy_from(&block);
                }
            }
        }
        Ok(out)
    }

    /// Marginal of the newest state. Gaussian marginalisation is block
    /// extraction.
    pub fn last_state_marginal(&self) -> StateMarginal {
        let n = self.state_dim;
        let off = self.mean.len() - n;
        StateMarginal {
            mean: self.mean.rows(off, n).into_owned(),
            cov: self.cov.view((off, off), (n, n)).into_owned(),
        }
    }

    /// Full stacked mean over all `l` states.
    pub fn full_mean(&self) -> DVector<f64> {
        let n = self.state_dim;
        let mut out = DVector::zeros(self.length() * n);
        for (i, f) in self.frozen.iter().enumerate() {
            out.rows_mut(i * n, n).copy_from(&f.mean);
        }
        out.rows_mut(self.frozen.len() * n, self.mean.len())
            .copy_from(&self.mean);
        out
    }

    /// Full `(l·n_x)²` covariance; frozen states contribute diagonal blocks.
    pub fn full_cov(&self) -> DMatrix<f64> {
        let n = self.state_dim;
        let d = self.length() * n;
        let mut out = DMatrix::zeros(d, d);
        for (i, f) in self.frozen.iter().enumerate() {
            out.view_mut((i * n, i * n), (n, n)).copy_from(&f.cov);
        }
        let off = self.frozen.len() * n;
        out.view_mut((off, off), self.cov.shape())
            .copy_from(&*self.cov);
        out
    }

    /// Mean reshaped into one vector per time step, oldest first.
    pub fn states(&self) -> Vec<DVector<f64>> {
        let n = self.state_dim;
        self.frozen
            .iter()
            .map(|f| f.mean.clone())
            .chain(
                (0..self.live_length()).map(|i| self.mean.rows(i * n, n).into_owned()),
            )
            .collect()
    }

    /// Checks the symmetric-PSD invariant of every covariance held.
    pub fn check_covariances(&self, tol: f64) -> Result<()> {
        check_psd_with(&self.cov, "trajectory covariance", tol)?;
        for f in self.frozen.iter() {
            check_psd_with(&f.cov, "frozen covariance", tol)?;
        }
        Ok(())
    }
}

/// The PHD at one time step: a finite weighted sum of trajectory Gaussians,
/// all alive at `time`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryMixture {
    time: usize,
    state_dim: usize,
    components: Vec<TrajectoryGaussian>,
}

impl TrajectoryMixture {
    pub fn empty(time: usize, state_dim: usize) -> Self {
        Self {
            time,
            state_dim,
            components: Vec::new(),
        }
    }

    /// Builds a mixture, rejecting components that are not alive at `time`
    /// or have the wrong state dimension.
    pub fn new(
        time: usize,
        state_dim: usize,
        components: Vec<TrajectoryGaussian>,
    ) -> Result<Self> {
        for c in &components {
            if c.state_dim() != state_dim {
                return Err(Error::dim(format!(
                    "component state dimension {} != mixture {state_dim}",
                    c.state_dim()
                )));
            }
            if c.last_time() != time {
                return Err(Error::param(format!(
                    "component born at {} with length {} is not alive at {time}",
                    c.birth(),
                    c.length()
                )));
            }
        }
        Ok(Self {
            time,
            state_dim,
            components,
        })
    }

    pub(crate) fn from_parts(
        time: usize,
        state_dim: usize,
        components: Vec<TrajectoryGaussian>,
    ) -> Self {
        debug_assert!(components.iter().all(|c| c.last_time() == time));
        Self {
            time,
            state_dim,
            components,
        }
    }

    pub fn time(&self) -> usize {
        self.time
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn components(&self) -> &[TrajectoryGaussian] {
        &self.components
    }

    pub fn into_components(self) -> Vec<TrajectoryGaussian> {
        self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// Sum of weights: the expected number of alive trajectories.
    pub fn total_mass(&self) -> f64 {
        self.components.iter().map(|c| c.weight()).sum()
    }
}
