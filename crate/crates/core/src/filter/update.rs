use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::filter::{FilterConfig, ScanSet};
use crate::models::MeasurementModel;
use crate::trajgauss::{symmetrize, TrajectoryGaussian, TrajectoryMixture};

/// Multivariate normal density `N(· ; mean, cov)` with the factorisation of
/// `cov` cached.
#[derive(Debug, Clone)]
pub struct GaussianLikelihood {
    mean: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    log_norm: f64,
}

impl GaussianLikelihood {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let n = mean.len();
        if cov.shape() != (n, n) {
            return Err(Error::dim(format!(
                "covariance {:?} does not match mean length {n}",
                cov.shape()
            )));
        }
        let chol = Cholesky::new(cov)
            .ok_or_else(|| Error::param("covariance is not positive definite"))?;
        let log_det: f64 = chol.l_dirty().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
        let log_norm = -0.5 * (n as f64 * (2.0 * PI).ln() + log_det);
        Ok(Self {
            mean,
            chol,
            log_norm,
        })
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cholesky(&self) -> &Cholesky<f64, Dyn> {
        &self.chol
    }

    pub fn ln_density(&self, z: &DVector<f64>) -> f64 {
        let r = z - &self.mean;
        let w = self.chol.l_dirty().solve_lower_triangular(&r).expect("nonsingular factor");
        self.log_norm - 0.5 * w.norm_squared()
    }

    pub fn density(&self, z: &DVector<f64>) -> f64 {
        self.ln_density(z).exp()
    }
}

/// `N(z; mean, cov)` in one call.
pub fn gaussian_density(z: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<f64> {
    if z.len() != mean.len() {
        return Err(Error::dim("point and mean lengths differ"));
    }
    Ok(GaussianLikelihood::new(mean.clone(), cov.clone())?.density(z))
}

/// Predicted measurement distribution of one component.
struct Innovation {
    lik: GaussianLikelihood,
    /// `U^{[:,k]} Hᵀ`, shape `d × n_z` over the live states.
    cross: DMatrix<f64>,
}

fn innovation(comp: &TrajectoryGaussian, meas: &MeasurementModel) -> Result<Innovation> {
    let h = &meas.matrix;
    let nx = comp.state_dim();
    let u = comp.live_cov();
    let off = u.nrows() - nx;
    let last_mean = comp.live_mean().rows(off, nx);
    let last_block = u.view((off, off), (nx, nx));
    let mut s = h * last_block * h.transpose() + &meas.noise_cov;
    symmetrize(&mut s);
    let cross = u.columns(off, nx) * h.transpose();
    Ok(Innovation {
        lik: GaussianLikelihood::new(h * last_mean, s)?,
        cross,
    })
}

/// Gain `K = U^{[:,k]} Hᵀ S⁻¹` and the shared posterior covariance
/// `U − K H U^{[k,:]}`.
fn gain_and_cov(comp: &TrajectoryGaussian, inn: &Innovation) -> (DMatrix<f64>, Arc<DMatrix<f64>>) {
    let gain = inn.lik.cholesky().solve(&inn.cross.transpose()).transpose();
    let mut cov = comp.live_cov() - &gain * inn.cross.transpose();
    symmetrize(&mut cov);
    (gain, Arc::new(cov))
}

fn check_inputs(pred: &TrajectoryMixture, scan: &ScanSet, meas: &MeasurementModel) -> Result<()> {
    if pred.time() != scan.time {
        return Err(Error::Sequencing {
            expected: pred.time(),
            got: scan.time,
        });
    }
    if meas.state_dim() != pred.state_dim() {
        return Err(Error::dim(format!(
            "measurement matrix has {} columns, state dimension is {}",
            meas.state_dim(),
            pred.state_dim()
        )));
    }
    let nz = meas.meas_dim();
    if let Some(z) = scan.measurements.iter().find(|z| z.len() != nz) {
        return Err(Error::param(format!(
            "measurement of dimension {} does not match H with {nz} rows",
            z.len()
        )));
    }
    Ok(())
}

/// Likelihood table `q[j][z]` and per-measurement denominators
/// `κ + P_D Σ_i ω_i q_i(z)`.
fn likelihoods(
    pred: &TrajectoryMixture,
    scan: &ScanSet,
    innovations: &[Innovation],
    cfg: &FilterConfig,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let q: Vec<Vec<f64>> = innovations
        .iter()
        .map(|inn| scan.measurements.iter().map(|z| inn.lik.density(z)).collect())
        .collect();
    let denom = (0..scan.len())
        .map(|zi| {
            let s: f64 = pred
                .components()
                .iter()
                .zip(&q)
                .map(|(c, qj)| c.weight() * qj[zi])
                .sum();
            cfg.clutter_intensity + cfg.detection_prob * s
        })
        .collect();
    (q, denom)
}

fn detection_weight(pd: f64, weight: f64, q: f64, denom: f64) -> f64 {
    if denom > 0.0 {
        pd * weight * q / denom
    } else {
        0.0
    }
}

/// Detection weights `ω_j(z)` for every predicted component (rows) and
/// measurement (columns).
pub fn detection_weights(
    pred: &TrajectoryMixture,
    scan: &ScanSet,
    meas: &MeasurementModel,
    cfg: &FilterConfig,
) -> Result<DMatrix<f64>> {
    check_inputs(pred, scan, meas)?;
    let innovations = pred
        .components()
        .iter()
        .map(|c| innovation(c, meas))
        .collect::<Result<Vec<_>>>()?;
    let (q, denom) = likelihoods(pred, scan, &innovations, cfg);
    Ok(DMatrix::from_fn(pred.len(), scan.len(), |j, zi| {
        detection_weight(
            cfg.detection_prob,
            pred.components()[j].weight(),
            q[j][zi],
            denom[zi],
        )
    }))
}

fn update_inner(
    pred: &TrajectoryMixture,
    scan: &ScanSet,
    meas: &MeasurementModel,
    cfg: &FilterConfig,
    keep_from: Option<f64>,
) -> Result<TrajectoryMixture> {
    check_inputs(pred, scan, meas)?;
    let pd = cfg.detection_prob;
    let keep = |w: f64| keep_from.is_none_or(|t| w >= t);
    let detect = pd > 0.0 && !scan.is_empty();

    let innovations = if detect {
        pred.components()
            .iter()
            .map(|c| innovation(c, meas))
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    let (q, denom) = if detect {
        likelihoods(pred, scan, &innovations, cfg)
    } else {
        (Vec::new(), Vec::new())
    };

    let mut out = Vec::with_capacity(pred.len() * (1 + scan.len()));
    for (j, comp) in pred.components().iter().enumerate() {
        let miss = (1.0 - pd) * comp.weight();
        if keep(miss) {
            out.push(comp.with_weight(miss));
        }
        if !detect {
            continue;
        }
        let inn = &innovations[j];
        let mut posterior: Option<(DMatrix<f64>, Arc<DMatrix<f64>>)> = None;
        for (zi, z) in scan.measurements.iter().enumerate() {
            let w = detection_weight(pd, comp.weight(), q[j][zi], denom[zi]);
            if !keep(w) {
                continue;
            }
            let (gain, cov) = posterior.get_or_insert_with(|| gain_and_cov(comp, inn));
            let mean = comp.live_mean() + &*gain * (z - inn.lik.mean());
            out.push(TrajectoryGaussian::from_raw(
                comp.birth(),
                comp.mode(),
                w,
                comp.state_dim(),
                comp.frozen_arc().clone(),
                mean,
                cov.clone(),
            ));
        }
    }
    Ok(TrajectoryMixture::from_parts(pred.time(), pred.state_dim(), out))
}

/// Trajectory PHD update.
///
/// Every predicted component yields a miss component with weight
/// `(1 − P_D)·ω` and, for each measurement `z`, a detection component with
/// weight `P_D ω q(z) / (κ + P_D Σ_i ω_i q_i(z))` whose whole stacked mean is
/// corrected through the trajectory gain. Components are ordered by predicted
/// component, miss first, then measurements in scan order. With `P_D = 0` or
/// an empty scan no detection components are produced.
pub fn update(
    pred: &TrajectoryMixture,
    scan: &ScanSet,
    meas: &MeasurementModel,
    cfg: &FilterConfig,
) -> Result<TrajectoryMixture> {
    update_inner(pred, scan, meas, cfg, None)
}

/// Same result as `prune(update(..), threshold)` without materialising the
/// components that pruning would drop.
pub fn update_pruned(
    pred: &TrajectoryMixture,
    scan: &ScanSet,
    meas: &MeasurementModel,
    cfg: &FilterConfig,
    threshold: f64,
) -> Result<TrajectoryMixture> {
    update_inner(pred, scan, meas, cfg, Some(threshold))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::{prune, LScan};
    use approx::assert_relative_eq;

    fn scalar_setup(pd: f64, kappa: f64) -> (TrajectoryMixture, MeasurementModel, FilterConfig) {
        let comp = TrajectoryGaussian::new(
            1,
            0,
            1.0,
            DVector::from_element(1, 0.0),
            DMatrix::from_element(1, 1, 1.0),
            1,
        )
        .unwrap();
        let mix = TrajectoryMixture::new(1, 1, vec![comp]).unwrap();
        let meas = MeasurementModel::new(
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
        )
        .unwrap();
        let cfg = FilterConfig {
            survival_prob: 1.0,
            detection_prob: pd,
            clutter_intensity: kappa,
            prune_threshold: 0.0,
            absorb_threshold: 0.0,
            max_components: 100,
            lscan: LScan::Full,
        };
        (mix, meas, cfg)
    }

    #[test]
    fn scalar_kalman_case() {
        let (mix, meas, cfg) = scalar_setup(0.98, 0.0);
        let scan = ScanSet::new(1, vec![DVector::from_element(1, 1.0)]);
        let post = update(&mix, &scan, &meas, &cfg).unwrap();
        assert_eq!(post.len(), 2);
        let miss = &post.components()[0];
        let det = &post.components()[1];
        assert_relative_eq!(miss.weight(), 0.02, epsilon = 1e-15);
        assert_relative_eq!(det.weight(), 1.0, epsilon = 1e-15);
        assert_relative_eq!(det.live_mean()[0], 0.5, epsilon = 1e-15);
        assert_relative_eq!(det.live_cov()[(0, 0)], 0.5, epsilon = 1e-15);
        assert_eq!(miss.live_mean()[0], 0.0);
        assert_eq!(miss.live_cov()[(0, 0)], 1.0);
    }

    #[test]
    fn empty_scan_scales_weights() {
        let (mix, meas, cfg) = scalar_setup(0.9, 0.1);
        let post = update(&mix, &ScanSet::empty(1), &meas, &cfg).unwrap();
        assert_eq!(post.len(), 1);
        assert_relative_eq!(post.components()[0].weight(), 0.1, epsilon = 1e-15);
        assert_eq!(post.components()[0].live_mean(), mix.components()[0].live_mean());
    }

    #[test]
    fn zero_detection_is_identity() {
        let (mix, meas, cfg) = scalar_setup(0.0, 0.1);
        let scan = ScanSet::new(1, vec![DVector::from_element(1, 1.0)]);
        assert_eq!(update(&mix, &scan, &meas, &cfg).unwrap(), mix);
    }

    #[test]
    fn dimension_and_time_checks() {
        let (mix, meas, cfg) = scalar_setup(0.9, 0.1);
        let bad = ScanSet::new(1, vec![DVector::from_element(2, 1.0)]);
        assert!(matches!(update(&mix, &bad, &meas, &cfg), Err(Error::Parameter(_))));
        let late = ScanSet::empty(2);
        assert!(matches!(update(&mix, &late, &meas, &cfg), Err(Error::Sequencing { .. })));
    }

    #[test]
    fn fused_prune_matches_prune_after_update() {
        let (mix, meas, cfg) = scalar_setup(0.9, 0.05);
        let scan = ScanSet::new(
            1,
            [0.1, 3.0, 8.0, -12.0]
                .iter()
                .map(|&v| DVector::from_element(1, v))
                .collect(),
        );
        for t in [0.0, 1e-5, 0.05, 0.2] {
            let a = prune(&update(&mix, &scan, &meas, &cfg).unwrap(), t);
            let b = update_pruned(&mix, &scan, &meas, &cfg, t).unwrap();
            assert_eq!(a, b, "threshold {t}");
        }
    }

    #[test]
    fn detection_weights_match_update() {
        let (mix, meas, cfg) = scalar_setup(0.9, 0.05);
        let scan = ScanSet::new(
            1,
            vec![DVector::from_element(1, 0.3), DVector::from_element(1, -1.0)],
        );
        let w = detection_weights(&mix, &scan, &meas, &cfg).unwrap();
        let post = update(&mix, &scan, &meas, &cfg).unwrap();
        assert_eq!(w[(0, 0)], post.components()[1].weight());
        assert_eq!(w[(0, 1)], post.components()[2].weight());
    }

    #[test]
    fn likelihood_rejects_singular() {
        assert!(GaussianLikelihood::new(DVector::zeros(2), DMatrix::zeros(2, 2)).is_err());
        let d = gaussian_density(
            &DVector::from_element(1, 0.0),
            &DVector::from_element(1, 0.0),
            &DMatrix::from_element(1, 1, 1.0),
        )
        .unwrap();
        assert_relative_eq!(d, 1.0 / (2.0 * PI).sqrt(), epsilon = 1e-15);
    }
}
