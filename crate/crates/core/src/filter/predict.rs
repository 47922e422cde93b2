use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::filter::FilterConfig;
use crate::models::{BirthModel, ModeSet};
use crate::trajgauss::{symmetrize, TrajectoryGaussian, TrajectoryMixture};

/// Predicts the trajectory PHD from `prior` (time `k − 1`) to time `k`.
///
/// Newborn components come first, in birth-model order. Each prior component
/// `j` in mode `o'` then yields one child per mode `o` with weight
/// `P_S · υ(o | o') · ω_j`, whose mean is extended by `F(o)·m^{[k−1]}` and
/// whose covariance gains the cross block `U^{[:,k−1]} F(o)ᵀ` and the diagonal
/// block `F(o) U^{[k−1]} F(o)ᵀ + Q(o)`.
pub fn predict(
    prior: &TrajectoryMixture,
    modes: &ModeSet,
    birth: &BirthModel,
    cfg: &FilterConfig,
) -> Result<TrajectoryMixture> {
    let nx = modes.state_dim();
    if prior.state_dim() != nx {
        return Err(Error::dim(format!(
            "prior state dimension {} != model state dimension {nx}",
            prior.state_dim()
        )));
    }
    let k = prior.time() + 1;
    let no_frozen = Arc::new(Vec::new());
    let mut out = Vec::with_capacity(birth.components().len() + prior.len() * modes.len());

    for b in birth.components() {
        if b.mean.len() != nx || b.mode >= modes.len() {
            return Err(Error::dim("birth component does not match the mode set"));
        }
        out.push(TrajectoryGaussian::from_raw(
            k,
            b.mode,
            b.weight,
            nx,
            no_frozen.clone(),
            b.mean.clone(),
            Arc::new(b.cov.clone()),
        ));
    }

    for comp in prior.components() {
        let prev = comp.mode();
        if prev >= modes.len() {
            return Err(Error::Range {
                what: "mode",
                index: prev,
                lo: 0,
                hi: modes.len() - 1,
            });
        }
        let u = comp.live_cov();
        let m = comp.live_mean();
        let d = m.len();
        let off = d - nx;
        let last_mean = m.rows(off, nx);
        let last_cols = u.columns(off, nx);
        let last_block = u.view((off, off), (nx, nx));

        for (next, model) in modes.models().iter().enumerate() {
            let f = &model.transition;
            let weight = cfg.survival_prob * modes.tpm()[(prev, next)] * comp.weight();

            let mut mean = DVector::zeros(d + nx);
            mean.rows_mut(0, d).copy_from(m);
            mean.rows_mut(d, nx).copy_from(&(f * last_mean));

            let cross = last_cols * f.transpose();
            let tail = f * last_block * f.transpose() + &model.process_noise;
            let mut cov = DMatrix::zeros(d + nx, d + nx);
            cov.view_mut((0, 0), (d, d)).copy_from(u);
            cov.view_mut((0, d), (d, nx)).copy_from(&cross);
            cov.view_mut((d, 0), (nx, d)).copy_from(&cross.transpose());
            cov.view_mut((d, d), (nx, nx)).copy_from(&tail);
            symmetrize(&mut cov);

            out.push(TrajectoryGaussian::from_raw(
                comp.birth(),
                next,
                weight,
                nx,
                comp.frozen_arc().clone(),
                mean,
                Arc::new(cov),
            ));
        }
    }
    Ok(TrajectoryMixture::from_parts(k, nx, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::LScan;
    use crate::models::{maneuvering_scenario, BirthComponent, MotionModel};
    use approx::assert_relative_eq;

    fn cfg(ps: f64) -> FilterConfig {
        FilterConfig {
            survival_prob: ps,
            detection_prob: 0.9,
            clutter_intensity: 1e-3,
            prune_threshold: 1e-5,
            absorb_threshold: 4.0,
            max_components: 30,
            lscan: LScan::Full,
        }
    }

    #[test]
    fn empty_prior_gives_birth_only() {
        let s = maneuvering_scenario();
        let prior = TrajectoryMixture::empty(0, 4);
        let pred = predict(&prior, &s.modes, &s.birth, &cfg(0.99)).unwrap();
        assert_eq!(pred.time(), 1);
        assert_eq!(pred.len(), 15);
        assert_relative_eq!(pred.total_mass(), 1.0, epsilon = 1e-12);
        assert!(pred.components().iter().all(|c| c.birth() == 1 && c.length() == 1));
    }

    #[test]
    fn survivor_weights_follow_tpm() {
        let s = maneuvering_scenario();
        let comp = TrajectoryGaussian::new(
            2,
            0,
            0.5,
            DVector::from_vec(vec![100.0, 1.0, 200.0, -1.0]),
            DMatrix::identity(4, 4),
            4,
        )
        .unwrap();
        let prior = TrajectoryMixture::new(2, 4, vec![comp]).unwrap();
        let empty_birth = BirthModel::new(vec![]).unwrap();
        let pred = predict(&prior, &s.modes, &empty_birth, &cfg(0.99)).unwrap();
        let w: Vec<f64> = pred.components().iter().map(|c| c.weight()).collect();
        assert_relative_eq!(w[0], 0.396, epsilon = 1e-15);
        assert_relative_eq!(w[1], 0.0495, epsilon = 1e-15);
        assert_relative_eq!(w[2], 0.0495, epsilon = 1e-15);
        for (o, c) in pred.components().iter().enumerate() {
            assert_eq!((c.birth(), c.length(), c.mode()), (2, 2, o));
        }
        // count: J_γ·|O| + J·|O|
        let full = predict(&prior, &s.modes, &s.birth, &cfg(0.99)).unwrap();
        assert_eq!(full.len(), 15 + 3);
    }

    #[test]
    fn scalar_block_formula() {
        let model = MotionModel::new(DMatrix::from_element(1, 1, 1.0), DMatrix::from_element(1, 1, 1.0))
            .unwrap();
        let modes = ModeSet::single(model);
        let comp = TrajectoryGaussian::new(
            1,
            0,
            1.0,
            DVector::from_element(1, 0.0),
            DMatrix::from_element(1, 1, 2.0),
            1,
        )
        .unwrap();
        let prior = TrajectoryMixture::new(1, 1, vec![comp]).unwrap();
        let pred = predict(&prior, &modes, &BirthModel::new(vec![]).unwrap(), &cfg(1.0)).unwrap();
        let c = &pred.components()[0];
        assert_eq!(c.length(), 2);
        assert_eq!(c.live_mean().as_slice(), &[0.0, 0.0]);
        assert_eq!(
            *c.live_cov(),
            DMatrix::from_row_slice(2, 2, &[2.0, 2.0, 2.0, 3.0])
        );
    }

    #[test]
    fn mass_halves_without_birth() {
        let s = maneuvering_scenario();
        let comps = (0..3)
            .map(|o| {
                TrajectoryGaussian::new(
                    1,
                    o,
                    0.3 + 0.1 * o as f64,
                    DVector::from_vec(vec![0.0, 1.0, 2.0, 3.0]),
                    DMatrix::identity(4, 4),
                    4,
                )
                .unwrap()
            })
            .collect();
        let prior = TrajectoryMixture::new(1, 4, comps).unwrap();
        let pred = predict(&prior, &s.modes, &BirthModel::new(vec![]).unwrap(), &cfg(0.5)).unwrap();
        assert_relative_eq!(pred.total_mass(), 0.5 * prior.total_mass(), epsilon = 1e-14);
    }

    #[test]
    fn birth_mode_is_carried() {
        let s = maneuvering_scenario();
        let birth = BirthModel::new(vec![BirthComponent {
            weight: 0.1,
            mode: 2,
            mean: DVector::zeros(4),
            cov: DMatrix::identity(4, 4),
        }])
        .unwrap();
        let pred = predict(&TrajectoryMixture::empty(4, 4), &s.modes, &birth, &cfg(0.9)).unwrap();
        let c = &pred.components()[0];
        assert_eq!((c.birth(), c.mode(), c.length()), (5, 2, 1));
    }
}
