//! Mixture reduction, L-scan truncation and estimate extraction.

use std::cmp::Ordering;
use std::sync::Arc;

use nalgebra::{Cholesky, DVector};

use crate::filter::LScan;
use crate::trajgauss::{FrozenState, TrajectoryGaussian, TrajectoryMixture};

/// Heaviest first; ties go to the older birth time, then the lower mode.
fn heaviest_first(a: &TrajectoryGaussian, b: &TrajectoryGaussian) -> Ordering {
    b.weight()
        .total_cmp(&a.weight())
        .then(a.birth().cmp(&b.birth()))
        .then(a.mode().cmp(&b.mode()))
}

fn ranked(mix: &TrajectoryMixture) -> Vec<usize> {
    let comps = mix.components();
    let mut idx: Vec<usize> = (0..comps.len()).collect();
    // stable: remaining ties keep input order
    idx.sort_by(|&i, &j| heaviest_first(&comps[i], &comps[j]));
    idx
}

/// Drops components with weight below `threshold`.
pub fn prune(mix: &TrajectoryMixture, threshold: f64) -> TrajectoryMixture {
    let kept = mix
        .components()
        .iter()
        .filter(|c| c.weight() >= threshold)
        .cloned()
        .collect();
    TrajectoryMixture::from_parts(mix.time(), mix.state_dim(), kept)
}

/// Greedy absorption. The heaviest remaining component takes the weight of
/// every remaining component with the same birth time and length whose newest
/// state mean lies within Mahalanobis distance `threshold` under the
/// absorber's newest-state covariance. The absorber keeps its own mean and
/// covariance.
pub fn absorb(mix: &TrajectoryMixture, threshold: f64) -> TrajectoryMixture {
    let comps = mix.components();
    let order = ranked(mix);
    let nx = mix.state_dim();
    let mut taken = vec![false; comps.len()];
    let mut out = Vec::new();

    for (pos, &i) in order.iter().enumerate() {
        if taken[i] {
            continue;
        }
        taken[i] = true;
        let head = &comps[i];
        let marginal = head.last_state_marginal();
        let chol = Cholesky::new(marginal.cov);
        let mut weight = head.weight();
        for &j in &order[pos + 1..] {
            let other = &comps[j];
            if taken[j] || other.birth() != head.birth() || other.length() != head.length() {
                continue;
            }
            let off = other.live_mean().len() - nx;
            let diff: DVector<f64> = other.live_mean().rows(off, nx) - &marginal.mean;
            let dist = match &chol {
                Some(ch) => diff.dot(&ch.solve(&diff)).max(0.0).sqrt(),
                None if diff.iter().all(|&v| v == 0.0) => 0.0,
                None => f64::INFINITY,
            };
            if dist <= threshold {
                weight += other.weight();
                taken[j] = true;
            }
        }
        out.push(head.with_weight(weight));
    }
    TrajectoryMixture::from_parts(mix.time(), nx, out)
}

/// Keeps the `max_components` heaviest components, heaviest first.
pub fn cap(mix: &TrajectoryMixture, max_components: usize) -> TrajectoryMixture {
    let comps = mix.components();
    let kept = ranked(mix)
        .into_iter()
        .take(max_components)
        .map(|i| comps[i].clone())
        .collect();
    TrajectoryMixture::from_parts(mix.time(), mix.state_dim(), kept)
}

/// Restricts each component's joint Gaussian to its newest `L` states. Older
/// live states move to the frozen prefix with their mean and marginal
/// covariance; their cross-covariances are dropped.
pub fn lscan_truncate(mix: &TrajectoryMixture, lscan: LScan) -> TrajectoryMixture {
    let window = match lscan {
        LScan::Full => return mix.clone(),
        LScan::Window(l) => l.max(1),
    };
    let nx = mix.state_dim();
    let comps = mix
        .components()
        .iter()
        .map(|c| {
            let live = c.live_length();
            if live <= window {
                return c.clone();
            }
            let drop = live - window;
            let mean = c.live_mean();
            let cov = c.live_cov();
            let mut frozen: Vec<FrozenState> = c.frozen().to_vec();
            frozen.extend((0..drop).map(|s| FrozenState {
                mean: mean.rows(s * nx, nx).into_owned(),
                cov: cov.view((s * nx, s * nx), (nx, nx)).into_owned(),
            }));
            let off = drop * nx;
            let keep = window * nx;
            TrajectoryGaussian::from_raw(
                c.birth(),
                c.mode(),
                c.weight(),
                nx,
                Arc::new(frozen),
                mean.rows(off, keep).into_owned(),
                Arc::new(cov.view((off, off), (keep, keep)).into_owned()),
            )
        })
        .collect();
    TrajectoryMixture::from_parts(mix.time(), nx, comps)
}

/// An estimated alive trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryEstimate {
    pub birth: usize,
    /// State estimates for times `birth ..= birth + states.len() − 1`.
    pub states: Vec<DVector<f64>>,
    pub mode: usize,
    pub weight: f64,
}

impl TrajectoryEstimate {
    pub fn last_time(&self) -> usize {
        self.birth + self.states.len() - 1
    }
}

/// Returns the `min(round(mass), J)` heaviest components, rounding half up.
pub fn extract_estimates(mix: &TrajectoryMixture) -> Vec<TrajectoryEstimate> {
    let n = ((mix.total_mass() + 0.5).floor().max(0.0) as usize).min(mix.len());
    let comps = mix.components();
    ranked(mix)
        .into_iter()
        .take(n)
        .map(|i| {
            let c = &comps[i];
            TrajectoryEstimate {
                birth: c.birth(),
                states: c.states(),
                mode: c.mode(),
                weight: c.weight(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn comp(birth: usize, len: usize, mode: usize, w: f64, last: f64) -> TrajectoryGaussian {
        let mut mean = DVector::zeros(len);
        mean[len - 1] = last;
        TrajectoryGaussian::new(birth, mode, w, mean, DMatrix::identity(len, len), 1).unwrap()
    }

    fn mix(time: usize, comps: Vec<TrajectoryGaussian>) -> TrajectoryMixture {
        TrajectoryMixture::new(time, 1, comps).unwrap()
    }

    fn weights(m: &TrajectoryMixture) -> Vec<f64> {
        m.components().iter().map(|c| c.weight()).collect()
    }

    #[test]
    fn prune_cases() {
        let m = mix(1, vec![comp(1, 1, 0, 1e-6, 0.0), comp(1, 1, 0, 0.5, 1.0)]);
        assert_eq!(weights(&prune(&m, 1e-5)), vec![0.5]);
        assert_eq!(prune(&m, 0.0), m);
        let gone = prune(&m, 1.0);
        assert!(gone.is_empty());
        assert_eq!(gone.total_mass(), 0.0);
    }

    #[test]
    fn absorb_identical() {
        let m = mix(2, vec![comp(1, 2, 1, 0.2, 3.0), comp(1, 2, 0, 0.3, 3.0)]);
        let a = absorb(&m, 4.0);
        assert_eq!(a.len(), 1);
        let c = &a.components()[0];
        assert!((c.weight() - 0.5).abs() < 1e-15);
        assert_eq!(c.mode(), 0);
        assert_eq!(c.live_mean(), m.components()[1].live_mean());
    }

    #[test]
    fn absorb_respects_distance_and_shape() {
        let far = mix(1, vec![comp(1, 1, 0, 0.3, 0.0), comp(1, 1, 0, 0.2, 100.0)]);
        assert_eq!(absorb(&far, 4.0).len(), 2);
        // distance exactly at the threshold is absorbed
        let edge = mix(1, vec![comp(1, 1, 0, 0.3, 0.0), comp(1, 1, 0, 0.2, 4.0)]);
        assert_eq!(absorb(&edge, 4.0).len(), 1);
        // different birth time never absorbs
        let shape = mix(2, vec![comp(1, 2, 0, 0.3, 0.0), comp(2, 1, 0, 0.2, 0.0)]);
        assert_eq!(absorb(&shape, 4.0).len(), 2);
    }

    #[test]
    fn absorb_conserves_mass() {
        let m = mix(
            1,
            (0..20)
                .map(|i| comp(1, 1, i % 3, 0.01 * (i + 1) as f64, (i as f64) * 0.7))
                .collect(),
        );
        let a = absorb(&m, 2.0);
        assert!(a.len() < m.len());
        assert!((a.total_mass() - m.total_mass()).abs() <= 1e-12);
    }

    #[test]
    fn cap_cases() {
        let m = mix(1, vec![comp(1, 1, 0, 0.2, 0.0), comp(1, 1, 0, 0.5, 0.0), comp(1, 1, 0, 0.3, 0.0)]);
        assert_eq!(weights(&cap(&m, 2)), vec![0.5, 0.3]);
        assert_eq!(cap(&m, 30).len(), 3);
        let ties = mix(3, vec![comp(3, 1, 0, 0.4, 0.0), comp(1, 3, 1, 0.4, 0.0), comp(1, 3, 0, 0.4, 0.0)]);
        let kept = cap(&ties, 1);
        assert_eq!((kept.components()[0].birth(), kept.components()[0].mode()), (1, 0));
    }

    #[test]
    fn lscan_cases() {
        let cov = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 5.0, 2.0, 0.5, 2.0, 6.0]);
        let g = TrajectoryGaussian::new(1, 0, 1.0, DVector::from_vec(vec![1.0, 2.0, 3.0]), cov, 1)
            .unwrap();
        let m = mix(3, vec![g]);
        assert_eq!(lscan_truncate(&m, LScan::Window(3)), m);
        assert_eq!(lscan_truncate(&m, LScan::Window(10)), m);
        assert_eq!(lscan_truncate(&m, LScan::Full), m);

        let t = lscan_truncate(&m, LScan::Window(2));
        let c = &t.components()[0];
        assert_eq!(c.length(), 3);
        assert_eq!(c.live_length(), 2);
        assert_eq!(c.frozen()[0].mean[0], 1.0);
        assert_eq!(c.frozen()[0].cov[(0, 0)], 4.0);
        assert_eq!(*c.live_cov(), DMatrix::from_row_slice(2, 2, &[5.0, 2.0, 2.0, 6.0]));
        assert_eq!(c.full_mean(), m.components()[0].full_mean());

        // truncating twice keeps accumulating the frozen prefix
        let t1 = lscan_truncate(&t, LScan::Window(1));
        let c1 = &t1.components()[0];
        assert_eq!(c1.frozen().len(), 2);
        assert_eq!(c1.frozen()[1].cov[(0, 0)], 5.0);
        assert_eq!(c1.full_mean(), m.components()[0].full_mean());
    }

    #[test]
    fn extract_cases() {
        assert!(extract_estimates(&TrajectoryMixture::empty(0, 1)).is_empty());
        assert!(extract_estimates(&mix(1, vec![comp(1, 1, 0, 0.4, 0.0)])).is_empty());
        let m = mix(
            2,
            vec![comp(2, 1, 0, 0.1, 0.0), comp(1, 2, 0, 0.9, 5.0), comp(2, 1, 1, 0.8, 7.0)],
        );
        let est = extract_estimates(&m);
        assert_eq!(est.len(), 2);
        assert_eq!(est[0].weight, 0.9);
        assert_eq!(est[0].states.len(), 2);
        assert_eq!(est[0].states[1][0], 5.0);
        assert_eq!(est[1].weight, 0.8);
        // half rounds up
        let half = mix(1, vec![comp(1, 1, 0, 0.5, 0.0), comp(1, 1, 0, 1.0, 0.0)]);
        assert_eq!(extract_estimates(&half).len(), 2);
    }
}
