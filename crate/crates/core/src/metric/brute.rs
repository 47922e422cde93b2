//! Exhaustive search over sequences of hard (0/1) assignments.

use std::ops::RangeInclusive;

use super::{check_inputs, MetricParams, Trajectory};
use crate::error::{Error, Result};

const MAX_SETS: usize = 4;
const MAX_STEPS: usize = 6;

/// All partial injections `x_i → y_j` as `assign[i] = Some(j)` or `None`.
fn matchings(n: usize, m: usize) -> Vec<Vec<Option<usize>>> {
    fn extend(
        i: usize,
        n: usize,
        m: usize,
        used: &mut Vec<bool>,
        cur: &mut Vec<Option<usize>>,
        out: &mut Vec<Vec<Option<usize>>>,
    ) {
        if i == n {
            out.push(cur.clone());
            return;
        }
        cur.push(None);
        extend(i + 1, n, m, used, cur, out);
        cur.pop();
        for j in 0..m {
            if !used[j] {
                used[j] = true;
                cur.push(Some(j));
                extend(i + 1, n, m, used, cur, out);
                cur.pop();
                used[j] = false;
            }
        }
    }
    let mut out = Vec::new();
    extend(0, n, m, &mut vec![false; m], &mut Vec::new(), &mut out);
    out
}

/// Exact minimum of the trajectory-metric objective restricted to 0/1
/// plans. Limited to at most 4 trajectories per set and 6 time steps.
pub fn brute_force_distance(
    x: &[Trajectory],
    y: &[Trajectory],
    params: &MetricParams,
    window: RangeInclusive<usize>,
) -> Result<f64> {
    check_inputs(x, y, params, &window)?;
    let steps = window.end() - window.start() + 1;
    if x.len() > MAX_SETS || y.len() > MAX_SETS || steps > MAX_STEPS {
        return Err(Error::Size(format!(
            "{}×{} trajectories over {} steps (limit {}×{} over {})",
            x.len(),
            y.len(),
            steps,
            MAX_SETS,
            MAX_SETS,
            MAX_STEPS
        )));
    }
    let (n, m) = (x.len(), y.len());
    let cp = params.c.powf(params.p);
    let switch = params.gamma.powf(params.p) / 2.0;
    let plans = matchings(n, m);

    let step_cost = |k: usize, plan: &[Option<usize>]| -> f64 {
        let mut cost = 0.0;
        let mut y_taken = vec![false; m];
        for (i, a) in plan.iter().enumerate() {
            let xi = x[i].state_at(k);
            match a {
                Some(j) => {
                    y_taken[*j] = true;
                    cost += match (xi, y[*j].state_at(k)) {
                        (Some(u), Some(v)) => (u - v).norm().min(params.c).powf(params.p),
                        (None, None) => 0.0,
                        _ => cp / 2.0,
                    };
                }
                None if xi.is_some() => cost += cp / 2.0,
                None => {}
            }
        }
        for j in 0..m {
            if !y_taken[j] && y[j].state_at(k).is_some() {
                cost += cp / 2.0;
            }
        }
        cost
    };
    let changes = |a: &[Option<usize>], b: &[Option<usize>]| -> usize {
        a.iter()
            .zip(b)
            .map(|(u, v)| if u == v { 0 } else { u.is_some() as usize + v.is_some() as usize })
            .sum()
    };

    let mut best: Vec<f64> = plans.iter().map(|p| step_cost(*window.start(), p)).collect();
    for k in window.clone().skip(1) {
        best = plans
            .iter()
            .map(|p| {
                let reach = plans
                    .iter()
                    .zip(&best)
                    .map(|(q, b)| b + switch * changes(q, p) as f64)
                    .fold(f64::INFINITY, f64::min);
                reach + step_cost(k, p)
            })
            .collect();
    }
    let total = best.into_iter().fold(f64::INFINITY, f64::min);
    Ok(total.max(0.0).powf(1.0 / params.p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    fn traj(birth: usize, xs: &[f64]) -> Trajectory {
        Trajectory::new(birth, xs.iter().map(|&v| DVector::from_vec(vec![v])).collect())
    }

    #[test]
    fn matching_count() {
        // Σ_k C(n,k) C(m,k) k!
        assert_eq!(matchings(0, 3).len(), 1);
        assert_eq!(matchings(2, 2).len(), 7);
        assert_eq!(matchings(3, 2).len(), 13);
    }

    #[test]
    fn examples() {
        let p = MetricParams::default();
        assert_eq!(brute_force_distance(&[], &[], &p, 1..=3).unwrap(), 0.0);
        let x = [traj(1, &[0.0, 1.0, 2.0])];
        let d = brute_force_distance(&x, &[], &p, 1..=3).unwrap();
        assert!((d - 150f64.sqrt()).abs() < 1e-12);
        let y = [traj(1, &[3.0, 4.0, 5.0])];
        let d = brute_force_distance(&x, &y, &p, 1..=3).unwrap();
        assert!((d - 27f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn switch_is_charged() {
        // the estimate follows x0 then jumps to x1: cheaper to switch once
        let p = MetricParams::new(2.0, 10.0, 2.0).unwrap();
        let x = [traj(1, &[0.0, 0.0]), traj(1, &[8.0, 8.0])];
        let y = [traj(1, &[0.0, 8.0])];
        let d = brute_force_distance(&x, &y, &p, 1..=2).unwrap();
        // two misses at 50 each plus one switch of 2 changes at γ²/2 = 2
        assert!((d * d - (100.0 + 4.0)).abs() < 1e-12);
    }

    #[test]
    fn too_large() {
        let p = MetricParams::default();
        let x: Vec<_> = (0..5).map(|_| traj(1, &[0.0])).collect();
        assert!(matches!(brute_force_distance(&x, &[], &p, 1..=1), Err(Error::Size(_))));
        let long = [traj(1, &[0.0; 7])];
        assert!(matches!(brute_force_distance(&long, &[], &p, 1..=7), Err(Error::Size(_))));
    }
}
