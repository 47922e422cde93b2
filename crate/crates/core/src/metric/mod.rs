//! Linear-programming distance between finite sets of trajectories.
//!
//! With `W^k` an `(n+1)×(m+1)` assignment at each step (last row/column are
//! the unassigned sinks), the distance is
//!
//! ```text
//! dᵖ = min_W Σ_k [ Σ_ij W^k_ij·min(‖x_i^k − y_j^k‖, c)ᵖ   (both exist)
//!                 + cᵖ/2 · (mass of existing trajectories sent to a sink
//!                           or to a partner that does not exist) ]
//!      + γᵖ/2 · Σ_{k≥2} Σ_ij |W^k_ij − W^{k−1}_ij|
//! ```
//!
//! Per step that objective equals `cᵖ/2·(#x + #y alive)` plus
//! `Σ W_ij (min(d,c)ᵖ − cᵖ)` over both-exist pairs, so only pairs that are
//! ever closer than `c` carry variables. Pairs that never are sit at zero in
//! some optimum, and the remaining pairs split into independent connected
//! components, each solved on its own. A component with a single pair has a
//! totally unimodular constraint matrix and is solved exactly by a two-state
//! dynamic program; larger components go through the simplex solver.

mod brute;
pub mod simplex;

use std::ops::RangeInclusive;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use simplex::{simplex_solve, LinearProgram, Relation};

pub use brute::brute_force_distance;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricParams {
    pub p: f64,
    pub c: f64,
    pub gamma: f64,
}

impl Default for MetricParams {
    fn default() -> Self {
        Self {
            p: 2.0,
            c: 10.0,
            gamma: 1.0,
        }
    }
}

impl MetricParams {
    pub fn new(p: f64, c: f64, gamma: f64) -> Result<Self> {
        let m = Self { p, c, gamma };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p >= 1.0 && self.p.is_finite()) {
            return Err(Error::param(format!("metric order p = {} must be ≥ 1", self.p)));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::param(format!("cutoff c = {} must be > 0", self.c)));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::param(format!("switch penalty γ = {} must be ≥ 0", self.gamma)));
        }
        Ok(())
    }

    fn cp(&self) -> f64 {
        self.c.powf(self.p)
    }

    fn switch_cost(&self) -> f64 {
        self.gamma.powf(self.p) / 2.0
    }
}

/// A trajectory: consecutive states starting at time `birth`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub birth: usize,
    pub states: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn new(birth: usize, states: Vec<DVector<f64>>) -> Self {
        Self { birth, states }
    }

    pub fn last_time(&self) -> usize {
        self.birth + self.states.len() - 1
    }

    pub fn exists_at(&self, k: usize) -> bool {
        k >= self.birth && k - self.birth < self.states.len()
    }

    pub fn state_at(&self, k: usize) -> Option<&DVector<f64>> {
        if self.exists_at(k) {
            Some(&self.states[k - self.birth])
        } else {
            None
        }
    }

    /// Keeps the states in `range` (possibly none).
    pub fn restrict(&self, range: RangeInclusive<usize>) -> Option<Trajectory> {
        let lo = (*range.start()).max(self.birth);
        let hi = (*range.end()).min(self.last_time());
        if lo > hi {
            return None;
        }
        Some(Trajectory {
            birth: lo,
            states: self.states[lo - self.birth..=hi - self.birth].to_vec(),
        })
    }
}

/// Per-step assignment matrices for times `start ..`.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentPlan {
    pub start: usize,
    pub steps: Vec<DMatrix<f64>>,
}

pub(crate) fn check_inputs(
    x: &[Trajectory],
    y: &[Trajectory],
    params: &MetricParams,
    window: &RangeInclusive<usize>,
) -> Result<()> {
    params.validate()?;
    if window.start() > window.end() {
        return Err(Error::param(format!(
            "empty window [{}, {}]",
            window.start(),
            window.end()
        )));
    }
    let mut dim = None;
    for t in x.iter().chain(y) {
        if t.states.is_empty() {
            return Err(Error::param("trajectory without states"));
        }
        if t.birth < *window.start() || t.last_time() > *window.end() {
            return Err(Error::Range {
                what: "trajectory time",
                index: if t.birth < *window.start() { t.birth } else { t.last_time() },
                lo: *window.start(),
                hi: *window.end(),
            });
        }
        for s in &t.states {
            match dim {
                None => dim = Some(s.len()),
                Some(d) if d != s.len() => {
                    return Err(Error::dim(format!("state of length {} vs {}", s.len(), d)))
                }
                _ => {}
            }
            if s.iter().any(|v| !v.is_finite()) {
                return Err(Error::param("non-finite trajectory state"));
            }
        }
    }
    Ok(())
}

/// A truth/estimate pair that is closer than `c` at some step.
struct Pair {
    i: usize,
    j: usize,
    /// First time of `coef`.
    start: usize,
    /// `min(d,c)ᵖ − cᵖ` for consecutive times from `start`; ≤ 0.
    coef: Vec<f64>,
}

impl Pair {
    fn end(&self) -> usize {
        self.start + self.coef.len() - 1
    }

    fn coef_at(&self, k: usize) -> f64 {
        if k < self.start || k > self.end() {
            0.0
        } else {
            self.coef[k - self.start]
        }
    }
}

fn close_pairs(x: &[Trajectory], y: &[Trajectory], params: &MetricParams) -> Vec<Pair> {
    let cp = params.cp();
    let mut pairs = Vec::new();
    for (i, a) in x.iter().enumerate() {
        for (j, b) in y.iter().enumerate() {
            let lo = a.birth.max(b.birth);
            let hi = a.last_time().min(b.last_time());
            if lo > hi {
                continue;
            }
            let coef: Vec<f64> = (lo..=hi)
                .map(|k| {
                    let d = (&a.states[k - a.birth] - &b.states[k - b.birth]).norm();
                    if d < params.c {
                        d.powf(params.p) - cp
                    } else {
                        0.0
                    }
                })
                .collect();
            // trim to the span where the pair is actually close
            let (Some(first), Some(last)) = (
                coef.iter().position(|&v| v < 0.0),
                coef.iter().rposition(|&v| v < 0.0),
            ) else {
                continue;
            };
            pairs.push(Pair {
                i,
                j,
                start: lo + first,
                coef: coef[first..=last].to_vec(),
            });
        }
    }
    pairs
}

/// Groups pair indices into connected components over shared trajectories.
fn components(pairs: &[Pair], n: usize) -> Vec<Vec<usize>> {
    fn find(parent: &mut [usize], mut v: usize) -> usize {
        while parent[v] != v {
            parent[v] = parent[parent[v]];
            v = parent[v];
        }
        v
    }
    let m = pairs.iter().map(|p| p.j + 1).max().unwrap_or(0);
    let mut parent: Vec<usize> = (0..n + m).collect();
    for p in pairs {
        let (a, b) = (find(&mut parent, p.i), find(&mut parent, n + p.j));
        if a != b {
            parent[a.max(b)] = a.min(b);
        }
    }
    let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
    for (idx, p) in pairs.iter().enumerate() {
        let root = find(&mut parent, p.i);
        match groups.iter_mut().find(|(r, _)| *r == root) {
            Some((_, g)) => g.push(idx),
            None => groups.push((root, vec![idx])),
        }
    }
    groups.into_iter().map(|(_, g)| g).collect()
}

/// Exact optimum of `Σ a_t w_t + g Σ |w_t − w_{t−1}|` over `w ∈ [0,1]^T`.
/// The constraint matrix is totally unimodular, so `w ∈ {0,1}` suffices.
fn single_pair(coef: &[f64], g: f64) -> (f64, Vec<f64>) {
    let t = coef.len();
    // best[s] = cost of a path ending in state s; back[k][s] = predecessor
    let mut best = [0.0, coef[0]];
    let mut back = vec![[0u8; 2]; t];
    for k in 1..t {
        let mut next = [0.0; 2];
        for s in 0..2 {
            let stay = best[s];
            let flip = best[1 - s] + g;
            let (v, from) = if stay <= flip { (stay, s) } else { (flip, 1 - s) };
            next[s] = v + if s == 1 { coef[k] } else { 0.0 };
            back[k][s] = from as u8;
        }
        best = next;
    }
    let mut s = if best[0] <= best[1] { 0 } else { 1 };
    let value = best[s];
    let mut w = vec![0.0; t];
    for k in (0..t).rev() {
        w[k] = s as f64;
        s = back[k][s] as usize;
    }
    (value, w)
}

/// Solves one component; returns its optimal value and, per pair, the plan
/// over the component's time span `start ..`.
fn solve_component(
    pairs: &[&Pair],
    g: f64,
) -> Result<(f64, usize, Vec<Vec<f64>>)> {
    let start = pairs.iter().map(|p| p.start).min().unwrap();
    let end = pairs.iter().map(|p| p.end()).max().unwrap();
    let span = end - start + 1;
    let dense = |p: &Pair| (start..=end).map(|k| p.coef_at(k)).collect::<Vec<_>>();

    if pairs.len() == 1 {
        let (v, w) = single_pair(&dense(pairs[0]), g);
        return Ok((v, start, vec![w]));
    }

    let np = pairs.len();
    let w_var = |p: usize, t: usize| p * span + t;
    let e_var = |p: usize, t: usize| np * span + p * (span - 1) + (t - 1);
    let n_vars = np * span + if g > 0.0 { np * (span - 1) } else { 0 };
    let mut lp = LinearProgram::new(n_vars);
    for (pi, p) in pairs.iter().enumerate() {
        for (t, a) in dense(p).into_iter().enumerate() {
            lp.set_cost(w_var(pi, t), a);
        }
    }

    // row/column capacity: Σ_j W_ij ≤ 1 and Σ_i W_ij ≤ 1
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut by_i: Vec<(usize, Vec<usize>)> = Vec::new();
    let mut by_j: Vec<(usize, Vec<usize>)> = Vec::new();
    for (pi, p) in pairs.iter().enumerate() {
        match by_i.iter_mut().find(|(i, _)| *i == p.i) {
            Some((_, v)) => v.push(pi),
            None => by_i.push((p.i, vec![pi])),
        }
        match by_j.iter_mut().find(|(j, _)| *j == p.j) {
            Some((_, v)) => v.push(pi),
            None => by_j.push((p.j, vec![pi])),
        }
    }
    groups.extend(by_i.into_iter().map(|(_, v)| v));
    groups.extend(by_j.into_iter().filter(|(_, v)| v.len() > 1).map(|(_, v)| v));
    for grp in &groups {
        for t in 0..span {
            lp.add_constraint(grp.iter().map(|&pi| (w_var(pi, t), 1.0)), Relation::Le, 1.0);
        }
    }
    if g > 0.0 {
        for pi in 0..np {
            for t in 1..span {
                lp.set_cost(e_var(pi, t), g);
                let (cur, prev, e) = (w_var(pi, t), w_var(pi, t - 1), e_var(pi, t));
                lp.add_constraint([(cur, 1.0), (prev, -1.0), (e, -1.0)], Relation::Le, 0.0);
                lp.add_constraint([(prev, 1.0), (cur, -1.0), (e, -1.0)], Relation::Le, 0.0);
            }
        }
    }
    let sol = simplex_solve(&lp)?;
    let plan = (0..np)
        .map(|pi| (0..span).map(|t| sol.x[w_var(pi, t)].clamp(0.0, 1.0)).collect())
        .collect();
    Ok((sol.objective, start, plan))
}

struct Solved {
    value: f64,
    /// (i, j, start, weights over consecutive times)
    pairs: Vec<(usize, usize, usize, Vec<f64>)>,
}

fn solve(
    x: &[Trajectory],
    y: &[Trajectory],
    params: &MetricParams,
    window: &RangeInclusive<usize>,
) -> Result<Solved> {
    check_inputs(x, y, params, window)?;
    let alive_steps: usize = x.iter().chain(y).map(|t| t.states.len()).sum();
    let constant = params.cp() / 2.0 * alive_steps as f64;
    let mut value = constant;

    let pairs = close_pairs(x, y, params);
    let g = params.switch_cost();
    let mut out = Vec::new();
    for comp in components(&pairs, x.len()) {
        let members: Vec<&Pair> = comp.iter().map(|&k| &pairs[k]).collect();
        let (v, start, plan) = solve_component(&members, g)?;
        value += v;
        for (p, w) in members.iter().zip(plan) {
            out.push((p.i, p.j, start, w));
        }
    }
    // The optimum is a constant minus savings; treat cancellation residue as
    // an exact zero so that d(X, X) = 0 survives the p-th root.
    if value.abs() <= 1e-12 * constant {
        value = 0.0;
    }
    Ok(Solved { value, pairs: out })
}

fn root(value: f64, p: f64) -> f64 {
    value.max(0.0).powf(1.0 / p)
}

/// Distance between trajectory sets `x` and `y` over `window`, which must
/// cover every lifetime.
pub fn lp_trajectory_distance(
    x: &[Trajectory],
    y: &[Trajectory],
    params: &MetricParams,
    window: RangeInclusive<usize>,
) -> Result<f64> {
    Ok(root(solve(x, y, params, &window)?.value, params.p))
}

/// As [`lp_trajectory_distance`], also returning an optimal plan over the
/// whole window.
pub fn lp_trajectory_assignment(
    x: &[Trajectory],
    y: &[Trajectory],
    params: &MetricParams,
    window: RangeInclusive<usize>,
) -> Result<(f64, AssignmentPlan)> {
    let solved = solve(x, y, params, &window)?;
    let (n, m) = (x.len(), y.len());
    let (lo, hi) = (*window.start(), *window.end());
    let mut steps = vec![DMatrix::zeros(n + 1, m + 1); hi - lo + 1];
    for (i, j, start, w) in &solved.pairs {
        for (k, step) in (lo..=hi).zip(steps.iter_mut()) {
            // hold the plan constant outside the span; it costs nothing there
            let t = k.clamp(*start, start + w.len() - 1) - start;
            step[(*i, *j)] = w[t];
        }
    }
    for step in &mut steps {
        for i in 0..n {
            let s: f64 = (0..m).map(|j| step[(i, j)]).sum();
            step[(i, m)] = (1.0 - s).max(0.0);
        }
        for j in 0..m {
            let s: f64 = (0..n).map(|i| step[(i, j)]).sum();
            step[(n, j)] = (1.0 - s).max(0.0);
        }
    }
    Ok((
        root(solved.value, params.p),
        AssignmentPlan { start: lo, steps },
    ))
}

/// Evaluates the objective `dᵖ` of an arbitrary plan (no minimisation).
pub fn plan_cost(
    x: &[Trajectory],
    y: &[Trajectory],
    params: &MetricParams,
    plan: &AssignmentPlan,
) -> Result<f64> {
    let window = plan.start..=plan.start + plan.steps.len().saturating_sub(1);
    check_inputs(x, y, params, &window)?;
    let (n, m) = (x.len(), y.len());
    let half = params.cp() / 2.0;
    let g = params.switch_cost();
    let mut total = 0.0;
    for (step, k) in plan.steps.iter().zip(window.clone()) {
        if step.shape() != (n + 1, m + 1) {
            return Err(Error::dim(format!("plan step shape {:?}", step.shape())));
        }
        for i in 0..=n {
            for j in 0..=m {
                let xi = (i < n).then(|| x[i].state_at(k)).flatten();
                let yj = (j < m).then(|| y[j].state_at(k)).flatten();
                let c = match (xi, yj) {
                    (Some(a), Some(b)) => (a - b).norm().min(params.c).powf(params.p),
                    (None, None) => 0.0,
                    _ => half,
                };
                total += step[(i, j)] * c;
            }
        }
    }
    for w in plan.steps.windows(2) {
        let diff = (&w[1] - &w[0]).view((0, 0), (n, m)).abs().sum();
        total += g * diff;
    }
    Ok(total)
}

/// Per-step root mean square over runs of a `runs × K` table.
pub fn rms_error_curve(per_run: &[Vec<f64>]) -> Result<Vec<f64>> {
    let Some(first) = per_run.first() else {
        return Err(Error::param("no runs to average"));
    };
    let k = first.len();
    if let Some(bad) = per_run.iter().find(|r| r.len() != k) {
        return Err(Error::dim(format!("run of length {} vs {}", bad.len(), k)));
    }
    let n = per_run.len() as f64;
    Ok((0..k)
        .map(|t| (per_run.iter().map(|r| r[t] * r[t]).sum::<f64>() / n).sqrt())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn traj(birth: usize, xs: &[f64]) -> Trajectory {
        Trajectory::new(
            birth,
            xs.iter().map(|&v| DVector::from_vec(vec![v, 0.0])).collect(),
        )
    }

    #[test]
    fn identity_and_empty() {
        let p = MetricParams::default();
        let x = vec![traj(1, &[0.0, 1.0, 2.0]), traj(2, &[5.0, 6.0])];
        assert_eq!(lp_trajectory_distance(&x, &x, &p, 1..=3).unwrap(), 0.0);
        assert_eq!(lp_trajectory_distance(&[], &[], &p, 1..=3).unwrap(), 0.0);
    }

    #[test]
    fn missed_only() {
        let p = MetricParams::default();
        let d = lp_trajectory_distance(&[traj(1, &[0.0, 1.0, 2.0])], &[], &p, 1..=3).unwrap();
        assert_relative_eq!(d, 150f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn localisation_only() {
        let p = MetricParams::default();
        let x = [traj(1, &[0.0, 1.0, 2.0])];
        let y = [traj(1, &[3.0, 4.0, 5.0])];
        let d = lp_trajectory_distance(&x, &y, &p, 1..=3).unwrap();
        assert_relative_eq!(d, 27f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn window_must_cover_lifetimes() {
        let p = MetricParams::default();
        let x = [traj(1, &[0.0, 1.0, 2.0])];
        assert!(matches!(
            lp_trajectory_distance(&x, &[], &p, 2..=3),
            Err(Error::Range { .. })
        ));
    }

    #[test]
    fn bad_params() {
        assert!(MetricParams::new(0.5, 10.0, 1.0).is_err());
        assert!(MetricParams::new(2.0, 0.0, 1.0).is_err());
        assert!(MetricParams::new(2.0, 10.0, -1.0).is_err());
    }

    #[test]
    fn crossing_tracks_use_the_lp() {
        // two truths, two estimates that swap partners halfway
        let p = MetricParams::default();
        let x = [traj(1, &[0.0, 0.0, 0.0, 0.0]), traj(1, &[2.0, 2.0, 2.0, 2.0])];
        let y = [traj(1, &[0.1, 0.2, 1.9, 2.1]), traj(1, &[1.9, 1.8, 0.1, 0.0])];
        let (d, plan) = lp_trajectory_assignment(&x, &y, &p, 1..=4).unwrap();
        assert_relative_eq!(plan_cost(&x, &y, &p, &plan).unwrap(), d * d, epsilon = 1e-9);
        let brute = brute_force_distance(&x, &y, &p, 1..=4).unwrap();
        assert!(d <= brute + 1e-9);
        for step in &plan.steps {
            for i in 0..2 {
                assert_relative_eq!(step.row(i).sum(), 1.0, epsilon = 1e-9);
                assert_relative_eq!(step.column(i).sum(), 1.0, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn single_pair_dp_matches_lp() {
        let coef = [-5.0, -0.2, -0.1, -3.0, 0.0, -4.0];
        for g in [0.0, 0.5, 2.0] {
            let (v, _) = single_pair(&coef, g);
            let mut lp = LinearProgram::new(2 * coef.len() - 1);
            for (t, &a) in coef.iter().enumerate() {
                lp.set_cost(t, a);
                lp.add_constraint([(t, 1.0)], Relation::Le, 1.0);
            }
            for t in 1..coef.len() {
                let e = coef.len() + t - 1;
                lp.set_cost(e, g);
                lp.add_constraint([(t, 1.0), (t - 1, -1.0), (e, -1.0)], Relation::Le, 0.0);
                lp.add_constraint([(t - 1, 1.0), (t, -1.0), (e, -1.0)], Relation::Le, 0.0);
            }
            let s = simplex_solve(&lp).unwrap();
            assert_relative_eq!(v, s.objective, epsilon = 1e-9);
        }
    }

    #[test]
    fn rms_curve() {
        assert!(rms_error_curve(&[]).is_err());
        assert!(rms_error_curve(&[vec![1.0], vec![1.0, 2.0]]).is_err());
        assert_eq!(rms_error_curve(&[vec![1.0, 2.0]]).unwrap(), vec![1.0, 2.0]);
        let r = rms_error_curve(&[vec![3.0, 1.0], vec![4.0, 1.0]]).unwrap();
        assert_relative_eq!(r[0], (12.5f64).sqrt(), epsilon = 1e-15);
        assert_relative_eq!(r[1], 1.0, epsilon = 1e-15);
    }
}
