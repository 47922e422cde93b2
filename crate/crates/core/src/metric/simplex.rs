//! Dense two-phase tableau simplex.
//!
//! Minimises `cᵀx` subject to linear rows with `≤`, `=` or `≥` relations and
//! `x ≥ 0`. Pricing is Dantzig's most-negative reduced cost; after a run of
//! degenerate pivots the solver switches to Bland's smallest-index rule until
//! the objective strictly improves, which rules out cycling.

use thiserror::Error;

const COST_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-9;
const DEGENERATE_STREAK: usize = 50;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("problem is infeasible")]
    Infeasible,
    #[error("problem is unbounded")]
    Unbounded,
    #[error("iteration limit {0} reached")]
    IterationLimit(usize),
    #[error("malformed problem: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
struct Row {
    terms: Vec<(usize, f64)>,
    relation: Relation,
    rhs: f64,
}

/// A linear program over nonnegative variables.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    n_vars: usize,
    objective: Vec<f64>,
    rows: Vec<Row>,
}

impl LinearProgram {
    pub fn new(n_vars: usize) -> Self {
        Self {
            n_vars,
            objective: vec![0.0; n_vars],
            rows: Vec::new(),
        }
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn n_constraints(&self) -> usize {
        self.rows.len()
    }

    pub fn set_cost(&mut self, var: usize, cost: f64) {
        self.objective[var] = cost;
    }

    /// Adds `Σ coef·x[var]  (relation)  rhs`. Repeated variables are summed.
    pub fn add_constraint(
        &mut self,
        terms: impl IntoIterator<Item = (usize, f64)>,
        relation: Relation,
        rhs: f64,
    ) {
        self.rows.push(Row {
            terms: terms.into_iter().collect(),
            relation,
            rhs,
        });
    }

    fn check(&self) -> Result<(), LpError> {
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(LpError::Invalid("non-finite cost".into()));
        }
        for (i, r) in self.rows.iter().enumerate() {
            if !r.rhs.is_finite() {
                return Err(LpError::Invalid(format!("row {i} has non-finite rhs")));
            }
            for &(v, a) in &r.terms {
                if v >= self.n_vars || !a.is_finite() {
                    return Err(LpError::Invalid(format!("row {i} has a bad term")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub objective: f64,
    pub x: Vec<f64>,
    pub iterations: usize,
}

struct Tableau {
    /// `m × width` row-major, already multiplied by `B⁻¹`.
    a: Vec<f64>,
    b: Vec<f64>,
    width: usize,
    basis: Vec<usize>,
    /// Reduced costs and current objective value for the active phase.
    reduced: Vec<f64>,
    value: f64,
    /// Columns allowed to enter the basis.
    enterable: Vec<bool>,
    iterations: usize,
    limit: usize,
}

impl Tableau {
    fn rows(&self) -> usize {
        self.b.len()
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.width + j]
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let w = self.width;
        let inv = 1.0 / self.at(r, q);
        for v in &mut self.a[r * w..(r + 1) * w] {
            *v *= inv;
        }
        self.b[r] *= inv;
        self.a[r * w + q] = 1.0;
        // the pivot row is usually sparse: eliminate along its nonzeros only
        let pivot_b = self.b[r];
        let pivot_row: Vec<(usize, f64)> = self.a[r * w..(r + 1) * w]
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(j, v)| (j, *v))
            .collect();
        for i in 0..self.rows() {
            if i == r {
                continue;
            }
            let f = self.a[i * w + q];
            if f == 0.0 {
                continue;
            }
            let row = &mut self.a[i * w..(i + 1) * w];
            for &(j, p) in &pivot_row {
                row[j] -= f * p;
            }
            row[q] = 0.0;
            self.b[i] -= f * pivot_b;
            if self.b[i] < 0.0 && self.b[i] > -FEAS_TOL {
                self.b[i] = 0.0;
            }
        }
        let f = self.reduced[q];
        if f != 0.0 {
            for &(j, p) in &pivot_row {
                self.reduced[j] -= f * p;
            }
            self.reduced[q] = 0.0;
            self.value += f * pivot_b;
        }
        self.basis[r] = q;
    }

    /// Sets the active objective and prices it against the current basis.
    fn price(&mut self, costs: &[f64]) {
        let w = self.width;
        self.reduced = costs.to_vec();
        self.value = 0.0;
        for i in 0..self.rows() {
            let cb = costs[self.basis[i]];
            if cb == 0.0 {
                continue;
            }
            for j in 0..w {
                self.reduced[j] -= cb * self.a[i * w + j];
            }
            self.value += cb * self.b[i];
        }
    }

    fn entering(&self, bland: bool) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (j, &r) in self.reduced.iter().enumerate() {
            if !self.enterable[j] || r >= -COST_TOL {
                continue;
            }
            if bland {
                return Some(j);
            }
            if best.is_none_or(|(_, b)| r < b) {
                best = Some((j, r));
            }
        }
        best.map(|(j, _)| j)
    }

    fn leaving(&self, q: usize, bland: bool) -> Option<usize> {
        let mut best: Option<(usize, f64, f64)> = None;
        for i in 0..self.rows() {
            let piv = self.at(i, q);
            if piv <= PIVOT_TOL {
                continue;
            }
            let ratio = self.b[i].max(0.0) / piv;
            let better = match best {
                None => true,
                Some((bi, br, bp)) => {
                    if ratio < br - 1e-12 {
                        true
                    } else if ratio <= br + 1e-12 {
                        if bland {
                            self.basis[i] < self.basis[bi]
                        } else {
                            piv > bp
                        }
                    } else {
                        false
                    }
                }
            };
            if better {
                best = Some((i, ratio, piv));
            }
        }
        best.map(|(i, _, _)| i)
    }

    fn optimise(&mut self) -> Result<(), LpError> {
        let mut bland = false;
        let mut streak = 0usize;
        loop {
            let Some(q) = self.entering(bland) else {
                return Ok(());
            };
            let Some(r) = self.leaving(q, bland) else {
                return Err(LpError::Unbounded);
            };
            if self.iterations >= self.limit {
                return Err(LpError::IterationLimit(self.limit));
            }
            self.iterations += 1;
            let before = self.value;
            self.pivot(r, q);
            if self.value < before - 1e-12 {
                streak = 0;
                bland = false;
            } else {
                streak += 1;
                if streak >= DEGENERATE_STREAK {
                    bland = true;
                }
            }
        }
    }
}

/// Solves `lp` to optimality.
pub fn simplex_solve(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    lp.check()?;
    let n = lp.n_vars;

    // normalise to nonnegative right-hand sides
    let rows: Vec<Row> = lp
        .rows
        .iter()
        .map(|r| {
            if r.rhs < 0.0 {
                Row {
                    terms: r.terms.iter().map(|&(v, a)| (v, -a)).collect(),
                    relation: match r.relation {
                        Relation::Le => Relation::Ge,
                        Relation::Ge => Relation::Le,
                        Relation::Eq => Relation::Eq,
                    },
                    rhs: -r.rhs,
                }
            } else {
                r.clone()
            }
        })
        .collect();

    let m = rows.len();
    let n_slack = rows.iter().filter(|r| r.relation != Relation::Eq).count();
    let n_art = rows.iter().filter(|r| r.relation != Relation::Le).count();
    let width = n + n_slack + n_art;
    let mut a = vec![0.0; m * width];
    let mut b = vec![0.0; m];
    let mut basis = vec![0; m];
    let (mut slack, mut art) = (n, n + n_slack);
    for (i, r) in rows.iter().enumerate() {
        for &(v, coef) in &r.terms {
            a[i * width + v] += coef;
        }
        b[i] = r.rhs;
        match r.relation {
            Relation::Le => {
                a[i * width + slack] = 1.0;
                basis[i] = slack;
                slack += 1;
            }
            Relation::Ge => {
                a[i * width + slack] = -1.0;
                slack += 1;
                a[i * width + art] = 1.0;
                basis[i] = art;
                art += 1;
            }
            Relation::Eq => {
                a[i * width + art] = 1.0;
                basis[i] = art;
                art += 1;
            }
        }
    }

    let mut t = Tableau {
        a,
        b,
        width,
        basis,
        reduced: Vec::new(),
        value: 0.0,
        enterable: vec![true; width],
        iterations: 0,
        limit: 50_000 + 50 * (m + width),
    };

    let art_start = n + n_slack;
    if n_art > 0 {
        let mut phase1 = vec![0.0; width];
        for c in &mut phase1[art_start..] {
            *c = 1.0;
        }
        t.price(&phase1);
        t.optimise()?;
        let scale = 1.0 + t.b.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        if t.value > FEAS_TOL * scale {
            return Err(LpError::Infeasible);
        }
        // drive remaining zero-level artificials out of the basis
        let mut redundant = Vec::new();
        for i in 0..t.rows() {
            if t.basis[i] < art_start {
                continue;
            }
            match (0..art_start).find(|&j| t.at(i, j).abs() > PIVOT_TOL) {
                Some(j) => t.pivot(i, j),
                None => redundant.push(i),
            }
        }
        for &i in redundant.iter().rev() {
            t.a.drain(i * width..(i + 1) * width);
            t.b.remove(i);
            t.basis.remove(i);
        }
        for e in &mut t.enterable[art_start..] {
            *e = false;
        }
    }

    let mut costs = vec![0.0; width];
    costs[..n].copy_from_slice(&lp.objective);
    t.price(&costs);
    t.optimise()?;

    let mut x = vec![0.0; n];
    for (i, &v) in t.basis.iter().enumerate() {
        if v < n {
            x[v] = t.b[i].max(0.0);
        }
    }
    let objective = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    Ok(LpSolution {
        objective,
        x,
        iterations: t.iterations,
    })
}
