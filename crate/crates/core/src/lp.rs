//! Dense two-phase primal simplex.
//!
//! Sized for the DEA programs in this crate (tens of rows and columns); no
//! sparse machinery. Pivoting uses Dantzig's rule with smallest-index
//! tie-breaks and switches permanently to Bland's rule once the number of
//! degenerate pivots exceeds `2 * (rows + cols)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Maximize,
    Minimize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint<T> {
    pub coeffs: Vec<T>,
    pub relation: Relation,
    pub rhs: T,
}

/// `sense c·x` subject to `A x (rel) b`, `x >= lower` (a lower bound of
/// `-inf` marks a free variable).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearProgram<T> {
    pub sense: Sense,
    pub objective: Vec<T>,
    pub constraints: Vec<Constraint<T>>,
    pub lower_bounds: Vec<T>,
}

impl<T: Scalar> LinearProgram<T> {
    pub fn new(sense: Sense, objective: Vec<T>) -> Self {
        let n = objective.len();
        LinearProgram {
            sense,
            objective,
            constraints: Vec::new(),
            lower_bounds: vec![T::zero(); n],
        }
    }

    pub fn maximize(objective: Vec<T>) -> Self {
        Self::new(Sense::Maximize, objective)
    }

    pub fn minimize(objective: Vec<T>) -> Self {
        Self::new(Sense::Minimize, objective)
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn constraint(mut self, coeffs: Vec<T>, relation: Relation, rhs: T) -> Self {
        self.add_constraint(coeffs, relation, rhs);
        self
    }

    pub fn add_constraint(&mut self, coeffs: Vec<T>, relation: Relation, rhs: T) {
        self.constraints.push(Constraint { coeffs, relation, rhs });
    }

    pub fn set_lower_bound(&mut self, var: usize, bound: T) {
        self.lower_bounds[var] = bound;
    }

    pub fn set_free(&mut self, var: usize) {
        self.lower_bounds[var] = T::neg_infinity();
    }

    fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        if self.lower_bounds.len() != n {
            return Err(Error::Shape(format!(
                "{} lower bounds for {n} variables",
                self.lower_bounds.len()
            )));
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(Error::Parameter("non-finite objective coefficient".into()));
        }
        if self.lower_bounds.iter().any(|l| l.is_nan() || *l == T::infinity()) {
            return Err(Error::Parameter("invalid lower bound".into()));
        }
        for (i, c) in self.constraints.iter().enumerate() {
            if c.coeffs.len() != n {
                return Err(Error::Shape(format!(
                    "constraint {i} has {} coefficients for {n} variables",
                    c.coeffs.len()
                )));
            }
            if !c.rhs.is_finite() || c.coeffs.iter().any(|a| !a.is_finite()) {
                return Err(Error::Parameter(format!("constraint {i} has non-finite data")));
            }
        }
        Ok(())
    }

    /// Largest violation of any constraint or bound at `x` (zero when feasible).
    pub fn max_violation(&self, x: &[T]) -> T {
        let mut worst = T::zero();
        for c in &self.constraints {
            let lhs: T = c.coeffs.iter().zip(x).map(|(&a, &v)| a * v).sum();
            let v = match c.relation {
                Relation::Le => lhs - c.rhs,
                Relation::Ge => c.rhs - lhs,
                Relation::Eq => (lhs - c.rhs).abs(),
            };
            worst = worst.max(v);
        }
        for (&l, &v) in self.lower_bounds.iter().zip(x) {
            if l.is_finite() {
                worst = worst.max(l - v);
            }
        }
        worst
    }

    pub fn objective_at(&self, x: &[T]) -> T {
        self.objective.iter().zip(x).map(|(&c, &v)| c * v).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions<T> {
    pub pivot_tol: T,
    pub feasibility_tol: T,
    pub optimality_tol: T,
    /// `None` means `10 * (rows + cols)^2` of the working tableau.
    pub max_iterations: Option<usize>,
}

impl<T: Scalar> Default for SolverOptions<T> {
    fn default() -> Self {
        SolverOptions {
            pivot_tol: T::tolerance(1e-9),
            feasibility_tol: T::tolerance(1e-8),
            optimality_tol: T::tolerance(1e-9),
            max_iterations: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution<T> {
    pub status: LpStatus,
    /// Objective in the program's own sense; zero unless optimal.
    pub objective: T,
    /// Values of the original variables; empty unless optimal.
    pub x: Vec<T>,
    pub iterations: usize,
}

pub fn solve<T: Scalar>(lp: &LinearProgram<T>) -> Result<LpSolution<T>> {
    solve_with(lp, &SolverOptions::default())
}

/// How an original variable maps onto tableau columns.
#[derive(Debug, Clone, Copy)]
enum VarMap<T> {
    /// `x = lower + col`
    Shifted { col: usize, lower: T },
    /// `x = pos - neg`
    Split { pos: usize, neg: usize },
}

pub fn solve_with<T: Scalar>(lp: &LinearProgram<T>, opts: &SolverOptions<T>) -> Result<LpSolution<T>> {
    lp.validate()?;
    let n = lp.num_vars();

    let mut map = Vec::with_capacity(n);
    let mut n_struct = 0;
    for &l in &lp.lower_bounds {
        if l.is_finite() {
            map.push(VarMap::Shifted {
                col: n_struct,
                lower: l,
            });
            n_struct += 1;
        } else {
            map.push(VarMap::Split {
                pos: n_struct,
                neg: n_struct + 1,
            });
            n_struct += 2;
        }
    }

    // Rows in terms of structural columns, with b >= 0.
    let m = lp.constraints.len();
    let mut rows_a: Vec<Vec<T>> = Vec::with_capacity(m);
    let mut rels = Vec::with_capacity(m);
    let mut rhs = Vec::with_capacity(m);
    for c in &lp.constraints {
        let mut a = vec![T::zero(); n_struct];
        let mut b = c.rhs;
        for (j, &coef) in c.coeffs.iter().enumerate() {
            match map[j] {
                VarMap::Shifted { col, lower } => {
                    a[col] = coef;
                    b = b - coef * lower;
                }
                VarMap::Split { pos, neg } => {
                    a[pos] = coef;
                    a[neg] = -coef;
                }
            }
        }
        let mut rel = c.relation;
        if b < T::zero() {
            a.iter_mut().for_each(|v| *v = -*v);
            b = -b;
            rel = match rel {
                Relation::Le => Relation::Ge,
                Relation::Ge => Relation::Le,
                Relation::Eq => Relation::Eq,
            };
        }
        rows_a.push(a);
        rels.push(rel);
        rhs.push(b);
    }

    let n_slack = rels.iter().filter(|r| **r != Relation::Eq).count();
    let n_art = rels.iter().filter(|r| **r != Relation::Le).count();
    let first_art = n_struct + n_slack;
    let ncols = first_art + n_art;

    let mut tab = Tableau::new(m, ncols);
    let (mut s, mut a) = (n_struct, first_art);
    for i in 0..m {
        tab.rows[i][..n_struct].copy_from_slice(&rows_a[i]);
        tab.rows[i][ncols] = rhs[i];
        match rels[i] {
            Relation::Le => {
                tab.rows[i][s] = T::one();
                tab.basis[i] = s;
                s += 1;
            }
            Relation::Ge => {
                tab.rows[i][s] = -T::one();
                s += 1;
                tab.rows[i][a] = T::one();
                tab.basis[i] = a;
                a += 1;
            }
            Relation::Eq => {
                tab.rows[i][a] = T::one();
                tab.basis[i] = a;
                a += 1;
            }
        }
    }

    let cap = opts.max_iterations.unwrap_or_else(|| 10 * (m + ncols) * (m + ncols));
    let mut run = RunState {
        iterations: 0,
        degenerate: 0,
        cap,
    };

    let infeasible = |iterations| LpSolution {
        status: LpStatus::Infeasible,
        objective: T::zero(),
        x: Vec::new(),
        iterations,
    };

    if n_art > 0 {
        let mut phase1 = vec![T::zero(); ncols];
        phase1[first_art..].iter_mut().for_each(|c| *c = -T::one());
        tab.set_objective(&phase1);
        let all = vec![true; ncols];
        // Phase 1 is bounded below by zero, so it cannot be unbounded.
        tab.optimize(&all, opts, &mut run)?;
        let scale = rhs.iter().fold(T::one(), |acc, b| acc.max(b.abs()));
        if tab.objective_value() < -(opts.feasibility_tol * scale) {
            return Ok(infeasible(run.iterations));
        }
        tab.drive_out_artificials(first_art, opts);
    }

    let mut phase2 = vec![T::zero(); ncols];
    let sign = match lp.sense {
        Sense::Maximize => T::one(),
        Sense::Minimize => -T::one(),
    };
    for (j, &c) in lp.objective.iter().enumerate() {
        match map[j] {
            VarMap::Shifted { col, .. } => phase2[col] = sign * c,
            VarMap::Split { pos, neg } => {
                phase2[pos] = sign * c;
                phase2[neg] = -sign * c;
            }
        }
    }
    tab.set_objective(&phase2);
    let allowed: Vec<bool> = (0..ncols).map(|j| j < first_art).collect();
    if tab.optimize(&allowed, opts, &mut run)? == Outcome::Unbounded {
        return Ok(LpSolution {
            status: LpStatus::Unbounded,
            objective: T::zero(),
            x: Vec::new(),
            iterations: run.iterations,
        });
    }

    let mut cols = vec![T::zero(); ncols];
    for (i, &b) in tab.basis.iter().enumerate() {
        cols[b] = tab.rows[i][ncols].max(T::zero());
    }
    let x: Vec<T> = map
        .iter()
        .map(|vm| match *vm {
            VarMap::Shifted { col, lower } => lower + cols[col],
            VarMap::Split { pos, neg } => cols[pos] - cols[neg],
        })
        .collect();
    Ok(LpSolution {
        status: LpStatus::Optimal,
        objective: lp.objective_at(&x),
        x,
        iterations: run.iterations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Outcome {
    Optimal,
    Unbounded,
}

struct RunState {
    iterations: usize,
    degenerate: usize,
    cap: usize,
}

/// Maximization tableau. `obj[j]` holds the reduced cost `z_j - c_j`; the last
/// entry of `obj` and of each row is the objective value / right-hand side.
struct Tableau<T> {
    rows: Vec<Vec<T>>,
    obj: Vec<T>,
    basis: Vec<usize>,
    ncols: usize,
}

impl<T: Scalar> Tableau<T> {
    fn new(m: usize, ncols: usize) -> Self {
        Tableau {
            rows: vec![vec![T::zero(); ncols + 1]; m],
            obj: vec![T::zero(); ncols + 1],
            basis: vec![0; m],
            ncols,
        }
    }

    fn objective_value(&self) -> T {
        self.obj[self.ncols]
    }

    fn set_objective(&mut self, c: &[T]) {
        for j in 0..=self.ncols {
            let zj: T = self.rows.iter().zip(&self.basis).map(|(row, &b)| c[b] * row[j]).sum();
            self.obj[j] = if j < self.ncols { zj - c[j] } else { zj };
        }
    }

    fn optimize(&mut self, allowed: &[bool], opts: &SolverOptions<T>, run: &mut RunState) -> Result<Outcome> {
        let bland_after = 2 * (self.rows.len() + self.ncols);
        loop {
            let bland = run.degenerate > bland_after;
            let Some(q) = self.entering(allowed, opts.optimality_tol, bland) else {
                return Ok(Outcome::Optimal);
            };
            let Some((r, ratio)) = self.leaving(q, opts.pivot_tol) else {
                return Ok(Outcome::Unbounded);
            };
            if ratio <= opts.feasibility_tol {
                run.degenerate += 1;
            }
            run.iterations += 1;
            if run.iterations > run.cap {
                return Err(Error::IterationLimit(run.cap));
            }
            log::trace!(
                "pivot {}: column {q} enters, row {r} (column {}) leaves, ratio {ratio}{}",
                run.iterations,
                self.basis[r],
                if bland { " [bland]" } else { "" }
            );
            self.pivot(r, q);
            if log::log_enabled!(log::Level::Trace) {
                self.dump();
            }
        }
    }

    fn entering(&self, allowed: &[bool], tol: T, bland: bool) -> Option<usize> {
        let mut best: Option<(usize, T)> = None;
        for j in 0..self.ncols {
            if !allowed[j] || self.obj[j] >= -tol || self.basis.contains(&j) {
                continue;
            }
            if bland {
                return Some(j);
            }
            if best.is_none_or(|(_, v)| self.obj[j] < v) {
                best = Some((j, self.obj[j]));
            }
        }
        best.map(|(j, _)| j)
    }

    /// Minimum-ratio row; ties go to the smallest basic column index.
    fn leaving(&self, q: usize, pivot_tol: T) -> Option<(usize, T)> {
        let mut best: Option<(usize, T)> = None;
        for (i, row) in self.rows.iter().enumerate() {
            let a = row[q];
            if a <= pivot_tol {
                continue;
            }
            let ratio = row[self.ncols].max(T::zero()) / a;
            best = match best {
                None => Some((i, ratio)),
                Some((bi, br)) => {
                    if ratio < br || (ratio == br && self.basis[i] < self.basis[bi]) {
                        Some((i, ratio))
                    } else {
                        Some((bi, br))
                    }
                }
            };
        }
        best
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let p = self.rows[r][q];
        for v in self.rows[r].iter_mut() {
            *v = *v / p;
        }
        self.rows[r][q] = T::one();
        let pivot_row = self.rows[r].clone();
        let eliminate = |row: &mut Vec<T>| {
            let f = row[q];
            if f != T::zero() {
                for (v, &pv) in row.iter_mut().zip(&pivot_row) {
                    *v = *v - f * pv;
                }
                row[q] = T::zero();
            }
        };
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i != r {
                eliminate(row);
            }
        }
        eliminate(&mut self.obj);
        self.basis[r] = q;
    }

    /// Pivots basic artificial columns (at zero level) out of the basis and
    /// drops rows that turn out to be redundant.
    fn drive_out_artificials(&mut self, first_art: usize, opts: &SolverOptions<T>) {
        let mut i = 0;
        while i < self.rows.len() {
            if self.basis[i] < first_art {
                i += 1;
                continue;
            }
            let mut best: Option<(usize, T)> = None;
            for j in 0..first_art {
                let a = self.rows[i][j].abs();
                if a > opts.pivot_tol && best.is_none_or(|(_, v)| a > v) {
                    best = Some((j, a));
                }
            }
            match best {
                Some((j, _)) => {
                    self.pivot(i, j);
                    i += 1;
                }
                None => {
                    self.rows.remove(i);
                    self.basis.remove(i);
                }
            }
        }
    }

    fn dump(&self) {
        for (row, b) in self.rows.iter().zip(&self.basis) {
            log::trace!("  x{b:<3} | {row:?}");
        }
        log::trace!("  z    | {:?}", self.obj);
    }
}
