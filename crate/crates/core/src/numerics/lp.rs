//! Dense two-phase simplex with Bland's rule.
//!
//! Problems are small (tens to a few hundred variables), so the tableau is a
//! plain `Vec<Vec<f64>>`. The final basic solution is recomputed from the
//! original constraint data to shed tableau drift.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-10;
const COST_TOL: f64 = 1e-10;
const MAX_ITERATIONS: usize = 100_000;

/// Bounds on one variable; `None` is infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bound {
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

impl Bound {
    pub const FREE: Bound = Bound {
        lower: None,
        upper: None,
    };
    pub const NON_NEGATIVE: Bound = Bound {
        lower: Some(0.0),
        upper: None,
    };

    pub fn between(lower: f64, upper: f64) -> Self {
        Bound {
            lower: Some(lower),
            upper: Some(upper),
        }
    }

    pub fn at_least(lower: f64) -> Self {
        Bound {
            lower: Some(lower),
            upper: None,
        }
    }

    pub fn at_most(upper: f64) -> Self {
        Bound {
            lower: None,
            upper: Some(upper),
        }
    }
}

/// `min c^T x  s.t.  A_ub x <= b_ub,  A_eq x = b_eq,  l <= x <= u`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub a_ub: Vec<Vec<f64>>,
    pub b_ub: Vec<f64>,
    pub a_eq: Vec<Vec<f64>>,
    pub b_eq: Vec<f64>,
    pub bounds: Vec<Bound>,
}

impl LinearProgram {
    /// All variables non-negative, no constraints.
    pub fn minimize(objective: Vec<f64>) -> Self {
        let n = objective.len();
        Self {
            objective,
            a_ub: Vec::new(),
            b_ub: Vec::new(),
            a_eq: Vec::new(),
            b_eq: Vec::new(),
            bounds: vec![Bound::NON_NEGATIVE; n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn leq(mut self, row: Vec<f64>, rhs: f64) -> Self {
        self.a_ub.push(row);
        self.b_ub.push(rhs);
        self
    }

    pub fn geq(self, row: Vec<f64>, rhs: f64) -> Self {
        self.leq(row.into_iter().map(|v| -v).collect(), -rhs)
    }

    pub fn eq(mut self, row: Vec<f64>, rhs: f64) -> Self {
        self.a_eq.push(row);
        self.b_eq.push(rhs);
        self
    }

    pub fn bound(mut self, var: usize, bound: Bound) -> Self {
        self.bounds[var] = bound;
        self
    }

    fn check(&self) -> Result<()> {
        let n = self.num_vars();
        let bad_row = |rows: &[Vec<f64>]| rows.iter().any(|r| r.len() != n);
        if bad_row(&self.a_ub) || bad_row(&self.a_eq) {
            return Err(Error::DimensionMismatch(format!(
                "constraint rows must have {n} entries"
            )));
        }
        if self.a_ub.len() != self.b_ub.len() || self.a_eq.len() != self.b_eq.len() {
            return Err(Error::DimensionMismatch(
                "constraint and rhs counts differ".into(),
            ));
        }
        if self.bounds.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} bounds for {n} variables",
                self.bounds.len()
            )));
        }
        let finite = self
            .objective
            .iter()
            .chain(self.a_ub.iter().flatten())
            .chain(&self.b_ub)
            .chain(self.a_eq.iter().flatten())
            .chain(&self.b_eq)
            .all(|v| v.is_finite());
        let bounds_ok = self.bounds.iter().all(|b| {
            b.lower.is_none_or(|v| !v.is_nan() && v != f64::INFINITY)
                && b.upper
                    .is_none_or(|v| !v.is_nan() && v != f64::NEG_INFINITY)
        });
        if !finite || !bounds_ok {
            return Err(Error::InvalidArgument(
                "linear program has non-finite data".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Optimal point; empty unless `status` is `Optimal`.
    pub x: Vec<f64>,
    /// Optimal value; `+inf` when infeasible, `-inf` when unbounded.
    pub value: f64,
}

impl LpSolution {
    fn infeasible() -> Self {
        Self {
            status: LpStatus::Infeasible,
            x: Vec::new(),
            value: f64::INFINITY,
        }
    }

    fn unbounded() -> Self {
        Self {
            status: LpStatus::Unbounded,
            x: Vec::new(),
            value: f64::NEG_INFINITY,
        }
    }
}

/// `x_j = offset + sum coef * s_k` over standard-form variables `s_k >= 0`.
struct VarMap {
    offset: f64,
    terms: Vec<(usize, f64)>,
}

struct StandardForm {
    maps: Vec<VarMap>,
    /// Rows over standard variables followed by slack columns.
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    /// Column of the slack that can start in the basis, if any.
    start_basic: Vec<Option<usize>>,
    cost: Vec<f64>,
}

fn standardize(lp: &LinearProgram) -> Option<StandardForm> {
    let mut maps = Vec::with_capacity(lp.num_vars());
    let mut n_std = 0;
    // (std column, upper limit) rows from doubly bounded variables
    let mut box_rows = Vec::new();
    for b in &lp.bounds {
        let map = match (b.lower, b.upper) {
            (Some(l), Some(u)) if l > u => return None,
            (Some(l), u) if l.is_finite() => {
                if let Some(u) = u.filter(|u| u.is_finite()) {
                    box_rows.push((n_std, u - l));
                }
                n_std += 1;
                VarMap {
                    offset: l,
                    terms: vec![(n_std - 1, 1.0)],
                }
            }
            (_, Some(u)) if u.is_finite() => {
                n_std += 1;
                VarMap {
                    offset: u,
                    terms: vec![(n_std - 1, -1.0)],
                }
            }
            _ => {
                n_std += 2;
                VarMap {
                    offset: 0.0,
                    terms: vec![(n_std - 2, 1.0), (n_std - 1, -1.0)],
                }
            }
        };
        maps.push(map);
    }

    let substitute = |row: &[f64], rhs: f64| -> (Vec<f64>, f64) {
        let mut out = vec![0.0; n_std];
        let mut shift = 0.0;
        for (a, map) in row.iter().zip(&maps) {
            shift += a * map.offset;
            for &(k, c) in &map.terms {
                out[k] += a * c;
            }
        }
        (out, rhs - shift)
    };

    let mut le_rows: Vec<(Vec<f64>, f64)> = lp
        .a_ub
        .iter()
        .zip(&lp.b_ub)
        .map(|(r, &b)| substitute(r, b))
        .collect();
    for (k, limit) in box_rows {
        let mut row = vec![0.0; n_std];
        row[k] = 1.0;
        le_rows.push((row, limit));
    }
    let eq_rows: Vec<(Vec<f64>, f64)> = lp
        .a_eq
        .iter()
        .zip(&lp.b_eq)
        .map(|(r, &b)| substitute(r, b))
        .collect();

    let n_slack = le_rows.len();
    let width = n_std + n_slack;
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    let mut start_basic = Vec::new();
    for (s, (row, b)) in le_rows.into_iter().enumerate() {
        let mut full = row;
        full.resize(width, 0.0);
        full[n_std + s] = 1.0;
        if b < 0.0 {
            full.iter_mut().for_each(|v| *v = -*v);
            rhs.push(-b);
            start_basic.push(None);
        } else {
            rhs.push(b);
            start_basic.push(Some(n_std + s));
        }
        rows.push(full);
    }
    for (row, b) in eq_rows {
        let mut full = row;
        full.resize(width, 0.0);
        if b < 0.0 {
            full.iter_mut().for_each(|v| *v = -*v);
        }
        rhs.push(b.abs());
        start_basic.push(None);
        rows.push(full);
    }

    let mut cost = vec![0.0; width];
    for (c, map) in lp.objective.iter().zip(&maps) {
        for &(k, coef) in &map.terms {
            cost[k] += c * coef;
        }
    }
    Some(StandardForm {
        maps,
        rows,
        rhs,
        start_basic,
        cost,
    })
}

struct Tableau {
    /// Constraint rows; last entry of each row is the rhs.
    t: Vec<Vec<f64>>,
    basis: Vec<usize>,
    /// Reduced-cost rows (phase 1, phase 2); last entry is minus the objective.
    obj: [Vec<f64>; 2],
    width: usize,
}

enum Outcome {
    Optimal,
    Unbounded,
}

impl Tableau {
    fn rhs(&self, i: usize) -> f64 {
        self.t[i][self.width]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let piv = self.t[r][c];
        self.t[r].iter_mut().for_each(|v| *v /= piv);
        let prow = self.t[r].clone();
        let eliminate = |row: &mut Vec<f64>| {
            let f = row[c];
            if f != 0.0 {
                row.iter_mut().zip(&prow).for_each(|(v, p)| *v -= f * p);
                row[c] = 0.0;
            }
        };
        for (i, row) in self.t.iter_mut().enumerate() {
            if i != r {
                eliminate(row);
            }
        }
        self.obj.iter_mut().for_each(eliminate);
        self.basis[r] = c;
    }

    /// Bland's rule: lowest-index improving column, ties in the ratio test
    /// broken by lowest basic index.
    fn run(&mut self, phase: usize, allowed: usize, iterations: &mut usize) -> Result<Outcome> {
        loop {
            *iterations += 1;
            if *iterations > MAX_ITERATIONS {
                return Err(Error::LpFailure("iteration limit reached".into()));
            }
            let Some(c) = (0..allowed).find(|&j| self.obj[phase][j] < -COST_TOL) else {
                return Ok(Outcome::Optimal);
            };
            let mut best: Option<(usize, f64)> = None;
            for i in 0..self.t.len() {
                let a = self.t[i][c];
                if a > PIVOT_TOL {
                    let ratio = self.rhs(i) / a;
                    best = match best {
                        None => Some((i, ratio)),
                        Some((bi, br)) => {
                            let tie = (ratio - br).abs() <= 1e-12 * br.abs().max(1.0);
                            if ratio < br && !tie || tie && self.basis[i] < self.basis[bi] {
                                Some((i, ratio))
                            } else {
                                Some((bi, br))
                            }
                        }
                    };
                }
            }
            let Some((r, _)) = best else {
                return Ok(Outcome::Unbounded);
            };
            self.pivot(r, c);
        }
    }
}

/// Solves `lp`. Deterministic for a given input.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution> {
    lp.check()?;
    let Some(sf) = standardize(lp) else {
        return Ok(LpSolution::infeasible());
    };
    let n_rows = sf.rows.len();
    let width0 = sf.cost.len();
    let n_art = sf.start_basic.iter().filter(|b| b.is_none()).count();
    let width = width0 + n_art;

    let mut t = Vec::with_capacity(n_rows);
    let mut basis = Vec::with_capacity(n_rows);
    let mut next_art = width0;
    for (i, row) in sf.rows.iter().enumerate() {
        let mut full = row.clone();
        full.resize(width + 1, 0.0);
        full[width] = sf.rhs[i];
        match sf.start_basic[i] {
            Some(c) => basis.push(c),
            None => {
                full[next_art] = 1.0;
                basis.push(next_art);
                next_art += 1;
            }
        }
        t.push(full);
    }

    let mut cost1 = vec![0.0; width + 1];
    cost1[width0..width].iter_mut().for_each(|v| *v = 1.0);
    let mut cost2 = sf.cost.clone();
    cost2.resize(width + 1, 0.0);
    let mut tab = Tableau {
        t,
        basis,
        obj: [cost1, cost2],
        width,
    };
    for i in 0..n_rows {
        let b = tab.basis[i];
        for k in 0..2 {
            let cb = tab.obj[k][b];
            if cb != 0.0 {
                let row = tab.t[i].clone();
                tab.obj[k]
                    .iter_mut()
                    .zip(&row)
                    .for_each(|(v, a)| *v -= cb * a);
            }
        }
    }

    let mut iterations = 0;
    if n_art > 0 {
        tab.run(0, width, &mut iterations)?;
        let infeasibility = -tab.obj[0][width];
        let scale = sf.rhs.iter().copied().fold(1.0, f64::max);
        if infeasibility > 1e-9 * scale {
            return Ok(LpSolution::infeasible());
        }
        // Pivot zero-level artificials out; rows where that is impossible are redundant.
        let mut i = 0;
        while i < tab.t.len() {
            if tab.basis[i] >= width0 {
                let col = (0..width0)
                    .filter(|&j| tab.t[i][j].abs() > 1e-9)
                    .max_by(|&a, &b| tab.t[i][a].abs().total_cmp(&tab.t[i][b].abs()));
                match col {
                    Some(j) => tab.pivot(i, j),
                    None => {
                        tab.t.remove(i);
                        tab.basis.remove(i);
                        continue;
                    }
                }
            }
            i += 1;
        }
    }
    if let Outcome::Unbounded = tab.run(1, width0, &mut iterations)? {
        return Ok(LpSolution::unbounded());
    }

    let mut s = vec![0.0; width0];
    for (i, &b) in tab.basis.iter().enumerate() {
        s[b] = tab.rhs(i);
    }
    refine_basic_solution(&sf, &tab.basis, &mut s);

    let x: Vec<f64> = sf
        .maps
        .iter()
        .map(|m| m.offset + m.terms.iter().map(|&(k, c)| c * s[k]).sum::<f64>())
        .collect();
    let value = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    Ok(LpSolution {
        status: LpStatus::Optimal,
        x,
        value,
    })
}

/// Re-solves `B s_B = b` on the original rows touched by the final basis.
/// Leaves `s` alone if the basis matrix is singular or the refined point is
/// worse than the tableau's.
fn refine_basic_solution(sf: &StandardForm, basis: &[usize], s: &mut [f64]) {
    let n = basis.len();
    if n == 0 {
        return;
    }
    let n_rows = sf.rows.len();
    // After redundant-row removal the basis may be shorter than the row set;
    // solve in the least-squares sense over all rows.
    let a = DMatrix::from_fn(n_rows, n, |i, k| sf.rows[i][basis[k]]);
    let b = DVector::from_column_slice(&sf.rhs);
    let Ok(pinv) = super::pseudoinverse(&a, 1e-13) else {
        return;
    };
    let sol = pinv * b;
    if sol.iter().any(|v| !v.is_finite() || *v < -1e-9) {
        return;
    }
    let residual = |vals: &[f64]| -> f64 {
        (0..n_rows)
            .map(|i| {
                let lhs: f64 = sf.rows[i].iter().zip(vals).map(|(a, v)| a * v).sum();
                (lhs - sf.rhs[i]).abs()
            })
            .fold(0.0, f64::max)
    };
    let mut candidate = vec![0.0; s.len()];
    for (k, &bcol) in basis.iter().enumerate() {
        candidate[bcol] = sol[k].max(0.0);
    }
    let before = residual(s);
    if residual(&candidate) <= before {
        s.copy_from_slice(&candidate);
    } else {
        s.iter_mut().for_each(|v| *v = v.max(0.0));
    }
}
