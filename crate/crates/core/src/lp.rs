//! Dense two-phase simplex for the small linear programs behind the
//! transport dual and the Laplacian curvature formula.
//!
//! Pivoting follows Bland's rule (lowest eligible index enters, ties in the
//! ratio test leave by lowest basic index), which rules out cycling on the
//! highly degenerate Lipschitz programs this crate produces.

use thiserror::Error;

use crate::tolerance::{FEASIBILITY_TOL, OPTIMALITY_TOL, PIVOT_TOL};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("linear program is infeasible (phase-one residual {0:.3e})")]
    Infeasible(f64),
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("non-finite coefficient in linear program")]
    NonFinite,
    #[error("simplex exceeded {0} pivots")]
    IterationLimit(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

impl Relation {
    fn flipped(self) -> Self {
        match self {
            Relation::Le => Relation::Ge,
            Relation::Ge => Relation::Le,
            Relation::Eq => Relation::Eq,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub coeffs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

/// Minimisation problem `min c·x` subject to linear rows, per-variable lower
/// bounds (`None` for a free variable) and gauge fixings `x_j = value`.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    objective: Vec<f64>,
    lower: Vec<Option<f64>>,
    fixed: Vec<Option<f64>>,
    constraints: Vec<Constraint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub objective: f64,
    pub x: Vec<f64>,
}

impl LinearProgram {
    /// `n` variables, all with lower bound zero and zero cost.
    pub fn new(n: usize) -> Self {
        LinearProgram {
            objective: vec![0.0; n],
            lower: vec![Some(0.0); n],
            fixed: vec![None; n],
            constraints: Vec::new(),
        }
    }

    pub fn variable_count(&self) -> usize {
        self.objective.len()
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn set_cost(&mut self, j: usize, c: f64) -> &mut Self {
        self.objective[j] = c;
        self
    }

    pub fn set_lower(&mut self, j: usize, bound: Option<f64>) -> &mut Self {
        self.lower[j] = bound;
        self
    }

    pub fn fix(&mut self, j: usize, value: f64) -> &mut Self {
        self.fixed[j] = Some(value);
        self
    }

    pub fn add_constraint(&mut self, coeffs: &[(usize, f64)], relation: Relation, rhs: f64) -> &mut Self {
        self.constraints.push(Constraint {
            coeffs: coeffs.to_vec(),
            relation,
            rhs,
        });
        self
    }

    /// Value of the objective at `x`.
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Largest violation of any row, bound or fixing at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (j, &v) in x.iter().enumerate() {
            if let Some(f) = self.fixed[j] {
                worst = worst.max((v - f).abs());
            } else if let Some(l) = self.lower[j] {
                worst = worst.max(l - v);
            }
        }
        for c in &self.constraints {
            let lhs: f64 = c.coeffs.iter().map(|&(j, a)| a * x[j]).sum();
            let gap = match c.relation {
                Relation::Le => lhs - c.rhs,
                Relation::Ge => c.rhs - lhs,
                Relation::Eq => (lhs - c.rhs).abs(),
            };
            worst = worst.max(gap);
        }
        worst
    }

    pub fn solve(&self) -> Result<LpSolution, LpError> {
        solve_lp(self)
    }
}

/// How an original variable maps onto non-negative tableau columns.
#[derive(Debug, Clone, Copy)]
enum Column {
    Fixed(f64),
    Shifted { col: usize, lower: f64 },
    Split { pos: usize, neg: usize },
}

struct Tableau {
    rows: usize,
    cols: usize,
    // (rows + 1) x (cols + 1), last row = reduced costs, last column = rhs
    a: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.a[i * (self.cols + 1) + j]
    }

    fn rhs(&self, i: usize) -> f64 {
        self.at(i, self.cols)
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let width = self.cols + 1;
        let p = self.a[r * width + c];
        for j in 0..width {
            self.a[r * width + j] /= p;
        }
        self.a[r * width + c] = 1.0;
        for i in 0..=self.rows {
            if i == r {
                continue;
            }
            let f = self.a[i * width + c];
            if f == 0.0 {
                continue;
            }
            for j in 0..width {
                let v = self.a[r * width + j];
                if v != 0.0 {
                    self.a[i * width + j] -= f * v;
                }
            }
            self.a[i * width + c] = 0.0;
        }
        self.basis[r] = c;
    }

    /// Runs Bland-rule simplex on the current cost row; columns flagged in
    /// `banned` never enter.
    fn optimize(&mut self, banned: &[bool]) -> Result<(), LpError> {
        let limit = 50 * (self.rows + self.cols) + 1000;
        for _ in 0..limit {
            let entering = (0..self.cols)
                .find(|&j| !banned[j] && self.at(self.rows, j) < -OPTIMALITY_TOL);
            let Some(c) = entering else {
                return Ok(());
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows {
                let a = self.at(i, c);
                if a <= PIVOT_TOL {
                    continue;
                }
                let ratio = self.rhs(i).max(0.0) / a;
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((bi, br)) => {
                        let tie = (ratio - br).abs() <= 1e-12 * (1.0 + br.abs());
                        if ratio < br && !tie || tie && self.basis[i] < self.basis[bi] {
                            Some((i, ratio))
                        } else {
                            Some((bi, br))
                        }
                    }
                };
            }
            let Some((r, _)) = leave else {
                return Err(LpError::Unbounded);
            };
            self.pivot(r, c);
        }
        Err(LpError::IterationLimit(limit))
    }
}

/// Solves `lp` to optimality. The returned `x` is indexed like the original
/// variables and includes the fixed ones.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    let n = lp.variable_count();
    let finite = lp.objective.iter().all(|c| c.is_finite())
        && lp
            .constraints
            .iter()
            .all(|c| c.rhs.is_finite() && c.coeffs.iter().all(|(_, a)| a.is_finite()));
    if !finite {
        return Err(LpError::NonFinite);
    }

    let mut structural = 0;
    let columns: Vec<Column> = (0..n)
        .map(|j| {
            if let Some(v) = lp.fixed[j] {
                Column::Fixed(v)
            } else if let Some(l) = lp.lower[j] {
                structural += 1;
                Column::Shifted {
                    col: structural - 1,
                    lower: l,
                }
            } else {
                structural += 2;
                Column::Split {
                    pos: structural - 2,
                    neg: structural - 1,
                }
            }
        })
        .collect();

    // Rows over the structural columns with rhs made non-negative.
    let mut rows: Vec<(Vec<f64>, Relation, f64)> = Vec::new();
    for c in &lp.constraints {
        let mut dense = vec![0.0; structural];
        let mut rhs = c.rhs;
        for &(j, a) in &c.coeffs {
            match columns[j] {
                Column::Fixed(v) => rhs -= a * v,
                Column::Shifted { col, lower } => {
                    dense[col] += a;
                    rhs -= a * lower;
                }
                Column::Split { pos, neg } => {
                    dense[pos] += a;
                    dense[neg] -= a;
                }
            }
        }
        if dense.iter().all(|&a| a == 0.0) {
            let ok = match c.relation {
                Relation::Le => rhs >= -FEASIBILITY_TOL,
                Relation::Ge => rhs <= FEASIBILITY_TOL,
                Relation::Eq => rhs.abs() <= FEASIBILITY_TOL,
            };
            if !ok {
                return Err(LpError::Infeasible(rhs.abs()));
            }
            continue;
        }
        let mut relation = c.relation;
        if rhs < 0.0 {
            dense.iter_mut().for_each(|a| *a = -*a);
            rhs = -rhs;
            relation = relation.flipped();
        }
        rows.push((dense, relation, rhs));
    }

    let m = rows.len();
    let slack_count = rows.iter().filter(|r| r.1 != Relation::Eq).count();
    let art_count = rows.iter().filter(|r| r.1 != Relation::Le).count();
    let cols = structural + slack_count + art_count;
    let width = cols + 1;
    let mut t = Tableau {
        rows: m,
        cols,
        a: vec![0.0; (m + 1) * width],
        basis: vec![0; m],
    };
    let mut is_artificial = vec![false; cols];
    let mut next_slack = structural;
    let mut next_art = structural + slack_count;
    for (i, (dense, relation, rhs)) in rows.iter().enumerate() {
        t.a[i * width..i * width + structural].copy_from_slice(dense);
        t.a[i * width + cols] = *rhs;
        match relation {
            Relation::Le => {
                t.a[i * width + next_slack] = 1.0;
                t.basis[i] = next_slack;
                next_slack += 1;
            }
            Relation::Ge => {
                t.a[i * width + next_slack] = -1.0;
                next_slack += 1;
                t.a[i * width + next_art] = 1.0;
                t.basis[i] = next_art;
                is_artificial[next_art] = true;
                next_art += 1;
            }
            Relation::Eq => {
                t.a[i * width + next_art] = 1.0;
                t.basis[i] = next_art;
                is_artificial[next_art] = true;
                next_art += 1;
            }
        }
    }

    if art_count > 0 {
        // phase one: minimise the sum of artificials
        let obj = m * width;
        for j in 0..cols {
            if is_artificial[j] {
                t.a[obj + j] = 1.0;
            }
        }
        for i in 0..m {
            if is_artificial[t.basis[i]] {
                for j in 0..width {
                    t.a[obj + j] -= t.a[i * width + j];
                }
            }
        }
        t.optimize(&vec![false; cols])?;
        let residual = -t.a[obj + cols];
        let scale = 1.0 + rows.iter().map(|r| r.2).fold(0.0, f64::max);
        if residual > FEASIBILITY_TOL * scale {
            return Err(LpError::Infeasible(residual));
        }
        // drive zero-level artificials out of the basis, dropping redundant rows
        let mut i = 0;
        while i < t.rows {
            if is_artificial[t.basis[i]] {
                let replacement = (0..cols).find(|&j| !is_artificial[j] && t.at(i, j).abs() > 1e-9);
                match replacement {
                    Some(j) => {
                        t.pivot(i, j);
                        i += 1;
                    }
                    None => remove_row(&mut t, i),
                }
            } else {
                i += 1;
            }
        }
    }

    // phase two
    let mut cost = vec![0.0; cols];
    for (j, col) in columns.iter().enumerate() {
        let c = lp.objective[j];
        match *col {
            Column::Fixed(_) => {}
            Column::Shifted { col, .. } => cost[col] = c,
            Column::Split { pos, neg } => {
                cost[pos] = c;
                cost[neg] = -c;
            }
        }
    }
    let obj = t.rows * width;
    for j in 0..width {
        t.a[obj + j] = if j < cols { cost[j] } else { 0.0 };
    }
    for i in 0..t.rows {
        let cb = cost[t.basis[i]];
        if cb != 0.0 {
            for j in 0..width {
                t.a[obj + j] -= cb * t.a[i * width + j];
            }
        }
    }
    t.optimize(&is_artificial)?;

    let mut values = vec![0.0; cols];
    for i in 0..t.rows {
        values[t.basis[i]] = t.rhs(i).max(0.0);
    }
    let x: Vec<f64> = columns
        .iter()
        .map(|col| match *col {
            Column::Fixed(v) => v,
            Column::Shifted { col, lower } => lower + values[col],
            Column::Split { pos, neg } => values[pos] - values[neg],
        })
        .collect();
    Ok(LpSolution {
        objective: lp.evaluate(&x),
        x,
    })
}

fn remove_row(t: &mut Tableau, r: usize) {
    let width = t.cols + 1;
    t.a.drain(r * width..(r + 1) * width);
    t.basis.remove(r);
    t.rows -= 1;
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_lower_bound() {
        let mut lp = LinearProgram::new(1);
        lp.set_cost(0, 1.0).add_constraint(&[(0, 1.0)], Relation::Ge, 3.0);
        let s = lp.solve().unwrap();
        assert!((s.objective - 3.0).abs() < 1e-12);
    }

    #[test]
    fn sum_at_least_one() {
        let mut lp = LinearProgram::new(2);
        lp.set_cost(0, 1.0)
            .set_cost(1, 1.0)
            .add_constraint(&[(0, 1.0), (1, 1.0)], Relation::Ge, 1.0);
        let s = lp.solve().unwrap();
        assert!((s.objective - 1.0).abs() < 1e-12);
        assert!(lp.max_violation(&s.x) < 1e-12);
    }

    #[test]
    fn k2_lipschitz_program() {
        // f(x)=0 fixed, f(y) free with |f(y)-f(x)| <= w and f(y)-f(x) = w;
        // objective (Δf(x) - Δf(y)) / w = (f(y) - (f(x) - f(y))) / w = 2 f(y) / w
        let w = 0.37;
        let mut lp = LinearProgram::new(2);
        lp.set_lower(0, None)
            .set_lower(1, None)
            .fix(0, 0.0)
            .set_cost(1, 2.0 / w)
            .add_constraint(&[(1, 1.0), (0, -1.0)], Relation::Eq, w)
            .add_constraint(&[(1, 1.0), (0, -1.0)], Relation::Le, w)
            .add_constraint(&[(0, 1.0), (1, -1.0)], Relation::Le, w);
        let s = lp.solve().unwrap();
        assert!((s.objective - 2.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut lp = LinearProgram::new(1);
        lp.add_constraint(&[(0, 1.0)], Relation::Le, -1.0);
        assert!(matches!(lp.solve(), Err(LpError::Infeasible(_))));

        let mut lp = LinearProgram::new(1);
        lp.set_cost(0, -1.0);
        assert_eq!(lp.solve(), Err(LpError::Unbounded));

        let mut lp = LinearProgram::new(1);
        lp.set_lower(0, None).set_cost(0, 1.0);
        assert_eq!(lp.solve(), Err(LpError::Unbounded));
    }

    #[test]
    fn redundant_equalities() {
        let mut lp = LinearProgram::new(2);
        lp.set_cost(0, 1.0)
            .set_cost(1, 2.0)
            .add_constraint(&[(0, 1.0), (1, 1.0)], Relation::Eq, 1.0)
            .add_constraint(&[(0, 2.0), (1, 2.0)], Relation::Eq, 2.0);
        let s = lp.solve().unwrap();
        assert!((s.objective - 1.0).abs() < 1e-12);
    }

    #[test]
    fn beale_degenerate_cycle_terminates() {
        // Beale's example cycles under the largest-coefficient rule.
        let mut lp = LinearProgram::new(4);
        lp.set_cost(0, -0.75)
            .set_cost(1, 150.0)
            .set_cost(2, -0.02)
            .set_cost(3, 6.0)
            .add_constraint(&[(0, 0.25), (1, -60.0), (2, -0.04), (3, 9.0)], Relation::Le, 0.0)
            .add_constraint(&[(0, 0.5), (1, -90.0), (2, -0.02), (3, 3.0)], Relation::Le, 0.0)
            .add_constraint(&[(2, 1.0)], Relation::Le, 1.0);
        let s = lp.solve().unwrap();
        assert!((s.objective + 0.05).abs() < 1e-12);
    }

    /// Brute-force optimum of `min c·x` over `x in [lo, hi]^2` intersected with
    /// random half-planes: enumerate every intersection of two boundary lines.
    fn vertex_enumeration(c: [f64; 2], rows: &[([f64; 2], f64)]) -> Option<f64> {
        let feasible =
            |x: [f64; 2]| rows.iter().all(|(a, b)| a[0] * x[0] + a[1] * x[1] <= b + 1e-9);
        let mut best: Option<f64> = None;
        for i in 0..rows.len() {
            for j in i + 1..rows.len() {
                let (a, b) = rows[i];
                let (p, q) = rows[j];
                let det = a[0] * p[1] - a[1] * p[0];
                if det.abs() < 1e-12 {
                    continue;
                }
                let x = [(b * p[1] - a[1] * q) / det, (a[0] * q - b * p[0]) / det];
                if feasible(x) {
                    let v = c[0] * x[0] + c[1] * x[1];
                    best = Some(best.map_or(v, |bv: f64| bv.min(v)));
                }
            }
        }
        best
    }

    proptest! {
        #[test]
        fn matches_vertex_enumeration(
            c in prop::array::uniform2(-3.0f64..3.0),
            cuts in prop::collection::vec((prop::array::uniform2(-2.0f64..2.0), -1.0f64..3.0), 0..5),
        ) {
            // box [-2, 2]^2 keeps the program bounded
            let mut rows = vec![
                ([1.0, 0.0], 2.0), ([-1.0, 0.0], 2.0),
                ([0.0, 1.0], 2.0), ([0.0, -1.0], 2.0),
            ];
            rows.extend(cuts);
            let expected = vertex_enumeration(c, &rows);

            let mut lp = LinearProgram::new(2);
            lp.set_lower(0, None).set_lower(1, None).set_cost(0, c[0]).set_cost(1, c[1]);
            for (a, b) in &rows {
                lp.add_constraint(&[(0, a[0]), (1, a[1])], Relation::Le, *b);
            }
            match (lp.solve(), expected) {
                (Ok(s), Some(e)) => {
                    prop_assert!((s.objective - e).abs() < 1e-7, "{} vs {}", s.objective, e);
                    prop_assert!(lp.max_violation(&s.x) < 1e-9);
                }
                (Err(LpError::Infeasible(_)), None) => {}
                (got, e) => prop_assert!(false, "solver {:?} vs enumeration {:?}", got, e),
            }
        }
    }
}
