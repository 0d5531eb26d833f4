//! Small dense linear programs with exact dual extraction.
//!
//! Problems are stated as `min c·x` subject to `A x = rhs` and
//! `lower <= x <= upper`. Inequalities are expressed through explicit
//! slack columns, which [`LpBuilder`] adds for you.

mod simplex;

use std::fmt::Write as _;

use thiserror::Error;

pub use simplex::{RowSense, Simplex};

/// Primal feasibility tolerance.
pub const FEAS_TOL: f64 = 1e-8;
/// Reduced-cost optimality tolerance.
pub const OPT_TOL: f64 = 1e-9;
/// Smallest tableau entry accepted as a pivot.
pub const PIVOT_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid bounds for variable {var}: [{lower}, {upper}]")]
    Bounds { var: usize, lower: f64, upper: f64 },
    #[error("NaN entry in {0}")]
    NotANumber(&'static str),
    #[error("simplex iteration limit ({0}) reached")]
    IterationLimit(usize),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("solution is not optimal (status {0:?})")]
    NotOptimal(LpStatus),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// `min c·x  s.t.  A x = rhs,  lower <= x <= upper` with a dense row-major `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    c: Vec<f64>,
    a: Vec<f64>,
    rhs: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    names: Option<Vec<String>>,
}

impl LinearProgram {
    /// `a` is given row by row; every row must have `c.len()` entries.
    pub fn new(
        c: Vec<f64>,
        a: Vec<Vec<f64>>,
        rhs: Vec<f64>,
        lower: Vec<f64>,
        upper: Vec<f64>,
    ) -> Result<Self, LpError> {
        let n = c.len();
        if a.len() != rhs.len() {
            return Err(LpError::Dimension(format!(
                "{} constraint rows but {} right-hand sides",
                a.len(),
                rhs.len()
            )));
        }
        if lower.len() != n || upper.len() != n {
            return Err(LpError::Dimension(format!(
                "{n} variables but bounds of length {}/{}",
                lower.len(),
                upper.len()
            )));
        }
        let mut dense = Vec::with_capacity(a.len() * n);
        for (i, row) in a.iter().enumerate() {
            if row.len() != n {
                return Err(LpError::Dimension(format!(
                    "row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            dense.extend_from_slice(row);
        }
        if c.iter().any(|v| v.is_nan()) {
            return Err(LpError::NotANumber("objective"));
        }
        if dense.iter().any(|v| !v.is_finite()) {
            return Err(LpError::NotANumber("constraint matrix"));
        }
        if rhs.iter().any(|v| !v.is_finite()) {
            return Err(LpError::NotANumber("right-hand side"));
        }
        for j in 0..n {
            if lower[j].is_nan() || upper[j].is_nan() || lower[j] > upper[j] {
                return Err(LpError::Bounds { var: j, lower: lower[j], upper: upper[j] });
            }
        }
        Ok(LinearProgram { c, a: dense, rhs, lower, upper, names: None })
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self, LpError> {
        if names.len() != self.c.len() {
            return Err(LpError::Dimension("names length".into()));
        }
        self.names = Some(names);
        Ok(self)
    }

    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rhs.len()
    }

    pub fn objective(&self) -> &[f64] {
        &self.c
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn coef(&self, row: usize, var: usize) -> f64 {
        self.a[row * self.c.len() + var]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let n = self.c.len();
        &self.a[row * n..(row + 1) * n]
    }

    /// Copy with a different right-hand side.
    pub fn with_rhs(&self, rhs: Vec<f64>) -> Result<Self, LpError> {
        if rhs.len() != self.rhs.len() {
            return Err(LpError::Dimension("rhs length".into()));
        }
        let mut lp = self.clone();
        lp.rhs = rhs;
        Ok(lp)
    }

    fn var_name(&self, j: usize) -> String {
        match &self.names {
            Some(n) => n[j].clone(),
            None => format!("x{j}"),
        }
    }

    /// Text dump for cross-checking with external solvers: one `min` line,
    /// one `row_i:` line per constraint and one `bounds:` line per variable.
    pub fn dump(&self) -> String {
        let n = self.num_vars();
        let mut out = String::from("min");
        for j in 0..n {
            if self.c[j] != 0.0 {
                let _ = write!(out, " {:+} {}", self.c[j], self.var_name(j));
            }
        }
        out.push('\n');
        for i in 0..self.num_rows() {
            let _ = write!(out, "row_{i}:");
            for j in 0..n {
                let a = self.coef(i, j);
                if a != 0.0 {
                    let _ = write!(out, " {:+} {}", a, self.var_name(j));
                }
            }
            let _ = writeln!(out, " = {}", self.rhs[i]);
        }
        for j in 0..n {
            let _ = writeln!(out, "bounds: {} <= {} <= {}", self.lower[j], self.var_name(j), self.upper[j]);
        }
        out
    }

    pub(crate) fn to_simplex(&self) -> Simplex {
        let n = self.num_vars();
        let m = self.num_rows();
        let mut cols = vec![Vec::new(); n];
        for i in 0..m {
            for (j, col) in cols.iter_mut().enumerate() {
                let a = self.a[i * n + j];
                if a != 0.0 {
                    col.push((i, a));
                }
            }
        }
        Simplex::from_columns(m, cols, self.c.clone(), self.lower.clone(), self.upper.clone(), self.rhs.clone())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    /// Multipliers of the equality rows (`c - Aᵀy = reduced_costs`).
    pub duals: Vec<f64>,
    pub reduced_costs: Vec<f64>,
}

impl LpSolution {
    fn without_solution(status: LpStatus) -> Self {
        let objective = match status {
            LpStatus::Unbounded => f64::NEG_INFINITY,
            _ => f64::INFINITY,
        };
        LpSolution { status, x: Vec::new(), objective, duals: Vec::new(), reduced_costs: Vec::new() }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    pub(crate) fn from_simplex(s: &Simplex, status: LpStatus) -> Self {
        if status != LpStatus::Optimal {
            return Self::without_solution(status);
        }
        LpSolution {
            status,
            x: s.values(),
            objective: s.objective(),
            duals: s.duals(),
            reduced_costs: s.reduced_costs(),
        }
    }
}

/// Solves `lp` from scratch.
pub fn solve(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    let mut s = lp.to_simplex();
    let status = s.solve()?;
    Ok(LpSolution::from_simplex(&s, status))
}

/// Optimal value and its gradient with respect to the right-hand sides of
/// `fixed_rows`. When those rows pin variables to constants, the gradient is
/// a subgradient of the optimal value in the pinned constants.
pub fn parametric_duals(solution: &LpSolution, fixed_rows: &[usize]) -> Result<(f64, Vec<f64>), LpError> {
    if !solution.is_optimal() {
        return Err(LpError::NotOptimal(solution.status));
    }
    let mut grad = Vec::with_capacity(fixed_rows.len());
    for &r in fixed_rows {
        let y = solution
            .duals
            .get(r)
            .ok_or_else(|| LpError::Dimension(format!("row {r} out of range")))?;
        grad.push(*y);
    }
    Ok((solution.objective, grad))
}

/// Incremental sparse model builder.
#[derive(Debug, Clone, Default)]
pub struct LpBuilder {
    cost: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    names: Vec<String>,
    rows: Vec<Vec<(usize, f64)>>,
    rhs: Vec<f64>,
}

impl LpBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, name: impl Into<String>, cost: f64, lower: f64, upper: f64) -> usize {
        self.cost.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        self.names.push(name.into());
        self.cost.len() - 1
    }

    pub fn add_eq(&mut self, terms: &[(usize, f64)], rhs: f64) -> usize {
        self.rows.push(terms.iter().copied().filter(|&(_, a)| a != 0.0).collect());
        self.rhs.push(rhs);
        self.rows.len() - 1
    }

    /// `terms <= rhs`; returns the row index.
    pub fn add_le(&mut self, terms: &[(usize, f64)], rhs: f64) -> usize {
        let s = self.add_var(format!("slack{}", self.rows.len()), 0.0, 0.0, f64::INFINITY);
        let mut t = terms.to_vec();
        t.push((s, 1.0));
        self.add_eq(&t, rhs)
    }

    /// `terms >= rhs`; returns the row index.
    pub fn add_ge(&mut self, terms: &[(usize, f64)], rhs: f64) -> usize {
        let s = self.add_var(format!("surplus{}", self.rows.len()), 0.0, 0.0, f64::INFINITY);
        let mut t = terms.to_vec();
        t.push((s, -1.0));
        self.add_eq(&t, rhs)
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: f64) {
        self.lower[var] = lower;
        self.upper[var] = upper;
    }

    pub fn set_rhs(&mut self, row: usize, rhs: f64) {
        self.rhs[row] = rhs;
    }

    pub fn num_vars(&self) -> usize {
        self.cost.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn cost(&self, var: usize) -> f64 {
        self.cost[var]
    }

    /// Dense [`LinearProgram`] for the public solver API.
    pub fn build(&self) -> Result<LinearProgram, LpError> {
        let n = self.num_vars();
        let a = self
            .rows
            .iter()
            .map(|row| {
                let mut dense = vec![0.0; n];
                for &(j, v) in row {
                    dense[j] += v;
                }
                dense
            })
            .collect();
        LinearProgram::new(self.cost.clone(), a, self.rhs.clone(), self.lower.clone(), self.upper.clone())?
            .with_names(self.names.clone())
    }

    /// Warm-startable solver over the same model, without going through a
    /// dense matrix.
    pub fn into_simplex(self) -> Simplex {
        let n = self.num_vars();
        let mut cols = vec![Vec::new(); n];
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, a) in row {
                cols[j].push((i, a));
            }
        }
        for col in cols.iter_mut() {
            col.sort_by_key(|&(i, _)| i);
            col.dedup_by(|b, a| {
                if a.0 == b.0 {
                    a.1 += b.1;
                    true
                } else {
                    false
                }
            });
        }
        Simplex::from_columns(self.rows.len(), cols, self.cost, self.lower, self.upper, self.rhs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const INF: f64 = f64::INFINITY;

    #[test]
    fn bound_active_optimum() {
        let lp = LinearProgram::new(vec![-1.0], vec![], vec![], vec![0.0], vec![1.0]).unwrap();
        let s = solve(&lp).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.x[0] - 1.0).abs() < 1e-12);
        assert!((s.objective + 1.0).abs() < 1e-12);
    }

    #[test]
    fn simple_equality_dual() {
        // min x1 + x2, x1 + x2 = 1, x >= 0: value 1, dual 1
        let lp = LinearProgram::new(vec![1.0, 1.0], vec![vec![1.0, 1.0]], vec![1.0], vec![0.0; 2], vec![INF; 2]).unwrap();
        let s = solve(&lp).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective - 1.0).abs() < 1e-12);
        assert!((s.duals[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn contradictory_bounds_are_infeasible() {
        let lp = LinearProgram::new(vec![0.0], vec![vec![1.0]], vec![2.0], vec![0.0], vec![1.0]).unwrap();
        assert_eq!(solve(&lp).unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn unbounded_direction() {
        let lp = LinearProgram::new(vec![-1.0, 0.0], vec![vec![1.0, -1.0]], vec![0.0], vec![0.0; 2], vec![INF; 2]).unwrap();
        assert_eq!(solve(&lp).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn dimension_mismatch_is_rejected_at_construction() {
        let err = LinearProgram::new(vec![1.0, 2.0], vec![vec![1.0]], vec![1.0], vec![0.0; 2], vec![1.0; 2]);
        assert!(matches!(err, Err(LpError::Dimension(_))));
        let err = LinearProgram::new(vec![1.0], vec![], vec![], vec![2.0], vec![1.0]);
        assert!(matches!(err, Err(LpError::Bounds { .. })));
        let err = LinearProgram::new(vec![f64::NAN], vec![], vec![], vec![0.0], vec![1.0]);
        assert!(matches!(err, Err(LpError::NotANumber(_))));
    }

    #[test]
    fn pinned_epigraph_gradient() {
        // min y s.t. y - x - s = 0 (y >= x), x = 3 pinned: value 3, gradient 1
        let mut b = LpBuilder::new();
        let x = b.add_var("x", 0.0, -INF, INF);
        let y = b.add_var("y", 1.0, -INF, INF);
        b.add_ge(&[(y, 1.0), (x, -1.0)], 0.0);
        let pin = b.add_eq(&[(x, 1.0)], 3.0);
        let sol = solve(&b.build().unwrap()).unwrap();
        let (v, g) = parametric_duals(&sol, &[pin]).unwrap();
        assert!((v - 3.0).abs() < 1e-12);
        assert!((g[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pinned_variable_outside_objective_has_zero_gradient() {
        let mut b = LpBuilder::new();
        let x = b.add_var("x", 0.0, -INF, INF);
        let y = b.add_var("y", 1.0, 0.0, 5.0);
        b.add_ge(&[(y, 1.0)], 2.0);
        let pin = b.add_eq(&[(x, 1.0)], 1.5);
        let sol = solve(&b.build().unwrap()).unwrap();
        let (v, g) = parametric_duals(&sol, &[pin]).unwrap();
        assert!((v - 2.0).abs() < 1e-12);
        assert_eq!(g[0], 0.0);
    }

    #[test]
    fn kink_gradient_is_a_subgradient() {
        // value(x) = max(x, 2 - x) ... pinned at the kink x = 1
        let build = |x0: f64| {
            let mut b = LpBuilder::new();
            let x = b.add_var("x", 0.0, -INF, INF);
            let t = b.add_var("t", 1.0, -INF, INF);
            b.add_ge(&[(t, 1.0), (x, -1.0)], 0.0);
            b.add_ge(&[(t, 1.0), (x, 1.0)], 2.0);
            let pin = b.add_eq(&[(x, 1.0)], x0);
            (b.build().unwrap(), pin)
        };
        let (lp, pin) = build(1.0);
        let sol = solve(&lp).unwrap();
        let (v, g) = parametric_duals(&sol, &[pin]).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
        assert!(g[0] >= -1.0 - 1e-12 && g[0] <= 1.0 + 1e-12);
        for d in [-0.1, 0.1] {
            let (lp2, _) = build(1.0 + d);
            let v2 = solve(&lp2).unwrap().objective;
            assert!(v2 >= v + g[0] * d - 1e-9);
        }
    }

    #[test]
    fn not_optimal_has_no_gradient() {
        let lp = LinearProgram::new(vec![0.0], vec![vec![1.0]], vec![2.0], vec![0.0], vec![1.0]).unwrap();
        let sol = solve(&lp).unwrap();
        assert!(matches!(parametric_duals(&sol, &[0]), Err(LpError::NotOptimal(LpStatus::Infeasible))));
    }

    #[test]
    fn dump_lists_rows_and_bounds() {
        let lp = LinearProgram::new(vec![1.0, -2.0], vec![vec![1.0, 1.0]], vec![4.0], vec![0.0, 0.0], vec![INF, 3.0])
            .unwrap();
        let text = lp.dump();
        assert!(text.starts_with("min +1 x0 -2 x1\n"));
        assert!(text.contains("row_0: +1 x0 +1 x1 = 4\n"));
        assert!(text.contains("bounds: 0 <= x1 <= 3\n"));
    }

    #[test]
    fn warm_resolve_after_rhs_change_matches_cold() {
        let mut b = LpBuilder::new();
        let x = b.add_var("x", 1.0, 0.0, 10.0);
        let y = b.add_var("y", 2.0, 0.0, 10.0);
        let r = b.add_ge(&[(x, 1.0), (y, 1.0)], 3.0);
        b.add_le(&[(x, 1.0)], 2.0);
        let mut s = b.clone().into_simplex();
        assert_eq!(s.solve().unwrap(), LpStatus::Optimal);
        assert!((s.objective() - 4.0).abs() < 1e-12);
        s.set_rhs(r, 5.0);
        assert_eq!(s.resolve().unwrap(), LpStatus::Optimal);
        assert!((s.objective() - 8.0).abs() < 1e-12);
        b.set_rhs(r, 5.0);
        let cold = solve(&b.build().unwrap()).unwrap();
        assert!((cold.objective - s.objective()).abs() < 1e-12);
    }

    #[test]
    fn warm_resolve_after_adding_cut_row() {
        let mut b = LpBuilder::new();
        let x = b.add_var("x", 0.0, 0.0, 4.0);
        let t = b.add_var("t", 1.0, -INF, INF);
        b.add_ge(&[(t, 1.0), (x, 1.0)], 2.0); // t >= 2 - x
        let mut s = b.into_simplex();
        assert_eq!(s.solve().unwrap(), LpStatus::Optimal);
        assert!((s.objective() + 2.0).abs() < 1e-12);
        // t >= x - 1
        s.add_row(&[(t, 1.0), (x, -1.0)], RowSense::Ge, -1.0);
        assert_eq!(s.resolve().unwrap(), LpStatus::Optimal);
        assert!((s.objective() - 0.5).abs() < 1e-12);
        assert!((s.value(x) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn fixing_a_variable_then_resolving() {
        let mut b = LpBuilder::new();
        let x = b.add_var("x", -1.0, 0.0, 3.0);
        let y = b.add_var("y", -1.0, 0.0, 3.0);
        b.add_le(&[(x, 1.0), (y, 1.0)], 4.0);
        let mut s = b.into_simplex();
        s.solve().unwrap();
        assert!((s.objective() + 4.0).abs() < 1e-12);
        s.set_bounds(x, 0.5, 0.5);
        assert_eq!(s.resolve().unwrap(), LpStatus::Optimal);
        assert!((s.objective() + 3.5).abs() < 1e-12);
        s.set_bounds(x, 0.0, 3.0);
        assert_eq!(s.resolve().unwrap(), LpStatus::Optimal);
        assert!((s.objective() + 4.0).abs() < 1e-12);
    }
}
