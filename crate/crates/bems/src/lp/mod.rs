//! Self-contained dense linear programming for the controller problems.
//!
//! Problems are stated in inequality standard form with explicit variable
//! bounds:
//!
//! ```text
//! minimize    c' z
//! subject to  G z <= h
//!             A_eq z = b_eq
//!             lo <= z <= hi      (entries may be unbounded)
//! ```
//!
//! The solver is a bounded-variable primal simplex with a composite phase 1,
//! Dantzig pricing, Bland's rule after a stall, and a dense LU basis with
//! product-form updates. See [`simplex`].

mod simplex;

pub use simplex::{solve_lp, solve_lp_with, Basis, SimplexOptions};

use std::io::Write as IoWrite;

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::scalar::Scalar;

/// Feasibility tolerance applied during pivoting.
pub const PIVOT_FEASIBILITY_TOL: f64 = 1e-9;

/// Residual tolerance for accepting a solve (KKT checks, oracle comparisons).
pub const ACCEPTANCE_TOL: f64 = 1e-8;

/// Dense LP in inequality standard form with variable bounds.
/// `None` bounds mean unbounded in that direction.
#[derive(Debug, Clone)]
pub struct LpProblem<S> {
    pub objective: Vec<S>,
    pub g: Mat<S>,
    pub h: Vec<S>,
    pub a_eq: Mat<S>,
    pub b_eq: Vec<S>,
    pub lo: Vec<Option<S>>,
    pub hi: Vec<Option<S>>,
    /// Variable names for diagnostics and dumps.
    pub names: Vec<String>,
}

impl<S: Scalar> LpProblem<S> {
    /// Problem without equality rows.
    pub fn inequality_form(
        objective: Vec<S>,
        g: Mat<S>,
        h: Vec<S>,
        lo: Vec<Option<S>>,
        hi: Vec<Option<S>>,
        names: Vec<String>,
    ) -> Result<Self> {
        let n = objective.len();
        let p = Self {
            objective,
            g,
            h,
            a_eq: Mat::zeros(0, n),
            b_eq: Vec::new(),
            lo,
            hi,
            names,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_ineq(&self) -> usize {
        self.g.rows()
    }

    pub fn num_eq(&self) -> usize {
        self.a_eq.rows()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        if self.g.cols() != n && self.g.rows() > 0 {
            return Err(Error::Validation(format!(
                "inequality matrix has {} columns, expected {n}",
                self.g.cols()
            )));
        }
        if self.a_eq.cols() != n && self.a_eq.rows() > 0 {
            return Err(Error::Validation(format!(
                "equality matrix has {} columns, expected {n}",
                self.a_eq.cols()
            )));
        }
        if self.h.len() != self.g.rows() || self.b_eq.len() != self.a_eq.rows() {
            return Err(Error::Validation("constraint rhs length mismatch".into()));
        }
        if self.lo.len() != n || self.hi.len() != n || self.names.len() != n {
            return Err(Error::Validation("bounds/names length mismatch".into()));
        }
        let finite = |v: &S| v.is_finite();
        if !self.objective.iter().all(finite)
            || !self.h.iter().all(finite)
            || !self.b_eq.iter().all(finite)
            || !self.g.is_finite()
            || !self.a_eq.is_finite()
        {
            return Err(Error::Validation(
                "problem contains non-finite coefficients".into(),
            ));
        }
        for (j, (lo, hi)) in self.lo.iter().zip(&self.hi).enumerate() {
            if let Some(l) = lo {
                if !l.is_finite() {
                    return Err(Error::Validation(format!(
                        "variable '{}' has a non-finite lower bound; use None",
                        self.names[j]
                    )));
                }
            }
            if let Some(u) = hi {
                if !u.is_finite() {
                    return Err(Error::Validation(format!(
                        "variable '{}' has a non-finite upper bound; use None",
                        self.names[j]
                    )));
                }
            }
            if let (Some(l), Some(u)) = (lo, hi) {
                if l > u {
                    return Err(Error::Validation(format!(
                        "variable '{}' has lo > hi",
                        self.names[j]
                    )));
                }
            }
        }
        Ok(())
    }

    /// Plain-text dump for external cross-checking. One line per objective
    /// term, constraint row and bound:
    ///
    /// ```text
    /// minimize
    ///   1.5 u0 + -0.2 r0
    /// subject to
    ///   ineq: 1 u0 + -1 r0 <= 0.5
    ///   eq:   1 u0 = 1
    /// bounds
    ///   0 <= u0 <= 1.2
    ///   -inf <= t <= inf
    /// ```
    pub fn write_text(&self, mut out: impl IoWrite) -> std::io::Result<()> {
        writeln!(out, "minimize")?;
        let terms: Vec<String> = self
            .objective
            .iter()
            .zip(&self.names)
            .filter(|(c, _)| **c != S::zero())
            .map(|(c, n)| format!("{c} {n}"))
            .collect();
        writeln!(out, "  {}", if terms.is_empty() { "0".into() } else { terms.join(" + ") })?;
        writeln!(out, "subject to")?;
        let row_terms = |row: &[S]| -> String {
            let t: Vec<String> = row
                .iter()
                .zip(&self.names)
                .filter(|(c, _)| **c != S::zero())
                .map(|(c, n)| format!("{c} {n}"))
                .collect();
            if t.is_empty() {
                "0".into()
            } else {
                t.join(" + ")
            }
        };
        for i in 0..self.g.rows() {
            writeln!(out, "  ineq: {} <= {}", row_terms(self.g.row(i)), self.h[i])?;
        }
        for i in 0..self.a_eq.rows() {
            writeln!(out, "  eq:   {} = {}", row_terms(self.a_eq.row(i)), self.b_eq[i])?;
        }
        writeln!(out, "bounds")?;
        for j in 0..self.num_vars() {
            let lo = self
                .lo[j]
                .map_or("-inf".to_string(), |v| format!("{v}"));
            let hi = self
                .hi[j]
                .map_or("inf".to_string(), |v| format!("{v}"));
            writeln!(out, "  {lo} <= {} <= {hi}", self.names[j])?;
        }
        Ok(())
    }
}

/// Solve outcome. Infeasible and unbounded problems are reported here,
/// not as errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Primal/dual solution with the basis token for warm starts.
#[derive(Debug, Clone)]
pub struct LpSolution<S> {
    pub status: LpStatus,
    /// Primal point; meaningful only when `status == Optimal`.
    pub z: Vec<S>,
    pub objective_value: S,
    /// Multipliers of `G z <= h`, nonnegative.
    pub dual_ineq: Vec<S>,
    /// Multipliers of `A_eq z = b_eq`, free sign.
    pub dual_eq: Vec<S>,
    /// Multipliers of the lower bounds, nonnegative.
    pub dual_lo: Vec<S>,
    /// Multipliers of the upper bounds, nonnegative.
    pub dual_hi: Vec<S>,
    pub iterations: usize,
    pub basis: Basis,
}

/// Residual report from [`check_kkt`].
#[derive(Debug, Clone, Copy)]
pub struct KktReport<S> {
    /// Max violation of G z <= h, A_eq z = b_eq and the variable bounds.
    pub max_primal_residual: S,
    /// Max of stationarity residual and dual sign violations.
    pub max_dual_residual: S,
    /// Max complementary slackness product.
    pub max_complementarity: S,
    /// Primal objective minus dual objective (nonnegative up to roundoff).
    pub duality_gap: S,
}

impl<S: Scalar> KktReport<S> {
    pub fn ok(&self, tol: S) -> bool {
        self.max_primal_residual <= tol
            && self.max_dual_residual <= tol
            && self.max_complementarity <= tol
            && self.duality_gap.abs() <= tol
    }

    pub fn worst(&self) -> S {
        self.max_primal_residual
            .max(self.max_dual_residual)
            .max(self.max_complementarity)
            .max(self.duality_gap.abs())
    }
}

/// Verifies a solution against the problem from first principles,
/// independent of the solver internals.
pub fn check_kkt<S: Scalar>(problem: &LpProblem<S>, solution: &LpSolution<S>) -> KktReport<S> {
    assert_eq!(
        solution.status,
        LpStatus::Optimal,
        "KKT check requires an optimal solution"
    );
    let n = problem.num_vars();
    let z = &solution.z;
    let zero = S::zero();

    // Primal feasibility.
    let mut primal = zero;
    let gz = problem.g.matvec(z);
    for (i, gi) in gz.iter().enumerate() {
        primal = primal.max(*gi - problem.h[i]);
    }
    let az = problem.a_eq.matvec(z);
    for (i, ai) in az.iter().enumerate() {
        primal = primal.max((*ai - problem.b_eq[i]).abs());
    }
    for j in 0..n {
        if let Some(l) = problem.lo[j] {
            primal = primal.max(l - z[j]);
        }
        if let Some(u) = problem.hi[j] {
            primal = primal.max(z[j] - u);
        }
    }

    // Dual feasibility and stationarity: c + G' y + A' v + mu_hi - mu_lo = 0.
    let mut dual = zero;
    for y in &solution.dual_ineq {
        dual = dual.max(-*y);
    }
    for m in solution.dual_lo.iter().chain(&solution.dual_hi) {
        dual = dual.max(-*m);
    }
    for j in 0..n {
        let mut s = problem.objective[j];
        for i in 0..problem.g.rows() {
            s += problem.g[(i, j)] * solution.dual_ineq[i];
        }
        for i in 0..problem.a_eq.rows() {
            s += problem.a_eq[(i, j)] * solution.dual_eq[i];
        }
        s += solution.dual_hi[j] - solution.dual_lo[j];
        dual = dual.max(s.abs());
    }

    // Complementary slackness.
    let mut comp = zero;
    for (i, gi) in gz.iter().enumerate() {
        comp = comp.max((solution.dual_ineq[i] * (problem.h[i] - *gi)).abs());
    }
    for j in 0..n {
        match problem.lo[j] {
            Some(l) => comp = comp.max((solution.dual_lo[j] * (z[j] - l)).abs()),
            None => dual = dual.max(solution.dual_lo[j].abs()),
        }
        match problem.hi[j] {
            Some(u) => comp = comp.max((solution.dual_hi[j] * (u - z[j])).abs()),
            None => dual = dual.max(solution.dual_hi[j].abs()),
        }
    }

    // Duality gap: primal - dual objective.
    let primal_obj = problem
        .objective
        .iter()
        .zip(z)
        .fold(zero, |acc, (&c, &v)| acc + c * v);
    let mut dual_obj = zero;
    for (y, h) in solution.dual_ineq.iter().zip(&problem.h) {
        dual_obj = dual_obj - *y * *h;
    }
    for (v, b) in solution.dual_eq.iter().zip(&problem.b_eq) {
        dual_obj = dual_obj - *v * *b;
    }
    for j in 0..n {
        if let Some(l) = problem.lo[j] {
            dual_obj += solution.dual_lo[j] * l;
        }
        if let Some(u) = problem.hi[j] {
            dual_obj = dual_obj - solution.dual_hi[j] * u;
        }
    }

    KktReport {
        max_primal_residual: primal,
        max_dual_residual: dual,
        max_complementarity: comp,
        duality_gap: primal_obj - dual_obj,
    }
}
