//! Bounded-variable primal simplex with a composite phase 1.
//!
//! The problem is brought to computational form `min c'x, A x = rhs,
//! lo <= x <= hi` by appending one slack per row (`[0, inf)` for
//! inequalities, fixed `[0, 0]` for equalities). The basis is maintained as
//! a dense LU factorization refreshed periodically, with product-form eta
//! updates between refactorizations.
//!
//! Feasibility is restored by minimizing the sum of bound violations of the
//! basic variables (costs -1/+1 on violated basics, recomputed every
//! iteration), which works from the slack basis as well as from a warm-start
//! basis. Pricing is Dantzig (most negative reduced cost, lowest index on
//! ties) with a permanent switch to Bland's rule after a stall, which
//! guarantees termination on degenerate and crafted cycling instances.

use crate::error::{Error, Result};
use crate::linalg::{LuFactors, Mat};
use crate::lp::{LpProblem, LpSolution, LpStatus};
use crate::scalar::Scalar;

/// Solver parameters. The defaults implement the documented tolerances:
/// 1e-9 feasibility during pivoting.
#[derive(Debug, Clone)]
pub struct SimplexOptions {
    /// Bound violation below which a value counts as feasible.
    pub feas_tol: f64,
    /// Reduced-cost threshold for entering candidates.
    pub opt_tol: f64,
    /// Hard iteration limit before reporting a numerical stall.
    pub max_iterations: usize,
    /// Iterations without objective improvement before switching to Bland.
    pub stall_iterations: usize,
    /// Eta updates between basis refactorizations.
    pub refactor_interval: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            feas_tol: 1e-9,
            opt_tol: 1e-9,
            max_iterations: 200_000,
            stall_iterations: 100,
            refactor_interval: 64,
        }
    }
}

/// Variable status snapshot used to warm start subsequent solves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarStatus {
    Basic,
    AtLo,
    AtHi,
    Free,
}

/// Opaque basis token (structural variables first, then row slacks).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Basis {
    statuses: Vec<VarStatus>,
}

impl Basis {
    pub fn empty() -> Self {
        Self { statuses: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.statuses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.statuses.is_empty()
    }
}

/// Solves with default options and a cold start.
pub fn solve_lp<S: Scalar>(problem: &LpProblem<S>) -> Result<LpSolution<S>> {
    solve_lp_with(problem, &SimplexOptions::default(), None)
}

/// Solves with explicit options and an optional warm-start basis from a
/// previous solve of a problem with identical dimensions. An unusable hint
/// silently falls back to the slack basis; warm starts change iteration
/// counts, never the optimum.
pub fn solve_lp_with<S: Scalar>(
    problem: &LpProblem<S>,
    options: &SimplexOptions,
    warm: Option<&Basis>,
) -> Result<LpSolution<S>> {
    problem.validate()?;
    let mut solver = Solver::new(problem, options, warm)?;
    solver.run()
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum VState {
    Basic(usize),
    AtLo,
    AtHi,
    Free,
}

struct Eta<S> {
    row: usize,
    w: Vec<S>,
}

struct Solver<'a, S> {
    p: &'a LpProblem<S>,
    opts: &'a SimplexOptions,
    n: usize,
    m_ineq: usize,
    m: usize,
    nt: usize,
    cost: Vec<S>,
    lo: Vec<S>,
    hi: Vec<S>,
    rhs: Vec<S>,
    basis: Vec<usize>,
    state: Vec<VState>,
    xval: Vec<S>,
    lu: LuFactors<S>,
    etas: Vec<Eta<S>>,
    iterations: usize,
    bland: bool,
    stall_count: usize,
    last_objective: Option<(bool, S)>,
}

enum StepOutcome {
    Progress,
    Optimal,
    Infeasible,
    Unbounded,
}

impl<'a, S: Scalar> Solver<'a, S> {
    fn new(
        p: &'a LpProblem<S>,
        opts: &'a SimplexOptions,
        warm: Option<&Basis>,
    ) -> Result<Self> {
        let n = p.num_vars();
        let m_ineq = p.num_ineq();
        let m = m_ineq + p.num_eq();
        let nt = n + m;

        let mut cost = vec![S::zero(); nt];
        cost[..n].copy_from_slice(&p.objective);

        let inf = S::infinity();
        let mut lo = vec![S::neg_infinity(); nt];
        let mut hi = vec![inf; nt];
        for j in 0..n {
            if let Some(l) = p.lo[j] {
                lo[j] = l;
            }
            if let Some(u) = p.hi[j] {
                hi[j] = u;
            }
        }
        for i in 0..m {
            let col = n + i;
            lo[col] = S::zero();
            hi[col] = if i < m_ineq { inf } else { S::zero() };
        }

        let mut rhs = vec![S::zero(); m];
        rhs[..m_ineq].copy_from_slice(&p.h);
        rhs[m_ineq..].copy_from_slice(&p.b_eq);

        let mut solver = Self {
            p,
            opts,
            n,
            m_ineq,
            m,
            nt,
            cost,
            lo,
            hi,
            rhs,
            basis: Vec::new(),
            state: Vec::new(),
            xval: vec![S::zero(); nt],
            lu: LuFactors::factorize(&Mat::identity(0), S::from_f64(1e-30))
                .expect("0x0 factorization"),
            etas: Vec::new(),
            iterations: 0,
            bland: false,
            stall_count: 0,
            last_objective: None,
        };

        let warm_applied = warm.is_some_and(|b| solver.try_warm_start(b));
        if !warm_applied {
            solver.slack_basis();
        }
        solver.factorize()?;
        Ok(solver)
    }

    /// Slack basis: every row slack basic, every structural variable at its
    /// finite bound nearest zero (free variables rest at zero).
    fn slack_basis(&mut self) {
        self.basis = (self.n..self.nt).collect();
        self.state = (0..self.nt)
            .map(|j| {
                if j >= self.n {
                    VState::Basic(j - self.n)
                } else {
                    self.default_nonbasic_state(j)
                }
            })
            .collect();
        for j in 0..self.n {
            self.xval[j] = self.nonbasic_value(j);
        }
    }

    fn default_nonbasic_state(&self, j: usize) -> VState {
        if self.lo[j].is_finite() {
            VState::AtLo
        } else if self.hi[j].is_finite() {
            VState::AtHi
        } else {
            VState::Free
        }
    }

    fn nonbasic_value(&self, j: usize) -> S {
        match self.state[j] {
            VState::AtLo => self.lo[j],
            VState::AtHi => self.hi[j],
            VState::Free => S::zero(),
            VState::Basic(_) => unreachable!("nonbasic value of a basic variable"),
        }
    }

    /// Applies a warm-start hint if its shape and basis size match.
    /// Returns false to fall back to a cold start.
    fn try_warm_start(&mut self, hint: &Basis) -> bool {
        if hint.statuses.len() != self.nt {
            return false;
        }
        let basic: Vec<usize> = hint
            .statuses
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == VarStatus::Basic)
            .map(|(j, _)| j)
            .collect();
        if basic.len() != self.m {
            return false;
        }
        // Check that the hinted basis is actually factorizable.
        let b = self.basis_matrix(&basic);
        if LuFactors::factorize(&b, S::from_f64(1e-12)).is_err() {
            return false;
        }
        self.basis = basic;
        self.state = hint
            .statuses
            .iter()
            .enumerate()
            .map(|(j, s)| match s {
                VarStatus::Basic => VState::Basic(usize::MAX), // fixed below
                VarStatus::AtLo if self.lo[j].is_finite() => VState::AtLo,
                VarStatus::AtHi if self.hi[j].is_finite() => VState::AtHi,
                VarStatus::AtLo | VarStatus::AtHi | VarStatus::Free => {
                    self.default_nonbasic_state(j)
                }
            })
            .collect();
        for (pos, &col) in self.basis.iter().enumerate() {
            self.state[col] = VState::Basic(pos);
        }
        for j in 0..self.nt {
            if !matches!(self.state[j], VState::Basic(_)) {
                self.xval[j] = self.nonbasic_value(j);
            }
        }
        true
    }

    fn basis_matrix(&self, cols: &[usize]) -> Mat<S> {
        let mut b = Mat::zeros(self.m, cols.len());
        let mut buf = vec![S::zero(); self.m];
        for (k, &j) in cols.iter().enumerate() {
            self.column(j, &mut buf);
            for i in 0..self.m {
                b[(i, k)] = buf[i];
            }
        }
        b
    }

    /// Writes column `j` of the computational-form matrix into `buf`.
    fn column(&self, j: usize, buf: &mut [S]) {
        buf.fill(S::zero());
        if j < self.n {
            for i in 0..self.m_ineq {
                buf[i] = self.p.g[(i, j)];
            }
            for i in 0..self.p.num_eq() {
                buf[self.m_ineq + i] = self.p.a_eq[(i, j)];
            }
        } else {
            buf[j - self.n] = S::one();
        }
    }

    fn factorize(&mut self) -> Result<()> {
        if self.m == 0 {
            self.etas.clear();
            return Ok(());
        }
        let b = self.basis_matrix(&self.basis.clone());
        self.lu = LuFactors::factorize(&b, S::from_f64(1e-13)).map_err(|e| {
            Error::Numeric(format!(
                "basis refactorization failed after {} iterations: {e}",
                self.iterations
            ))
        })?;
        self.etas.clear();
        self.recompute_basic_values();
        Ok(())
    }

    /// Recomputes basic values from scratch: x_B = B^-1 (rhs - A_N x_N).
    fn recompute_basic_values(&mut self) {
        if self.m == 0 {
            return;
        }
        let mut r = self.rhs.clone();
        let mut buf = vec![S::zero(); self.m];
        for j in 0..self.nt {
            if matches!(self.state[j], VState::Basic(_)) {
                continue;
            }
            let v = self.xval[j];
            if v == S::zero() {
                continue;
            }
            self.column(j, &mut buf);
            for i in 0..self.m {
                r[i] = r[i] - buf[i] * v;
            }
        }
        let xb = self.ftran(r);
        for (pos, &col) in self.basis.iter().enumerate() {
            self.xval[col] = xb[pos];
        }
    }

    fn ftran(&self, mut v: Vec<S>) -> Vec<S> {
        if self.m == 0 {
            return v;
        }
        let mut x = self.lu.solve(&v);
        for eta in &self.etas {
            let alpha = x[eta.row] / eta.w[eta.row];
            for i in 0..self.m {
                if i != eta.row {
                    x[i] = x[i] - eta.w[i] * alpha;
                }
            }
            x[eta.row] = alpha;
        }
        v.copy_from_slice(&x);
        v
    }

    fn btran(&self, v: &[S]) -> Vec<S> {
        if self.m == 0 {
            return v.to_vec();
        }
        let mut x = v.to_vec();
        for eta in self.etas.iter().rev() {
            let dot = eta
                .w
                .iter()
                .zip(&x)
                .fold(S::zero(), |acc, (&wi, &xi)| acc + wi * xi);
            x[eta.row] = x[eta.row] - (dot - x[eta.row]) / eta.w[eta.row];
        }
        self.lu.solve_transposed(&x)
    }

    /// Basic positions currently violating their bounds.
    fn infeasible_positions(&self, tol: S) -> Vec<usize> {
        self.basis
            .iter()
            .enumerate()
            .filter(|(_, &col)| {
                let v = self.xval[col];
                v < self.lo[col] - tol || v > self.hi[col] + tol
            })
            .map(|(pos, _)| pos)
            .collect()
    }

    fn total_infeasibility(&self) -> S {
        self.basis.iter().fold(S::zero(), |acc, &col| {
            let v = self.xval[col];
            acc + (self.lo[col] - v).max(S::zero()) + (v - self.hi[col]).max(S::zero())
        })
    }

    fn phase2_objective(&self) -> S {
        self.cost
            .iter()
            .zip(&self.xval)
            .fold(S::zero(), |acc, (&c, &x)| acc + c * x)
    }

    fn run(&mut self) -> Result<LpSolution<S>> {
        loop {
            if self.iterations >= self.opts.max_iterations {
                return Err(Error::Numeric(format!(
                    "simplex stalled: iteration limit {} reached (infeasibility {:e}, etas {})",
                    self.opts.max_iterations,
                    self.total_infeasibility().to_f64(),
                    self.etas.len()
                )));
            }
            match self.step()? {
                StepOutcome::Progress => {}
                StepOutcome::Optimal => return Ok(self.extract(LpStatus::Optimal)),
                StepOutcome::Infeasible => return Ok(self.extract(LpStatus::Infeasible)),
                StepOutcome::Unbounded => return Ok(self.extract(LpStatus::Unbounded)),
            }
        }
    }

    fn step(&mut self) -> Result<StepOutcome> {
        let feas_tol = S::from_f64(self.opts.feas_tol);
        let opt_tol = S::from_f64(self.opts.opt_tol);

        let infeasible = self.infeasible_positions(feas_tol);
        let phase1 = !infeasible.is_empty();

        // Objective of the current phase, for stall detection.
        let obj = if phase1 {
            self.total_infeasibility()
        } else {
            self.phase2_objective()
        };
        match self.last_objective {
            Some((was_phase1, prev)) if was_phase1 == phase1 => {
                let improved = obj < prev - S::from_f64(1e-12) * (S::one() + prev.abs());
                if improved {
                    self.stall_count = 0;
                } else {
                    self.stall_count += 1;
                    if self.stall_count > self.opts.stall_iterations {
                        self.bland = true;
                    }
                }
            }
            _ => self.stall_count = 0,
        }
        self.last_objective = Some((phase1, obj));

        // Phase-dependent basic costs and simplex multipliers.
        let mut cb = vec![S::zero(); self.m];
        if phase1 {
            for &pos in &infeasible {
                let col = self.basis[pos];
                let v = self.xval[col];
                cb[pos] = if v < self.lo[col] { -S::one() } else { S::one() };
            }
        } else {
            for (pos, &col) in self.basis.iter().enumerate() {
                cb[pos] = self.cost[col];
            }
        }
        let y = self.btran(&cb);

        // Reduced costs of the structural block: d = c - A' y.
        let mut aty = vec![S::zero(); self.n];
        for i in 0..self.m_ineq {
            let yi = y[i];
            if yi == S::zero() {
                continue;
            }
            for (v, &g) in aty.iter_mut().zip(self.p.g.row(i)) {
                *v += yi * g;
            }
        }
        for i in 0..self.p.num_eq() {
            let yi = y[self.m_ineq + i];
            if yi == S::zero() {
                continue;
            }
            for (v, &g) in aty.iter_mut().zip(self.p.a_eq.row(i)) {
                *v += yi * g;
            }
        }

        // Entering variable selection.
        let mut entering: Option<(usize, S, S)> = None; // (col, |d|, dir)
        for j in 0..self.nt {
            let st = self.state[j];
            if matches!(st, VState::Basic(_)) || self.lo[j] == self.hi[j] {
                continue;
            }
            let cj = if phase1 { S::zero() } else { self.cost[j] };
            let d = if j < self.n {
                cj - aty[j]
            } else {
                cj - y[j - self.n]
            };
            let dir = match st {
                VState::AtLo if d < -opt_tol => S::one(),
                VState::AtHi if d > opt_tol => -S::one(),
                VState::Free if d.abs() > opt_tol => {
                    if d > S::zero() {
                        -S::one()
                    } else {
                        S::one()
                    }
                }
                _ => continue,
            };
            if self.bland {
                entering = Some((j, d.abs(), dir));
                break;
            }
            match entering {
                Some((_, best, _)) if d.abs() <= best => {}
                _ => entering = Some((j, d.abs(), dir)),
            }
        }

        let Some((q, _, dir)) = entering else {
            return Ok(if phase1 {
                StepOutcome::Infeasible
            } else {
                StepOutcome::Optimal
            });
        };

        // Direction of change of the basic variables per unit step of x_q.
        let mut col_buf = vec![S::zero(); self.m];
        self.column(q, &mut col_buf);
        let w = self.ftran(col_buf);

        // Ratio test. The entering variable's own opposite bound competes
        // with the blocking basics; infeasible basics block at the bound
        // they are violating (where the phase-1 cost pattern changes).
        let own_range = self.hi[q] - self.lo[q];
        let mut t_best = if own_range.is_finite() {
            own_range
        } else {
            S::infinity()
        };
        let mut leaving: Option<(usize, S)> = None; // (position, bound hit)
        let w_eps = S::from_f64(1e-10);
        for pos in 0..self.m {
            let wv = w[pos];
            if wv.abs() <= w_eps {
                continue;
            }
            let col = self.basis[pos];
            let dx = -dir * wv;
            let v = self.xval[col];
            let (l, u) = (self.lo[col], self.hi[col]);
            let target = if v < l - feas_tol {
                // Below its lower bound: blocks when climbing back to it.
                if dx > S::zero() {
                    l
                } else {
                    continue;
                }
            } else if v > u + feas_tol {
                if dx < S::zero() {
                    u
                } else {
                    continue;
                }
            } else if dx > S::zero() {
                if u.is_finite() {
                    u
                } else {
                    continue;
                }
            } else if l.is_finite() {
                l
            } else {
                continue;
            };
            let t = ((target - v) / dx).max(S::zero());
            let better = match leaving {
                None => t < t_best,
                Some((best_pos, _)) => {
                    let margin = S::from_f64(1e-12) * (S::one() + t_best);
                    if t < t_best - margin {
                        true
                    } else if t <= t_best + margin {
                        // Tie-break: Bland wants the lowest variable index,
                        // otherwise prefer the numerically largest pivot.
                        if self.bland {
                            self.basis[pos] < self.basis[best_pos]
                        } else {
                            wv.abs() > w[best_pos].abs()
                        }
                    } else {
                        false
                    }
                }
            };
            if better {
                t_best = t;
                leaving = Some((pos, target));
            }
        }

        if !t_best.is_finite() {
            return if phase1 {
                Err(Error::Numeric(
                    "phase 1 found no blocking step; infeasibility should be bounded".into(),
                ))
            } else {
                Ok(StepOutcome::Unbounded)
            };
        }

        self.iterations += 1;

        match leaving {
            None => {
                // Bound flip: the entering variable crosses to its other bound.
                let t = t_best;
                for pos in 0..self.m {
                    let col = self.basis[pos];
                    self.xval[col] = self.xval[col] - dir * w[pos] * t;
                }
                self.state[q] = match self.state[q] {
                    VState::AtLo => VState::AtHi,
                    VState::AtHi => VState::AtLo,
                    other => other,
                };
                self.xval[q] = self.nonbasic_value(q);
                Ok(StepOutcome::Progress)
            }
            Some((pos, bound_hit)) => {
                if w[pos].abs() < S::from_f64(1e-9) && !self.etas.is_empty() {
                    // Tiny pivot through a stale eta chain: refactorize and retry.
                    self.iterations -= 1;
                    self.factorize()?;
                    return Ok(StepOutcome::Progress);
                }
                let t = t_best;
                let leaving_col = self.basis[pos];
                for p2 in 0..self.m {
                    let col = self.basis[p2];
                    self.xval[col] = self.xval[col] - dir * w[p2] * t;
                }
                // Snap the leaving variable exactly onto the bound it hit.
                self.xval[leaving_col] = bound_hit;
                self.state[leaving_col] = if bound_hit == self.lo[leaving_col] {
                    VState::AtLo
                } else {
                    VState::AtHi
                };
                self.xval[q] = self.xval[q] + dir * t;
                self.basis[pos] = q;
                self.state[q] = VState::Basic(pos);
                self.etas.push(Eta { row: pos, w });
                if self.etas.len() >= self.opts.refactor_interval {
                    self.factorize()?;
                }
                Ok(StepOutcome::Progress)
            }
        }
    }

    fn extract(&mut self, status: LpStatus) -> LpSolution<S> {
        let n = self.n;
        let z: Vec<S> = self.xval[..n].to_vec();
        let statuses: Vec<VarStatus> = self
            .state
            .iter()
            .map(|s| match s {
                VState::Basic(_) => VarStatus::Basic,
                VState::AtLo => VarStatus::AtLo,
                VState::AtHi => VarStatus::AtHi,
                VState::Free => VarStatus::Free,
            })
            .collect();
        let basis = Basis { statuses };

        if status != LpStatus::Optimal {
            return LpSolution {
                status,
                z: vec![S::zero(); n],
                objective_value: S::nan(),
                dual_ineq: vec![S::zero(); self.m_ineq],
                dual_eq: vec![S::zero(); self.p.num_eq()],
                dual_lo: vec![S::zero(); n],
                dual_hi: vec![S::zero(); n],
                iterations: self.iterations,
                basis,
            };
        }

        // Simplex multipliers with the true costs give the row duals;
        // reduced costs of nonbasic variables give the bound duals.
        let mut cb = vec![S::zero(); self.m];
        for (pos, &col) in self.basis.iter().enumerate() {
            cb[pos] = self.cost[col];
        }
        let y = self.btran(&cb);

        let mut aty = vec![S::zero(); n];
        for i in 0..self.m_ineq {
            let yi = y[i];
            if yi == S::zero() {
                continue;
            }
            for (v, &g) in aty.iter_mut().zip(self.p.g.row(i)) {
                *v += yi * g;
            }
        }
        for i in 0..self.p.num_eq() {
            let yi = y[self.m_ineq + i];
            if yi == S::zero() {
                continue;
            }
            for (v, &g) in aty.iter_mut().zip(self.p.a_eq.row(i)) {
                *v += yi * g;
            }
        }

        let dual_ineq: Vec<S> = y[..self.m_ineq].iter().map(|&v| -v).collect();
        let dual_eq: Vec<S> = y[self.m_ineq..].iter().map(|&v| -v).collect();
        let mut dual_lo = vec![S::zero(); n];
        let mut dual_hi = vec![S::zero(); n];
        for j in 0..n {
            if matches!(self.state[j], VState::Basic(_)) {
                continue;
            }
            let d = self.cost[j] - aty[j];
            match self.state[j] {
                VState::AtLo => {
                    if self.lo[j] == self.hi[j] {
                        // Fixed variable: assign the multiplier to whichever
                        // side keeps it nonnegative.
                        if d >= S::zero() {
                            dual_lo[j] = d;
                        } else {
                            dual_hi[j] = -d;
                        }
                    } else {
                        dual_lo[j] = d;
                    }
                }
                VState::AtHi => dual_hi[j] = -d,
                VState::Free | VState::Basic(_) => {}
            }
        }

        let objective_value = self
            .p
            .objective
            .iter()
            .zip(&z)
            .fold(S::zero(), |acc, (&c, &v)| acc + c * v);

        LpSolution {
            status,
            z,
            objective_value,
            dual_ineq,
            dual_eq,
            dual_lo,
            dual_hi,
            iterations: self.iterations,
            basis,
        }
    }
}
