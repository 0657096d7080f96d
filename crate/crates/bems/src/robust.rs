//! Robust counterpart of box-bounded disturbance uncertainty.
//!
//! The inner maximization of `E w` over the box `-sigma <= w <= sigma` has
//! the closed-form optimum `|E| sigma` per row, certified by the dual pair
//! `lambda_1 = max(E, 0)`, `lambda_2 = max(-E, 0)` which satisfies
//! `lambda_1 - lambda_2 = E` with both factors nonnegative. A brute-force
//! vertex enumeration oracle is included for validation.

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::prediction::PredictionMatrices;
use crate::scalar::Scalar;

/// Stacked elementwise disturbance bounds, one per channel per step.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxUncertainty<S> {
    sigma: Vec<S>,
}

impl<S: Scalar> BoxUncertainty<S> {
    pub fn new(sigma: Vec<S>) -> Result<Self> {
        if sigma.iter().any(|&s| s < S::zero() || !s.is_finite()) {
            return Err(Error::Validation(
                "uncertainty bounds must be nonnegative and finite".into(),
            ));
        }
        Ok(Self { sigma })
    }

    pub fn zero(len: usize) -> Self {
        Self {
            sigma: vec![S::zero(); len],
        }
    }

    pub fn sigma(&self) -> &[S] {
        &self.sigma
    }

    pub fn len(&self) -> usize {
        self.sigma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.sigma.iter().all(|&s| s == S::zero())
    }
}

/// Worst-case offsets plus the dual certificate that proves them optimal.
#[derive(Debug, Clone)]
pub struct RobustifiedConstraints<S> {
    /// Row-wise worst case of `E w`, added to (upper) or subtracted from
    /// (lower) the nominal predictions. Nonnegative by construction.
    pub worst_case_offset: Vec<S>,
    /// Dual pair `(lambda_1, lambda_2)` with `lambda_1 - lambda_2 = E`.
    pub dual_certificate: (Mat<S>, Mat<S>),
}

/// Row-wise worst case of `E w` over the box `|w| <= sigma`:
/// `offset[r] = sum_c |E[r, c]| sigma[c]`.
pub fn worst_case_disturbance_offset<S: Scalar>(
    e_stacked: &Mat<S>,
    sigma: &BoxUncertainty<S>,
) -> Result<Vec<S>> {
    if sigma.len() != e_stacked.cols() {
        return Err(Error::Validation(format!(
            "sigma length {} does not match {} uncertainty columns",
            sigma.len(),
            e_stacked.cols()
        )));
    }
    Ok((0..e_stacked.rows())
        .map(|r| {
            e_stacked
                .row(r)
                .iter()
                .zip(sigma.sigma())
                .fold(S::zero(), |acc, (&e, &s)| acc + e.abs() * s)
        })
        .collect())
}

/// Robustifies the stacked dynamics: both the curtailed and not-curtailed
/// trajectories receive the same offsets (they share `E` and `sigma`).
/// Upper comfort bounds take `+offset`, lower bounds take `-offset`.
pub fn robustify_dynamics<S: Scalar>(
    pm: &PredictionMatrices<S>,
    sigma: &BoxUncertainty<S>,
) -> Result<RobustifiedConstraints<S>> {
    let offset = worst_case_disturbance_offset(&pm.e_big, sigma)?;
    let rows = pm.e_big.rows();
    let cols = pm.e_big.cols();
    let lambda_1 = Mat::from_fn(rows, cols, |r, c| pm.e_big[(r, c)].max(S::zero()));
    let lambda_2 = Mat::from_fn(rows, cols, |r, c| (-pm.e_big[(r, c)]).max(S::zero()));
    Ok(RobustifiedConstraints {
        worst_case_offset: offset,
        dual_certificate: (lambda_1, lambda_2),
    })
}

/// Maximum columns accepted by the enumeration oracle (2^cols vertices).
pub const VERTEX_ORACLE_MAX_COLS: usize = 20;

/// Exact maximum of `E w` over the box vertices, per row. Exponential in
/// the column count; refuses above [`VERTEX_ORACLE_MAX_COLS`].
pub fn vertex_oracle_max<S: Scalar>(
    e_stacked: &Mat<S>,
    sigma: &BoxUncertainty<S>,
) -> Result<Vec<S>> {
    let cols = e_stacked.cols();
    if sigma.len() != cols {
        return Err(Error::Validation(format!(
            "sigma length {} does not match {} uncertainty columns",
            sigma.len(),
            cols
        )));
    }
    if cols > VERTEX_ORACLE_MAX_COLS {
        return Err(Error::Validation(format!(
            "vertex oracle limited to {VERTEX_ORACLE_MAX_COLS} columns, got {cols}"
        )));
    }
    let rows = e_stacked.rows();
    let mut best = vec![S::neg_infinity(); rows];
    let mut w = vec![S::zero(); cols];
    for mask in 0u64..(1u64 << cols) {
        for (c, wc) in w.iter_mut().enumerate() {
            let s = sigma.sigma()[c];
            *wc = if mask & (1 << c) != 0 { s } else { -s };
        }
        for (r, b) in best.iter_mut().enumerate() {
            let v = e_stacked
                .row(r)
                .iter()
                .zip(&w)
                .fold(S::zero(), |acc, (&e, &wc)| acc + e * wc);
            *b = b.max(v);
        }
    }
    Ok(best)
}
