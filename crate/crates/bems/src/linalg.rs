//! Dense linear algebra used across the crate.
//!
//! Everything here is sized for desk-scale problems (states n <= 10,
//! stacked horizon operators of a few hundred rows, LP bases below ~1000),
//! so the storage is a plain row-major `Vec` and the factorizations are
//! dense with partial pivoting.

use std::ops::{Index, IndexMut};

use crate::error::Error;
use crate::scalar::Scalar;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> Mat<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![S::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = S::one();
        }
        m
    }

    pub fn from_rows(rows: &[Vec<S>]) -> Self {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == ncols), "ragged rows");
        Self {
            rows: nrows,
            cols: ncols,
            data: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> S) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    /// Diagonal matrix from a vector.
    pub fn diag(d: &[S]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, &v) in d.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[S] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [S] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn scale(&self, s: S) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| v * s).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a - b)
                .collect(),
        }
    }

    /// Elementwise absolute value.
    pub fn abs(&self) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v.abs()).collect(),
        }
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == S::zero() {
                    continue;
                }
                let orow = other.row(k);
                let out_row = out.row_mut(i);
                for (o, &b) in out_row.iter_mut().zip(orow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[S]) -> Vec<S> {
        assert_eq!(self.cols, x.len(), "matvec dimension mismatch");
        (0..self.rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(x)
                    .fold(S::zero(), |acc, (&a, &b)| acc + a * b)
            })
            .collect()
    }

    /// Copies `block` into `self` with its top-left corner at `(r0, c0)`.
    pub fn set_block(&mut self, r0: usize, c0: usize, block: &Self) {
        assert!(r0 + block.rows <= self.rows && c0 + block.cols <= self.cols);
        for i in 0..block.rows {
            let dst = &mut self.row_mut(r0 + i)[c0..c0 + block.cols];
            dst.copy_from_slice(block.row(i));
        }
    }

    /// Extracts the `rows x cols` block with top-left corner at `(r0, c0)`.
    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Self {
        assert!(r0 + rows <= self.rows && c0 + cols <= self.cols);
        Self::from_fn(rows, cols, |i, j| self[(r0 + i, c0 + j)])
    }

    /// Returns the matrix formed by the given rows, in order.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut out = Self::zeros(idx.len(), self.cols);
        for (k, &i) in idx.iter().enumerate() {
            out.row_mut(k).copy_from_slice(self.row(i));
        }
        out
    }

    /// Maximum absolute row sum.
    pub fn inf_norm(&self) -> S {
        (0..self.rows)
            .map(|i| self.row(i).iter().fold(S::zero(), |acc, v| acc + v.abs()))
            .fold(S::zero(), S::max)
    }

    pub fn max_abs(&self) -> S {
        self.data.iter().fold(S::zero(), |acc, v| acc.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl<S: Scalar> Index<(usize, usize)> for Mat<S> {
    type Output = S;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &S {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl<S: Scalar> IndexMut<(usize, usize)> for Mat<S> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut S {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// LU factorization with partial pivoting: `P A = L U`.
#[derive(Debug, Clone)]
pub struct LuFactors<S> {
    lu: Mat<S>,
    perm: Vec<usize>,
}

impl<S: Scalar> LuFactors<S> {
    /// Factorizes a square matrix. Fails on structural singularity
    /// (pivot below `pivot_tol` times the largest entry).
    pub fn factorize(a: &Mat<S>, pivot_tol: S) -> Result<Self, Error> {
        assert_eq!(a.rows(), a.cols(), "LU needs a square matrix");
        let n = a.rows();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = lu.max_abs().max(S::one());
        for k in 0..n {
            // Pivot search in column k.
            let mut p = k;
            let mut best = lu[(k, k)].abs();
            for i in k + 1..n {
                let v = lu[(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best <= pivot_tol * scale {
                return Err(Error::Numeric(format!(
                    "singular matrix in LU at column {k} (pivot {:e})",
                    best.to_f64()
                )));
            }
            if p != k {
                perm.swap(p, k);
                for j in 0..n {
                    let tmp = lu[(k, j)];
                    lu[(k, j)] = lu[(p, j)];
                    lu[(p, j)] = tmp;
                }
            }
            let pivot = lu[(k, k)];
            for i in k + 1..n {
                let m = lu[(i, k)] / pivot;
                lu[(i, k)] = m;
                if m == S::zero() {
                    continue;
                }
                for j in k + 1..n {
                    let v = lu[(k, j)];
                    lu[(i, j)] = lu[(i, j)] - m * v;
                }
            }
        }
        Ok(Self { lu, perm })
    }

    pub fn n(&self) -> usize {
        self.lu.rows()
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[S]) -> Vec<S> {
        let n = self.n();
        assert_eq!(b.len(), n);
        let mut x: Vec<S> = self.perm.iter().map(|&p| b[p]).collect();
        // Forward: L y = P b (unit lower triangle).
        for i in 1..n {
            let mut acc = x[i];
            for j in 0..i {
                acc = acc - self.lu[(i, j)] * x[j];
            }
            x[i] = acc;
        }
        // Backward: U x = y.
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in i + 1..n {
                acc = acc - self.lu[(i, j)] * x[j];
            }
            x[i] = acc / self.lu[(i, i)];
        }
        x
    }

    /// Solves `A^T x = b`.
    pub fn solve_transposed(&self, b: &[S]) -> Vec<S> {
        let n = self.n();
        assert_eq!(b.len(), n);
        let mut x = b.to_vec();
        // U^T y = b (lower triangular with diagonal).
        for i in 0..n {
            let mut acc = x[i];
            for j in 0..i {
                acc = acc - self.lu[(j, i)] * x[j];
            }
            x[i] = acc / self.lu[(i, i)];
        }
        // L^T z = y (unit upper triangular).
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in i + 1..n {
                acc = acc - self.lu[(j, i)] * x[j];
            }
            x[i] = acc;
        }
        // Undo the row permutation: x = P^T z.
        let mut out = vec![S::zero(); n];
        for (i, &p) in self.perm.iter().enumerate() {
            out[p] = x[i];
        }
        out
    }

    /// Solves `A X = B` column by column.
    pub fn solve_mat(&self, b: &Mat<S>) -> Mat<S> {
        let mut out = Mat::zeros(b.rows(), b.cols());
        let mut col = vec![S::zero(); b.rows()];
        for j in 0..b.cols() {
            for i in 0..b.rows() {
                col[i] = b[(i, j)];
            }
            let x = self.solve(&col);
            for i in 0..b.rows() {
                out[(i, j)] = x[i];
            }
        }
        out
    }
}

/// Matrix exponential by scaling and squaring with a diagonal Pade
/// approximant of order 6. The input is scaled until its inf-norm is
/// below 1/4, where the approximant is accurate to machine precision.
pub fn expm<S: Scalar>(a: &Mat<S>) -> Result<Mat<S>, Error> {
    assert_eq!(a.rows(), a.cols(), "expm needs a square matrix");
    if !a.is_finite() {
        return Err(Error::Numeric("expm input contains non-finite entries".into()));
    }
    let n = a.rows();
    let norm = a.inf_norm();
    let mut squarings = 0u32;
    let mut scaled = a.clone();
    if norm > S::from_f64(0.25) {
        let ratio = (norm.to_f64() / 0.25).log2().ceil();
        squarings = ratio as u32;
        if squarings > 64 {
            return Err(Error::Numeric(format!(
                "expm input too large to scale (inf-norm {:e})",
                norm.to_f64()
            )));
        }
        scaled = a.scale(S::from_f64(0.5f64.powi(squarings as i32)));
    }

    // [6/6] Pade coefficients.
    let b: [f64; 7] = [
        1.0,
        0.5,
        5.0 / 44.0,
        1.0 / 66.0,
        1.0 / 792.0,
        1.0 / 15_840.0,
        1.0 / 665_280.0,
    ];
    let a2 = scaled.matmul(&scaled);
    let a4 = a2.matmul(&a2);
    let a6 = a2.matmul(&a4);
    let ident = Mat::identity(n);
    // U = A (b1 I + b3 A^2 + b5 A^4), V = b0 I + b2 A^2 + b4 A^4 + b6 A^6.
    let u_inner = ident
        .scale(S::from_f64(b[1]))
        .add(&a2.scale(S::from_f64(b[3])))
        .add(&a4.scale(S::from_f64(b[5])));
    let u = scaled.matmul(&u_inner);
    let v = ident
        .scale(S::from_f64(b[0]))
        .add(&a2.scale(S::from_f64(b[2])))
        .add(&a4.scale(S::from_f64(b[4])))
        .add(&a6.scale(S::from_f64(b[6])));
    // exp(A) ~= (V - U)^{-1} (V + U).
    let lhs = v.sub(&u);
    let rhs = v.add(&u);
    let lu = LuFactors::factorize(&lhs, S::from_f64(1e-14)).map_err(|_| {
        Error::Numeric(format!(
            "expm Pade denominator singular (input inf-norm {:e})",
            norm.to_f64()
        ))
    })?;
    let mut result = lu.solve_mat(&rhs);
    for _ in 0..squarings {
        result = result.matmul(&result);
    }
    Ok(result)
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
/// Returned in ascending order.
pub fn symmetric_eigenvalues<S: Scalar>(a: &Mat<S>, tol: S) -> Vec<S> {
    assert_eq!(a.rows(), a.cols());
    let n = a.rows();
    let mut m = a.clone();
    let max_sweeps = 64;
    for _ in 0..max_sweeps {
        let mut off = S::zero();
        for i in 0..n {
            for j in i + 1..n {
                off = off.max(m[(i, j)].abs());
            }
        }
        if off <= tol {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq.abs() <= tol {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let theta = (aqq - app) / (S::from_f64(2.0) * apq);
                let t = {
                    let sign = if theta >= S::zero() { S::one() } else { -S::one() };
                    sign / (theta.abs() + (theta * theta + S::one()).sqrt())
                };
                let c = S::one() / (t * t + S::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut eig: Vec<S> = (0..n).map(|i| m[(i, i)]).collect();
    eig.sort_by(|a, b| a.partial_cmp(b).expect("non-finite eigenvalue"));
    eig
}

/// Spectral radius estimate by power iteration with a deterministic
/// start vector. Adequate for the nonnegative matrices produced by
/// discretizing dissipative RC networks.
pub fn spectral_radius<S: Scalar>(a: &Mat<S>, iterations: usize) -> S {
    assert_eq!(a.rows(), a.cols());
    let n = a.rows();
    if n == 0 {
        return S::zero();
    }
    let mut v = vec![S::one(); n];
    let mut lambda = S::zero();
    for _ in 0..iterations {
        let w = a.matvec(&v);
        let norm = w.iter().fold(S::zero(), |acc, x| acc.max(x.abs()));
        if norm == S::zero() {
            return S::zero();
        }
        lambda = norm;
        v = w.into_iter().map(|x| x / norm).collect();
    }
    lambda
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn matmul_identity() {
        let a = Mat::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let i = Mat::identity(2);
        assert_eq!(a.matmul(&i), a);
        assert_eq!(i.matmul(&a), a);
    }

    #[test]
    fn lu_solves_known_system() {
        let a = Mat::from_rows(&[
            vec![2.0, 1.0, 1.0],
            vec![4.0, -6.0, 0.0],
            vec![-2.0, 7.0, 2.0],
        ]);
        let lu = LuFactors::factorize(&a, 1e-14).unwrap();
        let x = lu.solve(&[5.0, -2.0, 9.0]);
        assert_relative_eq!(x[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(x[1], 1.0, epsilon = 1e-12);
        assert_relative_eq!(x[2], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn lu_transpose_solve_matches_explicit_transpose() {
        let a = Mat::from_rows(&[
            vec![3.0, 1.0, 0.5],
            vec![-1.0, 2.0, 0.0],
            vec![0.2, 0.0, 4.0],
        ]);
        let b = [1.0, 2.0, 3.0];
        let lu = LuFactors::factorize(&a, 1e-14).unwrap();
        let at = a.transpose();
        let lut = LuFactors::factorize(&at, 1e-14).unwrap();
        let x1 = lu.solve_transposed(&b);
        let x2 = lut.solve(&b);
        for (v1, v2) in x1.iter().zip(&x2) {
            assert_relative_eq!(v1, v2, epsilon = 1e-12);
        }
    }

    #[test]
    fn lu_rejects_singular() {
        let a = Mat::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]);
        assert!(LuFactors::factorize(&a, 1e-12).is_err());
    }

    #[test]
    fn expm_scalar_matches_exp() {
        let a = Mat::from_rows(&[vec![-1.0]]);
        let e = expm(&a).unwrap();
        assert_relative_eq!(e[(0, 0)], (-1.0f64).exp(), epsilon = 1e-14);
    }

    #[test]
    fn expm_zero_is_identity() {
        let e = expm(&Mat::<f64>::zeros(3, 3)).unwrap();
        assert_eq!(e, Mat::identity(3));
    }

    #[test]
    fn expm_nilpotent_closed_form() {
        // exp([[0,1],[0,0]]) = [[1,1],[0,1]]
        let a = Mat::from_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]);
        let e = expm(&a).unwrap();
        assert_relative_eq!(e[(0, 0)], 1.0, epsilon = 1e-14);
        assert_relative_eq!(e[(0, 1)], 1.0, epsilon = 1e-14);
        assert_relative_eq!(e[(1, 0)], 0.0, epsilon = 1e-14);
        assert_relative_eq!(e[(1, 1)], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn expm_works_in_f32() {
        let a = Mat::<f32>::from_rows(&[vec![-0.5f32, 0.1], vec![0.2, -0.8]]);
        let e = expm(&a).unwrap();
        assert!(e.is_finite());
        assert!(e[(0, 0)] > 0.0);
    }

    #[test]
    fn jacobi_diagonal_matrix() {
        let a = Mat::diag(&[3.0, -1.0, 2.0]);
        let eig = symmetric_eigenvalues(&a, 1e-14);
        assert_eq!(eig, vec![-1.0, 2.0, 3.0]);
    }

    #[test]
    fn jacobi_known_2x2() {
        // Eigenvalues of [[2,1],[1,2]] are 1 and 3.
        let a = Mat::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]);
        let eig = symmetric_eigenvalues(&a, 1e-14);
        assert_relative_eq!(eig[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(eig[1], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn power_iteration_dominant_eigenvalue() {
        let a = Mat::from_rows(&[vec![0.9, 0.1], vec![0.05, 0.8]]);
        let rho = spectral_radius(&a, 200);
        // Largest eigenvalue of the 2x2: (1.7 + sqrt(0.01 + 0.02))/2
        let expected = (1.7 + (0.01f64 + 0.02).sqrt()) / 2.0;
        assert_relative_eq!(rho, expected, epsilon = 1e-9);
    }

    fn small_mat() -> impl Strategy<Value = Mat<f64>> {
        (1usize..5)
            .prop_flat_map(|n| {
                proptest::collection::vec(-10.0f64..10.0, n * n).prop_map(move |data| Mat {
                    rows: n,
                    cols: n,
                    data,
                })
            })
    }

    proptest! {
        #[test]
        fn transpose_is_involution(a in small_mat()) {
            prop_assert_eq!(a.transpose().transpose(), a);
        }

        #[test]
        fn lu_solve_residual_small(a in small_mat(), seed in 0u64..1000) {
            // Shift the diagonal to keep the system well conditioned.
            let n = a.rows();
            let mut m = a.clone();
            for i in 0..n {
                m[(i, i)] += 20.0;
            }
            let b: Vec<f64> = (0..n).map(|i| ((seed as f64) + i as f64).sin()).collect();
            let lu = LuFactors::factorize(&m, 1e-14).unwrap();
            let x = lu.solve(&b);
            let r = m.matvec(&x);
            for (ri, bi) in r.iter().zip(&b) {
                prop_assert!((ri - bi).abs() < 1e-9);
            }
        }

        #[test]
        fn expm_semigroup_on_stable_random(a in small_mat()) {
            // A = -(M^T M) - 0.1 I is stable and well scaled.
            let n = a.rows();
            let mt = a.transpose().matmul(&a).scale(-0.05);
            let mut s = mt;
            for i in 0..n {
                s[(i, i)] -= 0.1;
            }
            let full = expm(&s).unwrap();
            let half = expm(&s.scale(0.5)).unwrap();
            let composed = half.matmul(&half);
            prop_assert!(full.sub(&composed).max_abs() <= 1e-10 * (1.0 + full.max_abs()));
        }
    }
}
