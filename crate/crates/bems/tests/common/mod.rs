//! Shared helpers for the integration and acceptance suites: independent
//! brute-force oracles and deterministic instance generators. Nothing here
//! calls into the solver paths under test.

#![allow(dead_code)]

use rand::Rng;

/// Self-contained Gaussian elimination (partial pivoting) on an n x n
/// system, independent of the crate's linear algebra.
pub fn gauss_solve(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .zip(b)
        .map(|(row, rhs)| {
            let mut r = row.clone();
            r.push(*rhs);
            r
        })
        .collect();
    for k in 0..n {
        let (pivot_row, pivot_val) = (k..n)
            .map(|i| (i, m[i][k].abs()))
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())?;
        if pivot_val < 1e-10 {
            return None;
        }
        m.swap(k, pivot_row);
        for i in k + 1..n {
            let f = m[i][k] / m[k][k];
            for j in k..=n {
                m[i][j] -= f * m[k][j];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut acc = m[i][n];
        for j in i + 1..n {
            acc -= m[i][j] * x[j];
        }
        x[i] = acc / m[i][i];
    }
    Some(x)
}

/// A dense inequality-form LP for the brute-force oracle:
/// min c'z s.t. rows(z) <= rhs, lo <= z <= hi (bounds finite).
pub struct OracleLp {
    pub c: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl OracleLp {
    fn all_rows(&self) -> (Vec<Vec<f64>>, Vec<f64>) {
        let n = self.c.len();
        let mut rows = self.rows.clone();
        let mut rhs = self.rhs.clone();
        for j in 0..n {
            let mut up = vec![0.0; n];
            up[j] = 1.0;
            rows.push(up);
            rhs.push(self.hi[j]);
            let mut down = vec![0.0; n];
            down[j] = -1.0;
            rows.push(down);
            rhs.push(-self.lo[j]);
        }
        (rows, rhs)
    }

    fn feasible(&self, z: &[f64], tol: f64) -> bool {
        let (rows, rhs) = self.all_rows();
        rows.iter().zip(&rhs).all(|(row, b)| {
            let v: f64 = row.iter().zip(z).map(|(a, x)| a * x).sum();
            v <= b + tol
        })
    }

    /// Enumerates every vertex (n active constraints out of all rows plus
    /// bounds), checks feasibility, and returns the best objective value.
    pub fn vertex_enumeration_min(&self) -> Option<(f64, Vec<f64>)> {
        let n = self.c.len();
        let (rows, rhs) = self.all_rows();
        let total = rows.len();
        let mut best: Option<(f64, Vec<f64>)> = None;
        let mut subset: Vec<usize> = (0..n).collect();
        loop {
            let a: Vec<Vec<f64>> = subset.iter().map(|&i| rows[i].clone()).collect();
            let b: Vec<f64> = subset.iter().map(|&i| rhs[i]).collect();
            if let Some(z) = gauss_solve(&a, &b) {
                if self.feasible(&z, 1e-9) {
                    let obj: f64 = self.c.iter().zip(&z).map(|(c, x)| c * x).sum();
                    match &best {
                        Some((bo, _)) if obj >= *bo => {}
                        _ => best = Some((obj, z)),
                    }
                }
            }
            // Next lexicographic n-subset of 0..total.
            let mut i = n;
            loop {
                if i == 0 {
                    return best;
                }
                i -= 1;
                if subset[i] != i + total - n {
                    subset[i] += 1;
                    for k in i + 1..n {
                        subset[k] = subset[k - 1] + 1;
                    }
                    break;
                }
            }
        }
    }
}

/// Random feasible bounded LP: a strictly feasible interior point is drawn
/// first, then the rows and bounds are placed around it.
pub fn random_feasible_lp(rng: &mut impl Rng, max_vars: usize, max_rows: usize) -> OracleLp {
    let n = rng.gen_range(2..=max_vars);
    let m = rng.gen_range(2..=max_rows);
    let z0: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..2.0)).collect();
    let mut rows = Vec::with_capacity(m);
    let mut rhs = Vec::with_capacity(m);
    for _ in 0..m {
        let row: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let dot: f64 = row.iter().zip(&z0).map(|(a, b)| a * b).sum();
        rows.push(row);
        rhs.push(dot + rng.gen_range(0.1..2.0));
    }
    let lo: Vec<f64> = z0.iter().map(|v| v - rng.gen_range(0.5..3.0)).collect();
    let hi: Vec<f64> = z0.iter().map(|v| v + rng.gen_range(0.5..3.0)).collect();
    let c: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
    OracleLp {
        c,
        rows,
        rhs,
        lo,
        hi,
    }
}

/// Path of the shipped default test building.
pub fn default_building_path() -> &'static str {
    concat!(env!("CARGO_MANIFEST_DIR"), "/configs/building.toml")
}
