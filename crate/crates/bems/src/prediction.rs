//! Stacked horizon operators for state prediction.
//!
//! For a horizon of N steps the stacked trajectory (including the current
//! state as block 0) is
//!
//! ```text
//! x_stack = Abig x0 + Bbig u + Ebig (d + w) + Brbig r
//! ```
//!
//! with block row t of `Abig` equal to A^t and `Bbig` block lower-triangular
//! with block (t, s) = A^(t-1-s) B. `Brbig` repeats the structure with B_r.

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::scalar::Scalar;
use crate::thermal::DiscreteStateSpace;

/// Stacked prediction operators over a horizon.
#[derive(Debug, Clone)]
pub struct PredictionMatrices<S> {
    /// n(N+1) x n free-response operator; first block row is the identity.
    pub a_big: Mat<S>,
    /// n(N+1) x jN input operator, block lower-triangular.
    pub b_big: Mat<S>,
    /// n(N+1) x n_d N disturbance operator, block lower-triangular.
    pub e_big: Mat<S>,
    /// n(N+1) x jN reserve operator (same structure as `b_big` with B_r).
    pub br_big: Mat<S>,
    /// Horizon length in steps.
    pub horizon: usize,
    /// State dimension per block row.
    pub n: usize,
    /// Inputs per step.
    pub inputs: usize,
    /// Disturbance channels per step.
    pub channels: usize,
}

impl<S: Scalar> PredictionMatrices<S> {
    /// Row range of prediction block `t` (0 = current state).
    pub fn block_rows(&self, t: usize) -> std::ops::Range<usize> {
        t * self.n..(t + 1) * self.n
    }
}

/// Builds the stacked operators by forward recurrence; powers of A come from
/// repeated multiplication.
pub fn build_prediction_matrices<S: Scalar>(
    dss: &DiscreteStateSpace<S>,
    horizon: usize,
) -> Result<PredictionMatrices<S>> {
    if horizon == 0 {
        return Err(Error::Validation("prediction horizon must be >= 1".into()));
    }
    let n = dss.n();
    let j = dss.inputs();
    let nd = dss.disturbance_channels();
    let rows = n * (horizon + 1);

    let mut a_big = Mat::zeros(rows, n);
    let mut b_big = Mat::zeros(rows, j * horizon);
    let mut e_big = Mat::zeros(rows, nd * horizon);
    let mut br_big = Mat::zeros(rows, j * horizon);

    a_big.set_block(0, 0, &Mat::identity(n));
    let mut a_pow = Mat::identity(n);
    for t in 1..=horizon {
        // Shift the previous block row forward by one application of A:
        // block (t, s) = A * block (t-1, s) for s < t-1, then the fresh
        // s = t-1 block is B (resp. E, B_r) itself.
        for s in 0..t - 1 {
            let prev_b = b_big.block((t - 1) * n, s * j, n, j);
            b_big.set_block(t * n, s * j, &dss.a.matmul(&prev_b));
            let prev_e = e_big.block((t - 1) * n, s * nd, n, nd);
            e_big.set_block(t * n, s * nd, &dss.a.matmul(&prev_e));
            let prev_r = br_big.block((t - 1) * n, s * j, n, j);
            br_big.set_block(t * n, s * j, &dss.a.matmul(&prev_r));
        }
        b_big.set_block(t * n, (t - 1) * j, &dss.b);
        e_big.set_block(t * n, (t - 1) * nd, &dss.e);
        br_big.set_block(t * n, (t - 1) * j, &dss.b_r);

        a_pow = dss.a.matmul(&a_pow);
        a_big.set_block(t * n, 0, &a_pow);
    }

    Ok(PredictionMatrices {
        a_big,
        b_big,
        e_big,
        br_big,
        horizon,
        n,
        inputs: j,
        channels: nd,
    })
}

/// Evaluates the stacked prediction for given input, disturbance,
/// uncertainty and reserve sequences. Linear in every argument; the
/// uncertainty enters through the same operator as the forecast.
pub fn predict_states<S: Scalar>(
    pm: &PredictionMatrices<S>,
    x0: &[S],
    u: &[S],
    d: &[S],
    w: &[S],
    r: &[S],
) -> Result<Vec<S>> {
    let nu = pm.inputs * pm.horizon;
    let nd = pm.channels * pm.horizon;
    if x0.len() != pm.n || u.len() != nu || r.len() != nu || d.len() != nd || w.len() != nd {
        return Err(Error::Validation(format!(
            "predict_states length mismatch: x0 {} (want {}), u {} (want {nu}), r {} (want {nu}), d {} (want {nd}), w {} (want {nd})",
            x0.len(),
            pm.n,
            u.len(),
            r.len(),
            d.len(),
            w.len()
        )));
    }
    let mut out = pm.a_big.matvec(x0);
    for (acc, v) in out.iter_mut().zip(pm.b_big.matvec(u)) {
        *acc += v;
    }
    let dw: Vec<S> = d.iter().zip(w).map(|(&a, &b)| a + b).collect();
    for (acc, v) in out.iter_mut().zip(pm.e_big.matvec(&dw)) {
        *acc += v;
    }
    for (acc, v) in out.iter_mut().zip(pm.br_big.matvec(r)) {
        *acc += v;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::thermal::plant_step;
    use proptest::prelude::*;

    /// Small synthetic discrete system, not tied to a thermal network.
    fn toy_dss(n: usize, j: usize, scale: f64) -> DiscreteStateSpace<f64> {
        let a = Mat::from_fn(n, n, |i, k| {
            if i == k {
                0.8 - 0.05 * i as f64
            } else {
                scale * 0.03 * ((i + 2 * k) % 3) as f64
            }
        });
        let b = Mat::from_fn(n, j, |i, k| if i >= n - j && k == i - (n - j) { -0.4 } else { 0.0 });
        let e = Mat::from_fn(n, n, |i, k| if i == k { 0.5 } else { 0.0 });
        let mut b_r = b.clone();
        for i in 0..n {
            for k in 0..j {
                b_r[(i, k)] = -b[(i, k)];
            }
        }
        DiscreteStateSpace {
            a,
            b,
            e,
            b_r,
            dt: 0.5,
            reserve_mask: vec![true; j],
            state_labels: (0..n).map(|i| format!("x{i}")).collect(),
            input_labels: (0..j).map(|i| format!("u{i}")).collect(),
        }
    }

    #[test]
    fn horizon_one_stacks_identity_and_b() {
        let dss = toy_dss(2, 1, 1.0);
        let pm = build_prediction_matrices(&dss, 1).unwrap();
        assert_eq!(pm.a_big.rows(), 4);
        // First block row is the identity, second is A.
        assert_eq!(pm.a_big.block(0, 0, 2, 2), Mat::identity(2));
        assert_eq!(pm.a_big.block(2, 0, 2, 2), dss.a);
        // B block: zero then B.
        assert_eq!(pm.b_big.block(0, 0, 2, 1), Mat::zeros(2, 1));
        assert_eq!(pm.b_big.block(2, 0, 2, 1), dss.b);
    }

    #[test]
    fn identity_chain_fills_strict_lower_blocks_with_ones() {
        // Scalar system with A = 1, B = 1.
        let dss = DiscreteStateSpace {
            a: Mat::from_rows(&[vec![1.0]]),
            b: Mat::from_rows(&[vec![1.0]]),
            e: Mat::from_rows(&[vec![0.0]]),
            b_r: Mat::from_rows(&[vec![-1.0]]),
            dt: 1.0,
            reserve_mask: vec![true],
            state_labels: vec!["x".into()],
            input_labels: vec!["u".into()],
        };
        let pm = build_prediction_matrices(&dss, 3).unwrap();
        for t in 0..4 {
            for s in 0..3 {
                let expected = if s < t { 1.0 } else { 0.0 };
                assert_eq!(pm.b_big[(t, s)], expected, "block ({t}, {s})");
            }
        }
    }

    #[test]
    fn zero_horizon_rejected() {
        let dss = toy_dss(2, 1, 1.0);
        assert!(build_prediction_matrices(&dss, 0).is_err());
    }

    #[test]
    fn free_response_is_a_big_x0() {
        let dss = toy_dss(3, 1, 1.0);
        let pm = build_prediction_matrices(&dss, 4).unwrap();
        let x0 = vec![1.0, -2.0, 0.5];
        let zu = vec![0.0; 4];
        let zd = vec![0.0; 12];
        let traj = predict_states(&pm, &x0, &zu, &zd, &zd, &zu).unwrap();
        let free = pm.a_big.matvec(&x0);
        assert_eq!(traj, free);
    }

    proptest! {
        /// Stacked prediction agrees with step-by-step iteration of the plant.
        #[test]
        fn matches_plant_iteration(
            x0 in proptest::collection::vec(-5.0f64..5.0, 3),
            u_seq in proptest::collection::vec(0.0f64..2.0, 5),
            w_seq in proptest::collection::vec(-0.5f64..0.5, 15),
            r_seq in proptest::collection::vec(0.0f64..0.5, 5),
        ) {
            let dss = toy_dss(3, 1, 1.0);
            let pm = build_prediction_matrices(&dss, 5).unwrap();
            let d_seq: Vec<f64> = (0..15).map(|i| 0.1 * (i as f64)).collect();
            let traj = predict_states(&pm, &x0, &u_seq, &d_seq, &w_seq, &r_seq).unwrap();

            let mut x = x0.clone();
            for t in 0..5 {
                let d_real: Vec<f64> = (0..3)
                    .map(|c| d_seq[t * 3 + c] + w_seq[t * 3 + c])
                    .collect();
                x = plant_step(&dss, &x, &[u_seq[t]], &d_real, &[r_seq[t]]).unwrap();
                for c in 0..3 {
                    prop_assert!((traj[(t + 1) * 3 + c] - x[c]).abs() <= 1e-12 * (1.0 + x[c].abs()));
                }
            }
        }

        /// Superposition: prediction is linear in the input sequence.
        #[test]
        fn superposition_in_inputs(
            u1 in proptest::collection::vec(0.0f64..2.0, 4),
            u2 in proptest::collection::vec(0.0f64..2.0, 4),
        ) {
            let dss = toy_dss(2, 1, 1.0);
            let pm = build_prediction_matrices(&dss, 4).unwrap();
            let x0 = vec![1.0, 2.0];
            let zeros_d = vec![0.0; 8];
            let zeros_r = vec![0.0; 4];
            let both: Vec<f64> = u1.iter().zip(&u2).map(|(a, b)| a + b).collect();
            let t_sum = predict_states(&pm, &x0, &both, &zeros_d, &zeros_d, &zeros_r).unwrap();
            let t1 = predict_states(&pm, &x0, &u1, &zeros_d, &zeros_d, &zeros_r).unwrap();
            // Zero-x0 variant isolates the input response.
            let t2 = predict_states(&pm, &[0.0, 0.0], &u2, &zeros_d, &zeros_d, &zeros_r).unwrap();
            for i in 0..t_sum.len() {
                prop_assert!((t_sum[i] - (t1[i] + t2[i])).abs() <= 1e-12 * (1.0 + t_sum[i].abs()));
            }
        }

        /// Receding-horizon shift: steps 1..N from (x0, u) equal steps 0..N-1
        /// of the trajectory restarted from x1 with the shifted input.
        #[test]
        fn shift_property(
            x0 in proptest::collection::vec(-5.0f64..5.0, 2),
            u_seq in proptest::collection::vec(0.0f64..2.0, 5),
        ) {
            let dss = toy_dss(2, 1, 1.0);
            let pm = build_prediction_matrices(&dss, 5).unwrap();
            let zeros_d = vec![0.0; 10];
            let zeros_r = vec![0.0; 5];
            let traj = predict_states(&pm, &x0, &u_seq, &zeros_d, &zeros_d, &zeros_r).unwrap();

            let pm_short = build_prediction_matrices(&dss, 4).unwrap();
            let x1 = traj[2..4].to_vec();
            let shifted_u = u_seq[1..].to_vec();
            let zd = vec![0.0; 8];
            let zr = vec![0.0; 4];
            let traj2 = predict_states(&pm_short, &x1, &shifted_u, &zd, &zd, &zr).unwrap();
            for i in 0..traj2.len() {
                prop_assert!((traj2[i] - traj[2 + i]).abs() <= 1e-11 * (1.0 + traj[2 + i].abs()));
            }
        }
    }
}
