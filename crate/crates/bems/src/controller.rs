//! Receding-horizon controller: cost model, program assembly and the
//! single-step solve.
//!
//! Decision variables per solve are `z = (u, r, eps, beta)`:
//! - `u`: not-curtailed purchase schedule (air mass flow, kg/s),
//! - `r`: curtailable reserve offer; the curtailed trajectory is driven by
//!   `u - r` through `B_r = -B`,
//! - `eps`: per-room-per-step comfort slack shared by both trajectories,
//! - `beta`: scalar epigraph value of the peak-power-penalty term.
//!
//! Comfort is enforced on both trajectories against the worst case of the
//! box uncertainty (`+|E|sigma` on upper bounds, `-|E|sigma` on lower).

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::lp::{
    check_kkt, solve_lp_with, Basis, LpProblem, LpSolution, LpStatus, SimplexOptions,
};
use crate::prediction::PredictionMatrices;
use crate::robust::{robustify_dynamics, BoxUncertainty};
use crate::scalar::Scalar;
use crate::thermal::DiscreteStateSpace;

/// Affine electric power model per room: fan, cooling coil and heating
/// coil draws as kW per (kg/s) of air flow, plus a base load.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerModel<S> {
    pub fan_coeff: Vec<S>,
    pub cooling_coeff: Vec<S>,
    pub heating_coeff: Vec<S>,
    /// Base electric power in kW, independent of flow.
    pub base_power: S,
}

impl<S: Scalar> PowerModel<S> {
    pub fn validate(&self, rooms: usize) -> Result<()> {
        if self.fan_coeff.len() != rooms
            || self.cooling_coeff.len() != rooms
            || self.heating_coeff.len() != rooms
        {
            return Err(Error::Validation(format!(
                "power model needs one coefficient set per room ({rooms})"
            )));
        }
        let nonneg = |v: &[S]| v.iter().all(|&x| x >= S::zero());
        if !nonneg(&self.fan_coeff)
            || !nonneg(&self.cooling_coeff)
            || !nonneg(&self.heating_coeff)
            || self.base_power < S::zero()
        {
            return Err(Error::Validation(
                "power coefficients and base power must be >= 0".into(),
            ));
        }
        Ok(())
    }

    pub fn rooms(&self) -> usize {
        self.fan_coeff.len()
    }

    /// Total kW per (kg/s) for one room.
    pub fn total_coeff(&self, room: usize) -> S {
        self.fan_coeff[room] + self.cooling_coeff[room] + self.heating_coeff[room]
    }
}

/// Total electric power at a flow vector: `p0 + sum_r kappa_r u_r`.
pub fn electric_power<S: Scalar>(pm: &PowerModel<S>, flow: &[S]) -> Result<S> {
    if flow.len() != pm.rooms() {
        return Err(Error::Validation(format!(
            "power evaluation needs {} flows, got {}",
            pm.rooms(),
            flow.len()
        )));
    }
    if flow.iter().any(|&u| u < S::zero()) {
        return Err(Error::Validation("flow must be >= 0".into()));
    }
    Ok(flow
        .iter()
        .enumerate()
        .fold(pm.base_power, |acc, (r, &u)| acc + pm.total_coeff(r) * u))
}

/// Stacked room-temperature comfort bounds over a horizon (step-major).
#[derive(Debug, Clone, PartialEq)]
pub struct ComfortEnvelope<S> {
    pub lower: Vec<S>,
    pub upper: Vec<S>,
}

impl<S: Scalar> ComfortEnvelope<S> {
    pub fn new(lower: Vec<S>, upper: Vec<S>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Validation("comfort bound length mismatch".into()));
        }
        if lower.iter().zip(&upper).any(|(l, u)| l > u) {
            return Err(Error::Validation(
                "comfort envelope has lower > upper".into(),
            ));
        }
        Ok(Self { lower, upper })
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }
}

/// Stacked air-flow limits over a horizon (step-major).
#[derive(Debug, Clone, PartialEq)]
pub struct ActuatorLimits<S> {
    pub lower: Vec<S>,
    pub upper: Vec<S>,
}

impl<S: Scalar> ActuatorLimits<S> {
    pub fn new(lower: Vec<S>, upper: Vec<S>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Validation("actuator bound length mismatch".into()));
        }
        for (l, u) in lower.iter().zip(&upper) {
            if *l < S::zero() || l > u {
                return Err(Error::Validation(
                    "actuator limits must satisfy 0 <= lower <= upper".into(),
                ));
            }
        }
        Ok(Self { lower, upper })
    }
}

/// Energy price, reserve price and peak-power penalty per horizon step.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceWindow<S> {
    /// Energy price, SGD/kWh.
    pub energy: Vec<S>,
    /// Reserve capacity price, SGD/kWh.
    pub reserve: Vec<S>,
    /// Peak-power penalty, SGD/kW (may be all zero).
    pub peak_penalty: Vec<S>,
}

impl<S: Scalar> PriceWindow<S> {
    pub fn validate(&self, horizon: usize) -> Result<()> {
        if self.energy.len() != horizon
            || self.reserve.len() != horizon
            || self.peak_penalty.len() != horizon
        {
            return Err(Error::Validation(format!(
                "price window must cover the horizon ({horizon} steps)"
            )));
        }
        let finite = |v: &[S]| v.iter().all(|x| x.is_finite());
        if !finite(&self.energy) || !finite(&self.reserve) || !finite(&self.peak_penalty) {
            return Err(Error::Validation("prices must be finite".into()));
        }
        if self.peak_penalty.iter().any(|&p| p < S::zero()) {
            return Err(Error::Validation("peak penalty must be >= 0".into()));
        }
        Ok(())
    }
}

/// Controller configuration for one solve.
#[derive(Debug, Clone, PartialEq)]
pub struct RmpcConfig<S> {
    /// Comfort slack penalty rho, per degC per step. Must dominate any
    /// achievable energy saving; see [`auto_slack_penalty`].
    pub slack_penalty: S,
    /// Prediction horizon N in steps.
    pub horizon: usize,
    /// Robust constraints on/off. Off forces sigma = 0.
    pub robust: bool,
    /// Reserve market participation. Off fixes r = 0.
    pub reserve: bool,
}

impl<S: Scalar> RmpcConfig<S> {
    pub fn validate(&self) -> Result<()> {
        if self.slack_penalty <= S::zero() {
            return Err(Error::Validation("slack penalty must be > 0".into()));
        }
        if self.horizon == 0 {
            return Err(Error::Validation("horizon must be >= 1".into()));
        }
        Ok(())
    }
}

/// Default slack penalty: three orders of magnitude above the largest
/// marginal energy cost, so one degree of violation dominates any saving.
pub fn auto_slack_penalty<S: Scalar>(max_energy_price: S, pm: &PowerModel<S>) -> S {
    let kappa_sum = (0..pm.rooms()).fold(S::zero(), |acc, r| acc + pm.total_coeff(r));
    S::from_f64(1e3) * max_energy_price.max(S::from_f64(1e-3)) * kappa_sum.max(S::one())
}

/// Consumption cost over the horizon: `sum_k dt c_k P(u_k)`.
pub fn consumption_cost<S: Scalar>(
    prices: &PriceWindow<S>,
    pm: &PowerModel<S>,
    u: &[S],
    dt: S,
) -> Result<S> {
    let j = pm.rooms();
    if u.len() % j != 0 || u.len() / j != prices.energy.len() {
        return Err(Error::Validation(format!(
            "flow sequence length {} does not match {} price steps x {j} rooms",
            u.len(),
            prices.energy.len()
        )));
    }
    let mut total = S::zero();
    for (k, c) in prices.energy.iter().enumerate() {
        let p = electric_power(pm, &u[k * j..(k + 1) * j])?;
        total += dt * *c * p;
    }
    Ok(total)
}

/// Reserve revenue over the horizon: `sum_k dt b_k (P(r_k) - p0)`, the
/// capacity payment on the curtailable power delta. It enters the
/// controller objective with a negative sign.
pub fn reserve_revenue<S: Scalar>(
    prices: &PriceWindow<S>,
    pm: &PowerModel<S>,
    r: &[S],
    dt: S,
) -> Result<S> {
    let j = pm.rooms();
    if r.len() % j != 0 || r.len() / j != prices.reserve.len() {
        return Err(Error::Validation(format!(
            "reserve sequence length {} does not match {} price steps x {j} rooms",
            r.len(),
            prices.reserve.len()
        )));
    }
    if r.iter().any(|&v| v < S::zero()) {
        return Err(Error::Validation("reserve must be >= 0".into()));
    }
    let mut total = S::zero();
    for (k, b) in prices.reserve.iter().enumerate() {
        let delta = electric_power(pm, &r[k * j..(k + 1) * j])? - pm.base_power;
        total += dt * *b * delta;
    }
    Ok(total)
}

/// Optimal schedule for one receding-horizon step.
#[derive(Debug, Clone)]
pub struct StepSchedule<S> {
    /// Not-curtailed purchase schedule, step-major, kg/s.
    pub u: Vec<S>,
    /// Offered reserve schedule, step-major, kg/s.
    pub r: Vec<S>,
    /// Comfort slack per room per step, degC.
    pub eps: Vec<S>,
    /// Peak epigraph value, SGD.
    pub beta: S,
    /// Objective breakdown.
    pub energy_cost: S,
    pub reserve_revenue: S,
    pub slack_cost: S,
    pub peak_term: S,
    pub objective: S,
    /// Solver diagnostics.
    pub lp_iterations: usize,
    pub kkt_residual: S,
    pub basis: Basis,
}

impl<S: Scalar> StepSchedule<S> {
    /// First-element extraction: the action applied to the plant.
    pub fn first_action(&self, rooms: usize) -> (&[S], &[S]) {
        (&self.u[..rooms], &self.r[..rooms])
    }

    pub fn max_slack(&self) -> S {
        self.eps.iter().fold(S::zero(), |m, &e| m.max(e))
    }

    /// Dumps the horizon schedule as CSV: one row per (step, room) with the
    /// planned flow, reserve and slack, plus the scalar epigraph value and
    /// objective breakdown repeated on every row for script-friendliness.
    pub fn write_csv(
        &self,
        mut out: impl std::io::Write,
        room_ids: &[String],
    ) -> std::io::Result<()> {
        writeln!(
            out,
            "step,room,u,r,eps,beta,energy_cost,reserve_revenue,slack_cost,peak_term"
        )?;
        let rooms = room_ids.len();
        for (idx, ((u, r), e)) in self.u.iter().zip(&self.r).zip(&self.eps).enumerate() {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                idx / rooms,
                room_ids[idx % rooms],
                u,
                r,
                e,
                self.beta,
                self.energy_cost,
                self.reserve_revenue,
                self.slack_cost,
                self.peak_term
            )?;
        }
        Ok(())
    }
}

/// All horizon data needed to assemble one RMPC program.
pub struct HorizonInputs<'a, S> {
    pub x0: &'a [S],
    /// Stacked disturbance forecast, step-major, n_d per step.
    pub d_hat: &'a [S],
    pub sigma: &'a BoxUncertainty<S>,
    pub envelope: &'a ComfortEnvelope<S>,
    pub limits: &'a ActuatorLimits<S>,
    pub prices: &'a PriceWindow<S>,
}

/// Assembles the single-step robust program as a dense LP.
///
/// Constraint layout, in row order:
/// 1. not-curtailed upper comfort (jN rows)
/// 2. not-curtailed lower comfort (jN rows)
/// 3. curtailed upper comfort (jN rows)
/// 4. curtailed lower comfort (jN rows)
/// 5. actuator window `u - r >= max(u_min, 0)` (jN rows)
/// 6. peak epigraph `phi_k P(u_k) <= beta` (N rows)
pub fn assemble_rmpc_lp<S: Scalar>(
    dss: &DiscreteStateSpace<S>,
    pm_pred: &PredictionMatrices<S>,
    power: &PowerModel<S>,
    config: &RmpcConfig<S>,
    inputs: &HorizonInputs<'_, S>,
) -> Result<LpProblem<S>> {
    config.validate()?;
    let n = dss.n();
    let j = dss.inputs();
    let nd = dss.disturbance_channels();
    let big_n = config.horizon;
    power.validate(j)?;
    inputs.prices.validate(big_n)?;
    if pm_pred.horizon != big_n || pm_pred.n != n || pm_pred.inputs != j {
        return Err(Error::Validation(
            "prediction matrices do not match the model/horizon".into(),
        ));
    }
    let jn = j * big_n;
    if inputs.x0.len() != n {
        return Err(Error::Validation(format!(
            "initial state has {} entries, expected {n}",
            inputs.x0.len()
        )));
    }
    if inputs.x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("initial state must be finite".into()));
    }
    if inputs.d_hat.len() != nd * big_n {
        return Err(Error::Validation(format!(
            "forecast has {} entries, expected {}",
            inputs.d_hat.len(),
            nd * big_n
        )));
    }
    if inputs.envelope.len() != jn {
        return Err(Error::Validation(format!(
            "comfort envelope has {} entries, expected {jn}",
            inputs.envelope.len()
        )));
    }
    if inputs.limits.lower.len() != jn {
        return Err(Error::Validation(format!(
            "actuator limits have {} entries, expected {jn}",
            inputs.limits.lower.len()
        )));
    }

    // Robust offsets; zero when the robust flag is off.
    let zero_sigma = BoxUncertainty::zero(nd * big_n);
    let sigma = if config.robust { inputs.sigma } else { &zero_sigma };
    if sigma.len() != nd * big_n {
        return Err(Error::Validation(format!(
            "sigma has {} entries, expected {}",
            sigma.len(),
            nd * big_n
        )));
    }
    let robustified = robustify_dynamics(pm_pred, sigma)?;

    // Room-state selection: steps 1..N, rooms are the trailing j states.
    let walls = n - j;
    let mut sel = Vec::with_capacity(jn);
    for t in 1..=big_n {
        for room in 0..j {
            sel.push(t * n + walls + room);
        }
    }
    let sel_b = pm_pred.b_big.select_rows(&sel);
    let sel_br = pm_pred.br_big.select_rows(&sel);
    let free_full = {
        let mut v = pm_pred.a_big.matvec(inputs.x0);
        for (acc, w) in v.iter_mut().zip(pm_pred.e_big.matvec(inputs.d_hat)) {
            *acc += w;
        }
        v
    };
    let free: Vec<S> = sel.iter().map(|&i| free_full[i]).collect();
    let offset: Vec<S> = sel.iter().map(|&i| robustified.worst_case_offset[i]).collect();

    // Variable layout: u | r | eps | beta.
    let off_u = 0;
    let off_r = jn;
    let off_eps = 2 * jn;
    let idx_beta = 3 * jn;
    let nv = 3 * jn + 1;

    let m_rows = 5 * jn + big_n;
    let mut g = Mat::zeros(m_rows, nv);
    let mut h = vec![S::zero(); m_rows];

    for row in 0..jn {
        // 1. NC upper: sel_b u - eps <= x+ - free - offset
        for col in 0..jn {
            g[(row, off_u + col)] = sel_b[(row, col)];
        }
        g[(row, off_eps + row)] = -S::one();
        h[row] = inputs.envelope.upper[row] - free[row] - offset[row];

        // 2. NC lower: -sel_b u - eps <= free - x- - offset
        let r2 = jn + row;
        for col in 0..jn {
            g[(r2, off_u + col)] = -sel_b[(row, col)];
        }
        g[(r2, off_eps + row)] = -S::one();
        h[r2] = free[row] - inputs.envelope.lower[row] - offset[row];

        // 3. curtailed upper: sel_b u + sel_br r - eps <= x+ - free - offset
        let r3 = 2 * jn + row;
        for col in 0..jn {
            g[(r3, off_u + col)] = sel_b[(row, col)];
            g[(r3, off_r + col)] = sel_br[(row, col)];
        }
        g[(r3, off_eps + row)] = -S::one();
        h[r3] = inputs.envelope.upper[row] - free[row] - offset[row];

        // 4. curtailed lower.
        let r4 = 3 * jn + row;
        for col in 0..jn {
            g[(r4, off_u + col)] = -sel_b[(row, col)];
            g[(r4, off_r + col)] = -sel_br[(row, col)];
        }
        g[(r4, off_eps + row)] = -S::one();
        h[r4] = free[row] - inputs.envelope.lower[row] - offset[row];

        // 5. actuator: -u + r <= -max(u_min, 0)
        let r5 = 4 * jn + row;
        g[(r5, off_u + row)] = -S::one();
        g[(r5, off_r + row)] = S::one();
        h[r5] = -inputs.limits.lower[row].max(S::zero());
    }

    // 6. peak epigraph rows.
    let dt = dss.dt;
    for k in 0..big_n {
        let row = 5 * jn + k;
        let phi = inputs.prices.peak_penalty[k];
        for room in 0..j {
            g[(row, off_u + k * j + room)] = phi * power.total_coeff(room);
        }
        g[(row, idx_beta)] = -S::one();
        h[row] = -phi * power.base_power;
    }

    // Objective: energy cost - reserve revenue + rho * slack + beta.
    let mut c = vec![S::zero(); nv];
    for k in 0..big_n {
        for room in 0..j {
            let kappa = power.total_coeff(room);
            c[off_u + k * j + room] = dt * inputs.prices.energy[k] * kappa;
            c[off_r + k * j + room] = -dt * inputs.prices.reserve[k] * kappa;
        }
    }
    for e in 0..jn {
        c[off_eps + e] = config.slack_penalty;
    }
    c[idx_beta] = S::one();

    // Bounds.
    let lo = vec![Some(S::zero()); nv];
    let mut hi = vec![None; nv];
    for row in 0..jn {
        hi[off_u + row] = Some(inputs.limits.upper[row]);
        if !config.reserve {
            hi[off_r + row] = Some(S::zero());
        }
    }

    let mut names = Vec::with_capacity(nv);
    for k in 0..big_n {
        for room in 0..j {
            names.push(format!("u[{k}][{room}]"));
        }
    }
    for k in 0..big_n {
        for room in 0..j {
            names.push(format!("r[{k}][{room}]"));
        }
    }
    for k in 0..big_n {
        for room in 0..j {
            names.push(format!("eps[{k}][{room}]"));
        }
    }
    names.push("beta".into());

    LpProblem::inequality_form(c, g, h, lo, hi, names)
}

/// Solves one receding-horizon step and extracts the schedule with its
/// objective breakdown and solver diagnostics.
pub fn solve_step<S: Scalar>(
    dss: &DiscreteStateSpace<S>,
    pm_pred: &PredictionMatrices<S>,
    power: &PowerModel<S>,
    config: &RmpcConfig<S>,
    inputs: &HorizonInputs<'_, S>,
    warm: Option<&Basis>,
) -> Result<StepSchedule<S>> {
    let problem = assemble_rmpc_lp(dss, pm_pred, power, config, inputs)?;
    let solution = solve_lp_with(&problem, &SimplexOptions::default(), warm)?;
    if solution.status != LpStatus::Optimal {
        // The comfort slack makes the program feasible by construction and
        // the objective is bounded below, so anything else is a solver bug
        // or a broken model.
        return Err(Error::Numeric(format!(
            "RMPC step reported {:?}; the slack-relaxed program must be solvable",
            solution.status
        )));
    }
    extract_schedule(dss, power, config, inputs, &problem, solution)
}

fn extract_schedule<S: Scalar>(
    dss: &DiscreteStateSpace<S>,
    power: &PowerModel<S>,
    config: &RmpcConfig<S>,
    inputs: &HorizonInputs<'_, S>,
    problem: &LpProblem<S>,
    solution: LpSolution<S>,
) -> Result<StepSchedule<S>> {
    let j = dss.inputs();
    let jn = j * config.horizon;
    let kkt = check_kkt(problem, &solution);

    // Clamp solver roundoff so downstream consumers see exact signs.
    let clamp = |v: S| if v < S::zero() { S::zero() } else { v };
    let u: Vec<S> = solution.z[..jn].iter().map(|&v| clamp(v)).collect();
    let r: Vec<S> = solution.z[jn..2 * jn]
        .iter()
        .zip(&u)
        .map(|(&v, &uv)| clamp(v).min(uv))
        .collect();
    let eps: Vec<S> = solution.z[2 * jn..3 * jn].iter().map(|&v| clamp(v)).collect();
    let beta = clamp(solution.z[3 * jn]);

    let energy_cost = consumption_cost(inputs.prices, power, &u, dss.dt)?;
    let revenue = reserve_revenue(inputs.prices, power, &r, dss.dt)?;
    let slack_cost = eps
        .iter()
        .fold(S::zero(), |acc, &e| acc + config.slack_penalty * e);

    Ok(StepSchedule {
        u,
        r,
        eps,
        beta,
        energy_cost,
        reserve_revenue: revenue,
        slack_cost,
        peak_term: beta,
        objective: solution.objective_value,
        lp_iterations: solution.iterations,
        kkt_residual: kkt.worst(),
        basis: solution.basis,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prediction::build_prediction_matrices;
    use crate::thermal::{
        assemble_continuous, discretize_zoh, DisturbanceLayout, NodeKind, OperatingPoint, RcEdge,
        RcNode, RcNetwork,
    };
    use approx::assert_relative_eq;

    fn one_room_model() -> (DiscreteStateSpace<f64>, DisturbanceLayout<f64>) {
        let net = RcNetwork::new(
            vec![
                RcNode {
                    id: "w".into(),
                    kind: NodeKind::Wall {
                        peripheral: true,
                        absorptivity: 0.6,
                        area: 10.0,
                    },
                    capacitance: 2.0,
                },
                RcNode {
                    id: "r".into(),
                    kind: NodeKind::Room {
                        window: true,
                        window_transmittance: 0.5,
                        window_area: 3.0,
                        supply_temperature: 14.0,
                    },
                    capacitance: 0.4,
                },
            ],
            vec![
                RcEdge {
                    from: "ambient".into(),
                    to: "w".into(),
                    resistance: 3.0,
                },
                RcEdge {
                    from: "w".into(),
                    to: "r".into(),
                    resistance: 1.5,
                },
            ],
            2.791e-4,
        )
        .unwrap();
        let op = OperatingPoint {
            nominal_flow: vec![0.0],
            nominal_room_temp: vec![24.0],
        };
        let layout = DisturbanceLayout::per_node(&net, &op).unwrap();
        let css = assemble_continuous(&net, &op, &layout).unwrap();
        (discretize_zoh(&css, 0.5, &[true]).unwrap(), layout)
    }

    fn power_model() -> PowerModel<f64> {
        PowerModel {
            fan_coeff: vec![0.3],
            cooling_coeff: vec![2.2],
            heating_coeff: vec![0.0],
            base_power: 0.5,
        }
    }

    fn horizon_fixture(
        n_steps: usize,
        phi: f64,
        ambient: f64,
    ) -> (Vec<f64>, ComfortEnvelope<f64>, ActuatorLimits<f64>, PriceWindow<f64>) {
        let (_, layout) = one_room_model();
        let mut d_hat = Vec::new();
        for _ in 0..n_steps {
            d_hat.extend(layout.map_signals(0.3, &[0.6], ambient).unwrap());
        }
        let envelope =
            ComfortEnvelope::new(vec![20.0; n_steps], vec![26.0; n_steps]).unwrap();
        let limits = ActuatorLimits::new(vec![0.0; n_steps], vec![1.5; n_steps]).unwrap();
        let prices = PriceWindow {
            energy: vec![0.12; n_steps],
            reserve: vec![0.015; n_steps],
            peak_penalty: vec![phi; n_steps],
        };
        (d_hat, envelope, limits, prices)
    }

    #[test]
    fn electric_power_examples() {
        let pm = power_model();
        assert_relative_eq!(electric_power(&pm, &[0.0]).unwrap(), 0.5);
        let pm2 = PowerModel {
            fan_coeff: vec![2.0],
            cooling_coeff: vec![0.0],
            heating_coeff: vec![0.0],
            base_power: 0.0,
        };
        assert_relative_eq!(electric_power(&pm2, &[1.5]).unwrap(), 3.0);
        // Doubling flow doubles P - p0.
        let p1 = electric_power(&pm, &[0.4]).unwrap() - 0.5;
        let p2 = electric_power(&pm, &[0.8]).unwrap() - 0.5;
        assert_relative_eq!(p2, 2.0 * p1, epsilon = 1e-12);
        assert!(electric_power(&pm, &[-0.1]).is_err());
    }

    #[test]
    fn consumption_cost_examples() {
        // P(u) = 10 kW constant via base power, one half-hour step at 0.10.
        let pm = PowerModel {
            fan_coeff: vec![0.0],
            cooling_coeff: vec![0.0],
            heating_coeff: vec![0.0],
            base_power: 10.0,
        };
        let prices = PriceWindow {
            energy: vec![0.10],
            reserve: vec![0.0],
            peak_penalty: vec![0.0],
        };
        let cost = consumption_cost(&prices, &pm, &[0.0], 0.5).unwrap();
        assert_relative_eq!(cost, 0.5, epsilon = 1e-12);

        let zero = PriceWindow {
            energy: vec![0.0; 3],
            reserve: vec![0.0; 3],
            peak_penalty: vec![0.0; 3],
        };
        assert_eq!(
            consumption_cost(&zero, &pm, &[0.1, 0.2, 0.3], 0.5).unwrap(),
            0.0
        );

        // Random instance equals a naive per-step loop.
        let pm = power_model();
        let prices = PriceWindow {
            energy: vec![0.08, 0.21, 0.13, 0.18],
            reserve: vec![0.0; 4],
            peak_penalty: vec![0.0; 4],
        };
        let u = vec![0.2, 0.9, 0.45, 0.7];
        let fast = consumption_cost(&prices, &pm, &u, 0.5).unwrap();
        let mut naive = 0.0;
        for k in 0..4 {
            naive += 0.5 * prices.energy[k] * (0.5 + 2.5 * u[k]);
        }
        assert_relative_eq!(fast, naive, epsilon = 1e-12);
    }

    #[test]
    fn reserve_revenue_examples() {
        let pm = power_model();
        let prices = PriceWindow {
            energy: vec![0.1],
            reserve: vec![0.02],
            peak_penalty: vec![0.0],
        };
        assert_eq!(reserve_revenue(&prices, &pm, &[0.0], 0.5).unwrap(), 0.0);
        // Curtailable power 4 kW at 0.02 SGD/kWh for half an hour: 0.04 SGD.
        let r = 4.0 / 2.5;
        assert_relative_eq!(
            reserve_revenue(&prices, &pm, &[r], 0.5).unwrap(),
            0.04,
            epsilon = 1e-12
        );
        assert!(reserve_revenue(&prices, &pm, &[-0.1], 0.5).is_err());
    }

    #[test]
    fn nominal_recovery_with_zero_sigma() {
        let (dss, _) = one_room_model();
        let pm_pred = build_prediction_matrices(&dss, 4).unwrap();
        let power = power_model();
        let (d_hat, envelope, limits, prices) = horizon_fixture(4, 0.0, 30.0);
        let sigma_zero = BoxUncertainty::zero(d_hat.len());
        let config_robust = RmpcConfig {
            slack_penalty: 100.0,
            horizon: 4,
            robust: true,
            reserve: false,
        };
        let config_nominal = RmpcConfig {
            robust: false,
            ..config_robust.clone()
        };
        let inputs = HorizonInputs {
            x0: &[27.0, 24.0],
            d_hat: &d_hat,
            sigma: &sigma_zero,
            envelope: &envelope,
            limits: &limits,
            prices: &prices,
        };
        let lp_robust = assemble_rmpc_lp(&dss, &pm_pred, &power, &config_robust, &inputs).unwrap();
        let lp_nominal =
            assemble_rmpc_lp(&dss, &pm_pred, &power, &config_nominal, &inputs).unwrap();
        assert_eq!(lp_robust.g, lp_nominal.g);
        assert_eq!(lp_robust.h, lp_nominal.h);
        assert_eq!(lp_robust.objective, lp_nominal.objective);
    }

    #[test]
    fn binding_comfort_yields_minimal_flow_and_no_reserve_when_unprofitable() {
        // One step horizon. Hot start forces cooling; reserve price below
        // energy price means offering reserve cannot pay for extra purchase.
        let (dss, _) = one_room_model();
        let pm_pred = build_prediction_matrices(&dss, 1).unwrap();
        let power = power_model();
        let (d_hat, envelope, limits, prices) = horizon_fixture(1, 0.0, 33.0);
        let sigma = BoxUncertainty::zero(d_hat.len());
        let config = RmpcConfig {
            slack_penalty: 1000.0,
            horizon: 1,
            robust: true,
            reserve: true,
        };
        let x0 = [30.0, 26.0];
        let inputs = HorizonInputs {
            x0: &x0,
            d_hat: &d_hat,
            sigma: &sigma,
            envelope: &envelope,
            limits: &limits,
            prices: &prices,
        };
        let schedule = solve_step(&dss, &pm_pred, &power, &config, &inputs, None).unwrap();

        // Minimal flow that keeps the room at the upper comfort bound:
        // free response + b * u = upper  =>  u = (free - upper) / (-b).
        let free = dss.a.matvec(&x0)[1] + dss.e.matvec(&d_hat)[1];
        let b_room = dss.b[(1, 0)];
        let u_min = ((free - 26.0) / -b_room).max(0.0);
        assert!(u_min > 0.0, "fixture should require cooling");
        assert_relative_eq!(schedule.u[0], u_min, epsilon = 1e-7);
        assert_relative_eq!(schedule.r[0], 0.0, epsilon = 1e-9);
        assert_relative_eq!(schedule.max_slack(), 0.0, epsilon = 1e-9);
        assert!(schedule.kkt_residual <= 1e-8);
    }

    #[test]
    fn profitable_reserve_buys_to_the_overcooling_limit() {
        // Reserve price above energy price: the purchase rises until the
        // not-curtailed trajectory hits the lower comfort bound, and the
        // whole margin above the comfort-minimal consumption is offered.
        let (dss, layout) = one_room_model();
        let pm_pred = build_prediction_matrices(&dss, 1).unwrap();
        let power = power_model();
        let mut d_hat = Vec::new();
        d_hat.extend(layout.map_signals(0.3, &[0.6], 33.0).unwrap());
        let envelope = ComfortEnvelope::new(vec![20.0], vec![26.0]).unwrap();
        let limits = ActuatorLimits::new(vec![0.0], vec![1.5]).unwrap();
        let prices = PriceWindow {
            energy: vec![0.05],
            reserve: vec![0.2],
            peak_penalty: vec![0.0],
        };
        let sigma = BoxUncertainty::zero(d_hat.len());
        let config = RmpcConfig {
            slack_penalty: 1000.0,
            horizon: 1,
            robust: true,
            reserve: true,
        };
        let x0 = [30.0, 26.0];
        let inputs = HorizonInputs {
            x0: &x0,
            d_hat: &d_hat,
            sigma: &sigma,
            envelope: &envelope,
            limits: &limits,
            prices: &prices,
        };
        let schedule = solve_step(&dss, &pm_pred, &power, &config, &inputs, None).unwrap();

        let free = dss.a.matvec(&x0)[1] + dss.e.matvec(&d_hat)[1];
        let b_room = dss.b[(1, 0)];
        let u_min = ((free - 26.0) / -b_room).max(0.0);
        let u_cap = (free - 20.0) / -b_room;
        assert!(u_cap < 1.5, "fixture should bind comfort before the actuator");
        assert_relative_eq!(schedule.u[0], u_cap, epsilon = 1e-7);
        assert_relative_eq!(schedule.r[0], u_cap - u_min, epsilon = 1e-7);
    }

    #[test]
    fn slack_activates_only_when_needed_and_rho_is_inert_otherwise() {
        let (dss, _) = one_room_model();
        let pm_pred = build_prediction_matrices(&dss, 4).unwrap();
        let power = power_model();
        let (d_hat, envelope, limits, prices) = horizon_fixture(4, 0.0, 30.0);
        let sigma = BoxUncertainty::zero(d_hat.len());
        let config = RmpcConfig {
            slack_penalty: 500.0,
            horizon: 4,
            robust: true,
            reserve: true,
        };
        let inputs = HorizonInputs {
            x0: &[27.0, 24.0],
            d_hat: &d_hat,
            sigma: &sigma,
            envelope: &envelope,
            limits: &limits,
            prices: &prices,
        };
        let s1 = solve_step(&dss, &pm_pred, &power, &config, &inputs, None).unwrap();
        assert_relative_eq!(s1.max_slack(), 0.0, epsilon = 1e-9);

        let config10 = RmpcConfig {
            slack_penalty: 5000.0,
            ..config
        };
        let s2 = solve_step(&dss, &pm_pred, &power, &config10, &inputs, None).unwrap();
        for (a, b) in s1.u.iter().zip(&s2.u) {
            assert_relative_eq!(a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn infeasible_without_slack_is_absorbed_by_epsilon() {
        // Start far above comfort with a tiny actuator: eps must activate
        // instead of the solve failing.
        let (dss, _) = one_room_model();
        let pm_pred = build_prediction_matrices(&dss, 2).unwrap();
        let power = power_model();
        let (d_hat, _, _, prices) = horizon_fixture(2, 0.0, 33.0);
        let envelope = ComfortEnvelope::new(vec![20.0; 2], vec![24.0; 2]).unwrap();
        let limits = ActuatorLimits::new(vec![0.0; 2], vec![0.01; 2]).unwrap();
        let sigma = BoxUncertainty::zero(d_hat.len());
        let config = RmpcConfig {
            slack_penalty: 1000.0,
            horizon: 2,
            robust: true,
            reserve: true,
        };
        let inputs = HorizonInputs {
            x0: &[34.0, 33.0],
            d_hat: &d_hat,
            sigma: &sigma,
            envelope: &envelope,
            limits: &limits,
            prices: &prices,
        };
        let schedule = solve_step(&dss, &pm_pred, &power, &config, &inputs, None).unwrap();
        assert!(schedule.max_slack() > 0.1);
        assert!(schedule.kkt_residual <= 1e-8);
    }

    #[test]
    fn epigraph_is_tight_at_optimum_with_positive_phi() {
        let (dss, _) = one_room_model();
        let pm_pred = build_prediction_matrices(&dss, 4).unwrap();
        let power = power_model();
        let (d_hat, envelope, limits, prices) = horizon_fixture(4, 1.5, 33.0);
        let sigma = BoxUncertainty::zero(d_hat.len());
        let config = RmpcConfig {
            slack_penalty: 1000.0,
            horizon: 4,
            robust: true,
            reserve: false,
        };
        let inputs = HorizonInputs {
            x0: &[30.0, 25.5],
            d_hat: &d_hat,
            sigma: &sigma,
            envelope: &envelope,
            limits: &limits,
            prices: &prices,
        };
        let schedule = solve_step(&dss, &pm_pred, &power, &config, &inputs, None).unwrap();
        let mut peak_term: f64 = 0.0;
        for k in 0..4 {
            let p = electric_power(&power, &schedule.u[k..k + 1]).unwrap();
            peak_term = peak_term.max(1.5 * p);
        }
        assert!(peak_term > 0.0);
        assert_relative_eq!(schedule.beta, peak_term, epsilon = 1e-7);
    }

    #[test]
    fn objective_is_nondecreasing_in_sigma() {
        // Growing the uncertainty set shrinks the feasible set, so the
        // optimal value cannot improve.
        let (dss, layout) = one_room_model();
        let pm_pred = build_prediction_matrices(&dss, 6).unwrap();
        let power = power_model();
        let mut d_hat = Vec::new();
        let mut d_load = Vec::new();
        for _ in 0..6 {
            d_hat.extend(layout.map_signals(0.3, &[0.6], 31.0).unwrap());
            d_load.extend(layout.load_components(0.3, &[0.6]).unwrap());
        }
        let envelope = ComfortEnvelope::new(vec![21.0; 6], vec![26.0; 6]).unwrap();
        let limits = ActuatorLimits::new(vec![0.0; 6], vec![1.5; 6]).unwrap();
        let prices = PriceWindow {
            energy: vec![0.12; 6],
            reserve: vec![0.01; 6],
            peak_penalty: vec![0.0; 6],
        };
        let config = RmpcConfig {
            slack_penalty: 1000.0,
            horizon: 6,
            robust: true,
            reserve: true,
        };
        let x0 = [29.0, 25.5];
        let mut previous = f64::NEG_INFINITY;
        for scale in [0.0, 0.25, 0.5] {
            let sigma =
                BoxUncertainty::new(d_load.iter().map(|d| scale * d.abs()).collect()).unwrap();
            let inputs = HorizonInputs {
                x0: &x0,
                d_hat: &d_hat,
                sigma: &sigma,
                envelope: &envelope,
                limits: &limits,
                prices: &prices,
            };
            let schedule = solve_step(&dss, &pm_pred, &power, &config, &inputs, None).unwrap();
            assert!(
                schedule.objective >= previous - 1e-9,
                "objective must not improve as sigma grows (scale {scale})"
            );
            previous = schedule.objective;
        }
    }

    #[test]
    fn schedule_csv_dump_lists_every_step_and_room() {
        let (dss, _) = one_room_model();
        let pm_pred = build_prediction_matrices(&dss, 3).unwrap();
        let power = power_model();
        let (d_hat, envelope, limits, prices) = horizon_fixture(3, 0.0, 31.0);
        let sigma = BoxUncertainty::zero(d_hat.len());
        let config = RmpcConfig {
            slack_penalty: 1000.0,
            horizon: 3,
            robust: true,
            reserve: true,
        };
        let inputs = HorizonInputs {
            x0: &[29.0, 25.8],
            d_hat: &d_hat,
            sigma: &sigma,
            envelope: &envelope,
            limits: &limits,
            prices: &prices,
        };
        let schedule = solve_step(&dss, &pm_pred, &power, &config, &inputs, None).unwrap();
        let mut buf = Vec::new();
        schedule.write_csv(&mut buf, &["r1".into()]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "step,room,u,r,eps,beta,energy_cost,reserve_revenue,slack_cost,peak_term"
        );
        assert_eq!(text.lines().count(), 4);
        assert!(text.contains("0,r1,"));
        assert!(text.contains("2,r1,"));
    }

    #[test]
    fn horizon_length_mismatch_rejected() {
        let (dss, _) = one_room_model();
        let pm_pred = build_prediction_matrices(&dss, 4).unwrap();
        let power = power_model();
        let (d_hat, envelope, limits, mut prices) = horizon_fixture(4, 0.0, 30.0);
        prices.energy.pop();
        let sigma = BoxUncertainty::zero(d_hat.len());
        let config = RmpcConfig {
            slack_penalty: 100.0,
            horizon: 4,
            robust: true,
            reserve: true,
        };
        let inputs = HorizonInputs {
            x0: &[27.0, 24.0],
            d_hat: &d_hat,
            sigma: &sigma,
            envelope: &envelope,
            limits: &limits,
            prices: &prices,
        };
        assert!(assemble_rmpc_lp(&dss, &pm_pred, &power, &config, &inputs).is_err());
    }
}
