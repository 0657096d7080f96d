//! Closed-loop simulation harness: scenario definitions, the receding
//! horizon loop, the peak-penalty sweep and monthly cost accounting.

use chrono::{Datelike, NaiveDateTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::BuildingConfig;
use crate::controller::{
    auto_slack_penalty, electric_power, solve_step, ActuatorLimits, HorizonInputs, PriceWindow,
    RmpcConfig,
};
use crate::error::{Error, Result};
use crate::lp::Basis;
use crate::market::{
    derive_uncertainty_bounds, map_forecast_channels, CurtailmentSignal, DisturbanceForecast,
    PriceSeries,
};
use crate::prediction::build_prediction_matrices;
use crate::robust::BoxUncertainty;
use crate::thermal::plant_step;

/// The three study configurations plus free-form parameter choices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioLabel {
    /// Nominal MPC: uncertainty ignored by the controller.
    A,
    /// Robust MPC without a peak-power penalty.
    B,
    /// Robust MPC with a peak-power penalty.
    C,
    Custom,
}

impl ScenarioLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScenarioLabel::A => "a",
            ScenarioLabel::B => "b",
            ScenarioLabel::C => "c",
            ScenarioLabel::Custom => "custom",
        }
    }
}

/// Independent seed streams for the three random inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Seeds {
    pub disturbance: u64,
    pub prices: u64,
    pub curtailment: u64,
}

impl Seeds {
    /// Derives the three streams from one master seed.
    pub fn from_master(seed: u64) -> Self {
        Self {
            disturbance: seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(1),
            prices: seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(2),
            curtailment: seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(3),
        }
    }
}

/// How the realized disturbance deviation is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RealizationMode {
    /// i.i.d. uniform per channel on [-sigma, sigma] (default).
    Uniform,
    /// Adversarial vertex: +sigma on every channel, the worst case for the
    /// upper comfort bounds of a cooling system. Test mode.
    UpperVertex,
    /// Perfect forecast (w = 0).
    Zero,
}

/// Default peak-power penalty of the scenario (c) study, SGD/kW.
pub const SCENARIO_C_PPP: f64 = 1.5;

/// One closed-loop study configuration.
#[derive(Debug, Clone)]
pub struct ScenarioSpec {
    pub label: ScenarioLabel,
    /// Controller-side robustness (the world keeps its uncertainty either way).
    pub robust: bool,
    /// Constant peak-power penalty, SGD/kW.
    pub ppp: f64,
    /// Uncertainty bound as a fraction of the forecast thermal load.
    pub uncertainty_fraction: f64,
    pub horizon: usize,
    pub span_days: usize,
    pub seeds: Seeds,
    pub realization: RealizationMode,
    /// Per-step probability of an interruptible-load call.
    pub curtailment_probability: f64,
}

impl ScenarioSpec {
    fn base(label: ScenarioLabel, days: usize, master_seed: u64) -> Self {
        Self {
            label,
            robust: true,
            ppp: 0.0,
            uncertainty_fraction: 0.5,
            horizon: 48,
            span_days: days,
            seeds: Seeds::from_master(master_seed),
            realization: RealizationMode::Uniform,
            curtailment_probability: 0.1,
        }
    }

    pub fn scenario_a(days: usize, master_seed: u64) -> Self {
        Self {
            robust: false,
            ppp: 0.0,
            ..Self::base(ScenarioLabel::A, days, master_seed)
        }
    }

    pub fn scenario_b(days: usize, master_seed: u64) -> Self {
        Self {
            robust: true,
            ppp: 0.0,
            ..Self::base(ScenarioLabel::B, days, master_seed)
        }
    }

    pub fn scenario_c(days: usize, master_seed: u64) -> Self {
        Self {
            robust: true,
            ppp: SCENARIO_C_PPP,
            ..Self::base(ScenarioLabel::C, days, master_seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.label {
            ScenarioLabel::A if self.robust || self.ppp != 0.0 => {
                return Err(Error::Validation(
                    "scenario (a) is nominal: robust off, ppp = 0".into(),
                ))
            }
            ScenarioLabel::B if !self.robust || self.ppp != 0.0 => {
                return Err(Error::Validation(
                    "scenario (b) is robust with ppp = 0".into(),
                ))
            }
            ScenarioLabel::C if !self.robust || self.ppp <= 0.0 => {
                return Err(Error::Validation(
                    "scenario (c) is robust with ppp > 0".into(),
                ))
            }
            _ => {}
        }
        if self.ppp < 0.0 {
            return Err(Error::Validation("ppp must be >= 0".into()));
        }
        if self.uncertainty_fraction < 0.0 {
            return Err(Error::Validation(
                "uncertainty fraction must be >= 0".into(),
            ));
        }
        if self.span_days == 0 || self.horizon == 0 {
            return Err(Error::Validation("span and horizon must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.curtailment_probability) {
            return Err(Error::Validation(
                "curtailment probability must be in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// One closed-loop step record. `state` is the state at the step start;
/// the successor state is the next record's `state` (or `final_state`).
#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    pub step: usize,
    pub timestamp: NaiveDateTime,
    pub state: Vec<f64>,
    /// Applied purchase schedule element u*_0 per room, kg/s.
    pub u_applied: Vec<f64>,
    /// Offered reserve r*_0 per room, kg/s.
    pub r_offered: Vec<f64>,
    pub curtailed: bool,
    /// Realized disturbance deviation per channel, kW.
    pub w_realized: Vec<f64>,
    /// Forecast channel values per node, kW.
    pub d_hat: Vec<f64>,
    pub price_energy: f64,
    pub price_reserve: f64,
    pub ppp: f64,
    /// Electric power of the realized consumption, kW.
    pub power_kw: f64,
    pub energy_cost: f64,
    pub reserve_revenue: f64,
    pub eps_max: f64,
    pub beta: f64,
    pub lp_iterations: usize,
    pub kkt_residual: f64,
}

/// Full closed-loop record.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub scenario: String,
    pub dt_hours: f64,
    pub state_labels: Vec<String>,
    pub room_ids: Vec<String>,
    pub steps: Vec<TraceStep>,
    /// State after the last step.
    pub final_state: Vec<f64>,
}

impl SimulationTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn total_energy_cost(&self) -> f64 {
        self.steps.iter().map(|s| s.energy_cost).sum()
    }

    pub fn total_reserve_revenue(&self) -> f64 {
        self.steps.iter().map(|s| s.reserve_revenue).sum()
    }

    pub fn total_cost(&self) -> f64 {
        self.total_energy_cost() - self.total_reserve_revenue()
    }

    pub fn peak_power(&self) -> f64 {
        self.steps.iter().fold(0.0, |m, s| m.max(s.power_kw))
    }

    pub fn max_slack(&self) -> f64 {
        self.steps.iter().fold(0.0, |m, s| m.max(s.eps_max))
    }

    /// Room temperatures of a step, in room order.
    pub fn room_temperatures(&self, step: usize) -> &[f64] {
        let walls = self.state_labels.len() - self.room_ids.len();
        &self.steps[step].state[walls..]
    }

    /// Successor state of step `k`.
    pub fn state_after(&self, k: usize) -> &[f64] {
        if k + 1 < self.steps.len() {
            &self.steps[k + 1].state
        } else {
            &self.final_state
        }
    }
}

/// Runs the receding-horizon closed loop.
///
/// At each step the controller solves over the horizon, the first element
/// of the schedule is applied (minus the reserve when a curtailment call
/// arrives), the disturbance deviation is drawn, and the plant advances.
/// Deterministic for fixed seeds. `curtailment` defaults to seeded
/// Bernoulli calls when not supplied.
pub fn run_closed_loop(
    spec: &ScenarioSpec,
    building: &BuildingConfig,
    prices: &PriceSeries,
    forecast: &DisturbanceForecast,
    curtailment: Option<&CurtailmentSignal>,
) -> Result<SimulationTrace> {
    spec.validate()?;
    let dt = building.dt_hours;
    let steps_per_day = building.steps_per_day();
    let span_steps = spec.span_days * steps_per_day;
    let needed = span_steps + spec.horizon;
    if prices.len() < needed {
        return Err(Error::Data(format!(
            "price series covers {} periods but the run needs {} (span {} + horizon {})",
            prices.len(),
            needed,
            span_steps,
            spec.horizon
        )));
    }
    if forecast.len() < needed {
        return Err(Error::Data(format!(
            "forecast covers {} periods but the run needs {} (span {} + horizon {})",
            forecast.len(),
            needed,
            span_steps,
            spec.horizon
        )));
    }
    if (prices.dt_hours() - dt).abs() > 1e-9 {
        return Err(Error::Data(format!(
            "price spacing {} h does not match the model sample time {} h",
            prices.dt_hours(),
            dt
        )));
    }

    let dss = building.discretize()?;
    let pm = build_prediction_matrices(&dss, spec.horizon)?;
    let rooms = building.rooms();
    let nd = dss.disturbance_channels();
    let room_ids = building.room_ids();

    let (d_hat_full, d_load_full) =
        map_forecast_channels(forecast, &building.layout, &room_ids, 0, needed)?;
    let sigma_full = derive_uncertainty_bounds(&d_load_full, spec.uncertainty_fraction)?;

    let default_curtailment;
    let curtailment = match curtailment {
        Some(c) => c,
        None => {
            default_curtailment = CurtailmentSignal::bernoulli(
                span_steps,
                spec.curtailment_probability,
                spec.seeds.curtailment,
            )?;
            &default_curtailment
        }
    };
    if curtailment.len() < span_steps {
        return Err(Error::Data(format!(
            "curtailment signal covers {} steps, need {span_steps}",
            curtailment.len()
        )));
    }

    let max_price = prices.energy.iter().copied().fold(0.0f64, f64::max);
    let rho = building
        .controller
        .slack_penalty
        .unwrap_or_else(|| auto_slack_penalty(max_price, &building.power));
    let config = RmpcConfig {
        slack_penalty: rho,
        horizon: spec.horizon,
        robust: spec.robust,
        reserve: building.controller.reserve,
    };

    // Constant actuator window stacked over the horizon.
    let mut lim_lo = Vec::with_capacity(rooms * spec.horizon);
    let mut lim_hi = Vec::with_capacity(rooms * spec.horizon);
    for _ in 0..spec.horizon {
        lim_lo.extend_from_slice(&building.min_flow);
        lim_hi.extend_from_slice(&building.max_flow);
    }
    let limits = ActuatorLimits::new(lim_lo, lim_hi)?;

    // Initial state: rooms at the occupied band midpoint, walls midway
    // between that and the first ambient sample.
    let ambient0 = forecast.signal("ambient")?[0];
    let room_mid = 0.5 * (building.comfort.occupied_lower + building.comfort.occupied_upper);
    let walls = dss.n() - rooms;
    let mut state: Vec<f64> = Vec::with_capacity(dss.n());
    for _ in 0..walls {
        state.push(0.5 * (room_mid + ambient0));
    }
    for _ in 0..rooms {
        state.push(room_mid);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seeds.disturbance);
    let mut warm: Option<Basis> = None;
    let mut steps = Vec::with_capacity(span_steps);

    for k in 0..span_steps {
        let envelope =
            building
                .comfort
                .envelope(k + 1, spec.horizon, dt, rooms)?;
        let window = PriceWindow {
            energy: prices.energy[k..k + spec.horizon].to_vec(),
            reserve: prices.reserve[k..k + spec.horizon].to_vec(),
            peak_penalty: vec![spec.ppp; spec.horizon],
        };
        let d_hat_win = &d_hat_full[k * nd..(k + spec.horizon) * nd];
        let sigma_win = BoxUncertainty::new(sigma_full[k * nd..(k + spec.horizon) * nd].to_vec())?;
        let inputs = HorizonInputs {
            x0: &state,
            d_hat: d_hat_win,
            sigma: &sigma_win,
            envelope: &envelope,
            limits: &limits,
            prices: &window,
        };
        let schedule = solve_step(&dss, &pm, &building.power, &config, &inputs, warm.as_ref())?;
        warm = Some(schedule.basis.clone());

        let (u0, r0) = schedule.first_action(rooms);
        let u0 = u0.to_vec();
        let r0 = r0.to_vec();
        let curtailed = curtailment.called[k];

        // Disturbance deviation for this step. Drawing happens for every
        // mode so Uniform-mode runs stay comparable across controllers.
        let sigma_k = &sigma_full[k * nd..(k + 1) * nd];
        let mut w_k = vec![0.0; nd];
        for (w, &s) in w_k.iter_mut().zip(sigma_k) {
            let draw: f64 = rng.gen_range(-1.0..1.0);
            *w = match spec.realization {
                RealizationMode::Uniform => draw * s,
                RealizationMode::UpperVertex => s,
                RealizationMode::Zero => 0.0,
            };
        }

        let d_hat_k = &d_hat_full[k * nd..(k + 1) * nd];
        let d_real: Vec<f64> = d_hat_k.iter().zip(&w_k).map(|(d, w)| d + w).collect();
        let r_applied: Vec<f64> = if curtailed {
            r0.clone()
        } else {
            vec![0.0; rooms]
        };
        let consumption: Vec<f64> = u0
            .iter()
            .zip(&r_applied)
            .map(|(u, r)| (u - r).max(0.0))
            .collect();
        let power_kw = electric_power(&building.power, &consumption)?;
        let energy_cost = dt * prices.energy[k] * power_kw;
        let reserve_power = electric_power(&building.power, &r0)? - building.power.base_power;
        let reserve_revenue = dt * prices.reserve[k] * reserve_power;

        steps.push(TraceStep {
            step: k,
            timestamp: forecast.timestamps[k],
            state: state.clone(),
            u_applied: u0.clone(),
            r_offered: r0.clone(),
            curtailed,
            w_realized: w_k.clone(),
            d_hat: d_hat_k.to_vec(),
            price_energy: prices.energy[k],
            price_reserve: prices.reserve[k],
            ppp: spec.ppp,
            power_kw,
            energy_cost,
            reserve_revenue,
            eps_max: schedule.max_slack(),
            beta: schedule.beta,
            lp_iterations: schedule.lp_iterations,
            kkt_residual: schedule.kkt_residual,
        });

        state = plant_step(&dss, &state, &u0, &d_real, &r_applied)?;
    }

    Ok(SimulationTrace {
        scenario: spec.label.as_str().to_string(),
        dt_hours: dt,
        state_labels: dss.state_labels.clone(),
        room_ids,
        steps,
        final_state: state,
    })
}

/// Result of sweeping the peak-power penalty.
#[derive(Debug, Clone, PartialEq)]
pub struct PppSweepResult {
    pub phi: Vec<f64>,
    /// Total cost (consumption minus reserve revenue) per grid point, SGD.
    pub cost: Vec<f64>,
    /// Peak realized power per grid point, kW.
    pub peak: Vec<f64>,
    /// cost / max(cost), in (0, 1].
    pub norm_cost: Vec<f64>,
    /// peak / max(peak), in (0, 1].
    pub norm_peak: Vec<f64>,
    /// First penalty beyond which the marginal peak reduction stays below
    /// 5% of the best observed rate; None when no saturation shows.
    pub knee_phi: Option<f64>,
}

/// Runs one closed loop per grid point with shared seeds and normalizes
/// the cost/peak metrics.
pub fn run_ppp_sweep(
    base: &ScenarioSpec,
    building: &BuildingConfig,
    prices: &PriceSeries,
    forecast: &DisturbanceForecast,
    phi_grid: &[f64],
) -> Result<PppSweepResult> {
    if phi_grid.is_empty() {
        return Err(Error::Validation("ppp sweep needs a nonempty grid".into()));
    }
    if phi_grid.iter().any(|p| *p < 0.0) {
        return Err(Error::Validation("ppp grid values must be >= 0".into()));
    }
    if phi_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Validation(
            "ppp grid must be strictly increasing".into(),
        ));
    }
    let mut cost = Vec::with_capacity(phi_grid.len());
    let mut peak = Vec::with_capacity(phi_grid.len());
    for &phi in phi_grid {
        let spec = ScenarioSpec {
            label: ScenarioLabel::Custom,
            robust: base.robust,
            ppp: phi,
            ..base.clone()
        };
        let trace = run_closed_loop(&spec, building, prices, forecast, None)?;
        cost.push(trace.total_cost());
        peak.push(trace.peak_power());
    }
    let max_cost = cost.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let max_peak = peak.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max_cost <= 0.0 || max_peak <= 0.0 {
        return Err(Error::Numeric(
            "sweep produced nonpositive cost or peak; normalization undefined".into(),
        ));
    }
    let norm_cost: Vec<f64> = cost.iter().map(|c| c / max_cost).collect();
    let norm_peak: Vec<f64> = peak.iter().map(|p| p / max_peak).collect();

    // Saturation knee: marginal peak reduction per unit penalty.
    let mut knee_phi = None;
    if phi_grid.len() >= 3 {
        let rates: Vec<f64> = phi_grid
            .windows(2)
            .zip(peak.windows(2))
            .map(|(p, k)| (k[0] - k[1]) / (p[1] - p[0]))
            .collect();
        let best = rates.iter().copied().fold(0.0f64, f64::max);
        if best > 0.0 {
            for i in 0..rates.len() {
                if rates[i..].iter().all(|r| *r < 0.05 * best) {
                    knee_phi = Some(phi_grid[i]);
                    break;
                }
            }
        }
    }

    Ok(PppSweepResult {
        phi: phi_grid.to_vec(),
        cost,
        peak,
        norm_cost,
        norm_peak,
        knee_phi,
    })
}

/// One calendar month of accounting.
#[derive(Debug, Clone, PartialEq)]
pub struct MonthRow {
    pub year: i32,
    pub month: u32,
    pub consumption_cost: f64,
    pub reserve_revenue: f64,
    /// Exactly consumption_cost - reserve_revenue.
    pub total_cost: f64,
    /// Percentage deltas against the matching baseline month.
    pub delta_cost_pct: Option<f64>,
    pub delta_revenue_pct: Option<f64>,
    pub delta_total_pct: Option<f64>,
}

/// Monthly cost/revenue accounting of a trace.
#[derive(Debug, Clone, PartialEq)]
pub struct AccountingReport {
    pub scenario: String,
    pub months: Vec<MonthRow>,
}

impl AccountingReport {
    pub fn overall_cost(&self) -> f64 {
        self.months.iter().map(|m| m.consumption_cost).sum()
    }

    pub fn overall_revenue(&self) -> f64 {
        self.months.iter().map(|m| m.reserve_revenue).sum()
    }

    pub fn overall_total(&self) -> f64 {
        self.months.iter().map(|m| m.total_cost).sum()
    }
}

fn pct_delta(candidate: f64, baseline: f64) -> Option<f64> {
    if baseline == 0.0 {
        None
    } else {
        Some(100.0 * (candidate - baseline) / baseline)
    }
}

/// Sums costs per calendar month; `total = cost - revenue` holds exactly.
/// With a baseline report (scenario (a) by convention) the percentage
/// deltas are filled in; the baseline must cover the same months.
pub fn accounting(
    trace: &SimulationTrace,
    baseline: Option<&AccountingReport>,
) -> Result<AccountingReport> {
    if trace.is_empty() {
        return Err(Error::Validation("accounting needs a nonempty trace".into()));
    }
    let mut months: Vec<MonthRow> = Vec::new();
    for step in &trace.steps {
        let (y, m) = (step.timestamp.year(), step.timestamp.month());
        match months.last_mut() {
            Some(row) if row.year == y && row.month == m => {
                row.consumption_cost += step.energy_cost;
                row.reserve_revenue += step.reserve_revenue;
            }
            _ => months.push(MonthRow {
                year: y,
                month: m,
                consumption_cost: step.energy_cost,
                reserve_revenue: step.reserve_revenue,
                total_cost: 0.0,
                delta_cost_pct: None,
                delta_revenue_pct: None,
                delta_total_pct: None,
            }),
        }
    }
    for row in &mut months {
        row.total_cost = row.consumption_cost - row.reserve_revenue;
    }
    if let Some(base) = baseline {
        if base.months.len() != months.len()
            || base
                .months
                .iter()
                .zip(&months)
                .any(|(b, m)| (b.year, b.month) != (m.year, m.month))
        {
            return Err(Error::Validation(
                "baseline report covers different months than the trace".into(),
            ));
        }
        for (row, b) in months.iter_mut().zip(&base.months) {
            row.delta_cost_pct = pct_delta(row.consumption_cost, b.consumption_cost);
            row.delta_revenue_pct = pct_delta(row.reserve_revenue, b.reserve_revenue);
            row.delta_total_pct = pct_delta(row.total_cost, b.total_cost);
        }
    }
    Ok(AccountingReport {
        scenario: trace.scenario.clone(),
        months,
    })
}
