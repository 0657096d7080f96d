//! Market and weather data: half-hourly energy/reserve price series,
//! disturbance forecasts, uncertainty bounds and curtailment-event signals.
//!
//! File formats (CSV, header row, ISO-8601 timestamps):
//! - prices: `timestamp,energy_price,reserve_price[,unit]`, prices are
//!   SGD/kWh unless the optional unit column says `SGD/MWh`.
//! - forecast (long format): `timestamp,channel,value[,realization]` with
//!   channels `solar` (kW/m^2), `internal:<room>` (kW), `ambient` (degC).
//! - curtailment: `timestamp,called` with 0/1 values.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{Duration, NaiveDateTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::thermal::DisturbanceLayout;

/// Timestamp format used in every CSV we read or write.
pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

/// Half-hourly market periods per day.
pub const PERIODS_PER_DAY: usize = 48;

fn parse_timestamp(s: &str, path: &str, line: usize) -> Result<NaiveDateTime> {
    NaiveDateTime::parse_from_str(s.trim(), TIMESTAMP_FORMAT).map_err(|e| Error::Data(format!(
        "{path}:{line}: bad timestamp '{s}': {e}"
    )))
}

fn parse_number(s: &str, what: &str, path: &str, line: usize) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::Data(format!("{path}:{line}: bad {what} '{s}'")))
}

fn check_uniform_spacing(timestamps: &[NaiveDateTime], what: &str) -> Result<f64> {
    if timestamps.len() < 2 {
        return Err(Error::Data(format!("{what}: need at least two periods")));
    }
    let step = timestamps[1] - timestamps[0];
    if step <= Duration::zero() {
        return Err(Error::Data(format!(
            "{what}: timestamps must be strictly increasing"
        )));
    }
    for (i, pair) in timestamps.windows(2).enumerate() {
        if pair[1] - pair[0] != step {
            return Err(Error::Data(format!(
                "{what}: nonuniform spacing between {} and {} (expected {} minutes)",
                pair[0].format(TIMESTAMP_FORMAT),
                pair[1].format(TIMESTAMP_FORMAT),
                step.num_minutes()
            )));
        }
        let _ = i;
    }
    Ok(step.num_seconds() as f64 / 3600.0)
}

/// Half-hourly energy and reserve price series.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    pub timestamps: Vec<NaiveDateTime>,
    /// Energy price, SGD/kWh.
    pub energy: Vec<f64>,
    /// Reserve capacity price, SGD/kWh.
    pub reserve: Vec<f64>,
}

impl PriceSeries {
    pub fn new(
        timestamps: Vec<NaiveDateTime>,
        energy: Vec<f64>,
        reserve: Vec<f64>,
    ) -> Result<Self> {
        if timestamps.len() != energy.len() || energy.len() != reserve.len() {
            return Err(Error::Data("price series length mismatch".into()));
        }
        check_uniform_spacing(&timestamps, "price series")?;
        Ok(Self {
            timestamps,
            energy,
            reserve,
        })
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    /// Period spacing in hours.
    pub fn dt_hours(&self) -> f64 {
        (self.timestamps[1] - self.timestamps[0]).num_seconds() as f64 / 3600.0
    }
}

/// Loads a price CSV. Rows are validated one by one with line-anchored
/// errors; gaps in the half-hourly grid are rejected.
pub fn load_price_csv(path: impl AsRef<Path>) -> Result<PriceSeries> {
    let path_str = path.as_ref().display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path.as_ref())
        .map_err(|e| Error::Data(format!("{path_str}: {e}")))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Data(format!("{path_str}: {e}")))?
        .clone();
    let expected = ["timestamp", "energy_price", "reserve_price"];
    for (i, want) in expected.iter().enumerate() {
        if headers.get(i).map(str::trim) != Some(*want) {
            return Err(Error::Data(format!(
                "{path_str}:1: expected header '{}', got {:?}",
                expected.join(","),
                headers
            )));
        }
    }
    let unit_col = headers.iter().position(|h| h.trim() == "unit");

    let mut timestamps = Vec::new();
    let mut energy = Vec::new();
    let mut reserve = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2; // header is line 1
        let record = record.map_err(|e| Error::Data(format!("{path_str}:{line}: {e}")))?;
        if record.len() < 3 {
            return Err(Error::Data(format!(
                "{path_str}:{line}: expected at least 3 fields, got {}",
                record.len()
            )));
        }
        let ts = parse_timestamp(&record[0], &path_str, line)?;
        let mut e = parse_number(&record[1], "energy price", &path_str, line)?;
        let mut r = parse_number(&record[2], "reserve price", &path_str, line)?;
        if let Some(col) = unit_col {
            match record.get(col).map(str::trim) {
                Some("SGD/kWh") | Some("") | None => {}
                Some("SGD/MWh") => {
                    e /= 1000.0;
                    r /= 1000.0;
                }
                Some(other) => {
                    return Err(Error::Data(format!(
                        "{path_str}:{line}: unknown unit '{other}' (use SGD/kWh or SGD/MWh)"
                    )))
                }
            }
        }
        timestamps.push(ts);
        energy.push(e);
        reserve.push(r);
    }
    PriceSeries::new(timestamps, energy, reserve)
}

/// Writes a price CSV in the canonical SGD/kWh schema. Together with
/// [`load_price_csv`] this round-trips bit-exactly (shortest float form).
pub fn write_price_csv(path: impl AsRef<Path>, series: &PriceSeries) -> Result<()> {
    let path_str = path.as_ref().display().to_string();
    let mut w = csv::Writer::from_path(path.as_ref())
        .map_err(|e| Error::Data(format!("{path_str}: {e}")))?;
    w.write_record(["timestamp", "energy_price", "reserve_price"])
        .map_err(|e| Error::Data(format!("{path_str}: {e}")))?;
    for i in 0..series.len() {
        w.write_record([
            series.timestamps[i].format(TIMESTAMP_FORMAT).to_string(),
            format!("{}", series.energy[i]),
            format!("{}", series.reserve[i]),
        ])
        .map_err(|e| Error::Data(format!("{path_str}: {e}")))?;
    }
    w.flush().map_err(|e| Error::io(path_str, e))?;
    Ok(())
}

/// Parameters of the synthetic NEMS-style price generator.
#[derive(Debug, Clone)]
pub struct SynthPriceParams {
    pub start: NaiveDateTime,
    pub days: usize,
    pub dt_hours: f64,
    /// Flat base level, SGD/kWh.
    pub base: f64,
    /// Morning and evening peak amplitudes, SGD/kWh.
    pub morning_peak: f64,
    pub evening_peak: f64,
    /// Relative uniform noise amplitude on the energy price.
    pub noise: f64,
    /// Mean reserve-to-energy price ratio (reserve prices are far below
    /// energy prices in the reference market).
    pub reserve_fraction: f64,
    pub seed: u64,
}

impl Default for SynthPriceParams {
    fn default() -> Self {
        Self {
            start: default_start(),
            days: 2,
            dt_hours: 0.5,
            base: 0.08,
            morning_peak: 0.10,
            evening_peak: 0.06,
            noise: 0.10,
            reserve_fraction: 0.10,
            seed: 1,
        }
    }
}

pub fn default_start() -> NaiveDateTime {
    chrono::NaiveDate::from_ymd_opt(2014, 1, 1)
        .expect("valid date")
        .and_hms_opt(0, 0, 0)
        .expect("valid time")
}

fn gauss_bump(hour: f64, center: f64, width: f64) -> f64 {
    let z = (hour - center) / width;
    (-0.5 * z * z).exp()
}

/// Deterministic two-peak diurnal price synthesizer. Identical seeds give
/// identical series on every platform (ChaCha8 keystream).
///
/// Reserve prices sit far below energy prices on average but carry rare
/// scarcity spikes (when `noise > 0`), which is what makes occasional
/// capacity offers worthwhile at all. The series is rescaled so the mean
/// reserve-to-energy ratio equals `reserve_fraction` exactly; `noise = 0`
/// disables both noise and spikes and gives the pure two-peak shape with a
/// constant reserve ratio.
pub fn synthesize_prices(params: &SynthPriceParams) -> Result<PriceSeries> {
    if params.days == 0 || params.dt_hours <= 0.0 {
        return Err(Error::Validation(
            "price synthesis needs days >= 1 and dt > 0".into(),
        ));
    }
    if !(0.0..=1.0).contains(&params.reserve_fraction) {
        return Err(Error::Validation(
            "reserve fraction must be in [0, 1]".into(),
        ));
    }
    let steps_per_day = (24.0 / params.dt_hours).round() as usize;
    let steps = steps_per_day * params.days;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut timestamps = Vec::with_capacity(steps);
    let mut energy = Vec::with_capacity(steps);
    let mut reserve = Vec::with_capacity(steps);
    for k in 0..steps {
        let ts = params.start + Duration::seconds((k as f64 * params.dt_hours * 3600.0) as i64);
        let hour = (k % steps_per_day) as f64 * params.dt_hours;
        let shape = params.base
            + params.morning_peak * gauss_bump(hour, 10.5, 1.8)
            + params.evening_peak * gauss_bump(hour, 19.5, 2.2);
        let (noise_e, noise_r, spike): (f64, f64, f64) = if params.noise > 0.0 {
            let ne = 1.0 + params.noise * rng.gen_range(-1.0..1.0);
            let nr = 1.0 + 0.5 * params.noise * rng.gen_range(-1.0..1.0);
            let sp = if rng.gen_range(0.0..1.0) < 0.04 {
                rng.gen_range(10.0..30.0)
            } else {
                1.0
            };
            (ne, nr, sp)
        } else {
            (1.0, 1.0, 1.0)
        };
        let e = (shape * noise_e).max(0.005);
        timestamps.push(ts);
        energy.push(e);
        reserve.push(params.reserve_fraction * e * noise_r * spike);
    }
    // Pin the mean ratio to the configured fraction exactly.
    let mean_ratio = reserve
        .iter()
        .zip(&energy)
        .map(|(r, e)| r / e)
        .sum::<f64>()
        / steps as f64;
    if mean_ratio > 0.0 {
        let scale = params.reserve_fraction / mean_ratio;
        for r in &mut reserve {
            *r *= scale;
        }
    }
    PriceSeries::new(timestamps, energy, reserve)
}

/// Physical disturbance forecast: named signal series plus optional logged
/// realizations for replay. Signals follow the channel conventions of the
/// forecast CSV (`solar`, `internal:<room>`, `ambient`).
#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceForecast {
    pub timestamps: Vec<NaiveDateTime>,
    pub signals: BTreeMap<String, Vec<f64>>,
    pub realizations: BTreeMap<String, Vec<f64>>,
}

impl DisturbanceForecast {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn signal(&self, name: &str) -> Result<&[f64]> {
        self.signals
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Data(format!("forecast is missing channel '{name}'")))
    }

    pub fn validate(&self) -> Result<()> {
        check_uniform_spacing(&self.timestamps, "forecast")?;
        for (name, series) in &self.signals {
            if series.len() != self.timestamps.len() {
                return Err(Error::Data(format!(
                    "forecast channel '{name}' has {} values for {} timestamps",
                    series.len(),
                    self.timestamps.len()
                )));
            }
        }
        for (name, series) in &self.realizations {
            if series.len() != self.timestamps.len() {
                return Err(Error::Data(format!(
                    "realization channel '{name}' has {} values for {} timestamps",
                    series.len(),
                    self.timestamps.len()
                )));
            }
        }
        Ok(())
    }
}

/// Loads the long-format forecast CSV.
pub fn load_forecast_csv(path: impl AsRef<Path>) -> Result<DisturbanceForecast> {
    let path_str = path.as_ref().display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path.as_ref())
        .map_err(|e| Error::Data(format!("{path_str}: {e}")))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Data(format!("{path_str}: {e}")))?
        .clone();
    for (i, want) in ["timestamp", "channel", "value"].iter().enumerate() {
        if headers.get(i).map(str::trim) != Some(*want) {
            return Err(Error::Data(format!(
                "{path_str}:1: expected header 'timestamp,channel,value[,realization]', got {headers:?}"
            )));
        }
    }

    let mut per_channel: BTreeMap<String, Vec<(NaiveDateTime, f64, Option<f64>)>> =
        BTreeMap::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2;
        let record = record.map_err(|e| Error::Data(format!("{path_str}:{line}: {e}")))?;
        if record.len() < 3 {
            return Err(Error::Data(format!(
                "{path_str}:{line}: expected at least 3 fields"
            )));
        }
        let ts = parse_timestamp(&record[0], &path_str, line)?;
        let channel = record[1].trim().to_string();
        if channel.is_empty() {
            return Err(Error::Data(format!("{path_str}:{line}: empty channel id")));
        }
        let value = parse_number(&record[2], "value", &path_str, line)?;
        let realization = match record.get(3).map(str::trim) {
            None | Some("") => None,
            Some(s) => Some(parse_number(s, "realization", &path_str, line)?),
        };
        per_channel
            .entry(channel)
            .or_default()
            .push((ts, value, realization));
    }
    if per_channel.is_empty() {
        return Err(Error::Data(format!("{path_str}: no forecast rows")));
    }

    let mut timestamps: Option<Vec<NaiveDateTime>> = None;
    let mut signals = BTreeMap::new();
    let mut realizations = BTreeMap::new();
    for (channel, mut rows) in per_channel {
        rows.sort_by_key(|(ts, _, _)| *ts);
        let ts: Vec<NaiveDateTime> = rows.iter().map(|(t, _, _)| *t).collect();
        match &timestamps {
            None => timestamps = Some(ts),
            Some(existing) => {
                if *existing != ts {
                    return Err(Error::Data(format!(
                        "{path_str}: channel '{channel}' covers different timestamps than the others"
                    )));
                }
            }
        }
        signals.insert(
            channel.clone(),
            rows.iter().map(|(_, v, _)| *v).collect::<Vec<f64>>(),
        );
        if rows.iter().all(|(_, _, r)| r.is_some()) {
            realizations.insert(
                channel,
                rows.iter().map(|(_, _, r)| r.unwrap()).collect::<Vec<f64>>(),
            );
        }
    }
    let forecast = DisturbanceForecast {
        timestamps: timestamps.expect("nonempty"),
        signals,
        realizations,
    };
    forecast.validate()?;
    Ok(forecast)
}

/// Writes the long-format forecast CSV (inverse of [`load_forecast_csv`]).
pub fn write_forecast_csv(path: impl AsRef<Path>, forecast: &DisturbanceForecast) -> Result<()> {
    let path_str = path.as_ref().display().to_string();
    let mut w = csv::Writer::from_path(path.as_ref())
        .map_err(|e| Error::Data(format!("{path_str}: {e}")))?;
    w.write_record(["timestamp", "channel", "value", "realization"])
        .map_err(|e| Error::Data(format!("{path_str}: {e}")))?;
    for (channel, series) in &forecast.signals {
        let real = forecast.realizations.get(channel);
        for (i, v) in series.iter().enumerate() {
            w.write_record([
                forecast.timestamps[i].format(TIMESTAMP_FORMAT).to_string(),
                channel.clone(),
                format!("{v}"),
                real.map_or(String::new(), |r| format!("{}", r[i])),
            ])
            .map_err(|e| Error::Data(format!("{path_str}: {e}")))?;
        }
    }
    w.flush().map_err(|e| Error::io(path_str, e))?;
    Ok(())
}

/// Parameters of the synthetic tropical weather/gain generator.
#[derive(Debug, Clone)]
pub struct SynthForecastParams {
    pub start: NaiveDateTime,
    pub steps: usize,
    pub dt_hours: f64,
    pub room_ids: Vec<String>,
    /// Ambient temperature mean and half swing, degC.
    pub ambient_mean: f64,
    pub ambient_swing: f64,
    /// Midday solar irradiation peak, kW/m^2.
    pub solar_peak: f64,
    /// Internal gains, kW per room, off/on with the occupancy window.
    pub internal_base: f64,
    pub internal_occupied: f64,
    pub occupied_from_hour: f64,
    pub occupied_to_hour: f64,
    /// Relative uniform noise on all signals (0 disables).
    pub noise: f64,
    pub seed: u64,
}

impl SynthForecastParams {
    pub fn for_rooms(room_ids: Vec<String>, steps: usize, seed: u64) -> Self {
        Self {
            start: default_start(),
            steps,
            dt_hours: 0.5,
            room_ids,
            ambient_mean: 30.0,
            ambient_swing: 3.0,
            solar_peak: 0.35,
            internal_base: 0.15,
            internal_occupied: 0.55,
            occupied_from_hour: 8.0,
            occupied_to_hour: 20.0,
            noise: 0.0,
            seed,
        }
    }
}

/// Deterministic synthetic forecast: sinusoidal ambient peaking mid
/// afternoon, a solar bell between 07:00 and 19:00, and occupancy-driven
/// internal gains.
pub fn synthesize_forecast(params: &SynthForecastParams) -> Result<DisturbanceForecast> {
    if params.steps < 2 || params.dt_hours <= 0.0 {
        return Err(Error::Validation(
            "forecast synthesis needs steps >= 2 and dt > 0".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut timestamps = Vec::with_capacity(params.steps);
    let mut ambient = Vec::with_capacity(params.steps);
    let mut solar = Vec::with_capacity(params.steps);
    let mut internal: BTreeMap<String, Vec<f64>> = params
        .room_ids
        .iter()
        .map(|r| (format!("internal:{r}"), Vec::with_capacity(params.steps)))
        .collect();
    for k in 0..params.steps {
        let ts = params.start + Duration::seconds((k as f64 * params.dt_hours * 3600.0) as i64);
        let hour = (k as f64 * params.dt_hours) % 24.0;
        let jitter = |rng: &mut ChaCha8Rng| -> f64 {
            if params.noise > 0.0 {
                1.0 + params.noise * rng.gen_range(-1.0..1.0)
            } else {
                1.0
            }
        };
        let amb = params.ambient_mean
            + params.ambient_swing * (std::f64::consts::TAU * (hour - 9.0) / 24.0).sin();
        let sol = if (7.0..19.0).contains(&hour) {
            params.solar_peak * (std::f64::consts::PI * (hour - 7.0) / 12.0).sin()
        } else {
            0.0
        };
        let occupied = hour >= params.occupied_from_hour && hour < params.occupied_to_hour;
        timestamps.push(ts);
        ambient.push(amb * jitter(&mut rng));
        solar.push((sol * jitter(&mut rng)).max(0.0));
        for series in internal.values_mut() {
            let gain = if occupied {
                params.internal_base + params.internal_occupied
            } else {
                params.internal_base
            };
            series.push(gain * jitter(&mut rng));
        }
    }
    let mut signals = internal;
    signals.insert("ambient".into(), ambient);
    signals.insert("solar".into(), solar);
    let forecast = DisturbanceForecast {
        timestamps,
        signals,
        realizations: BTreeMap::new(),
    };
    forecast.validate()?;
    Ok(forecast)
}

/// Maps the physical forecast onto per-node channel vectors for a step
/// range. Returns `(d_hat, d_load)`, both stacked step-major with one
/// channel per node: `d_hat` is the full channel value, `d_load` its
/// thermal-load component (radiation plus internal gains) from which the
/// uncertainty bounds are derived.
pub fn map_forecast_channels(
    forecast: &DisturbanceForecast,
    layout: &DisturbanceLayout<f64>,
    room_ids: &[String],
    start_step: usize,
    steps: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    forecast.validate()?;
    if start_step + steps > forecast.len() {
        return Err(Error::Data(format!(
            "forecast underrun: need steps {start_step}..{} but only {} available",
            start_step + steps,
            forecast.len()
        )));
    }
    let solar = forecast.signal("solar")?;
    let ambient = forecast.signal("ambient")?;
    let per_room: Vec<&[f64]> = room_ids
        .iter()
        .map(|r| forecast.signal(&format!("internal:{r}")))
        .collect::<Result<_>>()?;

    let nd = layout.channels();
    let mut d_hat = Vec::with_capacity(nd * steps);
    let mut d_load = Vec::with_capacity(nd * steps);
    let mut gains = vec![0.0; room_ids.len()];
    for k in start_step..start_step + steps {
        for (g, series) in gains.iter_mut().zip(&per_room) {
            *g = series[k];
        }
        d_hat.extend(layout.map_signals(solar[k], &gains, ambient[k])?);
        d_load.extend(layout.load_components(solar[k], &gains)?);
    }
    Ok((d_hat, d_load))
}

/// Per-channel uncertainty bounds: `sigma = fraction * |d_load|`.
/// Applied to the thermal-load component only; the ambient conduction and
/// linearization terms of the channels are treated as certain.
pub fn derive_uncertainty_bounds(d_load: &[f64], fraction: f64) -> Result<Vec<f64>> {
    if fraction < 0.0 {
        return Err(Error::Validation(
            "uncertainty fraction must be >= 0".into(),
        ));
    }
    Ok(d_load.iter().map(|d| fraction * d.abs()).collect())
}

/// Exogenous interruptible-load call signal, one flag per simulated step.
#[derive(Debug, Clone, PartialEq)]
pub struct CurtailmentSignal {
    pub called: Vec<bool>,
}

impl CurtailmentSignal {
    /// Seeded Bernoulli(p) calls, independent per step.
    pub fn bernoulli(steps: usize, probability: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&probability) {
            return Err(Error::Validation(
                "curtailment probability must be in [0, 1]".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Self {
            called: (0..steps).map(|_| rng.gen_range(0.0..1.0) < probability).collect(),
        })
    }

    pub fn never(steps: usize) -> Self {
        Self {
            called: vec![false; steps],
        }
    }

    pub fn len(&self) -> usize {
        self.called.len()
    }

    pub fn is_empty(&self) -> bool {
        self.called.is_empty()
    }
}

/// Loads a curtailment schedule CSV (`timestamp,called`).
pub fn load_curtailment_csv(path: impl AsRef<Path>) -> Result<CurtailmentSignal> {
    let path_str = path.as_ref().display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .from_path(path.as_ref())
        .map_err(|e| Error::Data(format!("{path_str}: {e}")))?;
    let mut rows: Vec<(NaiveDateTime, bool)> = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2;
        let record = record.map_err(|e| Error::Data(format!("{path_str}:{line}: {e}")))?;
        let ts = parse_timestamp(&record[0], &path_str, line)?;
        let called = match record.get(1).map(str::trim) {
            Some("0") => false,
            Some("1") => true,
            other => {
                return Err(Error::Data(format!(
                    "{path_str}:{line}: called must be 0 or 1, got {other:?}"
                )))
            }
        };
        rows.push((ts, called));
    }
    if rows.is_empty() {
        return Err(Error::Data(format!("{path_str}: no curtailment rows")));
    }
    rows.sort_by_key(|(ts, _)| *ts);
    let ts: Vec<NaiveDateTime> = rows.iter().map(|(t, _)| *t).collect();
    check_uniform_spacing(&ts, "curtailment schedule")?;
    Ok(CurtailmentSignal {
        called: rows.into_iter().map(|(_, c)| c).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn day_csv(dir: &tempfile::TempDir, skip_period: Option<usize>) -> std::path::PathBuf {
        let path = dir.path().join("prices.csv");
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, "timestamp,energy_price,reserve_price").unwrap();
        let start = default_start();
        for k in 0..PERIODS_PER_DAY {
            if Some(k) == skip_period {
                continue;
            }
            let ts = start + Duration::minutes(30 * k as i64);
            writeln!(
                f,
                "{},{},{}",
                ts.format(TIMESTAMP_FORMAT),
                0.08 + 0.001 * k as f64,
                0.008
            )
            .unwrap();
        }
        path
    }

    #[test]
    fn loads_a_valid_day() {
        let dir = tempfile::tempdir().unwrap();
        let series = load_price_csv(day_csv(&dir, None)).unwrap();
        assert_eq!(series.len(), PERIODS_PER_DAY);
        assert_eq!(series.dt_hours(), 0.5);
    }

    #[test]
    fn missing_period_is_a_spacing_error_naming_the_gap() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_price_csv(day_csv(&dir, Some(30))).unwrap_err().to_string();
        assert!(err.contains("nonuniform spacing"), "got: {err}");
        assert!(err.contains("14:30:00") || err.contains("15:00:00"), "got: {err}");
    }

    #[test]
    fn malformed_row_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, "timestamp,energy_price,reserve_price").unwrap();
        writeln!(f, "2014-01-01T00:00:00,0.08,0.008").unwrap();
        writeln!(f, "2014-01-01T00:30:00,not-a-number,0.008").unwrap();
        let err = load_price_csv(&path).unwrap_err().to_string();
        assert!(err.contains(":3:"), "got: {err}");
    }

    #[test]
    fn mwh_unit_hint_normalizes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mwh.csv");
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, "timestamp,energy_price,reserve_price,unit").unwrap();
        writeln!(f, "2014-01-01T00:00:00,80,8,SGD/MWh").unwrap();
        writeln!(f, "2014-01-01T00:30:00,90,9,SGD/MWh").unwrap();
        let series = load_price_csv(&path).unwrap();
        assert_eq!(series.energy, vec![0.08, 0.09]);
        assert_eq!(series.reserve, vec![0.008, 0.009]);
    }

    #[test]
    fn price_round_trip_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let series = synthesize_prices(&SynthPriceParams::default()).unwrap();
        let path = dir.path().join("roundtrip.csv");
        write_price_csv(&path, &series).unwrap();
        let back = load_price_csv(&path).unwrap();
        assert_eq!(series, back);
    }

    #[test]
    fn synthesis_is_deterministic_per_seed() {
        let params = SynthPriceParams::default();
        let a = synthesize_prices(&params).unwrap();
        let b = synthesize_prices(&params).unwrap();
        assert_eq!(a, b);
        let c = synthesize_prices(&SynthPriceParams {
            seed: 2,
            ..params
        })
        .unwrap();
        assert_ne!(a.energy, c.energy);
    }

    #[test]
    fn zero_noise_gives_exact_shape() {
        let params = SynthPriceParams {
            noise: 0.0,
            days: 1,
            ..SynthPriceParams::default()
        };
        let series = synthesize_prices(&params).unwrap();
        // Midnight has essentially no peak contribution.
        assert!((series.energy[0] - params.base).abs() < 1e-6);
        // 10:30 sits on the morning peak.
        let k = (10.5 / 0.5) as usize;
        assert!((series.energy[k] - (params.base + params.morning_peak)).abs() < 0.02);
        for (e, r) in series.energy.iter().zip(&series.reserve) {
            assert!((r / e - params.reserve_fraction).abs() < 1e-12);
        }
    }

    #[test]
    fn reserve_ratio_tracks_configured_fraction() {
        let params = SynthPriceParams {
            days: 30,
            seed: 7,
            ..SynthPriceParams::default()
        };
        let series = synthesize_prices(&params).unwrap();
        let mean_ratio: f64 = series
            .reserve
            .iter()
            .zip(&series.energy)
            .map(|(r, e)| r / e)
            .sum::<f64>()
            / series.len() as f64;
        assert!(
            (mean_ratio - params.reserve_fraction).abs() <= 0.01 * params.reserve_fraction,
            "mean ratio {mean_ratio}"
        );
    }

    #[test]
    fn uncertainty_bound_examples() {
        assert_eq!(derive_uncertainty_bounds(&[10.0], 0.5).unwrap(), vec![5.0]);
        assert_eq!(
            derive_uncertainty_bounds(&[3.0, -4.0], 0.0).unwrap(),
            vec![0.0, 0.0]
        );
        // Sign invariance.
        let plus = derive_uncertainty_bounds(&[2.0, -7.0], 0.3).unwrap();
        let minus = derive_uncertainty_bounds(&[-2.0, 7.0], 0.3).unwrap();
        assert_eq!(plus, minus);
        assert!(derive_uncertainty_bounds(&[1.0], -0.1).is_err());
    }

    #[test]
    fn forecast_round_trip_and_synthesis_determinism() {
        let params = SynthForecastParams::for_rooms(vec!["r1".into(), "r2".into()], 96, 5);
        let forecast = synthesize_forecast(&params).unwrap();
        assert_eq!(forecast.len(), 96);
        assert_eq!(forecast.signals.len(), 4); // solar, ambient, 2 rooms
        let again = synthesize_forecast(&params).unwrap();
        assert_eq!(forecast, again);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("forecast.csv");
        write_forecast_csv(&path, &forecast).unwrap();
        let back = load_forecast_csv(&path).unwrap();
        assert_eq!(forecast, back);
    }

    #[test]
    fn ambient_is_excluded_from_uncertainty_by_construction() {
        use crate::thermal::{DisturbanceLayout, OperatingPoint};
        use crate::thermal::{NodeKind, RcEdge, RcNode, RcNetwork};
        let net = RcNetwork::new(
            vec![
                RcNode {
                    id: "w".into(),
                    kind: NodeKind::Wall {
                        peripheral: true,
                        absorptivity: 0.5,
                        area: 8.0,
                    },
                    capacitance: 2.0,
                },
                RcNode {
                    id: "r1".into(),
                    kind: NodeKind::Room {
                        window: true,
                        window_transmittance: 0.6,
                        window_area: 4.0,
                        supply_temperature: 14.0,
                    },
                    capacitance: 0.4,
                },
            ],
            vec![
                RcEdge {
                    from: "ambient".into(),
                    to: "w".into(),
                    resistance: 2.0,
                },
                RcEdge {
                    from: "w".into(),
                    to: "r1".into(),
                    resistance: 1.0,
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
        let params = SynthForecastParams {
            noise: 0.0,
            ..SynthForecastParams::for_rooms(vec!["r1".into()], 4, 1)
        };
        let forecast = synthesize_forecast(&params).unwrap();
        let (d_hat, d_load) =
            map_forecast_channels(&forecast, &layout, &["r1".into()], 0, 4).unwrap();
        assert_eq!(d_hat.len(), 8);
        // At midnight: no solar, so the wall load channel is zero while the
        // full channel still carries the ambient conduction term.
        assert_eq!(d_load[0], 0.0);
        assert!(d_hat[0] > 0.0);
        // The room load channel is the internal gain only.
        assert!((d_load[1] - params.internal_base).abs() < 1e-12);
    }

    #[test]
    fn curtailment_bernoulli_deterministic_and_file_round_trip() {
        let a = CurtailmentSignal::bernoulli(200, 0.1, 9).unwrap();
        let b = CurtailmentSignal::bernoulli(200, 0.1, 9).unwrap();
        assert_eq!(a, b);
        let calls = a.called.iter().filter(|c| **c).count();
        assert!(calls > 5 && calls < 50, "calls {calls}");

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("curtail.csv");
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, "timestamp,called").unwrap();
        let start = default_start();
        for (k, c) in a.called.iter().take(10).enumerate() {
            writeln!(
                f,
                "{},{}",
                (start + Duration::minutes(30 * k as i64)).format(TIMESTAMP_FORMAT),
                if *c { 1 } else { 0 }
            )
            .unwrap();
        }
        let loaded = load_curtailment_csv(&path).unwrap();
        assert_eq!(&loaded.called[..], &a.called[..10]);
    }

    #[test]
    fn forecast_underrun_is_reported() {
        use crate::thermal::{DisturbanceLayout, OperatingPoint};
        use crate::thermal::{NodeKind, RcEdge, RcNode, RcNetwork};
        let net = RcNetwork::new(
            vec![
                RcNode {
                    id: "w".into(),
                    kind: NodeKind::Wall {
                        peripheral: true,
                        absorptivity: 0.5,
                        area: 8.0,
                    },
                    capacitance: 2.0,
                },
                RcNode {
                    id: "r1".into(),
                    kind: NodeKind::Room {
                        window: false,
                        window_transmittance: 0.0,
                        window_area: 0.0,
                        supply_temperature: 14.0,
                    },
                    capacitance: 0.4,
                },
            ],
            vec![
                RcEdge {
                    from: "ambient".into(),
                    to: "w".into(),
                    resistance: 2.0,
                },
                RcEdge {
                    from: "w".into(),
                    to: "r1".into(),
                    resistance: 1.0,
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
        let forecast = synthesize_forecast(&SynthForecastParams::for_rooms(
            vec!["r1".into()],
            10,
            1,
        ))
        .unwrap();
        let err = map_forecast_channels(&forecast, &layout, &["r1".into()], 5, 10)
            .unwrap_err()
            .to_string();
        assert!(err.contains("underrun"), "got: {err}");
    }
}
