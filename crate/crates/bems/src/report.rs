//! CSV reports and plot data: trace, accounting, sweep, temperature and
//! power/reserve files. Floats are written in shortest round-trip form, so
//! identical inputs produce byte-identical files and `load_trace_csv` is an
//! exact inverse of `write_trace_csv`.

use std::path::{Path, PathBuf};

use chrono::NaiveDateTime;

use crate::config::ComfortSchedule;
use crate::error::{Error, Result};
use crate::market::TIMESTAMP_FORMAT;
use crate::sim::{AccountingReport, PppSweepResult, SimulationTrace, TraceStep};

/// Exact header of sweep.csv.
pub const SWEEP_HEADER: &str = "phi,cost,peak,norm_cost,norm_peak";

fn fmt(v: f64) -> String {
    format!("{v}")
}

fn data_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Data(format!("{}: {e}", path.display()))
}

/// Writes the full closed-loop trace. Columns: step, timestamp, curtailed,
/// one column per state/input/channel, prices, power and cost increments,
/// slack, epigraph value and solver diagnostics. A trailing `final` row
/// carries the state after the last step (all other fields empty).
pub fn write_trace_csv(path: impl AsRef<Path>, trace: &SimulationTrace) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| data_err(path, e))?;
    let mut header: Vec<String> = vec!["step".into(), "timestamp".into(), "curtailed".into()];
    for label in &trace.state_labels {
        header.push(format!("x.{label}"));
    }
    for room in &trace.room_ids {
        header.push(format!("u.{room}"));
    }
    for room in &trace.room_ids {
        header.push(format!("r.{room}"));
    }
    for label in &trace.state_labels {
        header.push(format!("w.{label}"));
    }
    for label in &trace.state_labels {
        header.push(format!("dhat.{label}"));
    }
    header.extend(
        [
            "price_energy",
            "price_reserve",
            "ppp",
            "power_kw",
            "energy_cost",
            "reserve_revenue",
            "eps_max",
            "beta",
            "lp_iterations",
            "kkt_residual",
        ]
        .map(String::from),
    );
    w.write_record(&header).map_err(|e| data_err(path, e))?;

    for s in &trace.steps {
        let mut rec: Vec<String> = vec![
            s.step.to_string(),
            s.timestamp.format(TIMESTAMP_FORMAT).to_string(),
            (s.curtailed as u8).to_string(),
        ];
        rec.extend(s.state.iter().map(|v| fmt(*v)));
        rec.extend(s.u_applied.iter().map(|v| fmt(*v)));
        rec.extend(s.r_offered.iter().map(|v| fmt(*v)));
        rec.extend(s.w_realized.iter().map(|v| fmt(*v)));
        rec.extend(s.d_hat.iter().map(|v| fmt(*v)));
        rec.extend([
            fmt(s.price_energy),
            fmt(s.price_reserve),
            fmt(s.ppp),
            fmt(s.power_kw),
            fmt(s.energy_cost),
            fmt(s.reserve_revenue),
            fmt(s.eps_max),
            fmt(s.beta),
            s.lp_iterations.to_string(),
            fmt(s.kkt_residual),
        ]);
        w.write_record(&rec).map_err(|e| data_err(path, e))?;
    }

    // Trailing row: the state after the last step.
    let mut rec: Vec<String> = vec!["final".into(), String::new(), String::new()];
    rec.extend(trace.final_state.iter().map(|v| fmt(*v)));
    while rec.len() < header.len() {
        rec.push(String::new());
    }
    w.write_record(&rec).map_err(|e| data_err(path, e))?;
    w.flush()
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(())
}

/// Reads a trace written by [`write_trace_csv`]. The scenario label and
/// sample time are not part of the file; the caller supplies them.
pub fn load_trace_csv(
    path: impl AsRef<Path>,
    scenario: &str,
    dt_hours: f64,
) -> Result<SimulationTrace> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| data_err(path, e))?;
    let headers = reader.headers().map_err(|e| data_err(path, e))?.clone();

    let state_labels: Vec<String> = headers
        .iter()
        .filter_map(|h| h.strip_prefix("x."))
        .map(String::from)
        .collect();
    let room_ids: Vec<String> = headers
        .iter()
        .filter_map(|h| h.strip_prefix("u."))
        .map(String::from)
        .collect();
    if state_labels.is_empty() || room_ids.is_empty() {
        return Err(data_err(path, "not a trace file (missing x./u. columns)"));
    }
    let n = state_labels.len();
    let j = room_ids.len();

    let mut steps = Vec::new();
    let mut final_state = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2;
        let record = record.map_err(|e| data_err(path, format!("line {line}: {e}")))?;
        let field = |i: usize| -> Result<&str> {
            record
                .get(i)
                .ok_or_else(|| data_err(path, format!("line {line}: missing field {i}")))
        };
        let num = |i: usize| -> Result<f64> {
            field(i)?
                .parse::<f64>()
                .map_err(|e| data_err(path, format!("line {line}: field {i}: {e}")))
        };
        if field(0)? == "final" {
            for c in 0..n {
                final_state.push(num(3 + c)?);
            }
            continue;
        }
        let step: usize = field(0)?
            .parse()
            .map_err(|e| data_err(path, format!("line {line}: step: {e}")))?;
        let timestamp = NaiveDateTime::parse_from_str(field(1)?, TIMESTAMP_FORMAT)
            .map_err(|e| data_err(path, format!("line {line}: timestamp: {e}")))?;
        let curtailed = field(2)? == "1";
        let mut at = 3;
        let grab = |count: usize, at: &mut usize| -> Result<Vec<f64>> {
            let mut out = Vec::with_capacity(count);
            for k in 0..count {
                out.push(num(*at + k)?);
            }
            *at += count;
            Ok(out)
        };
        let state = grab(n, &mut at)?;
        let u_applied = grab(j, &mut at)?;
        let r_offered = grab(j, &mut at)?;
        let w_realized = grab(n, &mut at)?;
        let d_hat = grab(n, &mut at)?;
        let price_energy = num(at)?;
        let price_reserve = num(at + 1)?;
        let ppp = num(at + 2)?;
        let power_kw = num(at + 3)?;
        let energy_cost = num(at + 4)?;
        let reserve_revenue = num(at + 5)?;
        let eps_max = num(at + 6)?;
        let beta = num(at + 7)?;
        let lp_iterations: usize = field(at + 8)?
            .parse()
            .map_err(|e| data_err(path, format!("line {line}: lp_iterations: {e}")))?;
        let kkt_residual = num(at + 9)?;
        steps.push(TraceStep {
            step,
            timestamp,
            state,
            u_applied,
            r_offered,
            curtailed,
            w_realized,
            d_hat,
            price_energy,
            price_reserve,
            ppp,
            power_kw,
            energy_cost,
            reserve_revenue,
            eps_max,
            beta,
            lp_iterations,
            kkt_residual,
        });
    }
    if final_state.len() != n {
        return Err(data_err(path, "missing final-state row"));
    }
    Ok(SimulationTrace {
        scenario: scenario.to_string(),
        dt_hours,
        state_labels,
        room_ids,
        steps,
        final_state,
    })
}

/// Writes sweep.csv with the exact documented header.
pub fn write_sweep_csv(path: impl AsRef<Path>, sweep: &PppSweepResult) -> Result<()> {
    let path = path.as_ref();
    if sweep.phi.is_empty() {
        return Err(Error::Validation("refusing to write an empty sweep".into()));
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| data_err(path, e))?;
    w.write_record(SWEEP_HEADER.split(','))
        .map_err(|e| data_err(path, e))?;
    for i in 0..sweep.phi.len() {
        w.write_record([
            fmt(sweep.phi[i]),
            fmt(sweep.cost[i]),
            fmt(sweep.peak[i]),
            fmt(sweep.norm_cost[i]),
            fmt(sweep.norm_peak[i]),
        ])
        .map_err(|e| data_err(path, e))?;
    }
    w.flush()
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(())
}

/// Writes the monthly accounting table.
pub fn write_accounting_csv(path: impl AsRef<Path>, report: &AccountingReport) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| data_err(path, e))?;
    w.write_record([
        "year",
        "month",
        "consumption_cost",
        "reserve_revenue",
        "total_cost",
        "delta_cost_pct",
        "delta_revenue_pct",
        "delta_total_pct",
    ])
    .map_err(|e| data_err(path, e))?;
    let opt = |v: Option<f64>| v.map_or(String::new(), fmt);
    for m in &report.months {
        w.write_record([
            m.year.to_string(),
            m.month.to_string(),
            fmt(m.consumption_cost),
            fmt(m.reserve_revenue),
            fmt(m.total_cost),
            opt(m.delta_cost_pct),
            opt(m.delta_revenue_pct),
            opt(m.delta_total_pct),
        ])
        .map_err(|e| data_err(path, e))?;
    }
    w.flush()
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(())
}

/// Plot data: per-step room temperatures with the active comfort band.
pub fn write_temperature_csv(
    path: impl AsRef<Path>,
    trace: &SimulationTrace,
    comfort: &ComfortSchedule,
) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| data_err(path, e))?;
    let mut header = vec!["step".to_string(), "timestamp".to_string()];
    for room in &trace.room_ids {
        header.push(format!("temp.{room}"));
    }
    header.push("comfort_lower".into());
    header.push("comfort_upper".into());
    w.write_record(&header).map_err(|e| data_err(path, e))?;
    for (k, s) in trace.steps.iter().enumerate() {
        let mut rec = vec![
            s.step.to_string(),
            s.timestamp.format(TIMESTAMP_FORMAT).to_string(),
        ];
        rec.extend(trace.room_temperatures(k).iter().map(|v| fmt(*v)));
        let hour = s.step as f64 * trace.dt_hours;
        let (lo, hi) = comfort.bounds_at_hour(hour);
        rec.push(fmt(lo));
        rec.push(fmt(hi));
        w.write_record(&rec).map_err(|e| data_err(path, e))?;
    }
    w.flush()
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(())
}

/// Plot data: realized power, offered reserve power and prices per step.
pub fn write_power_csv(path: impl AsRef<Path>, trace: &SimulationTrace) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| data_err(path, e))?;
    w.write_record([
        "step",
        "timestamp",
        "power_kw",
        "reserve_offered_total",
        "curtailed",
        "price_energy",
        "price_reserve",
    ])
    .map_err(|e| data_err(path, e))?;
    for s in &trace.steps {
        let reserve_total: f64 = s.r_offered.iter().sum();
        w.write_record([
            s.step.to_string(),
            s.timestamp.format(TIMESTAMP_FORMAT).to_string(),
            fmt(s.power_kw),
            fmt(reserve_total),
            (s.curtailed as u8).to_string(),
            fmt(s.price_energy),
            fmt(s.price_reserve),
        ])
        .map_err(|e| data_err(path, e))?;
    }
    w.flush()
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(())
}

/// Writes the full report set for one trace into `out_dir`:
/// trace.csv, temperatures.csv, power_reserve.csv and accounting.csv.
/// Returns the created paths.
pub fn emit_reports(
    trace: &SimulationTrace,
    report: &AccountingReport,
    comfort: &ComfortSchedule,
    out_dir: impl AsRef<Path>,
) -> Result<Vec<PathBuf>> {
    let dir = out_dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let trace_path = dir.join("trace.csv");
    let temp_path = dir.join("temperatures.csv");
    let power_path = dir.join("power_reserve.csv");
    let acct_path = dir.join("accounting.csv");
    write_trace_csv(&trace_path, trace)?;
    write_temperature_csv(&temp_path, trace, comfort)?;
    write_power_csv(&power_path, trace)?;
    write_accounting_csv(&acct_path, report)?;
    Ok(vec![trace_path, temp_path, power_path, acct_path])
}
