//! Building configuration file: schema, loading and validation.
//!
//! The file is TOML with three blocks (see `configs/building.toml` for the
//! documented default):
//! - `[model]`: sample time, specific heat, `[[model.walls]]`,
//!   `[[model.rooms]]` and `[[model.edges]]` describing the RC network,
//!   per-room operating point, flow limits and power coefficients;
//! - `[power]`, `[controller]`: base load, horizon, flags, slack penalty;
//! - `[comfort]`: occupied/unoccupied temperature bands and the occupancy
//!   window.
//!
//! Errors carry the file path and the line of the offending entry.

use std::path::Path;

use serde::Deserialize;
use toml::Spanned;

use crate::controller::{ComfortEnvelope, PowerModel};
use crate::error::{Error, Result};
use crate::thermal::{
    assemble_continuous, discretize_zoh, DiscreteStateSpace, DisturbanceLayout, NodeKind,
    OperatingPoint, RcEdge, RcNetwork, RcNode,
};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileSchema {
    name: Option<String>,
    mode: Option<String>,
    model: ModelSection,
    power: Option<PowerSection>,
    controller: Option<ControllerSection>,
    comfort: ComfortSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelSection {
    dt_hours: f64,
    specific_heat: f64,
    walls: Vec<Spanned<WallSpec>>,
    rooms: Vec<Spanned<RoomSpec>>,
    edges: Vec<Spanned<EdgeSpec>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct WallSpec {
    id: String,
    capacitance: f64,
    peripheral: bool,
    absorptivity: f64,
    area: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RoomSpec {
    id: String,
    capacitance: f64,
    window: bool,
    #[serde(default)]
    window_transmittance: f64,
    #[serde(default)]
    window_area: f64,
    supply_temperature: f64,
    #[serde(default)]
    nominal_flow: f64,
    nominal_room_temp: f64,
    #[serde(default)]
    min_flow: f64,
    max_flow: f64,
    #[serde(default = "default_true")]
    reserve: bool,
    fan_coeff: f64,
    cooling_coeff: f64,
    #[serde(default)]
    heating_coeff: f64,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeSpec {
    from: String,
    to: String,
    resistance: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PowerSection {
    #[serde(default)]
    base: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ControllerSection {
    #[serde(default = "default_horizon")]
    horizon: usize,
    slack_penalty: Option<f64>,
    #[serde(default = "default_true")]
    robust: bool,
    #[serde(default = "default_true")]
    reserve: bool,
}

fn default_horizon() -> usize {
    48
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ComfortSection {
    occupied_lower: f64,
    occupied_upper: f64,
    unoccupied_lower: f64,
    unoccupied_upper: f64,
    occupied_from_hour: f64,
    occupied_to_hour: f64,
}

/// Heating or cooling configuration; decides the supply-temperature check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Cooling,
    Heating,
}

/// Occupancy-dependent comfort bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct ComfortSchedule {
    pub occupied_lower: f64,
    pub occupied_upper: f64,
    pub unoccupied_lower: f64,
    pub unoccupied_upper: f64,
    pub occupied_from_hour: f64,
    pub occupied_to_hour: f64,
}

impl ComfortSchedule {
    pub fn bounds_at_hour(&self, hour: f64) -> (f64, f64) {
        let h = hour.rem_euclid(24.0);
        if h >= self.occupied_from_hour && h < self.occupied_to_hour {
            (self.occupied_lower, self.occupied_upper)
        } else {
            (self.unoccupied_lower, self.unoccupied_upper)
        }
    }

    /// Stacked bounds for prediction steps `first_step .. first_step + n`
    /// (absolute step indices), step-major over `rooms`.
    pub fn envelope(
        &self,
        first_step: usize,
        n: usize,
        dt_hours: f64,
        rooms: usize,
    ) -> Result<ComfortEnvelope<f64>> {
        let mut lower = Vec::with_capacity(n * rooms);
        let mut upper = Vec::with_capacity(n * rooms);
        for t in 0..n {
            let hour = (first_step + t) as f64 * dt_hours;
            let (lo, hi) = self.bounds_at_hour(hour);
            for _ in 0..rooms {
                lower.push(lo);
                upper.push(hi);
            }
        }
        ComfortEnvelope::new(lower, upper)
    }
}

/// Controller settings from the config file. The slack penalty is optional
/// here; when absent the harness derives it from the price level.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerSettings {
    pub horizon: usize,
    pub slack_penalty: Option<f64>,
    pub robust: bool,
    pub reserve: bool,
}

/// Fully validated building description.
#[derive(Debug, Clone)]
pub struct BuildingConfig {
    pub name: String,
    pub mode: Mode,
    pub dt_hours: f64,
    pub network: RcNetwork<f64>,
    pub operating_point: OperatingPoint<f64>,
    pub layout: DisturbanceLayout<f64>,
    pub reserve_mask: Vec<bool>,
    /// Per-room flow limits, kg/s.
    pub min_flow: Vec<f64>,
    pub max_flow: Vec<f64>,
    pub power: PowerModel<f64>,
    pub controller: ControllerSettings,
    pub comfort: ComfortSchedule,
}

impl BuildingConfig {
    pub fn rooms(&self) -> usize {
        self.network.room_count()
    }

    pub fn room_ids(&self) -> Vec<String> {
        self.network.room_ids()
    }

    /// Assembles and discretizes the thermal model.
    pub fn discretize(&self) -> Result<DiscreteStateSpace<f64>> {
        let css = assemble_continuous(&self.network, &self.operating_point, &self.layout)?;
        discretize_zoh(&css, self.dt_hours, &self.reserve_mask)
    }

    /// Steps per simulated day at this sample time.
    pub fn steps_per_day(&self) -> usize {
        (24.0 / self.dt_hours).round() as usize
    }
}

fn line_of(source: &str, byte_offset: usize) -> usize {
    source[..byte_offset.min(source.len())]
        .bytes()
        .filter(|&b| b == b'\n')
        .count()
        + 1
}

/// Loads and validates a building config file.
pub fn load_building_config(path: impl AsRef<Path>) -> Result<BuildingConfig> {
    let path_str = path.as_ref().display().to_string();
    let source = std::fs::read_to_string(path.as_ref())
        .map_err(|e| Error::io(path_str.clone(), e))?;
    parse_building_config(&source, &path_str)
}

/// Parses a building config from a string (path is used in messages only).
pub fn parse_building_config(source: &str, path: &str) -> Result<BuildingConfig> {
    let schema: FileSchema = toml::from_str(source).map_err(|e| {
        let line = e
            .span()
            .map_or(1, |span| line_of(source, span.start));
        Error::Config {
            path: path.to_string(),
            line,
            msg: e.message().to_string(),
        }
    })?;

    let at = |offset: usize, msg: String| Error::Config {
        path: path.to_string(),
        line: line_of(source, offset),
        msg,
    };

    let mode = match schema.mode.as_deref() {
        None | Some("cooling") => Mode::Cooling,
        Some("heating") => Mode::Heating,
        Some(other) => {
            return Err(Error::Config {
                path: path.to_string(),
                line: 1,
                msg: format!("mode must be 'cooling' or 'heating', got '{other}'"),
            })
        }
    };

    let m = &schema.model;
    if m.dt_hours <= 0.0 {
        return Err(Error::Config {
            path: path.to_string(),
            line: 1,
            msg: "model.dt_hours must be > 0".into(),
        });
    }
    let periods = 24.0 / m.dt_hours;
    if (periods - periods.round()).abs() > 1e-9 {
        return Err(Error::Config {
            path: path.to_string(),
            line: 1,
            msg: format!("model.dt_hours = {} must divide 24 h evenly", m.dt_hours),
        });
    }

    // Per-entry validation with line anchors before graph assembly.
    let mut nodes = Vec::new();
    for wall in &m.walls {
        let w = wall.get_ref();
        let start = wall.span().start;
        if w.capacitance <= 0.0 {
            return Err(at(start, format!("wall '{}': capacitance must be > 0", w.id)));
        }
        if !(0.0..=1.0).contains(&w.absorptivity) {
            return Err(at(start, format!("wall '{}': absorptivity must be in [0, 1]", w.id)));
        }
        if w.area < 0.0 {
            return Err(at(start, format!("wall '{}': area must be >= 0", w.id)));
        }
        nodes.push(RcNode {
            id: w.id.clone(),
            kind: NodeKind::Wall {
                peripheral: w.peripheral,
                absorptivity: w.absorptivity,
                area: w.area,
            },
            capacitance: w.capacitance,
        });
    }
    let mut nominal_flow = Vec::new();
    let mut nominal_room_temp = Vec::new();
    let mut min_flow = Vec::new();
    let mut max_flow = Vec::new();
    let mut reserve_mask = Vec::new();
    let mut fan = Vec::new();
    let mut cooling = Vec::new();
    let mut heating = Vec::new();
    for room in &m.rooms {
        let r = room.get_ref();
        let start = room.span().start;
        if r.capacitance <= 0.0 {
            return Err(at(start, format!("room '{}': capacitance must be > 0", r.id)));
        }
        if !(0.0..=1.0).contains(&r.window_transmittance) {
            return Err(at(
                start,
                format!("room '{}': window_transmittance must be in [0, 1]", r.id),
            ));
        }
        if r.window_area < 0.0 {
            return Err(at(start, format!("room '{}': window_area must be >= 0", r.id)));
        }
        if r.nominal_flow < 0.0 {
            return Err(at(start, format!("room '{}': nominal_flow must be >= 0", r.id)));
        }
        if r.min_flow < 0.0 || r.max_flow < r.min_flow {
            return Err(at(
                start,
                format!("room '{}': need 0 <= min_flow <= max_flow", r.id),
            ));
        }
        if r.fan_coeff < 0.0 || r.cooling_coeff < 0.0 || r.heating_coeff < 0.0 {
            return Err(at(
                start,
                format!("room '{}': power coefficients must be >= 0", r.id),
            ));
        }
        match mode {
            Mode::Cooling if r.supply_temperature >= r.nominal_room_temp => {
                return Err(at(
                    start,
                    format!(
                        "room '{}': cooling mode needs supply_temperature < nominal_room_temp",
                        r.id
                    ),
                ));
            }
            Mode::Heating if r.supply_temperature <= r.nominal_room_temp => {
                return Err(at(
                    start,
                    format!(
                        "room '{}': heating mode needs supply_temperature > nominal_room_temp",
                        r.id
                    ),
                ));
            }
            _ => {}
        }
        nodes.push(RcNode {
            id: r.id.clone(),
            kind: NodeKind::Room {
                window: r.window,
                window_transmittance: r.window_transmittance,
                window_area: r.window_area,
                supply_temperature: r.supply_temperature,
            },
            capacitance: r.capacitance,
        });
        nominal_flow.push(r.nominal_flow);
        nominal_room_temp.push(r.nominal_room_temp);
        min_flow.push(r.min_flow);
        max_flow.push(r.max_flow);
        reserve_mask.push(r.reserve);
        fan.push(r.fan_coeff);
        cooling.push(r.cooling_coeff);
        heating.push(r.heating_coeff);
    }
    if reserve_mask.is_empty() {
        return Err(Error::Config {
            path: path.to_string(),
            line: 1,
            msg: "config defines no rooms".into(),
        });
    }

    let mut edges = Vec::new();
    for edge in &m.edges {
        let e = edge.get_ref();
        let start = edge.span().start;
        if e.resistance <= 0.0 {
            return Err(at(
                start,
                format!("edge {}-{}: resistance must be > 0", e.from, e.to),
            ));
        }
        if e.from == e.to {
            return Err(at(
                start,
                format!("edge {}-{}: self-loops are not allowed", e.from, e.to),
            ));
        }
        let known = |id: &str| id == "ambient" || nodes.iter().any(|n| n.id == id);
        for end in [&e.from, &e.to] {
            if !known(end) {
                return Err(at(
                    start,
                    format!("edge {}-{}: unknown node '{end}'", e.from, e.to),
                ));
            }
        }
        edges.push(RcEdge {
            from: e.from.clone(),
            to: e.to.clone(),
            resistance: e.resistance,
        });
    }

    // Graph-level validation (duplicates, connectivity) is not tied to a
    // single entry; anchor it to the model section via the first wall/room.
    let anchor = m
        .walls
        .first()
        .map(|w| w.span().start)
        .or_else(|| m.rooms.first().map(|r| r.span().start))
        .unwrap_or(0);
    let network = RcNetwork::new(nodes, edges, m.specific_heat)
        .map_err(|e| at(anchor, e.to_string()))?;
    let operating_point = OperatingPoint {
        nominal_flow,
        nominal_room_temp,
    };
    let layout = DisturbanceLayout::per_node(&network, &operating_point)
        .map_err(|e| at(anchor, e.to_string()))?;

    let power = PowerModel {
        fan_coeff: fan,
        cooling_coeff: cooling,
        heating_coeff: heating,
        base_power: schema.power.map_or(0.0, |p| p.base),
    };
    power
        .validate(network.room_count())
        .map_err(|e| at(anchor, e.to_string()))?;

    let controller = schema.controller.map_or(
        ControllerSettings {
            horizon: default_horizon(),
            slack_penalty: None,
            robust: true,
            reserve: true,
        },
        |c| ControllerSettings {
            horizon: c.horizon,
            slack_penalty: c.slack_penalty,
            robust: c.robust,
            reserve: c.reserve,
        },
    );
    if controller.horizon == 0 {
        return Err(Error::Config {
            path: path.to_string(),
            line: 1,
            msg: "controller.horizon must be >= 1".into(),
        });
    }
    if let Some(rho) = controller.slack_penalty {
        if rho <= 0.0 {
            return Err(Error::Config {
                path: path.to_string(),
                line: 1,
                msg: "controller.slack_penalty must be > 0".into(),
            });
        }
    }

    let c = &schema.comfort;
    if c.occupied_lower > c.occupied_upper || c.unoccupied_lower > c.unoccupied_upper {
        return Err(Error::Config {
            path: path.to_string(),
            line: 1,
            msg: "comfort bounds must satisfy lower <= upper".into(),
        });
    }
    let comfort = ComfortSchedule {
        occupied_lower: c.occupied_lower,
        occupied_upper: c.occupied_upper,
        unoccupied_lower: c.unoccupied_lower,
        unoccupied_upper: c.unoccupied_upper,
        occupied_from_hour: c.occupied_from_hour,
        occupied_to_hour: c.occupied_to_hour,
    };

    let config = BuildingConfig {
        name: schema.name.unwrap_or_else(|| "building".into()),
        mode,
        dt_hours: m.dt_hours,
        network,
        operating_point,
        layout,
        reserve_mask,
        min_flow,
        max_flow,
        power,
        controller,
        comfort,
    };
    // Assembling proves the dissipativity/stability invariants hold.
    config
        .discretize()
        .map_err(|e| at(anchor, format!("model does not assemble: {e}")))?;
    Ok(config)
}


#[cfg(test)]
mod default_building_tests {
    use super::*;
    use crate::thermal::assemble_continuous;

    fn default_config() -> BuildingConfig {
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/building.toml");
        load_building_config(path).unwrap()
    }

    #[test]
    fn default_building_has_seven_states_and_two_rooms() {
        let cfg = default_config();
        assert_eq!(cfg.network.n(), 7);
        assert_eq!(cfg.rooms(), 2);
        assert_eq!(cfg.network.wall_count(), 5);
    }

    #[test]
    fn default_building_time_constants_in_band() {
        let cfg = default_config();
        let css =
            assemble_continuous(&cfg.network, &cfg.operating_point, &cfg.layout).unwrap();
        let tc = css.time_constants();
        for t in &tc {
            assert!(
                (2.0..=12.0).contains(t),
                "time constant {t} h outside 2-12 h: all {tc:?}"
            );
        }
    }
}
