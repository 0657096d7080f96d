//! Building thermal model: RC network description, analytic assembly of the
//! continuous-time state space, zero-order-hold discretization, and the
//! discrete plant step used by the closed-loop simulator.
//!
//! Conventions:
//! - State ordering is fixed: wall nodes first, room nodes last. Row/column
//!   indices of `A`, `B`, `E` follow that ordering.
//! - Time unit is hours, power is kW, temperatures are degrees Celsius.
//!   Air mass flow is kg/s, so flow-coupled terms carry a 3600 s/h factor.
//! - Disturbances use one channel per node, pre-scaled to kW: the channel
//!   already contains the radiation gain factors, internal gains and the
//!   ambient conduction term, so `E` only divides by the node capacitance.

use crate::error::{Error, Result};
use crate::linalg::{expm, spectral_radius, symmetric_eigenvalues, Mat};
use crate::scalar::Scalar;

/// Conversion factor between per-second flow rates and per-hour dynamics.
pub const SECONDS_PER_HOUR: f64 = 3600.0;

/// Reserved node identifier for the ambient boundary temperature source.
pub const AMBIENT_ID: &str = "ambient";

/// Node-kind-specific parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum NodeKind<S> {
    /// Wall (thermal mass) node.
    Wall {
        /// 1 for peripheral walls that receive solar irradiation, 0 internal.
        peripheral: bool,
        /// Solar absorptivity, dimensionless in [0, 1].
        absorptivity: S,
        /// Exposed area in m^2.
        area: S,
    },
    /// Conditioned room (air) node.
    Room {
        /// Whether windows admit solar gains into the room.
        window: bool,
        /// Window transmittance, dimensionless in [0, 1].
        window_transmittance: S,
        /// Window area in m^2.
        window_area: S,
        /// Supply air temperature in degrees C.
        supply_temperature: S,
    },
}

/// One node of the RC network.
#[derive(Debug, Clone, PartialEq)]
pub struct RcNode<S> {
    pub id: String,
    pub kind: NodeKind<S>,
    /// Thermal capacitance in kWh/degC, strictly positive.
    pub capacitance: S,
}

impl<S: Scalar> RcNode<S> {
    pub fn is_room(&self) -> bool {
        matches!(self.kind, NodeKind::Room { .. })
    }
}

/// Resistive edge between two nodes (or a node and the ambient).
/// Resistance is symmetric; each pair is stored once.
#[derive(Debug, Clone, PartialEq)]
pub struct RcEdge<S> {
    pub from: String,
    pub to: String,
    /// Thermal resistance in degC/kW, strictly positive.
    pub resistance: S,
}

/// Validated wall/room node graph. Construction reorders nodes so that
/// walls come first and rooms last, which fixes the state indexing.
#[derive(Debug, Clone)]
pub struct RcNetwork<S> {
    nodes: Vec<RcNode<S>>,
    edges: Vec<RcEdge<S>>,
    /// Specific heat of supply air, kWh/(kg degC).
    specific_heat: S,
    wall_count: usize,
}

impl<S: Scalar> RcNetwork<S> {
    pub fn new(nodes: Vec<RcNode<S>>, edges: Vec<RcEdge<S>>, specific_heat: S) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Validation("network has no nodes".into()));
        }
        if specific_heat <= S::zero() {
            return Err(Error::Validation("specific heat must be > 0".into()));
        }
        let mut walls: Vec<RcNode<S>> = Vec::new();
        let mut rooms: Vec<RcNode<S>> = Vec::new();
        for node in nodes {
            if node.id == AMBIENT_ID {
                return Err(Error::Validation(format!(
                    "node id '{AMBIENT_ID}' is reserved for the boundary source"
                )));
            }
            if node.capacitance <= S::zero() {
                return Err(Error::Validation(format!(
                    "node '{}': capacitance must be > 0",
                    node.id
                )));
            }
            let unit = |v: S| v >= S::zero() && v <= S::one();
            match &node.kind {
                NodeKind::Wall {
                    absorptivity, area, ..
                } => {
                    if !unit(*absorptivity) {
                        return Err(Error::Validation(format!(
                            "wall '{}': absorptivity must be in [0, 1]",
                            node.id
                        )));
                    }
                    if *area < S::zero() {
                        return Err(Error::Validation(format!(
                            "wall '{}': area must be >= 0",
                            node.id
                        )));
                    }
                    walls.push(node);
                }
                NodeKind::Room {
                    window_transmittance,
                    window_area,
                    ..
                } => {
                    if !unit(*window_transmittance) {
                        return Err(Error::Validation(format!(
                            "room '{}': window transmittance must be in [0, 1]",
                            node.id
                        )));
                    }
                    if *window_area < S::zero() {
                        return Err(Error::Validation(format!(
                            "room '{}': window area must be >= 0",
                            node.id
                        )));
                    }
                    rooms.push(node);
                }
            }
        }
        let wall_count = walls.len();
        let mut ordered = walls;
        ordered.append(&mut rooms);

        let mut seen = std::collections::BTreeSet::new();
        for node in &ordered {
            if !seen.insert(node.id.clone()) {
                return Err(Error::Validation(format!("duplicate node id '{}'", node.id)));
            }
        }

        let index_of = |id: &str| ordered.iter().position(|n| n.id == id);
        for edge in &edges {
            if edge.resistance <= S::zero() {
                return Err(Error::Validation(format!(
                    "edge {}-{}: resistance must be > 0",
                    edge.from, edge.to
                )));
            }
            if edge.from == edge.to {
                return Err(Error::Validation(format!(
                    "edge {}-{}: self-loops are not allowed",
                    edge.from, edge.to
                )));
            }
            for end in [&edge.from, &edge.to] {
                if end != AMBIENT_ID && index_of(end).is_none() {
                    return Err(Error::Validation(format!(
                        "edge {}-{}: unknown node '{end}'",
                        edge.from, edge.to
                    )));
                }
            }
        }

        let network = Self {
            nodes: ordered,
            edges,
            specific_heat,
            wall_count,
        };
        network.check_connectivity()?;
        Ok(network)
    }

    /// Every node must reach the ambient source through resistive edges,
    /// otherwise part of the network has no dissipation path.
    fn check_connectivity(&self) -> Result<()> {
        let n = self.nodes.len();
        let mut reached = vec![false; n];
        let mut frontier: Vec<usize> = Vec::new();
        for edge in &self.edges {
            for (a, b) in [(&edge.from, &edge.to), (&edge.to, &edge.from)] {
                if a == AMBIENT_ID {
                    if let Some(i) = self.node_index(b) {
                        if !reached[i] {
                            reached[i] = true;
                            frontier.push(i);
                        }
                    }
                }
            }
        }
        while let Some(i) = frontier.pop() {
            let id = &self.nodes[i].id;
            for edge in &self.edges {
                let other = if &edge.from == id {
                    &edge.to
                } else if &edge.to == id {
                    &edge.from
                } else {
                    continue;
                };
                if other == AMBIENT_ID {
                    continue;
                }
                let k = self.node_index(other).expect("validated endpoint");
                if !reached[k] {
                    reached[k] = true;
                    frontier.push(k);
                }
            }
        }
        let missing: Vec<String> = self
            .nodes
            .iter()
            .enumerate()
            .filter(|(i, _)| !reached[*i])
            .map(|(_, n)| n.id.clone())
            .collect();
        if !missing.is_empty() {
            return Err(Error::Validation(format!(
                "network is not connected to the ambient source; unreachable nodes: {}",
                missing.join(", ")
            )));
        }
        for node in &self.nodes[self.wall_count..] {
            let has_edge = self
                .edges
                .iter()
                .any(|e| e.from == node.id || e.to == node.id);
            if !has_edge {
                return Err(Error::Validation(format!(
                    "room '{}' has no resistive edge",
                    node.id
                )));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.nodes.len()
    }

    pub fn wall_count(&self) -> usize {
        self.wall_count
    }

    pub fn room_count(&self) -> usize {
        self.nodes.len() - self.wall_count
    }

    pub fn nodes(&self) -> &[RcNode<S>] {
        &self.nodes
    }

    pub fn edges(&self) -> &[RcEdge<S>] {
        &self.edges
    }

    pub fn specific_heat(&self) -> S {
        self.specific_heat
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    pub fn room_ids(&self) -> Vec<String> {
        self.nodes[self.wall_count..]
            .iter()
            .map(|n| n.id.clone())
            .collect()
    }

    /// Supply air temperature per room, in state order.
    pub fn supply_temperatures(&self) -> Vec<S> {
        self.nodes[self.wall_count..]
            .iter()
            .map(|n| match n.kind {
                NodeKind::Room {
                    supply_temperature, ..
                } => supply_temperature,
                NodeKind::Wall { .. } => unreachable!("walls are ordered first"),
            })
            .collect()
    }
}

/// Linearization anchor for the bilinear flow term.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatingPoint<S> {
    /// Nominal air mass flow per room, kg/s.
    pub nominal_flow: Vec<S>,
    /// Nominal room temperature per room, degC.
    pub nominal_room_temp: Vec<S>,
}

impl<S: Scalar> OperatingPoint<S> {
    pub fn validate(&self, room_count: usize) -> Result<()> {
        if self.nominal_flow.len() != room_count || self.nominal_room_temp.len() != room_count {
            return Err(Error::Validation(format!(
                "operating point must have one entry per room (expected {room_count})"
            )));
        }
        if self.nominal_flow.iter().any(|&m| m < S::zero()) {
            return Err(Error::Validation("nominal flow must be >= 0".into()));
        }
        Ok(())
    }
}

/// Per-node disturbance channel layout. Channels are in state order and
/// pre-scaled to kW, so `E` reduces to capacitance division.
///
/// The split between `load` terms (radiation + internal gains) and the
/// `boundary` terms (ambient conduction, flow-linearization offset) matters
/// for uncertainty: only the thermal-load component is treated as uncertain.
#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceLayout<S> {
    /// Radiation gain per node, m^2: r*alpha*A for walls, w*tau*A_w for rooms.
    pub radiation_gain: Vec<S>,
    /// Room index whose internal gains feed this node, if any.
    pub internal_gain_room: Vec<Option<usize>>,
    /// Total conductance to ambient per node, kW/degC.
    pub ambient_conductance: Vec<S>,
    /// Constant kW offset from linearizing the flow term about a nonzero
    /// nominal flow (3600 * m0 * c_p * T_r0 on room nodes, 0 on walls).
    pub flow_offset: Vec<S>,
}

impl<S: Scalar> DisturbanceLayout<S> {
    /// Builds the one-channel-per-node layout for a network and operating point.
    pub fn per_node(network: &RcNetwork<S>, op: &OperatingPoint<S>) -> Result<Self> {
        op.validate(network.room_count())?;
        let n = network.n();
        let walls = network.wall_count();
        let mut radiation_gain = vec![S::zero(); n];
        let mut internal_gain_room = vec![None; n];
        let mut ambient_conductance = vec![S::zero(); n];
        let mut flow_offset = vec![S::zero(); n];
        let c_p = network.specific_heat();

        for (i, node) in network.nodes().iter().enumerate() {
            match &node.kind {
                NodeKind::Wall {
                    peripheral,
                    absorptivity,
                    area,
                } => {
                    if *peripheral {
                        radiation_gain[i] = *absorptivity * *area;
                    }
                }
                NodeKind::Room {
                    window,
                    window_transmittance,
                    window_area,
                    ..
                } => {
                    if *window {
                        radiation_gain[i] = *window_transmittance * *window_area;
                    }
                    let room_idx = i - walls;
                    internal_gain_room[i] = Some(room_idx);
                    flow_offset[i] = S::from_f64(SECONDS_PER_HOUR)
                        * op.nominal_flow[room_idx]
                        * c_p
                        * op.nominal_room_temp[room_idx];
                }
            }
        }
        for edge in network.edges() {
            for (a, b) in [(&edge.from, &edge.to), (&edge.to, &edge.from)] {
                if a == AMBIENT_ID {
                    let i = network.node_index(b).expect("validated endpoint");
                    ambient_conductance[i] += S::one() / edge.resistance;
                }
            }
        }
        Ok(Self {
            radiation_gain,
            internal_gain_room,
            ambient_conductance,
            flow_offset,
        })
    }

    pub fn channels(&self) -> usize {
        self.radiation_gain.len()
    }

    /// Maps physical signals to the stacked per-node channel vector (kW).
    ///
    /// `solar` is irradiation flux in kW/m^2, `internal` holds per-room
    /// gains in kW, `ambient` is the boundary temperature in degC.
    pub fn map_signals(&self, solar: S, internal: &[S], ambient: S) -> Result<Vec<S>> {
        let mut out = self.load_components(solar, internal)?;
        for (i, v) in out.iter_mut().enumerate() {
            *v += self.ambient_conductance[i] * ambient + self.flow_offset[i];
        }
        Ok(out)
    }

    /// The thermal-load component of the channels (radiation + internal
    /// gains), excluding ambient conduction and the linearization offset.
    /// Uncertainty bounds are derived from this part only.
    pub fn load_components(&self, solar: S, internal: &[S]) -> Result<Vec<S>> {
        let n = self.channels();
        let rooms = self
            .internal_gain_room
            .iter()
            .filter(|r| r.is_some())
            .count();
        if internal.len() != rooms {
            return Err(Error::Validation(format!(
                "expected {rooms} internal gain values, got {}",
                internal.len()
            )));
        }
        let mut out = vec![S::zero(); n];
        for i in 0..n {
            out[i] = self.radiation_gain[i] * solar;
            if let Some(r) = self.internal_gain_room[i] {
                out[i] += internal[r];
            }
        }
        Ok(out)
    }
}

/// Continuous-time thermal state space `dx/dt = A x + B u + E d`.
#[derive(Debug, Clone)]
pub struct ContinuousStateSpace<S> {
    /// n x n system matrix, 1/h. Metzler and dissipative.
    pub a: Mat<S>,
    /// n x j input matrix, degC/(kg/s)/h.
    pub b: Mat<S>,
    /// n x n_d disturbance matrix (capacitance division only).
    pub e: Mat<S>,
    /// Conductance-to-ambient column divided by capacitance, 1/h. Together
    /// with `a` this completes the row sums of the dissipativity check.
    pub ambient_column: Vec<S>,
    /// Node capacitances, kWh/degC. Defines the energy scaling under which
    /// `a` is symmetrizable.
    pub capacitances: Vec<S>,
    pub state_labels: Vec<String>,
    pub input_labels: Vec<String>,
    pub disturbance_labels: Vec<String>,
}

impl<S: Scalar> ContinuousStateSpace<S> {
    pub fn n(&self) -> usize {
        self.a.rows()
    }

    pub fn inputs(&self) -> usize {
        self.b.cols()
    }

    pub fn disturbance_channels(&self) -> usize {
        self.e.cols()
    }

    /// Eigenvalues of `A`, computed on the capacitance-symmetrized form
    /// `C^(1/2) A C^(-1/2)`. RC networks make this matrix symmetric, so the
    /// spectrum is real.
    pub fn eigenvalues(&self) -> Vec<S> {
        let n = self.n();
        let sqrt_c: Vec<S> = self.capacitances.iter().map(|c| c.sqrt()).collect();
        let sym = Mat::from_fn(n, n, |i, j| self.a[(i, j)] * sqrt_c[i] / sqrt_c[j]);
        symmetric_eigenvalues(&sym, S::from_f64(1e-14))
    }

    /// Open-loop time constants in hours, slowest first.
    pub fn time_constants(&self) -> Vec<S> {
        let mut tc: Vec<S> = self
            .eigenvalues()
            .into_iter()
            .map(|l| -S::one() / l)
            .collect();
        tc.sort_by(|a, b| b.partial_cmp(a).expect("non-finite time constant"));
        tc
    }

    /// Checks the Metzler/dissipativity/stability invariants.
    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        let tol = S::from_f64(1e-9);
        for i in 0..n {
            let mut row_sum = self.ambient_column[i];
            for j in 0..n {
                if i != j && self.a[(i, j)] < -tol {
                    return Err(Error::Validation(format!(
                        "A is not Metzler: entry ({i}, {j}) = {}",
                        self.a[(i, j)]
                    )));
                }
                row_sum += self.a[(i, j)];
            }
            if row_sum > tol {
                return Err(Error::Validation(format!(
                    "A row {i} with ambient coupling sums to {row_sum} > 0 (not dissipative)"
                )));
            }
        }
        let max_eig = self
            .eigenvalues()
            .into_iter()
            .fold(S::neg_infinity(), S::max);
        if max_eig >= S::zero() {
            return Err(Error::Validation(format!(
                "A has a nonnegative eigenvalue ({max_eig}); the network is not strictly stable"
            )));
        }
        Ok(())
    }
}

/// Assembles the continuous-time model from the network description by
/// summing conductive couplings and linearizing the bilinear flow term
/// about the operating point. The flow input enters through `B`, the
/// temperature dependence of the flow term lands on the room diagonal of
/// `A`, and the constant residual goes to the layout's `flow_offset`.
pub fn assemble_continuous<S: Scalar>(
    network: &RcNetwork<S>,
    op: &OperatingPoint<S>,
    layout: &DisturbanceLayout<S>,
) -> Result<ContinuousStateSpace<S>> {
    op.validate(network.room_count())?;
    let n = network.n();
    if layout.channels() != n {
        return Err(Error::Validation(format!(
            "disturbance layout has {} channels, expected one per node ({n})",
            layout.channels()
        )));
    }
    let walls = network.wall_count();
    let rooms = network.room_count();
    let c_p = network.specific_heat();
    let sph = S::from_f64(SECONDS_PER_HOUR);

    let caps: Vec<S> = network.nodes().iter().map(|nd| nd.capacitance).collect();
    let mut a = Mat::zeros(n, n);
    let mut ambient_column = vec![S::zero(); n];

    for edge in network.edges() {
        let g = S::one() / edge.resistance;
        match (
            network.node_index(&edge.from),
            network.node_index(&edge.to),
        ) {
            (Some(i), Some(j)) => {
                a[(i, j)] += g / caps[i];
                a[(i, i)] -= g / caps[i];
                a[(j, i)] += g / caps[j];
                a[(j, j)] -= g / caps[j];
            }
            (Some(i), None) | (None, Some(i)) => {
                // Edge to the ambient source: dissipation without a state column.
                a[(i, i)] -= g / caps[i];
                ambient_column[i] += g / caps[i];
            }
            (None, None) => unreachable!("edges validated at construction"),
        }
    }

    let supply = network.supply_temperatures();
    let mut b = Mat::zeros(n, rooms);
    for r in 0..rooms {
        let row = walls + r;
        // d(dT_r/dt)/d(m_dot): c_p (T_s - T_r0) / C_r, in degC/(kg/s)/h.
        b[(row, r)] = sph * c_p * (supply[r] - op.nominal_room_temp[r]) / caps[row];
        // d(dT_r/dt)/dT_r from the flow term: -m0 c_p / C_r.
        a[(row, row)] -= sph * op.nominal_flow[r] * c_p / caps[row];
    }

    let e = Mat::from_fn(n, n, |i, j| {
        if i == j {
            S::one() / caps[i]
        } else {
            S::zero()
        }
    });

    let css = ContinuousStateSpace {
        a,
        b,
        e,
        ambient_column,
        capacitances: caps,
        state_labels: network.nodes().iter().map(|nd| nd.id.clone()).collect(),
        input_labels: network.room_ids(),
        disturbance_labels: network.nodes().iter().map(|nd| nd.id.clone()).collect(),
    };
    css.validate()?;
    Ok(css)
}

/// Discrete-time model `x+ = A x + B u + E d + B_r r` at sample time `dt`.
#[derive(Debug, Clone)]
pub struct DiscreteStateSpace<S> {
    pub a: Mat<S>,
    pub b: Mat<S>,
    pub e: Mat<S>,
    /// Reserve input matrix, `-B * diag(reserve_mask)`.
    pub b_r: Mat<S>,
    /// Sample time in hours.
    pub dt: S,
    /// Per-room 0/1 reserve participation mask.
    pub reserve_mask: Vec<bool>,
    pub state_labels: Vec<String>,
    pub input_labels: Vec<String>,
}

impl<S: Scalar> DiscreteStateSpace<S> {
    pub fn n(&self) -> usize {
        self.a.rows()
    }

    pub fn inputs(&self) -> usize {
        self.b.cols()
    }

    pub fn disturbance_channels(&self) -> usize {
        self.e.cols()
    }

    pub fn validate(&self) -> Result<()> {
        // As dt -> 0 the radius approaches 1 from below faster than the
        // power iteration can resolve, so allow estimator noise.
        let rho = spectral_radius(&self.a, 500);
        if rho >= S::one() + S::from_f64(1e-9) {
            return Err(Error::Validation(format!(
                "discretized A has spectral radius {} >= 1",
                rho.to_f64()
            )));
        }
        Ok(())
    }
}

/// Exact zero-order-hold discretization via the block-augmented matrix
/// exponential: `exp([[Ac, [Bc Ec]], [0, 0]] dt)` yields `A` in the top-left
/// block and the exact input/disturbance integrals alongside.
pub fn discretize_zoh<S: Scalar>(
    css: &ContinuousStateSpace<S>,
    dt: S,
    reserve_mask: &[bool],
) -> Result<DiscreteStateSpace<S>> {
    if dt <= S::zero() {
        return Err(Error::Validation("sample time must be > 0".into()));
    }
    let n = css.n();
    let j = css.inputs();
    let nd = css.disturbance_channels();
    if reserve_mask.len() != j {
        return Err(Error::Validation(format!(
            "reserve mask must have one entry per room ({j})"
        )));
    }
    let total = n + j + nd;
    let mut aug = Mat::zeros(total, total);
    for i in 0..n {
        for k in 0..n {
            aug[(i, k)] = css.a[(i, k)] * dt;
        }
        for k in 0..j {
            aug[(i, n + k)] = css.b[(i, k)] * dt;
        }
        for k in 0..nd {
            aug[(i, n + j + k)] = css.e[(i, k)] * dt;
        }
    }
    let phi = expm(&aug).map_err(|e| {
        Error::Numeric(format!(
            "ZOH matrix exponential failed (inf-norm {:e}): {e}",
            aug.inf_norm().to_f64()
        ))
    })?;
    let a = phi.block(0, 0, n, n);
    let b = phi.block(0, n, n, j);
    let e = phi.block(0, n + j, n, nd);
    let mut b_r = b.clone();
    for r in 0..j {
        let m = if reserve_mask[r] { -S::one() } else { S::zero() };
        for i in 0..n {
            b_r[(i, r)] = b[(i, r)] * m;
        }
    }
    let dss = DiscreteStateSpace {
        a,
        b,
        e,
        b_r,
        dt,
        reserve_mask: reserve_mask.to_vec(),
        state_labels: css.state_labels.clone(),
        input_labels: css.input_labels.clone(),
    };
    dss.validate()?;
    Ok(dss)
}

/// Advances the plant one step: `A x + B u + E d + B_r r`.
/// Pure function of its inputs; `r` must be zero outside curtailment events.
pub fn plant_step<S: Scalar>(
    dss: &DiscreteStateSpace<S>,
    x: &[S],
    u: &[S],
    d_realized: &[S],
    r_applied: &[S],
) -> Result<Vec<S>> {
    if x.len() != dss.n()
        || u.len() != dss.inputs()
        || d_realized.len() != dss.disturbance_channels()
        || r_applied.len() != dss.inputs()
    {
        return Err(Error::Validation(format!(
            "plant_step dimension mismatch: x {} (want {}), u {} (want {}), d {} (want {}), r {} (want {})",
            x.len(),
            dss.n(),
            u.len(),
            dss.inputs(),
            d_realized.len(),
            dss.disturbance_channels(),
            r_applied.len(),
            dss.inputs()
        )));
    }
    if u.iter().any(|&v| v < S::zero()) {
        return Err(Error::Validation("plant_step: flow must be >= 0".into()));
    }
    let mut next = dss.a.matvec(x);
    for (acc, v) in next.iter_mut().zip(dss.b.matvec(u)) {
        *acc += v;
    }
    for (acc, v) in next.iter_mut().zip(dss.e.matvec(d_realized)) {
        *acc += v;
    }
    for (acc, v) in next.iter_mut().zip(dss.b_r.matvec(r_applied)) {
        *acc += v;
    }
    Ok(next)
}
