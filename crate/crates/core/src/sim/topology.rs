use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::hydro::{PipeSpec, ValveSpec};

const DEFAULT_TOPOLOGY: &str = include_str!("../../data/topology.toml");

#[derive(Debug, Clone, PartialEq)]
pub struct Junction {
    pub id: String,
    /// Always 0 m: pipes are taken as horizontal.
    pub elevation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsumerSpec {
    pub id: String,
    /// m²
    pub area: f64,
    /// °C
    pub return_setpoint: f64,
    /// Demand floor, kW.
    pub q_min: f64,
    /// Feed-side junction the substation draws from.
    pub inlet: String,
    /// Return-side junction the substation discharges into.
    pub outlet: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceSpec {
    pub supply_node: String,
    pub return_node: String,
    /// °C
    pub supply_temperature: f64,
    /// Pa
    pub supply_pressure: f64,
    /// Smallest differential pressure any substation is left with, Pa.
    pub min_substation_dp: f64,
}

/// Where physical sensors sit. Mass-flow sensors are placed on edges (pipes
/// or valves); pressure and temperature sensors on junctions.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SensorPlacement {
    pub mass_flow: Vec<String>,
    pub pressure: Vec<String>,
    pub temperature: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeKind {
    Pipe(usize),
    Valve(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Feed,
    Return,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub kind: EdgeKind,
    pub from: usize,
    pub to: usize,
    pub side: Side,
}

/// Index structure derived from the component lists.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Layout {
    pub node_index: HashMap<String, usize>,
    pub edges: Vec<Edge>,
    pub edge_index: HashMap<String, usize>,
    /// Feed edges, parents before children.
    pub feed_order: Vec<usize>,
    /// Return nodes, every inflow before the node itself.
    pub return_nodes: Vec<usize>,
    /// Single outgoing return edge per return node (the root has none).
    pub return_out: Vec<Option<usize>>,
    /// Incoming return edges per node.
    pub return_in: Vec<Vec<usize>>,
    /// Outgoing feed edges per node.
    pub feed_out: Vec<Vec<usize>>,
    pub consumer_nodes: Vec<(usize, usize)>,
    /// Consumers served downstream of each edge.
    pub edge_consumers: Vec<BTreeSet<usize>>,
    pub supply: usize,
    pub ret: usize,
}

/// Supply/return pipe network with its sensor placement.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkTopology {
    pub junctions: Vec<Junction>,
    pub pipes: Vec<PipeSpec>,
    pub valves: Vec<ValveSpec>,
    pub consumers: Vec<ConsumerSpec>,
    pub source: SourceSpec,
    pub sensors: SensorPlacement,
    pub(crate) layout: Layout,
}

// ---------------------------------------------------------------------------
// File schema

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyFile {
    pub source: SourceRecord,
    #[serde(rename = "pipe")]
    pub pipes: Vec<PipeRecord>,
    #[serde(rename = "valve", default)]
    pub valves: Vec<ValveRecord>,
    #[serde(rename = "consumer")]
    pub consumers: Vec<ConsumerRecord>,
    pub sensors: SensorRecord,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceRecord {
    pub supply_node: String,
    pub return_node: String,
    pub supply_temperature_c: f64,
    pub supply_pressure_pa: f64,
    pub min_substation_dp_pa: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipeRecord {
    pub id: String,
    pub d_mm: f64,
    pub l_m: f64,
    pub ks_m: f64,
    pub ka_w_per_k: f64,
    pub from: String,
    pub to: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValveRecord {
    pub id: String,
    pub zeta: f64,
    pub from: String,
    pub to: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConsumerRecord {
    pub id: String,
    pub area_m2: f64,
    pub return_setpoint_c: f64,
    pub q_min_kw: f64,
    pub inlet: String,
    pub outlet: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorRecord {
    pub mass_flow: Vec<String>,
    pub pressure: Vec<String>,
    pub temperature: Vec<String>,
}

impl NetworkTopology {
    /// The shipped four-consumer network (`data/topology.toml`).
    pub fn default_network() -> Self {
        Self::from_toml_str(DEFAULT_TOPOLOGY).expect("shipped topology is valid")
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, SimError> {
        let file: TopologyFile =
            toml::from_str(text).map_err(|e| SimError::Topology(format!("parse error: {e}")))?;
        Self::from_file(file)
    }

    pub fn from_file(file: TopologyFile) -> Result<Self, SimError> {
        let pipes = file
            .pipes
            .iter()
            .map(|p| {
                PipeSpec::new(&p.id, p.d_mm / 1000.0, p.l_m, p.ks_m, p.ka_w_per_k, &p.from, &p.to)
                    .map_err(|e| SimError::Topology(format!("pipe {}: {e}", p.id)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let valves = file
            .valves
            .iter()
            .map(|v| {
                ValveSpec::new(&v.id, v.zeta, &v.from, &v.to)
                    .map_err(|e| SimError::Topology(format!("valve {}: {e}", v.id)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let consumers = file
            .consumers
            .iter()
            .map(|c| ConsumerSpec {
                id: c.id.clone(),
                area: c.area_m2,
                return_setpoint: c.return_setpoint_c,
                q_min: c.q_min_kw,
                inlet: c.inlet.clone(),
                outlet: c.outlet.clone(),
            })
            .collect();
        let source = SourceSpec {
            supply_node: file.source.supply_node,
            return_node: file.source.return_node,
            supply_temperature: file.source.supply_temperature_c,
            supply_pressure: file.source.supply_pressure_pa,
            min_substation_dp: file.source.min_substation_dp_pa,
        };
        let sensors = SensorPlacement {
            mass_flow: file.sensors.mass_flow,
            pressure: file.sensors.pressure,
            temperature: file.sensors.temperature,
        };
        Self::new(pipes, valves, consumers, source, sensors)
    }

    pub fn to_file(&self) -> TopologyFile {
        TopologyFile {
            source: SourceRecord {
                supply_node: self.source.supply_node.clone(),
                return_node: self.source.return_node.clone(),
                supply_temperature_c: self.source.supply_temperature,
                supply_pressure_pa: self.source.supply_pressure,
                min_substation_dp_pa: self.source.min_substation_dp,
            },
            pipes: self
                .pipes
                .iter()
                .map(|p| PipeRecord {
                    id: p.id.clone(),
                    d_mm: p.diameter * 1000.0,
                    l_m: p.length,
                    ks_m: p.roughness,
                    ka_w_per_k: p.heat_transfer,
                    from: p.upstream.clone(),
                    to: p.downstream.clone(),
                })
                .collect(),
            valves: self
                .valves
                .iter()
                .map(|v| ValveRecord {
                    id: v.id.clone(),
                    zeta: v.zeta,
                    from: v.upstream.clone(),
                    to: v.downstream.clone(),
                })
                .collect(),
            consumers: self
                .consumers
                .iter()
                .map(|c| ConsumerRecord {
                    id: c.id.clone(),
                    area_m2: c.area,
                    return_setpoint_c: c.return_setpoint,
                    q_min_kw: c.q_min,
                    inlet: c.inlet.clone(),
                    outlet: c.outlet.clone(),
                })
                .collect(),
            sensors: SensorRecord {
                mass_flow: self.sensors.mass_flow.clone(),
                pressure: self.sensors.pressure.clone(),
                temperature: self.sensors.temperature.clone(),
            },
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(&self.to_file()).expect("topology serializes")
    }

    /// Validates the component lists and builds the network.
    pub fn new(
        pipes: Vec<PipeSpec>,
        valves: Vec<ValveSpec>,
        consumers: Vec<ConsumerSpec>,
        source: SourceSpec,
        sensors: SensorPlacement,
    ) -> Result<Self, SimError> {
        let layout = build_layout(&pipes, &valves, &consumers, &source)?;

        for c in &consumers {
            if !(c.area > 0.0) {
                return Err(SimError::Topology(format!("consumer {}: area must be positive", c.id)));
            }
            if !(c.q_min > 0.0) {
                return Err(SimError::Topology(format!("consumer {}: q_min must be positive", c.id)));
            }
            if !(c.return_setpoint < source.supply_temperature) {
                return Err(SimError::Topology(format!(
                    "consumer {}: return setpoint {} must be below the supply temperature {}",
                    c.id, c.return_setpoint, source.supply_temperature
                )));
            }
        }
        if !(source.min_substation_dp >= 0.0) {
            return Err(SimError::Topology("min_substation_dp must be non-negative".into()));
        }

        for id in &sensors.mass_flow {
            if !layout.edge_index.contains_key(id) {
                return Err(SimError::Topology(format!("mass-flow sensor on unknown edge `{id}`")));
            }
        }
        for id in sensors.pressure.iter().chain(&sensors.temperature) {
            if !layout.node_index.contains_key(id) {
                return Err(SimError::Topology(format!("sensor on unknown junction `{id}`")));
            }
        }
        let mut names = HashSet::new();
        for (kind, ids) in [
            ("mdot", &sensors.mass_flow),
            ("p", &sensors.pressure),
            ("t", &sensors.temperature),
        ] {
            for id in ids {
                if !names.insert(format!("{kind}_{id}")) {
                    return Err(SimError::Topology(format!("duplicate sensor {kind}_{id}")));
                }
            }
        }

        let mut junctions = vec![None; layout.node_index.len()];
        for (id, &i) in &layout.node_index {
            junctions[i] = Some(Junction {
                id: id.clone(),
                elevation: 0.0,
            });
        }
        Ok(Self {
            junctions: junctions.into_iter().map(|j| j.expect("dense node indices")).collect(),
            pipes,
            valves,
            consumers,
            source,
            sensors,
            layout,
        })
    }

    pub fn junction_index(&self, id: &str) -> Option<usize> {
        self.layout.node_index.get(id).copied()
    }

    pub fn edge_index(&self, id: &str) -> Option<usize> {
        self.layout.edge_index.get(id).copied()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.layout.edges
    }

    pub fn edge_id(&self, edge: usize) -> &str {
        match self.layout.edges[edge].kind {
            EdgeKind::Pipe(i) => &self.pipes[i].id,
            EdgeKind::Valve(i) => &self.valves[i].id,
        }
    }

    /// Edge index of pipe `i`.
    pub fn pipe_edge(&self, pipe: usize) -> usize {
        self.layout.edge_index[&self.pipes[pipe].id]
    }

    pub fn valve_edge(&self, valve: usize) -> usize {
        self.layout.edge_index[&self.valves[valve].id]
    }

    /// Consumers whose flow passes through `edge`.
    pub fn consumers_served(&self, edge: usize) -> &BTreeSet<usize> {
        &self.layout.edge_consumers[edge]
    }

    /// Junction ids along the feed path from the supply node to `consumer`'s inlet.
    pub fn feed_path(&self, consumer: usize) -> Vec<usize> {
        let (inlet, _) = self.layout.consumer_nodes[consumer];
        let mut path = vec![inlet];
        let mut node = inlet;
        while node != self.layout.supply {
            let e = self
                .layout
                .feed_order
                .iter()
                .copied()
                .find(|&e| self.layout.edges[e].to == node)
                .expect("feed tree reaches every consumer");
            node = self.layout.edges[e].from;
            path.push(node);
        }
        path.reverse();
        path
    }
}

fn build_layout(
    pipes: &[PipeSpec],
    valves: &[ValveSpec],
    consumers: &[ConsumerSpec],
    source: &SourceSpec,
) -> Result<Layout, SimError> {
    let topo = |msg: String| SimError::Topology(msg);

    let mut node_index: HashMap<String, usize> = HashMap::new();
    let intern = |id: &str, map: &mut HashMap<String, usize>| -> usize {
        let next = map.len();
        *map.entry(id.to_string()).or_insert(next)
    };
    let supply = intern(&source.supply_node, &mut node_index);
    let ret = intern(&source.return_node, &mut node_index);
    if supply == ret {
        return Err(topo("supply and return nodes must differ".into()));
    }

    let mut edges = Vec::new();
    let mut edge_index = HashMap::new();
    let raw: Vec<(EdgeKind, &str, &str, &str)> = pipes
        .iter()
        .enumerate()
        .map(|(i, p)| (EdgeKind::Pipe(i), p.id.as_str(), p.upstream.as_str(), p.downstream.as_str()))
        .chain(
            valves
                .iter()
                .enumerate()
                .map(|(i, v)| (EdgeKind::Valve(i), v.id.as_str(), v.upstream.as_str(), v.downstream.as_str())),
        )
        .collect();
    for (kind, id, from, to) in raw {
        if edge_index.insert(id.to_string(), edges.len()).is_some() {
            return Err(topo(format!("duplicate component id `{id}`")));
        }
        if from == to {
            return Err(topo(format!("component `{id}` connects a junction to itself")));
        }
        let from = intern(from, &mut node_index);
        let to = intern(to, &mut node_index);
        edges.push(Edge {
            kind,
            from,
            to,
            side: Side::Feed,
        });
    }
    let mut consumer_nodes = Vec::new();
    let mut seen = HashSet::new();
    for c in consumers {
        if !seen.insert(c.id.as_str()) {
            return Err(topo(format!("duplicate consumer id `{}`", c.id)));
        }
        let (Some(&i), Some(&o)) = (node_index.get(&c.inlet), node_index.get(&c.outlet)) else {
            return Err(topo(format!("consumer `{}` references an unconnected junction", c.id)));
        };
        consumer_nodes.push((i, o));
    }
    if consumers.is_empty() {
        return Err(topo("network has no consumers".into()));
    }
    let n = node_index.len();

    let mut out_edges = vec![Vec::new(); n];
    let mut in_edges = vec![Vec::new(); n];
    for (e, edge) in edges.iter().enumerate() {
        out_edges[edge.from].push(e);
        in_edges[edge.to].push(e);
    }

    // Feed tree: everything reachable downstream of the supply node.
    let consumer_inlets: HashSet<usize> = consumer_nodes.iter().map(|&(i, _)| i).collect();
    let mut feed_order = Vec::new();
    let mut feed_nodes = HashSet::from([supply]);
    let mut queue = VecDeque::from([supply]);
    while let Some(node) = queue.pop_front() {
        for &e in &out_edges[node] {
            let to = edges[e].to;
            if !feed_nodes.insert(to) {
                return Err(topo(format!(
                    "feed side is not a tree: junction reached twice via `{}`",
                    edge_name(pipes, valves, &edges[e])
                )));
            }
            feed_order.push(e);
            queue.push_back(to);
        }
    }
    for (&(inlet, _), c) in consumer_nodes.iter().zip(consumers) {
        if !feed_nodes.contains(&inlet) {
            return Err(topo(format!("consumer `{}` inlet is not fed from the source", c.id)));
        }
        if !out_edges[inlet].is_empty() {
            return Err(topo(format!("consumer `{}` inlet must be a feed leaf", c.id)));
        }
    }
    for &node in &feed_nodes {
        if node != supply && out_edges[node].is_empty() && !consumer_inlets.contains(&node) {
            return Err(topo("dead-end feed junction without a consumer".into()));
        }
    }
    if feed_nodes.contains(&ret) {
        return Err(topo("return node is reachable on the feed side".into()));
    }

    // Return tree: from consumer outlets down to the return node, single
    // outgoing edge per junction.
    let mut return_nodes_set = HashSet::new();
    let mut frontier: Vec<usize> = consumer_nodes.iter().map(|&(_, o)| o).collect();
    while let Some(node) = frontier.pop() {
        if feed_nodes.contains(&node) {
            return Err(topo("return side touches a feed junction".into()));
        }
        if !return_nodes_set.insert(node) {
            continue;
        }
        if node == ret {
            if !out_edges[node].is_empty() {
                return Err(topo("return node must not have outgoing components".into()));
            }
            continue;
        }
        match out_edges[node].as_slice() {
            [e] => frontier.push(edges[*e].to),
            [] => return Err(topo("return path ends before reaching the source".into())),
            _ => return Err(topo("return side is not a tree: junction with several outlets".into())),
        }
    }
    if !return_nodes_set.contains(&ret) {
        return Err(topo("return node is not reached from any consumer".into()));
    }

    let mut return_out = vec![None; n];
    let mut return_in = vec![Vec::new(); n];
    for (e, edge) in edges.iter_mut().enumerate() {
        let on_feed = feed_nodes.contains(&edge.from) && feed_nodes.contains(&edge.to);
        let on_return = return_nodes_set.contains(&edge.from) && return_nodes_set.contains(&edge.to);
        match (on_feed, on_return) {
            (true, false) => edge.side = Side::Feed,
            (false, true) => {
                edge.side = Side::Return;
                return_out[edge.from] = Some(e);
                return_in[edge.to].push(e);
            }
            _ => {
                return Err(topo(format!(
                    "component `{}` is not part of the feed or the return tree",
                    edge_name(pipes, valves, edge)
                )))
            }
        }
    }
    for node in 0..n {
        if !feed_nodes.contains(&node) && !return_nodes_set.contains(&node) {
            return Err(topo("junction not connected to the network".into()));
        }
    }

    // Kahn ordering of return nodes.
    let mut pending: Vec<usize> = (0..n).map(|v| return_in[v].len()).collect();
    let mut ready: VecDeque<usize> = return_nodes_set
        .iter()
        .copied()
        .filter(|&v| pending[v] == 0)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut return_nodes = Vec::new();
    while let Some(v) = ready.pop_front() {
        return_nodes.push(v);
        if let Some(e) = return_out[v] {
            let to = edges[e].to;
            pending[to] -= 1;
            if pending[to] == 0 {
                ready.push_back(to);
            }
        }
    }
    if return_nodes.len() != return_nodes_set.len() {
        return Err(topo("return side contains a cycle".into()));
    }

    let mut feed_out = vec![Vec::new(); n];
    for &e in &feed_order {
        feed_out[edges[e].from].push(e);
    }

    // Consumers downstream of every edge.
    let mut edge_consumers = vec![BTreeSet::new(); edges.len()];
    let mut node_consumers_feed: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for (ci, &(i, _)) in consumer_nodes.iter().enumerate() {
        node_consumers_feed[i].insert(ci);
    }
    for &e in feed_order.iter().rev() {
        let served = node_consumers_feed[edges[e].to].clone();
        node_consumers_feed[edges[e].from].extend(served.iter().copied());
        edge_consumers[e] = served;
    }
    let mut node_consumers_ret: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for (ci, &(_, o)) in consumer_nodes.iter().enumerate() {
        node_consumers_ret[o].insert(ci);
    }
    for &v in &return_nodes {
        if let Some(e) = return_out[v] {
            let served = node_consumers_ret[v].clone();
            node_consumers_ret[edges[e].to].extend(served.iter().copied());
            edge_consumers[e] = served;
        }
    }

    Ok(Layout {
        node_index,
        edges,
        edge_index,
        feed_order,
        return_nodes,
        return_out,
        return_in,
        feed_out,
        consumer_nodes,
        edge_consumers,
        supply,
        ret,
    })
}

fn edge_name<'a>(pipes: &'a [PipeSpec], valves: &'a [ValveSpec], edge: &Edge) -> &'a str {
    match edge.kind {
        EdgeKind::Pipe(i) => &pipes[i].id,
        EdgeKind::Valve(i) => &valves[i].id,
    }
}
