use serde::{Deserialize, Serialize};

use super::topology::{EdgeKind, NetworkTopology, Side};
use super::SimError;
use crate::hydro::{
    darcy_pressure_drop_with, pipe_outlet_temperature, valve_pressure_drop, FluidProps, FrictionModel,
    FrictionOpts,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyOpts {
    /// Largest junction temperature change (K) accepted as converged.
    pub tol: f64,
    pub max_iter: usize,
    #[serde(skip)]
    pub friction: FrictionOpts,
    /// Plausible pressure range, Pa. Excursions are reported as warnings.
    pub pressure_band: (f64, f64),
    /// Plausible temperature range, °C.
    pub temperature_band: (f64, f64),
}

impl Default for SteadyOpts {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 100,
            friction: FrictionOpts::default(),
            pressure_band: (300e3, 500e3),
            temperature_band: (50.0, 90.0),
        }
    }
}

/// Converged hydraulic and thermal state for one hour.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyState {
    /// kg/s, aligned with [`NetworkTopology::edges`].
    pub edge_flows: Vec<f64>,
    /// Pa, aligned with the junction list.
    pub pressures: Vec<f64>,
    /// °C, aligned with the junction list.
    pub temperatures: Vec<f64>,
    /// kW released to ambient, aligned with the pipe list.
    pub pipe_losses: Vec<f64>,
    /// Pressure drop magnitude per pipe, Pa.
    pub pipe_drops: Vec<f64>,
    /// kg/s per consumer.
    pub consumer_flows: Vec<f64>,
    /// Heat delivered per consumer, kW.
    pub consumer_heat: Vec<f64>,
    pub source_flow: f64,
    /// Heat added at the source, kW.
    pub source_heat: f64,
    pub iterations: usize,
    pub warnings: Vec<String>,
}

impl SteadyState {
    pub fn pressure(&self, topology: &NetworkTopology, junction: &str) -> Option<f64> {
        topology.junction_index(junction).map(|i| self.pressures[i])
    }

    pub fn temperature(&self, topology: &NetworkTopology, junction: &str) -> Option<f64> {
        topology.junction_index(junction).map(|i| self.temperatures[i])
    }

    pub fn flow(&self, topology: &NetworkTopology, edge: &str) -> Option<f64> {
        topology.edge_index(edge).map(|e| self.edge_flows[e])
    }

    /// Net inflow minus outflow at every junction, including consumer draws
    /// and the source injection.
    pub fn continuity_residuals(&self, topology: &NetworkTopology) -> Vec<f64> {
        let layout = &topology.layout;
        let mut balance = vec![0.0; topology.junctions.len()];
        for (e, edge) in layout.edges.iter().enumerate() {
            balance[edge.from] -= self.edge_flows[e];
            balance[edge.to] += self.edge_flows[e];
        }
        for (c, &(inlet, outlet)) in layout.consumer_nodes.iter().enumerate() {
            balance[inlet] -= self.consumer_flows[c];
            balance[outlet] += self.consumer_flows[c];
        }
        balance[layout.supply] += self.source_flow;
        balance[layout.ret] -= self.source_flow;
        balance
    }

    /// `|q_source − Σ q_consumer − Σ q_loss| / q_source`.
    pub fn energy_closure(&self) -> f64 {
        let delivered: f64 = self.consumer_heat.iter().sum();
        let lost: f64 = self.pipe_losses.iter().sum();
        (self.source_heat - delivered - lost).abs() / self.source_heat.abs()
    }
}

/// Solves one steady state by fixed-point iteration over consumer inlet
/// temperatures.
///
/// Each sweep derives consumer flows from the heat demand and the current
/// approach temperature, accumulates them up the feed tree, propagates feed
/// temperatures through the pipe heat-loss model and mixes return streams at
/// mergers. Pressures are evaluated once the temperatures settle: downward from
/// the supply setpoint on the feed side, and upward from a return pressure
/// chosen so the least-supplied substation keeps `min_substation_dp`.
pub fn solve_steady_state(
    topology: &NetworkTopology,
    demands: &[f64],
    fluid: &FluidProps,
    t_amb: f64,
    opts: &SteadyOpts,
) -> Result<SteadyState, SimError> {
    let layout = &topology.layout;
    let n_nodes = topology.junctions.len();
    if demands.len() != topology.consumers.len() {
        return Err(SimError::DemandCount {
            expected: topology.consumers.len(),
            got: demands.len(),
        });
    }
    for (c, &q) in topology.consumers.iter().zip(demands) {
        if !(q >= c.q_min) || !q.is_finite() {
            return Err(SimError::DemandBelowFloor {
                consumer: c.id.clone(),
                demand: q,
                floor: c.q_min,
            });
        }
    }

    let t_supply = topology.source.supply_temperature;
    let mut temps = vec![t_supply; n_nodes];
    let mut state = Sweep::new(topology);
    let mut iterations = 0;
    let mut last_change = f64::INFINITY;
    loop {
        if iterations >= opts.max_iter {
            return Err(SimError::NotConverged {
                iterations,
                residual: last_change,
            });
        }
        iterations += 1;
        state.sweep(topology, demands, fluid, t_amb, &temps)?;
        last_change = state
            .temps
            .iter()
            .zip(&temps)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        temps.copy_from_slice(&state.temps);
        if last_change < opts.tol {
            break;
        }
    }

    // Consumer heat is evaluated with the final inlet temperatures so the
    // energy balance closes on this sweep's own flows.
    let consumer_heat: Vec<f64> = layout
        .consumer_nodes
        .iter()
        .zip(&topology.consumers)
        .zip(&state.consumer_flows)
        .map(|((&(inlet, _), c), &m)| m * fluid.cp * (state.temps[inlet] - c.return_setpoint))
        .collect();

    // Hydraulics.
    let model = FrictionModel::ColebrookWhite(opts.friction);
    let mut edge_drops = vec![0.0; layout.edges.len()];
    let mut pipe_drops = vec![0.0; topology.pipes.len()];
    for (e, edge) in layout.edges.iter().enumerate() {
        let m = state.edge_flows[e];
        edge_drops[e] = match edge.kind {
            EdgeKind::Pipe(p) => {
                let dp = darcy_pressure_drop_with(m, &topology.pipes[p], fluid, model)?;
                pipe_drops[p] = dp;
                dp
            }
            EdgeKind::Valve(v) => valve_pressure_drop(m, &topology.valves[v], fluid),
        };
    }
    let mut pressures = vec![f64::NAN; n_nodes];
    pressures[layout.supply] = topology.source.supply_pressure;
    for &e in &layout.feed_order {
        let edge = &layout.edges[e];
        pressures[edge.to] = pressures[edge.from] - edge_drops[e];
    }
    // Return pressures relative to the source return node.
    let mut rel = vec![0.0; n_nodes];
    for &v in layout.return_nodes.iter().rev() {
        if let Some(e) = layout.return_out[v] {
            rel[v] = rel[layout.edges[e].to] + edge_drops[e];
        }
    }
    let p_return = layout
        .consumer_nodes
        .iter()
        .map(|&(inlet, outlet)| pressures[inlet] - rel[outlet])
        .fold(f64::INFINITY, f64::min)
        - topology.source.min_substation_dp;
    for &v in &layout.return_nodes {
        pressures[v] = p_return + rel[v];
    }

    let source_flow: f64 = layout.feed_out[layout.supply].iter().map(|&e| state.edge_flows[e]).sum();
    let source_heat = source_flow * fluid.cp * (t_supply - state.temps[layout.ret]);

    let mut warnings = Vec::new();
    let (p_lo, p_hi) = opts.pressure_band;
    let (t_lo, t_hi) = opts.temperature_band;
    for (j, junction) in topology.junctions.iter().enumerate() {
        let p = pressures[j];
        if p < p_lo - 1e-6 || p > p_hi + 1e-6 {
            warnings.push(format!("pressure {:.1} Pa at {} outside band", p, junction.id));
        }
        let t = state.temps[j];
        if t < t_lo - 1e-9 || t > t_hi + 1e-9 {
            warnings.push(format!("temperature {:.3} °C at {} outside band", t, junction.id));
        }
    }

    Ok(SteadyState {
        edge_flows: state.edge_flows,
        pressures,
        temperatures: state.temps,
        pipe_losses: state.pipe_losses,
        pipe_drops,
        consumer_flows: state.consumer_flows,
        consumer_heat,
        source_flow,
        source_heat,
        iterations,
        warnings,
    })
}

/// Working buffers for one fixed-point sweep.
struct Sweep {
    consumer_flows: Vec<f64>,
    edge_flows: Vec<f64>,
    temps: Vec<f64>,
    pipe_losses: Vec<f64>,
    node_draw: Vec<f64>,
}

impl Sweep {
    fn new(topology: &NetworkTopology) -> Self {
        let n = topology.junctions.len();
        Self {
            consumer_flows: vec![0.0; topology.consumers.len()],
            edge_flows: vec![0.0; topology.layout.edges.len()],
            temps: vec![0.0; n],
            pipe_losses: vec![0.0; topology.pipes.len()],
            node_draw: vec![0.0; n],
        }
    }

    fn sweep(
        &mut self,
        topology: &NetworkTopology,
        demands: &[f64],
        fluid: &FluidProps,
        t_amb: f64,
        prev_temps: &[f64],
    ) -> Result<(), SimError> {
        let layout = &topology.layout;

        // (a) consumer flows from the current approach temperature
        for (c, consumer) in topology.consumers.iter().enumerate() {
            let (inlet, _) = layout.consumer_nodes[c];
            let approach = prev_temps[inlet] - consumer.return_setpoint;
            if !(approach > 0.0) {
                return Err(SimError::InfeasibleDemand {
                    consumer: consumer.id.clone(),
                    inlet_temperature: prev_temps[inlet],
                });
            }
            self.consumer_flows[c] = demands[c] / (fluid.cp * approach);
        }

        // (b) continuity up the feed tree
        self.node_draw.iter_mut().for_each(|d| *d = 0.0);
        for (c, &(inlet, _)) in layout.consumer_nodes.iter().enumerate() {
            self.node_draw[inlet] += self.consumer_flows[c];
        }
        for &e in layout.feed_order.iter().rev() {
            let edge = &layout.edges[e];
            let m = self.node_draw[edge.to];
            self.edge_flows[e] = m;
            self.node_draw[edge.from] += m;
        }

        // (c) feed temperatures
        self.temps[layout.supply] = topology.source.supply_temperature;
        for &e in &layout.feed_order {
            let edge = &layout.edges[e];
            self.temps[edge.to] = self.edge_outlet(topology, e, self.temps[edge.from], fluid, t_amb)?;
        }

        // (d) return temperatures with mass-weighted mixing
        let mut inflow_m = vec![0.0; topology.junctions.len()];
        let mut inflow_h = vec![0.0; topology.junctions.len()];
        for (c, &(_, outlet)) in layout.consumer_nodes.iter().enumerate() {
            inflow_m[outlet] += self.consumer_flows[c];
            inflow_h[outlet] += self.consumer_flows[c] * topology.consumers[c].return_setpoint;
        }
        for &v in &layout.return_nodes {
            let m = inflow_m[v];
            self.temps[v] = inflow_h[v] / m;
            if let Some(e) = layout.return_out[v] {
                debug_assert_eq!(layout.edges[e].side, Side::Return);
                self.edge_flows[e] = m;
                let to = layout.edges[e].to;
                let t_out = self.edge_outlet(topology, e, self.temps[v], fluid, t_amb)?;
                inflow_m[to] += m;
                inflow_h[to] += m * t_out;
            }
        }
        Ok(())
    }

    fn edge_outlet(
        &mut self,
        topology: &NetworkTopology,
        e: usize,
        t_in: f64,
        fluid: &FluidProps,
        t_amb: f64,
    ) -> Result<f64, SimError> {
        match topology.layout.edges[e].kind {
            EdgeKind::Pipe(p) => {
                let heat = pipe_outlet_temperature(t_in, t_amb, self.edge_flows[e], &topology.pipes[p], fluid)?;
                self.pipe_losses[p] = heat.heat_loss;
                Ok(heat.t_out)
            }
            EdgeKind::Valve(_) => Ok(t_in),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::topology::{ConsumerSpec, SensorPlacement, SourceSpec};
    use crate::hydro::{darcy_pressure_drop, PipeSpec, ValveSpec};

    fn default_demands(net: &NetworkTopology, t_amb: f64) -> Vec<f64> {
        let law = crate::sim::DemandLaw::default();
        net.consumers.iter().map(|c| law.demand(c, t_amb)).collect()
    }

    #[test]
    fn default_network_conserves_mass_and_energy() {
        let net = NetworkTopology::default_network();
        let fluid = FluidProps::water();
        for t_amb in [-15.0, -5.0, 5.0, 15.0, 30.0] {
            let demands = default_demands(&net, t_amb);
            let s = solve_steady_state(&net, &demands, &fluid, t_amb, &SteadyOpts::default()).unwrap();
            for r in s.continuity_residuals(&net) {
                assert!(r.abs() < 1e-9 * s.source_flow, "{r}");
            }
            assert!(s.energy_closure() < 1e-6, "{}", s.energy_closure());
            for (c, &q) in s.consumer_heat.iter().enumerate() {
                assert!((q - demands[c]).abs() / demands[c] < 1e-6);
            }
        }
    }

    #[test]
    fn feed_paths_lose_pressure_and_heat() {
        let net = NetworkTopology::default_network();
        let fluid = FluidProps::water();
        let demands = default_demands(&net, -10.0);
        let s = solve_steady_state(&net, &demands, &fluid, -10.0, &SteadyOpts::default()).unwrap();
        for c in 0..net.consumers.len() {
            let path = net.feed_path(c);
            for w in path.windows(2) {
                assert!(s.pressures[w[1]] <= s.pressures[w[0]]);
                assert!(s.temperatures[w[1]] <= s.temperatures[w[0]]);
            }
        }
    }

    #[test]
    fn pipe_drops_equal_junction_pressure_differences() {
        let net = NetworkTopology::default_network();
        let fluid = FluidProps::water();
        let demands = default_demands(&net, 0.0);
        let s = solve_steady_state(&net, &demands, &fluid, 0.0, &SteadyOpts::default()).unwrap();
        for (i, pipe) in net.pipes.iter().enumerate() {
            let e = net.pipe_edge(i);
            let edge = &net.edges()[e];
            let diff = s.pressures[edge.from] - s.pressures[edge.to];
            let dp = darcy_pressure_drop(s.edge_flows[e], pipe, &fluid).unwrap();
            assert!((diff - dp).abs() <= 1e-9 * dp, "{}: {diff} vs {dp}", pipe.id);
        }
    }

    fn symmetric_network(ka: f64) -> NetworkTopology {
        let pipe = |id: &str, d: f64, l: f64, from: &str, to: &str| {
            PipeSpec::new(id, d, l, 0.0005, ka, from, to).unwrap()
        };
        let mut pipes = vec![pipe("FP0", 0.03, 60.0, "S", "F1")];
        let mut valves = Vec::new();
        let mut consumers = Vec::new();
        for (half, f) in [("1", "F2"), ("2", "F3")] {
            pipes.push(pipe(&format!("FT{half}"), 0.025, 100.0, "F1", f));
            pipes.push(pipe(&format!("RT{half}"), 0.025, 100.0, &format!("R{f}"), "R1"));
            for leaf in ["a", "b"] {
                let name = format!("{half}{leaf}");
                pipes.push(pipe(&format!("FB{name}"), 0.018, 50.0, f, &format!("F{name}")));
                pipes.push(pipe(&format!("RB{name}"), 0.018, 50.0, &format!("O{name}"), &format!("R{f}")));
                valves.push(ValveSpec::new(format!("V{name}"), 2e-6, format!("F{name}"), format!("I{name}")).unwrap());
                consumers.push(ConsumerSpec {
                    id: name.clone(),
                    area: 4.0,
                    return_setpoint: 60.0,
                    q_min: 1.0,
                    inlet: format!("I{name}"),
                    outlet: format!("O{name}"),
                });
            }
        }
        pipes.push(pipe("RP0", 0.03, 60.0, "R1", "R"));
        NetworkTopology::new(
            pipes,
            valves,
            consumers,
            SourceSpec {
                supply_node: "S".into(),
                return_node: "R".into(),
                supply_temperature: 90.0,
                supply_pressure: 500e3,
                min_substation_dp: 20e3,
            },
            SensorPlacement::default(),
        )
        .unwrap()
    }

    #[test]
    fn symmetric_branches_carry_equal_flow() {
        let net = symmetric_network(3.0);
        let fluid = FluidProps::water();
        let s = solve_steady_state(&net, &[5.0; 4], &fluid, 0.0, &SteadyOpts::default()).unwrap();
        let f = |id: &str| s.flow(&net, id).unwrap();
        assert!((f("FB1a") - f("FB1b")).abs() < 1e-12);
        assert!((f("FB1a") - f("FB2b")).abs() < 1e-12);
        assert!((f("FT1") - f("FT2")).abs() < 1e-12);
        assert!((f("RT1") - f("RT2")).abs() < 1e-12);
    }

    #[test]
    fn lossless_single_consumer_chain_matches_hand_solution() {
        let fluid = FluidProps::water();
        let p_feed = PipeSpec::new("F", 0.02, 80.0, 0.0005, 0.0, "S", "X").unwrap();
        let p_ret = PipeSpec::new("Rt", 0.02, 80.0, 0.0005, 0.0, "Y", "R").unwrap();
        let valve = ValveSpec::new("V", 3e-6, "X", "I").unwrap();
        let net = NetworkTopology::new(
            vec![p_feed.clone(), p_ret.clone()],
            vec![valve.clone()],
            vec![ConsumerSpec {
                id: "C".into(),
                area: 1.0,
                return_setpoint: 55.0,
                q_min: 1.0,
                inlet: "I".into(),
                outlet: "Y".into(),
            }],
            SourceSpec {
                supply_node: "S".into(),
                return_node: "R".into(),
                supply_temperature: 85.0,
                supply_pressure: 450e3,
                min_substation_dp: 15e3,
            },
            SensorPlacement::default(),
        )
        .unwrap();
        let q = 12.0;
        let s = solve_steady_state(&net, &[q], &fluid, 0.0, &SteadyOpts::default()).unwrap();
        let m = q / (4.18 * 30.0);
        assert_eq!(s.consumer_flows[0], m);
        assert_eq!(s.flow(&net, "F").unwrap(), m);
        let dp = darcy_pressure_drop(m, &p_feed, &fluid).unwrap();
        let dv = 1.0 * m * m / (980.0 * 3e-6f64).powi(2);
        let p_x = 450e3 - dp;
        let p_i = p_x - dv;
        let p_y = p_i - 15e3;
        let p_r = p_y - dp;
        let p = |id: &str| s.pressure(&net, id).unwrap();
        assert!((p("X") - p_x).abs() < 1e-9);
        assert!((p("I") - p_i).abs() < 1e-9);
        assert!((p("Y") - p_y).abs() < 1e-9);
        assert!((p("R") - p_r).abs() < 1e-9);
        assert!((s.temperature(&net, "R").unwrap() - 55.0).abs() < 1e-12);
    }

    #[test]
    fn doubling_demand_doubles_flows_without_losses() {
        let net = symmetric_network(0.0);
        let fluid = FluidProps::water();
        let d1 = [3.0, 4.0, 5.0, 6.0];
        let d2 = d1.map(|q| 2.0 * q);
        let a = solve_steady_state(&net, &d1, &fluid, 0.0, &SteadyOpts::default()).unwrap();
        let b = solve_steady_state(&net, &d2, &fluid, 0.0, &SteadyOpts::default()).unwrap();
        for (x, y) in a.edge_flows.iter().zip(&b.edge_flows) {
            assert!((y - 2.0 * x).abs() <= 1e-12 * y.abs());
        }
    }

    #[test]
    fn infeasible_and_invalid_demands() {
        let net = NetworkTopology::default_network();
        let fluid = FluidProps::water();
        let err = solve_steady_state(&net, &[0.5, 2.0, 2.0, 2.0], &fluid, 0.0, &SteadyOpts::default());
        assert!(matches!(err, Err(SimError::DemandBelowFloor { .. })));
        let err = solve_steady_state(&net, &[2.0; 3], &fluid, 0.0, &SteadyOpts::default());
        assert!(matches!(err, Err(SimError::DemandCount { .. })));

        let mut file = net.to_file();
        // heavy feed losses cool the water below the return setpoint
        for c in &mut file.consumers {
            c.return_setpoint_c = 85.0;
        }
        for p in file.pipes.iter_mut().filter(|p| p.id.starts_with("FP")) {
            p.ka_w_per_k = 2000.0;
        }
        let hot = NetworkTopology::from_file(file).unwrap();
        let err = solve_steady_state(&hot, &[1.0; 4], &fluid, -10.0, &SteadyOpts::default()).unwrap_err();
        assert!(err.to_string().contains("infeasible demand"), "{err}");
    }

    #[test]
    fn iteration_budget_is_enforced() {
        let net = NetworkTopology::default_network();
        let opts = SteadyOpts {
            max_iter: 1,
            ..SteadyOpts::default()
        };
        let err = solve_steady_state(&net, &[2.0; 4], &FluidProps::water(), 0.0, &opts).unwrap_err();
        assert!(matches!(err, SimError::NotConverged { iterations: 1, .. }));
    }
}
