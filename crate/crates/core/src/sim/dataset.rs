use super::solver::{solve_steady_state, SteadyOpts};
use super::table::{ColumnMeta, SensorKind, SensorTable};
use super::topology::NetworkTopology;
use super::weather::{DemandLaw, WeatherSeries};
use super::SimError;
use crate::hydro::FluidProps;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DatasetOpts {
    pub demand_law: DemandLaw,
    pub solver: SteadyOpts,
}

/// Solves one steady state per weather hour and reads the placed sensors.
///
/// Columns come out as mass flows, pressures (Pa), temperatures, ambient
/// temperature and one demand column per consumer.
pub fn generate_dataset(
    topology: &NetworkTopology,
    weather: &WeatherSeries,
    fluid: &FluidProps,
    opts: &DatasetOpts,
) -> Result<SensorTable, SimError> {
    let hours = weather.len();
    let flow_edges: Vec<usize> = topology
        .sensors
        .mass_flow
        .iter()
        .map(|id| topology.edge_index(id).expect("validated sensor"))
        .collect();
    let p_nodes: Vec<usize> = topology
        .sensors
        .pressure
        .iter()
        .map(|id| topology.junction_index(id).expect("validated sensor"))
        .collect();
    let t_nodes: Vec<usize> = topology
        .sensors
        .temperature
        .iter()
        .map(|id| topology.junction_index(id).expect("validated sensor"))
        .collect();

    let mut flows = vec![Vec::with_capacity(hours); flow_edges.len()];
    let mut pressures = vec![Vec::with_capacity(hours); p_nodes.len()];
    let mut temps = vec![Vec::with_capacity(hours); t_nodes.len()];
    let mut demands = vec![Vec::with_capacity(hours); topology.consumers.len()];
    let mut warned = 0usize;
    for (hour, &t_amb) in weather.hourly.iter().enumerate() {
        let q: Vec<f64> = topology
            .consumers
            .iter()
            .map(|c| opts.demand_law.demand(c, t_amb))
            .collect();
        let state = solve_steady_state(topology, &q, fluid, t_amb, &opts.solver).map_err(|e| SimError::AtHour {
            hour,
            source: Box::new(e),
        })?;
        if !state.warnings.is_empty() {
            if warned < 5 {
                log::warn!("hour {hour}: {}", state.warnings.join("; "));
            }
            warned += 1;
        }
        for (col, &e) in flows.iter_mut().zip(&flow_edges) {
            col.push(state.edge_flows[e]);
        }
        for (col, &j) in pressures.iter_mut().zip(&p_nodes) {
            col.push(state.pressures[j]);
        }
        for (col, &j) in temps.iter_mut().zip(&t_nodes) {
            col.push(state.temperatures[j]);
        }
        for (col, qi) in demands.iter_mut().zip(q) {
            col.push(qi);
        }
    }
    if warned > 0 {
        log::warn!("{warned} of {hours} hours left the plausibility band");
    }

    let mut table = SensorTable::new((0..hours as u64).collect());
    let push = |table: &mut SensorTable, kind, id: &str, values| {
        table
            .push_column(ColumnMeta::new(kind, id), values)
            .expect("solver output is finite and unique");
    };
    for (id, col) in topology.sensors.mass_flow.iter().zip(flows) {
        push(&mut table, SensorKind::MassFlow, id, col);
    }
    for (id, col) in topology.sensors.pressure.iter().zip(pressures) {
        push(&mut table, SensorKind::Pressure, id, col);
    }
    for (id, col) in topology.sensors.temperature.iter().zip(temps) {
        push(&mut table, SensorKind::Temperature, id, col);
    }
    push(&mut table, SensorKind::Ambient, "air", weather.hourly.clone());
    for (c, col) in topology.consumers.iter().zip(demands) {
        push(&mut table, SensorKind::Demand, &c.id, col);
    }
    Ok(table)
}

/// Names of every column [`generate_dataset`] emits for `topology`.
pub fn declared_columns(topology: &NetworkTopology) -> Vec<String> {
    let s = &topology.sensors;
    s.mass_flow
        .iter()
        .map(|id| format!("mdot_{id}"))
        .chain(s.pressure.iter().map(|id| format!("p_{id}")))
        .chain(s.temperature.iter().map(|id| format!("t_{id}")))
        .chain(std::iter::once("amb_air".to_string()))
        .chain(topology.consumers.iter().map(|c| format!("demand_{}", c.id)))
        .collect()
}
