use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::AugmentError;
use crate::hydro::{
    darcy_pressure_drop_with, temperature_drop_from_heat, valve_pressure_drop, FluidProps, FrictionModel,
};
use crate::sim::{ColumnMeta, NetworkTopology, SensorKind, SensorTable};

/// Whether a feature was measured or computed from measurements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Physical,
    Derived,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowTerm {
    /// Edge carrying the mass-flow sensor.
    pub sensor: String,
    /// +1 or −1.
    pub sign: f64,
}

/// Mass-flow source for every pipe and valve, as a signed sum of sensors.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentationMap {
    pub entries: Vec<(String, Vec<FlowTerm>)>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MapFile {
    flows: BTreeMap<String, String>,
}

impl AugmentationMap {
    /// Finds, for every pipe and valve, the sparsest combination of flow
    /// sensors with coefficients in {−1, 0, +1} whose served consumers add up
    /// to the component's. Continuity then makes the combination exact.
    pub fn derive(topology: &NetworkTopology) -> Result<Self, AugmentError> {
        let sensors = &topology.sensors.mass_flow;
        if sensors.len() > 12 {
            return Err(AugmentError::Config(format!(
                "{} flow sensors is too many to search combinations; supply an augmentation map",
                sensors.len()
            )));
        }
        let n_consumers = topology.consumers.len();
        let indicator = |set: &BTreeSet<usize>| -> Vec<i32> {
            (0..n_consumers).map(|c| set.contains(&c) as i32).collect()
        };
        let sensor_sets: Vec<Vec<i32>> = sensors
            .iter()
            .map(|id| indicator(topology.consumers_served(topology.edge_index(id).expect("validated"))))
            .collect();

        // Candidates ordered by (non-zeros, negatives, enumeration index).
        let k = sensors.len();
        let mut combos: Vec<(usize, usize, Vec<i32>)> = Vec::new();
        for code in 0..3usize.pow(k as u32) {
            let mut c = code;
            let coeffs: Vec<i32> = (0..k)
                .map(|_| {
                    let d = (c % 3) as i32 - 1;
                    c /= 3;
                    d
                })
                .collect();
            let nnz = coeffs.iter().filter(|&&x| x != 0).count();
            if nnz == 0 {
                continue;
            }
            let neg = coeffs.iter().filter(|&&x| x < 0).count();
            combos.push((nnz, neg, coeffs));
        }
        combos.sort_by_key(|(nnz, neg, _)| (*nnz, *neg));

        let mut entries = Vec::new();
        for e in component_edges(topology) {
            let id = topology.edge_id(e).to_string();
            let target = indicator(topology.consumers_served(e));
            let found = combos.iter().find(|(_, _, coeffs)| {
                (0..n_consumers).all(|c| {
                    coeffs.iter().zip(&sensor_sets).map(|(a, s)| a * s[c]).sum::<i32>() == target[c]
                })
            });
            let Some((_, _, coeffs)) = found else {
                return Err(AugmentError::Config(format!(
                    "flow through {id} cannot be resolved from the mass-flow sensors"
                )));
            };
            let terms = coeffs
                .iter()
                .zip(sensors)
                .filter(|(c, _)| **c != 0)
                .map(|(c, s)| FlowTerm {
                    sensor: s.clone(),
                    sign: *c as f64,
                })
                .collect();
            entries.push((id, terms));
        }
        Ok(Self { entries })
    }

    pub fn from_toml_str(text: &str, topology: &NetworkTopology) -> Result<Self, AugmentError> {
        let file: MapFile = toml::from_str(text).map_err(|e| AugmentError::Config(format!("augmentation map: {e}")))?;
        let mut entries = Vec::new();
        for e in component_edges(topology) {
            let id = topology.edge_id(e);
            let expr = file
                .flows
                .get(id)
                .ok_or_else(|| AugmentError::Config(format!("augmentation map has no flow for {id}")))?;
            entries.push((id.to_string(), parse_expression(id, expr)?));
        }
        for key in file.flows.keys() {
            if topology.edge_index(key).is_none() {
                return Err(AugmentError::Config(format!("augmentation map names unknown component {key}")));
            }
        }
        let map = Self { entries };
        map.validate(topology)?;
        Ok(map)
    }

    pub fn to_toml_string(&self) -> String {
        let flows = self
            .entries
            .iter()
            .map(|(id, terms)| (id.clone(), format_expression(terms)))
            .collect();
        toml::to_string(&MapFile { flows }).expect("map serializes")
    }

    /// Checks that every term names a flow sensor and that each expression
    /// reproduces its component's flow by continuity.
    pub fn validate(&self, topology: &NetworkTopology) -> Result<(), AugmentError> {
        let n = topology.consumers.len();
        for (id, terms) in &self.entries {
            let e = topology
                .edge_index(id)
                .ok_or_else(|| AugmentError::Config(format!("unknown component {id}")))?;
            let mut weight = vec![0.0; n];
            for t in terms {
                if !topology.sensors.mass_flow.contains(&t.sensor) {
                    return Err(AugmentError::Config(format!("{id}: {} carries no flow sensor", t.sensor)));
                }
                for &c in topology.consumers_served(topology.edge_index(&t.sensor).expect("sensor edge")) {
                    weight[c] += t.sign;
                }
            }
            let served = topology.consumers_served(e);
            if (0..n).any(|c| weight[c] != served.contains(&c) as i32 as f64) {
                return Err(AugmentError::Config(format!(
                    "flow through {id} is not determined by `{}`",
                    format_expression(terms)
                )));
            }
        }
        Ok(())
    }

    pub fn terms(&self, component: &str) -> Option<&[FlowTerm]> {
        self.entries
            .iter()
            .find(|(id, _)| id == component)
            .map(|(_, t)| t.as_slice())
    }
}

fn component_edges(topology: &NetworkTopology) -> Vec<usize> {
    (0..topology.pipes.len())
        .map(|p| topology.pipe_edge(p))
        .chain((0..topology.valves.len()).map(|v| topology.valve_edge(v)))
        .collect()
}

fn parse_expression(id: &str, expr: &str) -> Result<Vec<FlowTerm>, AugmentError> {
    let mut terms = Vec::new();
    let mut sign = 1.0;
    let mut expect_operand = true;
    for tok in expr.split_whitespace() {
        match (tok, expect_operand) {
            ("+", false) => {
                sign = 1.0;
                expect_operand = true;
            }
            ("-", false) => {
                sign = -1.0;
                expect_operand = true;
            }
            ("-", true) if terms.is_empty() => sign = -sign,
            (name, true) if name != "+" && name != "-" => {
                terms.push(FlowTerm {
                    sensor: name.to_string(),
                    sign,
                });
                expect_operand = false;
            }
            _ => return Err(AugmentError::Config(format!("{id}: malformed flow expression `{expr}`"))),
        }
    }
    if expect_operand {
        return Err(AugmentError::Config(format!("{id}: malformed flow expression `{expr}`")));
    }
    Ok(terms)
}

fn format_expression(terms: &[FlowTerm]) -> String {
    let mut out = String::new();
    for (i, t) in terms.iter().enumerate() {
        match (i, t.sign < 0.0) {
            (0, false) => {}
            (0, true) => out.push_str("- "),
            (_, false) => out.push_str(" + "),
            (_, true) => out.push_str(" - "),
        }
        out.push_str(&t.sensor);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentOpts {
    /// Nominal water temperature for the heat-loss estimate, °C.
    pub t_nominal: f64,
    /// Nominal ambient temperature, °C.
    pub t_ambient_nominal: f64,
    /// Flows below this magnitude (kg/s) get the capped temperature drop.
    pub flow_floor: f64,
    /// Upper bound on the derived temperature drop, K.
    pub max_temperature_drop: f64,
    pub friction: FrictionModel,
    /// `None` derives the map from the topology.
    pub map: Option<AugmentationMap>,
}

impl Default for AugmentOpts {
    fn default() -> Self {
        Self {
            t_nominal: 70.0,
            t_ambient_nominal: 10.0,
            flow_floor: 1e-6,
            max_temperature_drop: 50.0,
            friction: FrictionModel::default(),
            map: None,
        }
    }
}

/// Measured flows followed by the derived nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedFrames {
    /// Columns: flows, `dp` per pipe, `dt` per pipe, `dp` per valve.
    pub table: SensorTable,
    pub provenance: Vec<Provenance>,
}

impl AugmentedFrames {
    pub fn feature_names(&self) -> Vec<String> {
        self.table.names()
    }
}

/// Extends the measured mass flows with per-pipe pressure and temperature
/// drops and per-valve pressure drops.
///
/// Pipe and valve flows come from the augmentation map. The heat rate behind
/// each temperature drop is the nominal `ka·(T_nom − T_amb,nom)`, since no
/// temperatures are measured at this stage.
pub fn augment_physics(
    table: &SensorTable,
    topology: &NetworkTopology,
    fluid: &FluidProps,
    opts: &AugmentOpts,
) -> Result<AugmentedFrames, AugmentError> {
    let derived;
    let map = match &opts.map {
        Some(m) => {
            m.validate(topology)?;
            m
        }
        None => {
            derived = AugmentationMap::derive(topology)?;
            &derived
        }
    };
    log::info!(
        "augmenting with nominal heat loss at {} °C water / {} °C ambient",
        opts.t_nominal,
        opts.t_ambient_nominal
    );

    let sensor_columns: Vec<&[f64]> = topology
        .sensors
        .mass_flow
        .iter()
        .map(|id| {
            table
                .column(&format!("mdot_{id}"))
                .ok_or_else(|| AugmentError::Schema(format!("table has no mass-flow column for {id}")))
        })
        .collect::<Result<_, _>>()?;
    let sensor_pos = |name: &str| topology.sensors.mass_flow.iter().position(|s| s == name).expect("validated");
    let rows = table.n_rows();
    let flow_of = |component: &str| -> Vec<f64> {
        let terms = map.terms(component).expect("map covers every component");
        (0..rows)
            .map(|r| {
                terms
                    .iter()
                    .map(|t| t.sign * sensor_columns[sensor_pos(&t.sensor)][r])
                    .sum::<f64>()
                    .abs()
            })
            .collect()
    };

    let mut out = SensorTable::new(table.time.clone());
    let mut provenance = Vec::new();
    for (id, col) in topology.sensors.mass_flow.iter().zip(&sensor_columns) {
        out.push_column(ColumnMeta::new(SensorKind::MassFlow, id), col.to_vec())?;
        provenance.push(Provenance::Physical);
    }
    let pipe_flows: Vec<Vec<f64>> = topology.pipes.iter().map(|p| flow_of(&p.id)).collect();
    for (pipe, flows) in topology.pipes.iter().zip(&pipe_flows) {
        let dp = flows
            .iter()
            .map(|&m| darcy_pressure_drop_with(m, pipe, fluid, opts.friction))
            .collect::<Result<Vec<_>, _>>()?;
        out.push_column(ColumnMeta::new(SensorKind::PressureDrop, &pipe.id), dp)?;
        provenance.push(Provenance::Derived);
    }
    for (pipe, flows) in topology.pipes.iter().zip(&pipe_flows) {
        // kW
        let qdot = pipe.heat_transfer * (opts.t_nominal - opts.t_ambient_nominal) / 1000.0;
        let dt = flows
            .iter()
            .map(|&m| {
                if m < opts.flow_floor {
                    Ok(opts.max_temperature_drop)
                } else {
                    temperature_drop_from_heat(qdot, m, fluid).map(|d| d.min(opts.max_temperature_drop))
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        out.push_column(ColumnMeta::new(SensorKind::TemperatureDrop, &pipe.id), dt)?;
        provenance.push(Provenance::Derived);
    }
    for valve in &topology.valves {
        let dp = flow_of(&valve.id)
            .into_iter()
            .map(|m| valve_pressure_drop(m, valve, fluid))
            .collect();
        out.push_column(ColumnMeta::new(SensorKind::PressureDrop, &valve.id), dp)?;
        provenance.push(Provenance::Derived);
    }
    Ok(AugmentedFrames { table: out, provenance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hydro::darcy_pressure_drop;
    use crate::sim::{
        generate_dataset, solve_steady_state, synthesize_weather, DatasetOpts, DemandLaw, SteadyOpts, WeatherProfile,
    };

    fn flows_table(net: &NetworkTopology, values: &[Vec<f64>]) -> SensorTable {
        let mut t = SensorTable::new((0..values[0].len() as u64).collect());
        for (id, v) in net.sensors.mass_flow.iter().zip(values) {
            t.push_column(ColumnMeta::new(SensorKind::MassFlow, id), v.clone()).unwrap();
        }
        t
    }

    #[test]
    fn derived_map_for_default_network() {
        let net = NetworkTopology::default_network();
        let map = AugmentationMap::derive(&net).unwrap();
        let expr = |id: &str| format_expression(map.terms(id).unwrap());
        assert_eq!(expr("FP0"), "FP0");
        assert_eq!(expr("FP1"), "FP2 + FP3");
        assert_eq!(expr("FP4"), "FP5 + FP6");
        assert_eq!(expr("RP0"), "FP0");
        assert_eq!(expr("RP3"), "FP3");
        assert_eq!(expr("VC"), "FP5");
        assert_eq!(map.entries.len(), 18);
    }

    #[test]
    fn map_file_round_trip_and_rejections() {
        let net = NetworkTopology::default_network();
        let map = AugmentationMap::derive(&net).unwrap();
        let text = map.to_toml_string();
        assert_eq!(AugmentationMap::from_toml_str(&text, &net).unwrap(), map);

        // continuity alternative for FP1 is accepted
        let alt = text.replace("FP1 = \"FP2 + FP3\"", "FP1 = \"FP0 - FP5 - FP6\"");
        assert_ne!(alt, text);
        let m = AugmentationMap::from_toml_str(&alt, &net).unwrap();
        assert_eq!(m.terms("FP1").unwrap().len(), 3);

        let wrong = text.replace("FP1 = \"FP2 + FP3\"", "FP1 = \"FP2\"");
        let err = AugmentationMap::from_toml_str(&wrong, &net).unwrap_err();
        assert!(err.to_string().contains("FP1"), "{err}");
        let malformed = text.replace("FP1 = \"FP2 + FP3\"", "FP1 = \"FP2 + + FP3\"");
        assert!(AugmentationMap::from_toml_str(&malformed, &net).is_err());
    }

    #[test]
    fn unresolvable_pipe_is_named() {
        let mut file = NetworkTopology::default_network().to_file();
        // without FP0 and FP6 nothing sees consumer D
        file.sensors.mass_flow = vec!["FP2".into(), "FP3".into(), "FP5".into()];
        let net = NetworkTopology::from_file(file).unwrap();
        let err = AugmentationMap::derive(&net).unwrap_err();
        assert!(err.to_string().contains("through FP0"), "{err}");
    }

    #[test]
    fn feature_layout_and_zero_flows() {
        let net = NetworkTopology::default_network();
        let t = flows_table(&net, &vec![vec![0.0; 3]; 5]);
        let aug = augment_physics(&t, &net, &FluidProps::water(), &AugmentOpts::default()).unwrap();
        assert_eq!(aug.table.n_columns(), 5 + 2 * 14 + 4);
        assert_eq!(aug.provenance.iter().filter(|p| **p == Provenance::Physical).count(), 5);
        for i in aug.table.indices_of(SensorKind::PressureDrop) {
            assert!(aug.table.column_at(i).iter().all(|&v| v == 0.0));
        }
        for i in aug.table.indices_of(SensorKind::TemperatureDrop) {
            assert!(aug.table.column_at(i).iter().all(|&v| v == 50.0));
        }
        let names = aug.feature_names();
        assert_eq!(names[5], "dp_FP0");
        assert_eq!(names[19], "dt_FP0");
        assert_eq!(names[33], "dp_VA");
    }

    #[test]
    fn trunk_drop_matches_core_formula() {
        let net = NetworkTopology::default_network();
        let t = flows_table(&net, &[vec![0.4], vec![0.1], vec![0.1], vec![0.1], vec![0.1]]);
        let fluid = FluidProps::water();
        let aug = augment_physics(&t, &net, &fluid, &AugmentOpts::default()).unwrap();
        let expect = darcy_pressure_drop(0.4, &net.pipes[0], &fluid).unwrap();
        assert_eq!(aug.table.column("dp_FP0").unwrap()[0], expect);
        // 3.02 W/K · 60 K = 0.1812 kW over 0.4 kg/s
        let dt = aug.table.column("dt_FP0").unwrap()[0];
        assert!((dt - 0.1812 / (0.4 * 4.18)).abs() < 1e-15);
    }

    #[test]
    fn noise_propagates_into_drops() {
        let net = NetworkTopology::default_network();
        let fluid = FluidProps::water();
        let clean = flows_table(&net, &vec![vec![0.05, 0.06]; 5]);
        let noisy = crate::augment::inject_noise(&clean, 0.01, 3);
        let a = augment_physics(&clean, &net, &fluid, &AugmentOpts::default()).unwrap();
        let b = augment_physics(&noisy, &net, &fluid, &AugmentOpts::default()).unwrap();
        assert_ne!(a.table.column("dp_FP1"), b.table.column("dp_FP1"));
    }

    #[test]
    fn clean_data_reproduces_simulated_pipe_drops() {
        let net = NetworkTopology::default_network();
        let fluid = FluidProps::water();
        let weather = synthesize_weather(72, 11, &WeatherProfile::default());
        let table = generate_dataset(&net, &weather, &fluid, &DatasetOpts::default()).unwrap();
        let aug = augment_physics(&table, &net, &fluid, &AugmentOpts::default()).unwrap();
        let law = DemandLaw::default();
        for (h, &t_amb) in weather.hourly.iter().enumerate() {
            let q: Vec<f64> = net.consumers.iter().map(|c| law.demand(c, t_amb)).collect();
            let s = solve_steady_state(&net, &q, &fluid, t_amb, &SteadyOpts::default()).unwrap();
            for (p, pipe) in net.pipes.iter().enumerate() {
                let got = aug.table.column(&format!("dp_{}", pipe.id)).unwrap()[h];
                let rel = (got - s.pipe_drops[p]).abs() / s.pipe_drops[p];
                assert!(rel < 1e-9, "{} hour {h}: {rel}", pipe.id);
            }
        }
    }
}
