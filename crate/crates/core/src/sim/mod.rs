//! Four-consumer network, weather and demand synthesis, hourly steady states
//! and the sensor dataset.

mod dataset;
mod solver;
mod table;
mod topology;
mod weather;

use thiserror::Error;

use crate::hydro::PhysicsError;

pub use dataset::{declared_columns, generate_dataset, DatasetOpts};
pub use solver::{solve_steady_state, SteadyOpts, SteadyState};
pub use table::{export_table, import_table, ColumnMeta, SensorKind, SensorTable, TableError};
pub use topology::{
    ConsumerRecord, ConsumerSpec, Edge, EdgeKind, Junction, NetworkTopology, PipeRecord, SensorPlacement,
    SensorRecord, Side, SourceRecord, SourceSpec, TopologyFile, ValveRecord,
};
pub use weather::{demands_from_weather, synthesize_weather, DemandLaw, WeatherProfile, WeatherSeries};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid topology: {0}")]
    Topology(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Physics(#[from] PhysicsError),
    #[error("expected {expected} demands, got {got}")]
    DemandCount { expected: usize, got: usize },
    #[error("demand {demand} kW of consumer {consumer} is below its floor {floor} kW")]
    DemandBelowFloor { consumer: String, demand: f64, floor: f64 },
    #[error("infeasible demand: non-positive approach temperature at consumer {consumer} (inlet {inlet_temperature} °C)")]
    InfeasibleDemand { consumer: String, inlet_temperature: f64 },
    #[error("steady state did not converge after {iterations} iterations (last change {residual:e} K)")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("hour {hour}: {source}")]
    AtHour {
        hour: usize,
        #[source]
        source: Box<SimError>,
    },
}
