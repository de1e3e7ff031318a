//! Simulates a year of hourly operation on the shipped network and writes the
//! sensor table.
//!
//! cargo run --release --example simulate_year -- [hours] [seed] [out.csv]

use dh_softsense::hydro::FluidProps;
use dh_softsense::sim::{
    export_table, generate_dataset, synthesize_weather, DatasetOpts, NetworkTopology, SensorKind, WeatherProfile,
};

fn main() -> anyhow::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let hours = args.first().map_or(Ok(8760), |s| s.parse())?;
    let seed = args.get(1).map_or(Ok(7), |s| s.parse())?;

    let net = NetworkTopology::default_network();
    let weather = synthesize_weather(hours, seed, &WeatherProfile::default());
    let started = std::time::Instant::now();
    let table = generate_dataset(&net, &weather, &FluidProps::water(), &DatasetOpts::default())?;
    println!("{} rows x {} columns in {:.2?}", table.n_rows(), table.n_columns(), started.elapsed());

    for kind in [SensorKind::MassFlow, SensorKind::Pressure, SensorKind::Temperature, SensorKind::Demand] {
        let mut lo = (f64::INFINITY, String::new());
        let mut hi = (f64::NEG_INFINITY, String::new());
        for i in table.indices_of(kind) {
            let name = table.columns()[i].name();
            for &v in table.column_at(i) {
                if v < lo.0 {
                    lo = (v, name.clone());
                }
                if v > hi.0 {
                    hi = (v, name.clone());
                }
            }
        }
        println!(
            "{:<6} min {:>12.4} ({})  max {:>12.4} ({})",
            kind.prefix(),
            lo.0,
            lo.1,
            hi.0,
            hi.1
        );
    }

    if let Some(path) = args.get(2) {
        export_table(&table, path)?;
        println!("wrote {path}");
    }
    Ok(())
}
