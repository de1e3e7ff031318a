//! Physics-based augmentation of the mass-flow sensors: derived pressure and
//! temperature drops per pipe, checked against the simulator's own drops.
//!
//! cargo run --release --example augment_features -- [hours] [sigma]

use dh_softsense::augment::{augment_physics, inject_noise, AugmentOpts, Provenance};
use dh_softsense::hydro::FluidProps;
use dh_softsense::sim::{
    generate_dataset, solve_steady_state, synthesize_weather, DatasetOpts, DemandLaw, NetworkTopology, SteadyOpts,
    WeatherProfile,
};

fn main() -> anyhow::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let hours: usize = args.first().map_or(Ok(24), |s| s.parse())?;
    let sigma: f64 = args.get(1).map_or(Ok(0.1), |s| s.parse())?;

    let net = NetworkTopology::default_network();
    let fluid = FluidProps::water();
    let weather = synthesize_weather(hours, 3, &WeatherProfile::default());
    let table = generate_dataset(&net, &weather, &fluid, &DatasetOpts::default())?;
    let clean = augment_physics(&table, &net, &fluid, &AugmentOpts::default())?;
    let derived = clean.provenance.iter().filter(|p| **p == Provenance::Derived).count();
    println!(
        "{} flow sensors + {derived} derived nodes over {hours} hours",
        clean.provenance.len() - derived
    );

    // simulator drops, hour by hour
    let law = DemandLaw::default();
    let mut worst: f64 = 0.0;
    for (h, &t_amb) in weather.hourly.iter().enumerate() {
        let q: Vec<f64> = net.consumers.iter().map(|c| law.demand(c, t_amb)).collect();
        let state = solve_steady_state(&net, &q, &fluid, t_amb, &SteadyOpts::default())?;
        for (p, pipe) in net.pipes.iter().enumerate() {
            let got = clean.table.column(&format!("dp_{}", pipe.id)).expect("pipe drop column")[h];
            worst = worst.max((got - state.pipe_drops[p]).abs() / state.pipe_drops[p]);
        }
    }
    println!("largest relative |dp| error against the simulator: {worst:.2e}");

    let noisy = augment_physics(&inject_noise(&table, sigma, 1), &net, &fluid, &AugmentOpts::default())?;
    println!("{:<10} {:>14} {:>14}", "column", "clean h0", format!("sigma={sigma}"));
    for name in clean.feature_names().iter().take(12) {
        let a = clean.table.column(name).expect("column")[0];
        let b = noisy.table.column(name).expect("column")[0];
        println!("{name:<10} {a:>14.6} {b:>14.6}");
    }
    Ok(())
}
