//! Train one architecture on a simulated dataset and report test error.
//!
//! Usage: train_model [arch] [feature-set] [rows] [max_epochs] [patience]

use std::time::Instant;

use dh_softsense::augment::{prepare_samples, FeatureSet, PrepareOpts};
use dh_softsense::hydro::FluidProps;
use dh_softsense::nn::{evaluate, train, Architecture, GraphBatch, GraphDataset, Model, ModelConfig};
use dh_softsense::sim::{generate_dataset, synthesize_weather, DatasetOpts, NetworkTopology, WeatherProfile};

fn main() -> anyhow::Result<()> {
    env_logger::init();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arch: Architecture = args.first().map_or("gatv2", String::as_str).parse()?;
    let feature_set = match args.get(1).map(String::as_str) {
        Some("data-driven") => FeatureSet::DataDriven,
        _ => FeatureSet::PhysicsEnhanced,
    };
    let rows: usize = args.get(2).map_or(Ok(2000), |s| s.parse())?;
    let max_epochs: usize = args.get(3).map_or(Ok(50), |s| s.parse())?;
    let patience: usize = args.get(4).map_or(Ok(10), |s| s.parse())?;

    let net = NetworkTopology::default_network();
    let fluid = FluidProps::water();
    let weather = synthesize_weather(rows, 7, &WeatherProfile::default());
    let table = generate_dataset(&net, &weather, &fluid, &DatasetOpts::default())?;
    let t0 = Instant::now();
    let data = prepare_samples(&table, &net, &fluid, feature_set, &PrepareOpts::default())?;
    let (n_nodes, n_targets) = (data.n_nodes(), data.n_targets());
    let train_set = GraphDataset::new(data.train)?;
    let val_set = GraphDataset::new(data.val)?;
    let test_set = GraphDataset::new(data.test)?;
    println!(
        "{} nodes, {} targets, {}/{}/{} samples, prepared in {:.2}s",
        n_nodes,
        n_targets,
        train_set.len(),
        val_set.len(),
        test_set.len(),
        t0.elapsed().as_secs_f64()
    );

    let cfg = ModelConfig {
        architecture: arch,
        max_epochs,
        patience,
        ..ModelConfig::default()
    };
    let mut model = Model::new(&cfg, n_nodes, n_targets)?;
    println!("{arch} ({}) with {} parameters", feature_set.label(), model.params().n_scalars());
    let t0 = Instant::now();
    let report = train(&mut model, &train_set, &val_set)?;
    let secs = t0.elapsed().as_secs_f64();
    let test_batches: Vec<GraphBatch> = test_set.batches(cfg.batch_size, model.needs_laplacian()).collect();
    println!(
        "{} epochs in {:.2}s ({:.3}s/epoch), best epoch {}, val mse {:.4e}, test mse {:.4e}",
        report.epochs_run(),
        secs,
        secs / report.epochs_run() as f64,
        report.best_epoch,
        report.best_val_loss,
        evaluate(&model, &test_batches)?
    );
    Ok(())
}
