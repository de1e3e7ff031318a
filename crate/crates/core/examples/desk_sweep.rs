//! A reduced sweep: both variants of the chosen architectures on a short
//! simulated record, with the report files written to a directory.
//!
//! cargo run --release --example desk_sweep -- [out_dir] [rows] [max_epochs] [archs]

use dh_softsense::experiment::{emit_report, run_experiment, ExperimentConfig};
use dh_softsense::nn::Architecture;

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let out = args.first().map_or("runs/example", String::as_str);
    let mut cfg = ExperimentConfig {
        rows: args.get(1).map_or(Ok(600), |s| s.parse())?,
        seeds: vec![0, 1],
        ..ExperimentConfig::default()
    };
    cfg.model.max_epochs = args.get(2).map_or(Ok(6), |s| s.parse())?;
    cfg.architectures = match args.get(3) {
        Some(list) => list.split(',').map(str::parse).collect::<Result<Vec<Architecture>, _>>()?,
        None => vec![Architecture::Mlp, Architecture::Chebynet, Architecture::Gatv2],
    };

    let report = run_experiment(&cfg)?;
    for path in emit_report(&report, out)? {
        println!("wrote {}", path.display());
    }
    print!("{}", report.table());
    Ok(())
}
