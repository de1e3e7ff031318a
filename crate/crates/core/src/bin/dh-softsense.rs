use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use dh_softsense::augment::{augment_physics, AugmentOpts, FeatureSet, Provenance};
use dh_softsense::experiment::{
    emit_report, load_table, prepare_variant, run_cell, run_experiment_with, scenario_table, ExperimentConfig,
    MetricsReport, Scenario, REPORT_FILE,
};
use dh_softsense::hydro::FluidProps;
use dh_softsense::nn::Architecture;
use dh_softsense::sim::{export_table, NetworkTopology};

/// District heating soft sensing: simulate, augment, train and compare.
#[derive(Parser)]
#[command(name = "dh-softsense", version)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,
    /// Experiment config (TOML); flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    scenario: Option<Scenario>,
    /// Noise std on mass flows in kg/s (noisy scenario).
    #[arg(long, global = true)]
    sigma: Option<f64>,
    /// Comma-separated architectures.
    #[arg(long, global = true, value_delimiter = ',')]
    arch: Option<Vec<Architecture>>,
    /// Comma-separated seeds.
    #[arg(long, global = true, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long, global = true)]
    rows: Option<usize>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Print the default config and exit.
    #[arg(long, global = true)]
    print_defaults: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the network and write the sensor table.
    Generate,
    /// Write the table with physics-derived drop columns.
    Augment,
    /// Train one cell: the first architecture and seed.
    Train {
        #[arg(long, default_value = "physics-enhanced", value_parser = parse_variant)]
        variant: FeatureSet,
    },
    /// Train the full grid and write the report.
    Sweep,
    /// Re-render tables and plot data from a stored report.
    Report,
}

fn parse_variant(s: &str) -> Result<FeatureSet, String> {
    match s {
        "data-driven" => Ok(FeatureSet::DataDriven),
        "physics-enhanced" => Ok(FeatureSet::PhysicsEnhanced),
        _ => Err(format!("unknown variant {s:?} (data-driven or physics-enhanced)")),
    }
}

fn config(cli: &Cli) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::from_path(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.scenario {
        cfg.scenario = s;
    }
    if let Some(s) = cli.sigma {
        cfg.sigma = s;
    }
    if let Some(a) = &cli.arch {
        cfg.architectures = a.clone();
    }
    if let Some(s) = &cli.seeds {
        cfg.seeds = s.clone();
    }
    if let Some(r) = cli.rows {
        cfg.rows = r;
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if cli.print_defaults {
        print!("{}", ExperimentConfig::default().to_toml_string());
        return Ok(());
    }
    let Some(command) = &cli.command else {
        bail!("no command given; see --help");
    };
    let cfg = config(&cli)?;
    let out = &cfg.out_dir;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let topology = NetworkTopology::default_network();
    match command {
        Command::Generate => {
            let table = load_table(&cfg, &topology)?;
            let path = out.join("dataset.csv");
            export_table(&table, &path)?;
            println!("{} rows × {} columns → {}", table.n_rows(), table.n_columns(), path.display());
        }
        Command::Augment => {
            let table = scenario_table(&cfg, &load_table(&cfg, &topology)?);
            let aug = augment_physics(&table, &topology, &FluidProps::water(), &AugmentOpts::default())?;
            let path = out.join("augmented.csv");
            export_table(&aug.table, &path)?;
            let derived = aug.provenance.iter().filter(|p| **p == Provenance::Derived).count();
            println!(
                "{} physical + {derived} derived columns ({}) → {}",
                aug.provenance.len() - derived,
                cfg.scenario,
                path.display()
            );
        }
        Command::Train { variant } => {
            let table = scenario_table(&cfg, &load_table(&cfg, &topology)?);
            let data = prepare_variant(&cfg, &table, &topology, *variant)?;
            let cell = run_cell(&cfg, &data, cfg.architectures[0], cfg.seeds[0])?;
            let dir = out.join("cells");
            cell.write_artifacts(&dir)?;
            let path = dir.join(cell.slug()).join("cell.json");
            std::fs::write(&path, serde_json::to_string_pretty(&cell.result)? + "\n")?;
            let m = cell.result.test;
            println!(
                "{}: rmse {:.4e}, mae {:.4e}, accuracy {:.4} after {} epochs → {}",
                cell.slug(),
                m.rmse,
                m.mae,
                m.accuracy,
                cell.result.epochs_run,
                path.parent().unwrap_or(out).display()
            );
        }
        Command::Sweep => {
            let cells = out.join("cells");
            let report = run_experiment_with(&cfg, |c| c.write_artifacts(&cells))?;
            emit_report(&report, out)?;
            print!("{}", report.table());
        }
        Command::Report => {
            let report = MetricsReport::load(out.join(REPORT_FILE))?;
            emit_report(&report, out)?;
            print!("{}", report.table());
        }
    }
    Ok(())
}
