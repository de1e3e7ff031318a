//! Finite-difference check of the reverse-mode gradients of every
//! architecture, end to end through the MSE loss.
//!
//! cargo run --release --example gradient_check -- [seeds]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dh_softsense::augment::{build_adjacency, AdjacencyOpts, GraphSample};
use dh_softsense::nn::{check_gradients, Architecture, GraphBatch, Model, ModelConfig};

fn random_sample(rng: &mut ChaCha8Rng, start: usize, n: usize, t: usize, targets: usize) -> anyhow::Result<GraphSample> {
    let x: Vec<f64> = (0..n * t).map(|_| rng.random_range(0.0..1.0)).collect();
    let adjacency = build_adjacency(&x, n, t, &AdjacencyOpts::default())?;
    Ok(GraphSample {
        start,
        n_nodes: n,
        window: t,
        x,
        adjacency,
        y: (0..targets).map(|_| rng.random_range(0.0..1.0)).collect(),
    })
}

fn main() -> anyhow::Result<()> {
    let seeds: u64 = std::env::args().nth(1).map_or(Ok(5), |s| s.parse())?;
    let (n, t, targets) = (5, 4, 3);
    println!("{:<12} {:>8} {:>14}", "model", "params", "max rel error");
    for arch in Architecture::ALL {
        let mut worst: f64 = 0.0;
        let mut n_params = 0;
        for seed in 0..seeds {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let samples = (0..3)
                .map(|k| random_sample(&mut rng, k, n, t, targets))
                .collect::<anyhow::Result<Vec<_>>>()?;
            let batch = GraphBatch::from_samples(&samples.iter().collect::<Vec<_>>())?;
            let cfg = ModelConfig {
                architecture: arch,
                graph_hidden: 3,
                mlp_hidden: 6,
                heads: 2,
                cheb_order: 3,
                window: t,
                cnn_channels: 2,
                seed,
                ..ModelConfig::default()
            };
            let model = Model::new(&cfg, n, targets)?;
            n_params = model.params().n_scalars();
            let errs = check_gradients(
                model.params().tensors(),
                |tape, vars| model.loss(tape, vars, &batch),
                1e-5,
                Some(30),
                &mut rng,
            )?;
            worst = errs.into_iter().fold(worst, f64::max);
        }
        println!("{:<12} {:>8} {:>14.2e}", arch.name(), n_params, worst);
    }
    Ok(())
}
