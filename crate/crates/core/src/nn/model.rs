use std::fmt;
use std::rc::Rc;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::GraphBatch;
use super::layers::{shift_index, ChebConv, FgoLayer, GatV2Conv, Linear, Params, TransformerConv};
use super::{NnError, Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    Mlp,
    Cnn,
    Chebynet,
    Gatv2,
    Transformer,
    Fgo,
}

impl Architecture {
    pub const ALL: [Architecture; 6] = [
        Architecture::Mlp,
        Architecture::Cnn,
        Architecture::Chebynet,
        Architecture::Gatv2,
        Architecture::Transformer,
        Architecture::Fgo,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Architecture::Mlp => "mlp",
            Architecture::Cnn => "cnn",
            Architecture::Chebynet => "chebynet",
            Architecture::Gatv2 => "gatv2",
            Architecture::Transformer => "transformer",
            Architecture::Fgo => "fgo",
        }
    }

    pub fn is_graph(self) -> bool {
        !matches!(self, Architecture::Mlp | Architecture::Cnn)
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Architecture {
    type Err = NnError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Architecture::ALL
            .into_iter()
            .find(|a| a.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| NnError::Config(format!("unknown architecture {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Selu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub architecture: Architecture,
    pub graph_hidden: usize,
    pub mlp_hidden: usize,
    pub heads: usize,
    /// Number of Chebyshev terms `T_0..T_{order−1}`.
    pub cheb_order: usize,
    pub window: usize,
    pub activation: Activation,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
    /// Feed the raw node features to the readout alongside both layers.
    pub x_skip: bool,
    pub cnn_channels: usize,
    /// Reshuffle training samples every epoch (seeded).
    pub shuffle: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            architecture: Architecture::Gatv2,
            graph_hidden: 16,
            mlp_hidden: 128,
            heads: 5,
            cheb_order: 4,
            window: 8,
            activation: Activation::Selu,
            learning_rate: 3e-4,
            batch_size: 64,
            patience: 200,
            max_epochs: 3000,
            seed: 0,
            x_skip: false,
            cnn_channels: 16,
            shuffle: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        let positive = [
            ("graph_hidden", self.graph_hidden),
            ("mlp_hidden", self.mlp_hidden),
            ("heads", self.heads),
            ("cheb_order", self.cheb_order),
            ("window", self.window),
            ("batch_size", self.batch_size),
            ("cnn_channels", self.cnn_channels),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(NnError::Config(format!("{name} must be at least 1")));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(NnError::Config(format!("learning rate {} is invalid", self.learning_rate)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum Body {
    Mlp,
    Cnn { conv: Linear },
    Cheb { g1: ChebConv, g2: ChebConv },
    Gat { g1: GatV2Conv, g2: GatV2Conv },
    Transformer { g1: TransformerConv, g2: TransformerConv },
    Fgo { embed: usize, f1: FgoLayer, f2: FgoLayer },
}

/// Two graph layers with SELU, then an MLP readout on the flattened
/// `[H1 ‖ H2]` node features of each sample; or one of the baselines.
#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    n_nodes: usize,
    n_targets: usize,
    params: Params,
    body: Body,
    readout_in: Linear,
    readout_out: Linear,
}

impl Model {
    pub fn new(config: &ModelConfig, n_nodes: usize, n_targets: usize) -> Result<Self, NnError> {
        config.validate()?;
        if n_nodes == 0 || n_targets == 0 {
            return Err(NnError::Config("model needs at least one node and one target".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = Params::new();
        let (t, d, h) = (config.window, config.graph_hidden, config.heads);
        let skip = if config.x_skip { t } else { 0 };
        let (body, per_sample) = match config.architecture {
            Architecture::Mlp => (Body::Mlp, n_nodes * t),
            Architecture::Cnn => {
                let conv = Linear::new(&mut params, "conv", 3, config.cnn_channels, &mut rng);
                (Body::Cnn { conv }, n_nodes * t * config.cnn_channels)
            }
            Architecture::Chebynet => {
                let k = config.cheb_order - 1;
                let g1 = ChebConv::new(&mut params, "g1", t, d, k, &mut rng);
                let g2 = ChebConv::new(&mut params, "g2", d, d, k, &mut rng);
                (Body::Cheb { g1, g2 }, n_nodes * (2 * d + skip))
            }
            Architecture::Gatv2 => {
                let g1 = GatV2Conv::new(&mut params, "g1", t, d, h, true, &mut rng);
                let g2 = GatV2Conv::new(&mut params, "g2", h * d, d, h, false, &mut rng);
                (Body::Gat { g1, g2 }, n_nodes * (h * d + d + skip))
            }
            Architecture::Transformer => {
                let g1 = TransformerConv::new(&mut params, "g1", t, d, h, true, &mut rng);
                let g2 = TransformerConv::new(&mut params, "g2", h * d, d, h, false, &mut rng);
                (Body::Transformer { g1, g2 }, n_nodes * (h * d + d + skip))
            }
            Architecture::Fgo => {
                let n = n_nodes * t;
                let embed = params.add("embed", Tensor::glorot(1, d, &mut rng));
                let f1 = FgoLayer::new(&mut params, "f1", n, d, d, &mut rng);
                let f2 = FgoLayer::new(&mut params, "f2", n, d, d, &mut rng);
                let skip = if config.x_skip { 1 } else { 0 };
                (Body::Fgo { embed, f1, f2 }, n * (2 * d + skip))
            }
        };
        let readout_in = Linear::new(&mut params, "readout.0", per_sample, config.mlp_hidden, &mut rng);
        let readout_out = Linear::new(&mut params, "readout.1", config.mlp_hidden, n_targets, &mut rng);
        Ok(Self {
            config: config.clone(),
            n_nodes,
            n_targets,
            params,
            body,
            readout_in,
            readout_out,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    /// Whether batches must carry scaled Laplacians.
    pub fn needs_laplacian(&self) -> bool {
        matches!(self.body, Body::Cheb { .. })
    }

    pub fn n_targets(&self) -> usize {
        self.n_targets
    }

    fn check_batch(&self, batch: &GraphBatch) -> Result<(), NnError> {
        if batch.n_targets != self.n_targets {
            return Err(NnError::Shape(format!(
                "batch has {} targets, model predicts {}",
                batch.n_targets, self.n_targets
            )));
        }
        if batch.n_nodes != self.n_nodes || batch.width != self.config.window {
            return Err(NnError::Shape(format!(
                "batch has {} nodes × {} steps, model expects {} × {}",
                batch.n_nodes, batch.width, self.n_nodes, self.config.window
            )));
        }
        Ok(())
    }

    /// Predictions, `n_samples × n_targets`.
    pub fn forward(&self, tape: &mut Tape, p: &[Var], batch: &GraphBatch) -> Result<Var, NnError> {
        self.check_batch(batch)?;
        let b = batch.n_samples;
        let x = tape.constant(batch.x.clone());
        let rows = batch.x.rows();
        let t = batch.width;
        let features = match &self.body {
            Body::Mlp => x,
            Body::Cnn { conv } => {
                let flat = tape.reshape(x, rows * t, 1)?;
                let left = tape.gather_rows(flat, shift_index(rows * t, t, -1))?;
                let right = tape.gather_rows(flat, shift_index(rows * t, t, 1))?;
                let cols = tape.concat_cols(&[left, flat, right])?;
                let y = conv.forward(tape, p, cols)?;
                tape.selu(y)
            }
            Body::Cheb { g1, g2 } => {
                let lap = batch.laplacian()?;
                let h1 = g1.forward(tape, p, x, lap)?;
                let h1 = tape.selu(h1);
                let h2 = g2.forward(tape, p, h1, lap)?;
                let h2 = tape.selu(h2);
                self.node_readout(tape, x, h1, h2)?
            }
            Body::Gat { g1, g2 } => {
                let h1 = g1.forward(tape, p, x, &batch.edges_loops)?;
                let h1 = tape.selu(h1);
                let h2 = g2.forward(tape, p, h1, &batch.edges_loops)?;
                let h2 = tape.selu(h2);
                self.node_readout(tape, x, h1, h2)?
            }
            Body::Transformer { g1, g2 } => {
                let h1 = g1.forward(tape, p, x, &batch.edges)?;
                let h1 = tape.selu(h1);
                let h2 = g2.forward(tape, p, h1, &batch.edges)?;
                let h2 = tape.selu(h2);
                self.node_readout(tape, x, h1, h2)?
            }
            Body::Fgo { embed, f1, f2 } => {
                let scalars = tape.reshape(x, rows * t, 1)?;
                let h0 = tape.matmul(scalars, p[*embed])?;
                let h1 = f1.forward(tape, p, h0)?;
                let h1 = tape.selu(h1);
                let h2 = f2.forward(tape, p, h1)?;
                let h2 = tape.selu(h2);
                self.node_readout(tape, scalars, h1, h2)?
            }
        };
        let width = tape.value(features).len() / b;
        let flat = tape.reshape(features, b, width)?;
        let hidden = self.readout_in.forward(tape, p, flat)?;
        let hidden = tape.selu(hidden);
        self.readout_out.forward(tape, p, hidden)
    }

    fn node_readout(&self, tape: &mut Tape, x: Var, h1: Var, h2: Var) -> Result<Var, NnError> {
        if self.config.x_skip {
            tape.concat_cols(&[h1, h2, x])
        } else {
            tape.concat_cols(&[h1, h2])
        }
    }

    /// Mean squared error of the predictions.
    pub fn loss(&self, tape: &mut Tape, p: &[Var], batch: &GraphBatch) -> Result<Var, NnError> {
        let pred = self.forward(tape, p, batch)?;
        tape.mse_loss(pred, Rc::new(batch.y.clone()))
    }

    pub fn predict(&self, batch: &GraphBatch) -> Result<Tensor, NnError> {
        let mut tape = Tape::new();
        let p = self.params.register(&mut tape, false);
        let out = self.forward(&mut tape, &p, batch)?;
        Ok(tape.value(out).clone())
    }
}
