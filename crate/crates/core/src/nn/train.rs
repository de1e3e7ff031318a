use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::data::{GraphBatch, GraphDataset};
use super::model::Model;
use super::optim::NAdam;
use super::{NnError, Tape, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    /// Stopped by patience rather than the epoch budget.
    pub stopped_early: bool,
}

impl TrainReport {
    pub fn epochs_run(&self) -> usize {
        self.history.len()
    }
}

/// Mean squared error over every target of every sample.
pub fn evaluate(model: &Model, batches: &[GraphBatch]) -> Result<f64, NnError> {
    let (mut sum, mut count) = (0.0, 0usize);
    for b in batches {
        let pred = model.predict(b)?;
        sum += pred.data().iter().zip(b.y.data()).map(|(p, y)| (p - y) * (p - y)).sum::<f64>();
        count += pred.len();
    }
    Ok(sum / count as f64)
}

/// Predictions for every sample in order, `len × n_targets`.
pub fn predict_dataset(model: &Model, data: &GraphDataset, batch_size: usize) -> Result<Tensor, NnError> {
    let mut out = Vec::with_capacity(data.len() * model.n_targets());
    for b in data.batches(batch_size, model.needs_laplacian()) {
        out.extend(model.predict(&b)?.into_vec());
    }
    Ok(Tensor::from_vec(data.len(), model.n_targets(), out))
}

/// Minibatch NAdam on the MSE loss with early stopping on validation loss.
///
/// Training stops once the validation loss has failed to improve on its best
/// for more than `patience` consecutive epochs, or at `max_epochs`. The model
/// is left holding the parameters of the best validation epoch.
pub fn train(model: &mut Model, train: &GraphDataset, val: &GraphDataset) -> Result<TrainReport, NnError> {
    let cfg = model.config().clone();
    if train.is_empty() || val.is_empty() {
        return Err(NnError::Config("training and validation sets must be non-empty".into()));
    }
    let mut opt = NAdam::new(model.params(), cfg.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
    let lap = model.needs_laplacian();
    let val_batches: Vec<GraphBatch> = val.batches(cfg.batch_size, lap).collect();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best_params = model.params().clone();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0;
    let mut bad = 0;
    let mut history = Vec::new();
    let mut stopped_early = false;
    let start = Instant::now();
    for epoch in 0..cfg.max_epochs {
        if cfg.shuffle {
            order.shuffle(&mut rng);
        }
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch = train.batch(chunk, lap);
            let mut tape = Tape::new();
            let vars = model.params().register(&mut tape, true);
            let loss = model.loss(&mut tape, &vars, &batch)?;
            let l = tape.value(loss).data()[0];
            if !l.is_finite() {
                return Err(NnError::Divergence { epoch, loss: l });
            }
            let mut grads = tape.backward(loss)?;
            let g: Vec<Tensor> = vars
                .iter()
                .zip(model.params().tensors())
                .map(|(v, p)| grads.take(*v).unwrap_or_else(|| Tensor::zeros(p.rows(), p.cols())))
                .collect();
            opt.step(model.params_mut(), &g)?;
            total += l * chunk.len() as f64;
        }
        let train_loss = total / train.len() as f64;
        let val_loss = evaluate(model, &val_batches)?;
        if !val_loss.is_finite() {
            return Err(NnError::Divergence { epoch, loss: val_loss });
        }
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            wall_seconds: start.elapsed().as_secs_f64(),
        });
        log::debug!("epoch {epoch}: train {train_loss:.6e} val {val_loss:.6e}");
        if val_loss < best_val {
            best_val = val_loss;
            best_epoch = epoch;
            best_params.clone_from(model.params());
            bad = 0;
        } else {
            bad += 1;
            if bad > cfg.patience {
                stopped_early = true;
                break;
            }
        }
    }
    model.params_mut().load(&best_params)?;
    Ok(TrainReport {
        history,
        best_epoch,
        best_val_loss: best_val,
        stopped_early,
    })
}

pub fn write_history_csv(history: &[EpochRecord], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "epoch,train_loss,val_loss,wall_seconds")?;
    for r in history {
        writeln!(w, "{},{},{},{}", r.epoch, r.train_loss, r.val_loss, r.wall_seconds)?;
    }
    Ok(())
}
