use rand::seq::index::sample;
use rand::Rng;

use super::{NnError, Tape, Tensor, Var};

/// Largest relative error of analytic against central-difference gradients,
/// one entry per input tensor: `‖g − ĝ‖∞ / max(‖g‖∞, ‖ĝ‖∞, GRAD_FLOOR)`.
///
/// The floor keeps gradients that vanish identically (a key bias under a
/// shift-invariant softmax, say) from turning rounding noise into unit error.
///
/// `loss` rebuilds the scalar on a fresh tape from one leaf per input. With
/// `max_entries`, a random subset of each tensor's entries is perturbed.
pub const GRAD_FLOOR: f64 = 1e-4;

pub fn check_gradients<F>(
    inputs: &[Tensor],
    loss: F,
    h: f64,
    max_entries: Option<usize>,
    rng: &mut impl Rng,
) -> Result<Vec<f64>, NnError>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, NnError>,
{
    let eval = |values: &[Tensor]| -> Result<f64, NnError> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.constant(t.clone())).collect();
        let out = loss(&mut tape, &vars)?;
        Ok(tape.value(out).data()[0])
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = loss(&mut tape, &vars)?;
    let grads = tape.backward(out)?;

    let mut values = inputs.to_vec();
    let mut errors = Vec::with_capacity(inputs.len());
    for (p, v) in vars.iter().enumerate() {
        let len = inputs[p].len();
        let analytic = grads.get(*v).cloned().unwrap_or_else(|| Tensor::zeros(inputs[p].rows(), inputs[p].cols()));
        let entries: Vec<usize> = match max_entries {
            Some(m) if m < len => sample(rng, len, m).into_vec(),
            _ => (0..len).collect(),
        };
        let (mut diff, mut na, mut nf) = (0.0f64, 0.0f64, 0.0f64);
        for k in entries {
            let x0 = values[p].data()[k];
            values[p].data_mut()[k] = x0 + h;
            let fp = eval(&values)?;
            values[p].data_mut()[k] = x0 - h;
            let fm = eval(&values)?;
            values[p].data_mut()[k] = x0;
            let numeric = (fp - fm) / (2.0 * h);
            let a = analytic.data()[k];
            diff = diff.max((a - numeric).abs());
            na = na.max(a.abs());
            nf = nf.max(numeric.abs());
        }
        errors.push(diff / na.max(nf).max(GRAD_FLOOR));
    }
    Ok(errors)
}
