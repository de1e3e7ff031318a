use super::layers::Params;
use super::{NnError, Tensor};

/// Adam with Nesterov momentum and momentum decay.
#[derive(Debug, Clone)]
pub struct NAdam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub momentum_decay: f64,
    step: u64,
    mu_product: f64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl NAdam {
    pub fn new(params: &Params, lr: f64) -> Self {
        let zeros: Vec<Tensor> = params.tensors().iter().map(|t| Tensor::zeros(t.rows(), t.cols())).collect();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            momentum_decay: 4e-3,
            step: 0,
            mu_product: 1.0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    fn mu(&self, step: u64) -> f64 {
        self.beta1 * (1.0 - 0.5 * 0.96f64.powf(step as f64 * self.momentum_decay))
    }

    /// One update from gradients aligned with `params`.
    ///
    /// Parameters are left untouched when any gradient is non-finite.
    pub fn step(&mut self, params: &mut Params, grads: &[Tensor]) -> Result<(), NnError> {
        if grads.len() != params.len() {
            return Err(NnError::Shape(format!(
                "{} gradients for {} parameters",
                grads.len(),
                params.len()
            )));
        }
        for (name, (g, p)) in params.names().iter().zip(grads.iter().zip(params.tensors())) {
            if g.shape() != p.shape() {
                return Err(NnError::Shape(format!(
                    "gradient of {name} has shape {:?}, parameter {:?}",
                    g.shape(),
                    p.shape()
                )));
            }
            if !g.is_finite() {
                return Err(NnError::NonFiniteGradient(name.clone()));
            }
        }
        self.step += 1;
        let t = self.step;
        let mu = self.mu(t);
        let mu_next = self.mu(t + 1);
        self.mu_product *= mu;
        let bc2 = 1.0 - self.beta2.powf(t as f64);
        let c_grad = self.lr * (1.0 - mu) / (1.0 - self.mu_product);
        let c_mom = self.lr * mu_next / (1.0 - self.mu_product * mu_next);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        for ((p, g), (m, v)) in params
            .tensors_mut()
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for (((pv, gv), mv), vv) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut().iter_mut())
                .zip(v.data_mut().iter_mut())
            {
                *mv = b1 * *mv + (1.0 - b1) * gv;
                *vv = b2 * *vv + (1.0 - b2) * gv * gv;
                let denom = (*vv / bc2).sqrt() + eps;
                *pv -= c_grad * gv / denom + c_mom * *mv / denom;
            }
        }
        Ok(())
    }
}
