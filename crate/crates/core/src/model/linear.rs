use rand::Rng as _;

use super::{bce_term, sigmoid, AdamState, Parameters, Scorer};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::{seeded, stream};

/// Logistic regression `logit = w . x + b`, remembering which input is the
/// sensitive attribute.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearParams {
    /// `[w..., b]`
    theta: Vec<f64>,
    sensitive_index: usize,
}

impl LinearParams {
    pub fn new(w: Vec<f64>, b: f64, sensitive_index: usize) -> Result<Self> {
        if sensitive_index >= w.len() {
            return Err(Error::invalid(format!(
                "sensitive index {sensitive_index} out of range for {} weights",
                w.len()
            )));
        }
        if w.iter().any(|v| !v.is_finite()) || !b.is_finite() {
            return Err(Error::invalid("non-finite parameter"));
        }
        let mut theta = w;
        theta.push(b);
        Ok(LinearParams { theta, sensitive_index })
    }

    pub fn weights(&self) -> &[f64] {
        &self.theta[..self.theta.len() - 1]
    }

    pub fn bias(&self) -> f64 {
        self.theta[self.theta.len() - 1]
    }

    pub fn sensitive_index(&self) -> usize {
        self.sensitive_index
    }

    pub fn sensitive_weight(&self) -> f64 {
        self.theta[self.sensitive_index]
    }

    /// Mean cross-entropy and its gradient over the dataset.
    pub fn bce_loss_grads(&self, data: &Dataset) -> Result<(f64, Vec<f64>)> {
        if data.n_features() != self.n_inputs() {
            return Err(Error::Shape(format!(
                "dataset has {} features, model expects {}",
                data.n_features(),
                self.n_inputs()
            )));
        }
        if data.n_rows() == 0 {
            return Err(Error::invalid("empty batch"));
        }
        let m = data.n_rows() as f64;
        let d = self.n_inputs();
        let mut grads = vec![0.0; d + 1];
        let mut loss = 0.0;
        for (x, &y) in data.rows().zip(data.labels()) {
            let z = self.logit(x);
            loss += bce_term(z, y);
            let r = (sigmoid(z) - y as f64) / m;
            for (g, v) in grads.iter_mut().zip(x) {
                *g += r * v;
            }
            grads[d] += r;
        }
        Ok((loss / m, grads))
    }
}

impl Parameters for LinearParams {
    fn values(&self) -> &[f64] {
        &self.theta
    }

    fn values_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }
}

impl Scorer for LinearParams {
    fn n_inputs(&self) -> usize {
        self.theta.len() - 1
    }

    fn logit(&self, x: &[f64]) -> f64 {
        self.bias() + self.weights().iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }
}

/// Full-batch Adam fit of a logistic regression on `data`, whose sensitive
/// column becomes the model's sensitive index.
pub fn linear_train(data: &Dataset, epochs: usize, lr: f64, seed: u64) -> Result<LinearParams> {
    let d = data.n_features();
    let s = data
        .sensitive_col()
        .ok_or_else(|| Error::invalid("linear model needs a dataset with a sensitive column"))?;
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::invalid(format!("learning rate must be positive, got {lr}")));
    }
    let mut rng = seeded(seed, stream::INIT);
    let bound = 1.0 / (d as f64).sqrt();
    let w = (0..d).map(|_| rng.random_range(-bound..=bound)).collect();
    let mut params = LinearParams::new(w, 0.0, s)?;
    let mut adam = AdamState::new(d + 1);
    for _ in 0..epochs {
        let (_, grads) = params.bce_loss_grads(data)?;
        adam.step_slice(params.values_mut(), &grads, lr)?;
    }
    Ok(params)
}

/// Copy of `params` with the sensitive weight replaced by `w_s`.
pub fn override_sensitive_weight(params: &LinearParams, w_s: f64) -> Result<LinearParams> {
    if !w_s.is_finite() {
        return Err(Error::invalid("w_s must be finite"));
    }
    let mut out = params.clone();
    out.theta[out.sensitive_index] = w_s;
    Ok(out)
}
