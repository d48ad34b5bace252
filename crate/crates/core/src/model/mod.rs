//! Differentiable models and the optimizer.

mod adam;
mod io;
mod linear;
pub(crate) mod mlp;

use serde::{Deserialize, Serialize};

pub use adam::AdamState;
pub use io::{load_model, save_model, ModelFile};
pub use linear::{linear_train, override_sensitive_weight, LinearParams};
pub use mlp::{mlp_init, MlpGrads, MlpParams};

/// Anything with a real-valued score (the pre-sigmoid logit) over a fixed
/// number of inputs.
pub trait Scorer: Sync {
    fn n_inputs(&self) -> usize;

    fn logit(&self, x: &[f64]) -> f64;

    fn prob(&self, x: &[f64]) -> f64 {
        sigmoid(self.logit(x))
    }
}

/// Wraps a closure as a [`Scorer`].
pub struct FnScorer<F> {
    n_inputs: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> FnScorer<F> {
    pub fn new(n_inputs: usize, f: F) -> Self {
        FnScorer { n_inputs, f }
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> Scorer for FnScorer<F> {
    fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    fn logit(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}

/// A scorer whose logit has an input gradient.
pub trait Differentiable: Scorer {
    fn input_gradient(&self, x: &[f64]) -> Vec<f64>;
}

impl Differentiable for MlpParams {
    fn input_gradient(&self, x: &[f64]) -> Vec<f64> {
        MlpParams::input_gradient(self, x)
    }
}

impl Differentiable for LinearParams {
    fn input_gradient(&self, _x: &[f64]) -> Vec<f64> {
        self.weights().to_vec()
    }
}

/// Flat view of a parameter vector, used by the optimizer.
pub trait Parameters {
    fn values(&self) -> &[f64];
    fn values_mut(&mut self) -> &mut [f64];
}

/// Output that input-gradient explanations differentiate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradTarget {
    Logit,
    /// The sigmoid output. Gradients scale with `p (1 - p)`, so attribution
    /// differences also register shifts of the logit between paired rows.
    #[default]
    Probability,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
pub(crate) fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

pub(crate) fn sign(t: f64) -> f64 {
    if t > 0.0 {
        1.0
    } else if t < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Mean binary cross-entropy of logits with log arguments clamped at 1e-12.
pub(crate) fn bce_term(z: f64, y: u8) -> f64 {
    const FLOOR: f64 = -27.631_021_115_928_547; // ln(1e-12)
    let log_p = (-softplus(-z)).max(FLOOR);
    let log_q = (-softplus(z)).max(FLOOR);
    if y == 1 {
        -log_p
    } else {
        -log_q
    }
}
