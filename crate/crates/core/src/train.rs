//! The training loop: cross-entropy, optionally regularized by the paired
//! explanation loss (weight `alpha`, possibly negative) or by a soft
//! demographic-parity penalty (weight `beta`).

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Group};
use crate::error::{Error, Result};
use crate::explain::{Background, ShapBudget};
use crate::fairness::{distributive, gpf_fae, FairnessReport, MmdConfig};
use crate::fsutil::write_atomic;
use crate::model::mlp::{Activations, RowGrads};
use crate::model::{mlp_init, sigmoid, AdamState, Differentiable, GradTarget, MlpGrads, MlpParams, Scorer};
use crate::pairing::{build_pairs, PairSet};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    BceOnly,
    Procedural,
    DpRegularized,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub mode: Mode,
    pub alpha: f64,
    pub beta: f64,
    pub epochs: usize,
    pub lr: f64,
    pub hidden: usize,
    pub seed: u64,
    /// Output differentiated by the training-time explanations.
    pub grad_target: GradTarget,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: Mode::BceOnly,
            alpha: 0.5,
            beta: 1.0,
            epochs: 300,
            lr: 0.01,
            hidden: 32,
            seed: 0,
            grad_target: GradTarget::Probability,
        }
    }
}

impl TrainConfig {
    pub fn bce_only(seed: u64) -> Self {
        TrainConfig { seed, ..Default::default() }
    }

    pub fn procedural(alpha: f64, seed: u64) -> Self {
        TrainConfig { mode: Mode::Procedural, alpha, seed, ..Default::default() }
    }

    pub fn dp_regularized(beta: f64, seed: u64) -> Self {
        TrainConfig { mode: Mode::DpRegularized, beta, seed, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.hidden == 0 {
            return Err(Error::invalid("hidden size must be at least 1"));
        }
        if !self.alpha.is_finite() || !self.beta.is_finite() {
            return Err(Error::invalid("alpha and beta must be finite"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub total: f64,
    pub bce: f64,
    pub gpf: Option<f64>,
    pub dp_proxy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochLoss>,
    pub seconds: f64,
    /// Number of training pairs behind the explanation loss.
    pub n_pairs: usize,
}

impl TrainHistory {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut wtr = csv::Writer::from_writer(Vec::new());
        wtr.write_record(["epoch", "total", "bce", "gpf", "dp_proxy"])?;
        for (i, e) in self.epochs.iter().enumerate() {
            wtr.write_record([(i + 1).to_string(), e.total.to_string(), e.bce.to_string(), opt(e.gpf), opt(e.dp_proxy)])?;
        }
        let bytes = wtr.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
        write_atomic(path, &bytes)
    }
}

/// Soft demographic-parity gap `|mean p(s1) - mean p(s2)|` and its gradient.
pub fn dp_proxy_grads(params: &MlpParams, data: &Dataset) -> Result<(f64, MlpGrads)> {
    data.require_both_groups()?;
    if data.n_features() != params.n_inputs() {
        return Err(Error::Shape(format!(
            "dataset has {} features, model expects {}",
            data.n_features(),
            params.n_inputs()
        )));
    }
    let act = params.activations(data);
    let mut rows = RowGrads::new(data.n_rows(), data.n_features(), false);
    let loss = add_dp_proxy(data, &act, 1.0, &mut rows);
    Ok((loss, params.backward(data, &act, &rows)))
}

fn add_dp_proxy(data: &Dataset, act: &Activations, scale: f64, rows: &mut RowGrads) -> f64 {
    let n1 = data.group_size(Group::Advantaged) as f64;
    let n2 = data.group_size(Group::Disadvantaged) as f64;
    let (mut m1, mut m2) = (0.0, 0.0);
    for (&z, g) in act.logit.iter().zip(data.groups()) {
        match g {
            Group::Advantaged => m1 += sigmoid(z) / n1,
            Group::Disadvantaged => m2 += sigmoid(z) / n2,
        }
    }
    let gap = m1 - m2;
    let s = crate::model::sign(gap) * scale;
    if s != 0.0 {
        for (i, (&z, g)) in act.logit.iter().zip(data.groups()).enumerate() {
            let p = sigmoid(z);
            let w = match g {
                Group::Advantaged => 1.0 / n1,
                Group::Disadvantaged => -1.0 / n2,
            };
            rows.coef[i] += s * w * p * (1.0 - p);
        }
    }
    gap.abs()
}

/// Full-batch Adam training. Training pairs are built once up front in
/// procedural mode.
pub fn train(data: &Dataset, cfg: &TrainConfig) -> Result<(MlpParams, TrainHistory)> {
    cfg.validate()?;
    if data.n_rows() == 0 {
        return Err(Error::invalid("empty training set"));
    }
    let start = Instant::now();
    let pairs = match cfg.mode {
        Mode::Procedural => Some(build_pairs(data)?),
        Mode::DpRegularized => {
            data.require_both_groups()?;
            None
        }
        Mode::BceOnly => None,
    };
    let mut params = mlp_init(data.n_features(), cfg.hidden, cfg.seed)?;
    let mut adam = AdamState::new(params.n_params());
    let mut epochs = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        let act = params.activations(data);
        let mut rows = RowGrads::new(data.n_rows(), data.n_features(), pairs.is_some());
        let bce = params.bce_rows(data, &act, &mut rows);
        let mut total = bce;
        let gpf = pairs.as_ref().map(|p| params.gpf_rows(data, &act, p, cfg.grad_target, cfg.alpha, &mut rows));
        if let Some(g) = gpf {
            total += cfg.alpha * g;
        }
        let dp_proxy = (cfg.mode == Mode::DpRegularized).then(|| add_dp_proxy(data, &act, cfg.beta, &mut rows));
        if let Some(d) = dp_proxy {
            total += cfg.beta * d;
        }
        let grads = params.backward(data, &act, &rows);
        adam.step(&mut params, &grads, cfg.lr)?;
        epochs.push(EpochLoss { total, bce, gpf, dp_proxy });
    }
    let history = TrainHistory {
        epochs,
        seconds: start.elapsed().as_secs_f64(),
        n_pairs: pairs.map_or(0, |p| p.len()),
    };
    Ok((params, history))
}

/// Procedural training with a negative weight, pushing paired explanations
/// apart. Rejects `alpha >= 0`, including `-0.0`.
pub fn train_inverse(data: &Dataset, cfg: &TrainConfig) -> Result<(MlpParams, TrainHistory)> {
    if !(cfg.alpha < 0.0) {
        return Err(Error::invalid(format!("inverse training needs alpha < 0, got {}", cfg.alpha)));
    }
    train(data, &TrainConfig { mode: Mode::Procedural, ..cfg.clone() })
}

/// Evaluation settings shared by every model kind.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub n_pairs: usize,
    pub background_size: usize,
    pub shap_budget: ShapBudget,
    pub mmd: MmdConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { n_pairs: 100, background_size: 100, shap_budget: ShapBudget::Auto, mmd: MmdConfig::default() }
    }
}

/// Hard predictions at probability threshold 0.5.
pub fn predict<M: Scorer + ?Sized>(model: &M, data: &Dataset) -> Vec<u8> {
    data.rows().map(|x| u8::from(model.logit(x) >= 0.0)).collect()
}

/// Test-set report: accuracy and distributive metrics from thresholded
/// predictions, GPF_FAE from SHAP on `eval_pairs`, and the explanation loss
/// from logit gradients on the same pairs. `train_seconds` is left at 0.
pub fn evaluate<M: Differentiable>(
    model: &M,
    test: &Dataset,
    eval_pairs: &PairSet,
    background: &Background,
    cfg: &EvalConfig,
) -> Result<FairnessReport> {
    let start = Instant::now();
    if test.n_rows() == 0 {
        return Err(Error::invalid("empty test set"));
    }
    let preds = predict(model, test);
    let correct = preds.iter().zip(test.labels()).filter(|(p, y)| p == y).count();
    let dist = distributive(&preds, test.labels(), test.groups())?;
    let fae = gpf_fae(model, test, eval_pairs, background, cfg.shap_budget, &cfg.mmd)?;
    let gpf_loss = eval_pairs
        .pairs
        .iter()
        .map(|p| {
            let a = model.input_gradient(test.row(p.advantaged));
            let b = model.input_gradient(test.row(p.disadvantaged));
            a.iter().zip(&b).map(|(u, v)| (u - v).abs()).sum::<f64>()
        })
        .sum::<f64>()
        / eval_pairs.len() as f64;
    Ok(FairnessReport {
        accuracy: correct as f64 / test.n_rows() as f64,
        dp: dist.dp,
        di: dist.di,
        eop: dist.eop,
        eod: dist.eod,
        gpf_fae: fae.p_value(),
        mmd: fae.test.statistic,
        gpf_loss,
        train_seconds: 0.0,
        eval_seconds: start.elapsed().as_secs_f64(),
        undefined: dist.undefined,
    })
}
