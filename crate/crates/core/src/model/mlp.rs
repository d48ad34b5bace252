use rand::Rng as _;

use super::{bce_term, sigmoid, sign, GradTarget, Parameters, Scorer};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::pairing::PairSet;
use crate::rng::{seeded, stream};

/// One-hidden-layer ReLU network with a single logit output:
/// `logit = w2 . relu(W1 x + b1) + b2`.
///
/// Parameters live in one flat vector laid out as `[W1 (h x d, row-major),
/// b1 (h), w2 (h), b2]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    n_inputs: usize,
    hidden: usize,
    theta: Vec<f64>,
}

/// Gradients share the parameter layout.
pub type MlpGrads = MlpParams;

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases.
pub fn mlp_init(n_inputs: usize, hidden: usize, seed: u64) -> Result<MlpParams> {
    if n_inputs == 0 || hidden == 0 {
        return Err(Error::invalid("MLP needs at least one input and one hidden unit"));
    }
    let mut p = MlpParams::zeros(n_inputs, hidden);
    let mut rng = seeded(seed, stream::INIT);
    let b_in = 1.0 / (n_inputs as f64).sqrt();
    for w in p.w1_mut() {
        *w = rng.random_range(-b_in..=b_in);
    }
    let b_hid = 1.0 / (hidden as f64).sqrt();
    for w in p.w2_mut() {
        *w = rng.random_range(-b_hid..=b_hid);
    }
    Ok(p)
}

/// Per-row hidden pre-activations and logits for a whole dataset.
pub(crate) struct Activations {
    pub pre: Vec<f64>,
    pub logit: Vec<f64>,
}

impl MlpParams {
    pub fn zeros(n_inputs: usize, hidden: usize) -> Self {
        MlpParams {
            n_inputs,
            hidden,
            theta: vec![0.0; hidden * n_inputs + 2 * hidden + 1],
        }
    }

    pub fn from_parts(w1: Vec<f64>, b1: Vec<f64>, w2: Vec<f64>, b2: f64) -> Result<Self> {
        let h = b1.len();
        if h == 0 || w2.len() != h || !w1.len().is_multiple_of(h) || w1.is_empty() {
            return Err(Error::Shape(format!(
                "W1 has {} entries, b1 {}, w2 {}",
                w1.len(),
                b1.len(),
                w2.len()
            )));
        }
        let mut theta = w1;
        let d = theta.len() / h;
        theta.extend(b1);
        theta.extend(w2);
        theta.push(b2);
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite parameter"));
        }
        Ok(MlpParams { n_inputs: d, hidden: h, theta })
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn n_params(&self) -> usize {
        self.theta.len()
    }

    fn split(&self) -> (&[f64], &[f64], &[f64], f64) {
        let hd = self.hidden * self.n_inputs;
        let h = self.hidden;
        (
            &self.theta[..hd],
            &self.theta[hd..hd + h],
            &self.theta[hd + h..hd + 2 * h],
            self.theta[hd + 2 * h],
        )
    }

    pub fn w1(&self) -> &[f64] {
        self.split().0
    }

    pub fn b1(&self) -> &[f64] {
        self.split().1
    }

    pub fn w2(&self) -> &[f64] {
        self.split().2
    }

    pub fn b2(&self) -> f64 {
        self.split().3
    }

    pub fn w1_mut(&mut self) -> &mut [f64] {
        let hd = self.hidden * self.n_inputs;
        &mut self.theta[..hd]
    }

    pub fn b1_mut(&mut self) -> &mut [f64] {
        let hd = self.hidden * self.n_inputs;
        &mut self.theta[hd..hd + self.hidden]
    }

    pub fn w2_mut(&mut self) -> &mut [f64] {
        let hd = self.hidden * self.n_inputs;
        &mut self.theta[hd + self.hidden..hd + 2 * self.hidden]
    }

    pub fn b2_mut(&mut self) -> &mut f64 {
        let last = self.theta.len() - 1;
        &mut self.theta[last]
    }

    /// `self += a * other`.
    pub fn add_scaled(&mut self, a: f64, other: &MlpParams) {
        for (t, o) in self.theta.iter_mut().zip(&other.theta) {
            *t += a * o;
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_inputs {
            return Err(Error::Shape(format!(
                "input has {} features, model expects {}",
                x.len(),
                self.n_inputs
            )));
        }
        Ok(())
    }

    fn check_data(&self, data: &Dataset) -> Result<()> {
        if data.n_features() != self.n_inputs {
            return Err(Error::Shape(format!(
                "dataset has {} features, model expects {}",
                data.n_features(),
                self.n_inputs
            )));
        }
        Ok(())
    }

    fn pre_activations(&self, x: &[f64], pre: &mut [f64]) -> f64 {
        let (w1, b1, w2, b2) = self.split();
        let d = self.n_inputs;
        let mut z = b2;
        for j in 0..self.hidden {
            let row = &w1[j * d..(j + 1) * d];
            let a = b1[j] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
            pre[j] = a;
            z += w2[j] * a.max(0.0);
        }
        z
    }

    /// `(logit, probability)` for one input.
    pub fn forward(&self, x: &[f64]) -> (f64, f64) {
        let mut pre = vec![0.0; self.hidden];
        let z = self.pre_activations(x, &mut pre);
        (z, sigmoid(z))
    }

    pub(crate) fn activations(&self, data: &Dataset) -> Activations {
        let h = self.hidden;
        let mut pre = vec![0.0; data.n_rows() * h];
        let mut logit = Vec::with_capacity(data.n_rows());
        for (i, x) in data.rows().enumerate() {
            logit.push(self.pre_activations(x, &mut pre[i * h..(i + 1) * h]));
        }
        Activations { pre, logit }
    }

    /// Gradient of the logit w.r.t. the input: `W1^T (1[pre > 0] * w2)`.
    pub fn input_gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut pre = vec![0.0; self.hidden];
        self.pre_activations(x, &mut pre);
        let mut g = vec![0.0; self.n_inputs];
        self.logit_gradient_into(&pre, &mut g);
        g
    }

    fn logit_gradient_into(&self, pre: &[f64], out: &mut [f64]) {
        let (w1, _, w2, _) = self.split();
        let d = self.n_inputs;
        out.iter_mut().for_each(|v| *v = 0.0);
        for (j, row) in w1.chunks_exact(d).enumerate() {
            let scale = f64::from(u8::from(pre[j] > 0.0)) * w2[j];
            for (o, w) in out.iter_mut().zip(row) {
                *o += w * scale;
            }
        }
    }

    /// Input-gradient explanation of the chosen output.
    pub fn explanation(&self, x: &[f64], target: GradTarget) -> Vec<f64> {
        let mut pre = vec![0.0; self.hidden];
        let z = self.pre_activations(x, &mut pre);
        let mut g = vec![0.0; self.n_inputs];
        self.logit_gradient_into(&pre, &mut g);
        if target == GradTarget::Probability {
            let p = sigmoid(z);
            let s = p * (1.0 - p);
            g.iter_mut().for_each(|v| *v *= s);
        }
        g
    }

    /// Mean binary cross-entropy over the dataset and its exact gradient.
    pub fn bce_loss_grads(&self, data: &Dataset) -> Result<(f64, MlpGrads)> {
        self.check_data(data)?;
        if data.n_rows() == 0 {
            return Err(Error::invalid("empty batch"));
        }
        let act = self.activations(data);
        let mut rows = RowGrads::new(data.n_rows(), self.n_inputs, false);
        let loss = self.bce_rows(data, &act, &mut rows);
        Ok((loss, self.backward(data, &act, &rows)))
    }

    /// Mean l1 distance between paired input-gradient explanations, and its
    /// gradient with ReLU masks held fixed and `sign(0) = 0`.
    pub fn gpf_loss_grads(&self, data: &Dataset, pairs: &PairSet, target: GradTarget) -> Result<(f64, MlpGrads)> {
        self.check_data(data)?;
        if pairs.is_empty() {
            return Err(Error::invalid("empty pair set"));
        }
        if let Some(p) = pairs
            .pairs
            .iter()
            .find(|p| p.advantaged >= data.n_rows() || p.disadvantaged >= data.n_rows())
        {
            return Err(Error::invalid(format!(
                "pair ({}, {}) references a missing row",
                p.advantaged, p.disadvantaged
            )));
        }
        let act = self.activations(data);
        let mut rows = RowGrads::new(data.n_rows(), self.n_inputs, true);
        let loss = self.gpf_rows(data, &act, pairs, target, 1.0, &mut rows);
        Ok((loss, self.backward(data, &act, &rows)))
    }

    /// Adds the cross-entropy sensitivities to `rows`; returns the mean loss.
    pub(crate) fn bce_rows(&self, data: &Dataset, act: &Activations, rows: &mut RowGrads) -> f64 {
        let m = data.n_rows() as f64;
        let mut loss = 0.0;
        for (i, (&z, &y)) in act.logit.iter().zip(data.labels()).enumerate() {
            loss += bce_term(z, y);
            rows.coef[i] += (sigmoid(z) - f64::from(y)) / m;
        }
        loss / m
    }

    /// Adds `scale` times the explanation-loss sensitivities to `rows`;
    /// returns the unscaled loss.
    pub(crate) fn gpf_rows(
        &self,
        data: &Dataset,
        act: &Activations,
        pairs: &PairSet,
        target: GradTarget,
        scale: f64,
        rows: &mut RowGrads,
    ) -> f64 {
        let d = self.n_inputs;
        let h = self.hidden;
        let m = data.n_rows();

        let mut used = vec![false; m];
        for p in &pairs.pairs {
            used[p.advantaged] = true;
            used[p.disadvantaged] = true;
        }
        // logit gradients, then explanations (scaled for the probability target)
        let mut grad = vec![0.0; m * d];
        let mut expl_scale = vec![1.0; m];
        for i in (0..m).filter(|&i| used[i]) {
            self.logit_gradient_into(&act.pre[i * h..(i + 1) * h], &mut grad[i * d..(i + 1) * d]);
            if target == GradTarget::Probability {
                let p = sigmoid(act.logit[i]);
                expl_scale[i] = p * (1.0 - p);
            }
        }

        let k = pairs.len() as f64;
        let mut upstream = vec![0.0; m * d];
        let mut loss = 0.0;
        for p in &pairs.pairs {
            let (a, b) = (p.advantaged, p.disadvantaged);
            let (sa, sb) = (expl_scale[a], expl_scale[b]);
            for f in 0..d {
                let t = sa * grad[a * d + f] - sb * grad[b * d + f];
                loss += t.abs();
                let s = sign(t) / k;
                upstream[a * d + f] += s;
                upstream[b * d + f] -= s;
            }
        }

        for i in (0..m).filter(|&i| used[i]) {
            let u = &upstream[i * d..(i + 1) * d];
            let dst = &mut rows.upstream[i * d..(i + 1) * d];
            let e_scale = scale * expl_scale[i];
            for (o, v) in dst.iter_mut().zip(u) {
                *o += e_scale * v;
            }
            if target == GradTarget::Probability {
                // e = s(z) g, so the loss also moves through z: ds/dz = s (1 - 2p)
                let p = sigmoid(act.logit[i]);
                let a: f64 = u.iter().zip(&grad[i * d..(i + 1) * d]).map(|(x, y)| x * y).sum();
                rows.coef[i] += scale * expl_scale[i] * (1.0 - 2.0 * p) * a;
            }
        }
        loss / k
    }

    /// Accumulates `sum_i coef_i dz_i/dtheta + upstream_i . d(dz_i/dx)/dtheta`.
    pub(crate) fn backward(&self, data: &Dataset, act: &Activations, rows: &RowGrads) -> MlpGrads {
        let d = self.n_inputs;
        let h = self.hidden;
        let hd = h * d;
        let (w1, _, w2, _) = self.split();
        let mut grads = MlpParams::zeros(d, h);
        let (gw1, rest) = grads.theta.split_at_mut(hd);
        let (gb1, rest) = rest.split_at_mut(h);
        let (gw2, gb2) = rest.split_at_mut(h);
        let zeros = vec![0.0; d];
        for (i, x) in data.rows().enumerate() {
            let coef = rows.coef[i];
            let pre = &act.pre[i * h..(i + 1) * h];
            let u = if rows.upstream.is_empty() { &zeros[..] } else { &rows.upstream[i * d..(i + 1) * d] };
            let has_u = u.iter().any(|&v| v != 0.0);
            if coef == 0.0 && !has_u {
                continue;
            }
            for (j, (grow, wrow)) in gw1.chunks_exact_mut(d).zip(w1.chunks_exact(d)).enumerate() {
                let on = f64::from(u8::from(pre[j] > 0.0));
                let back = on * w2[j];
                if has_u {
                    for ((g, xv), uv) in grow.iter_mut().zip(x).zip(u) {
                        *g += back * (coef * xv + uv);
                    }
                    let c: f64 = wrow.iter().zip(u).map(|(w, v)| w * v).sum();
                    gw2[j] += coef * pre[j].max(0.0) + on * c;
                } else {
                    for (g, xv) in grow.iter_mut().zip(x) {
                        *g += back * coef * xv;
                    }
                    gw2[j] += coef * pre[j].max(0.0);
                }
                gb1[j] += back * coef;
            }
            gb2[0] += coef;
        }
        grads
    }
}

/// Per-row loss sensitivities: `coef[i]` weights the logit of row `i` and
/// `upstream[i]` (rows x d) weights its logit input-gradient.
pub(crate) struct RowGrads {
    pub coef: Vec<f64>,
    pub upstream: Vec<f64>,
}

impl RowGrads {
    pub fn new(m: usize, d: usize, with_upstream: bool) -> Self {
        RowGrads { coef: vec![0.0; m], upstream: if with_upstream { vec![0.0; m * d] } else { Vec::new() } }
    }
}

impl Parameters for MlpParams {
    fn values(&self) -> &[f64] {
        &self.theta
    }

    fn values_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }
}

impl Scorer for MlpParams {
    fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    fn logit(&self, x: &[f64]) -> f64 {
        self.forward(x).0
    }
}

impl MlpParams {
    /// Like [`Scorer::logit`] but validates the input length.
    pub fn try_logit(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        Ok(self.forward(x).0)
    }
}
