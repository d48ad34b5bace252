use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::Scorer;
use crate::rng::{seeded, stream};

/// Largest input width for which all coalitions are enumerated by default.
const AUTO_EXHAUSTIVE_MAX_D: usize = 11;
const AUTO_COALITIONS: usize = 2048;
const EXACT_MAX_D: usize = 12;

/// Reference rows that stand in for masked-out features.
#[derive(Clone, Debug, PartialEq)]
pub struct Background {
    rows: Vec<f64>,
    n_features: usize,
}

impl Background {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map(Vec::len).unwrap_or(0);
        if d == 0 || rows.iter().any(|r| r.len() != d) {
            return Err(Error::invalid("background needs non-empty rows of equal length"));
        }
        Ok(Background { rows: rows.concat(), n_features: d })
    }

    pub fn from_dataset(data: &Dataset) -> Self {
        Background { rows: data.features().to_vec(), n_features: data.n_features() }
    }

    /// `n` rows drawn uniformly without replacement (all rows if fewer).
    pub fn sample(data: &Dataset, n: usize, seed: u64) -> Result<Self> {
        if data.n_rows() == 0 || n == 0 {
            return Err(Error::invalid("background needs at least one row"));
        }
        let mut rng = seeded(seed, stream::BACKGROUND);
        let mut picked = index::sample(&mut rng, data.n_rows(), n.min(data.n_rows())).into_vec();
        picked.sort_unstable();
        let mut rows = Vec::with_capacity(picked.len() * data.n_features());
        for i in picked {
            rows.extend_from_slice(data.row(i));
        }
        Ok(Background { rows, n_features: data.n_features() })
    }

    pub fn len(&self) -> usize {
        self.rows.len() / self.n_features
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.rows.chunks(self.n_features)
    }

    /// Mean model output over the background.
    pub fn base_value<M: Scorer + ?Sized>(&self, model: &M) -> f64 {
        self.iter().map(|b| model.logit(b)).sum::<f64>() / self.len() as f64
    }

    /// Coalition value: mean output with `x` on `mask` and background values
    /// elsewhere.
    fn value<M: Scorer + ?Sized>(&self, model: &M, x: &[f64], mask: &[bool], buf: &mut [f64]) -> f64 {
        let mut total = 0.0;
        for b in self.iter() {
            for j in 0..self.n_features {
                buf[j] = if mask[j] { x[j] } else { b[j] };
            }
            total += model.logit(buf);
        }
        total / self.len() as f64
    }
}

/// Number of coalitions KernelSHAP evaluates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapBudget {
    /// Exhaustive up to 11 features, otherwise 2048 sampled coalitions.
    #[default]
    Auto,
    Exhaustive,
    Coalitions(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShapValues {
    pub phi: Vec<f64>,
    pub base_value: f64,
}

fn check<M: Scorer + ?Sized>(model: &M, x: &[f64], background: &Background) -> Result<()> {
    if x.len() != background.n_features || x.len() != model.n_inputs() {
        return Err(Error::Shape(format!(
            "input has {} features, background {}, model {}",
            x.len(),
            background.n_features,
            model.n_inputs()
        )));
    }
    if background.is_empty() {
        return Err(Error::invalid("empty background"));
    }
    Ok(())
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn mask_of(bits: u64, d: usize) -> Vec<bool> {
    (0..d).map(|j| bits >> j & 1 == 1).collect()
}

/// KernelSHAP: the Shapley-kernel weighted least-squares fit over
/// coalitions, with the efficiency constraint `sum(phi) = f(x) - base`
/// imposed exactly. Enumerating every coalition reproduces the exact
/// Shapley values.
pub fn kernel_shap<M: Scorer + ?Sized>(
    model: &M,
    x: &[f64],
    background: &Background,
    budget: ShapBudget,
    seed: u64,
) -> Result<ShapValues> {
    check(model, x, background)?;
    let d = x.len();
    let base = background.base_value(model);
    let delta = model.logit(x) - base;
    if d == 1 {
        return Ok(ShapValues { phi: vec![delta], base_value: base });
    }
    let n_proper = if d < 63 { (1u64 << d) - 2 } else { u64::MAX };
    let exhaustive = match budget {
        ShapBudget::Auto => d <= AUTO_EXHAUSTIVE_MAX_D,
        ShapBudget::Exhaustive => {
            if d > 24 {
                return Err(Error::invalid(format!("cannot enumerate coalitions of {d} features")));
            }
            true
        }
        ShapBudget::Coalitions(b) => {
            if b < d + 2 {
                return Err(Error::invalid(format!("budget {b} is below d + 2 = {}", d + 2)));
            }
            b as u64 >= n_proper
        }
    };

    let mut coalitions: Vec<(Vec<bool>, f64)> = Vec::new();
    if exhaustive {
        for bits in 1..=n_proper {
            let k = bits.count_ones() as usize;
            let w = (d - 1) as f64 / (binomial(d, k) * (k * (d - k)) as f64);
            coalitions.push((mask_of(bits, d), w));
        }
    } else {
        let b = match budget {
            ShapBudget::Coalitions(b) => b,
            _ => AUTO_COALITIONS,
        };
        // Sizes follow the kernel's total mass per size; each draw is paired
        // with its complement and all samples get equal weight.
        let size_mass: Vec<f64> = (1..d).map(|s| 1.0 / (s * (d - s)) as f64).collect();
        let total: f64 = size_mass.iter().sum();
        let mut rng = seeded(seed, stream::SHAP);
        while coalitions.len() < b {
            let mut u = rng.random::<f64>() * total;
            let mut s = d - 1;
            for (i, m) in size_mass.iter().enumerate() {
                if u < *m {
                    s = i + 1;
                    break;
                }
                u -= m;
            }
            let mut mask = vec![false; d];
            for j in index::sample(&mut rng, d, s) {
                mask[j] = true;
            }
            let complement: Vec<bool> = mask.iter().map(|v| !v).collect();
            coalitions.push((mask, 1.0));
            if coalitions.len() < b {
                coalitions.push((complement, 1.0));
            }
        }
    }

    // Eliminate the last feature through the constraint and solve the
    // (d-1)-dimensional normal equations.
    let n = d - 1;
    let mut a = vec![0.0; n * n];
    let mut rhs = vec![0.0; n];
    let mut buf = vec![0.0; d];
    let mut row = vec![0.0; n];
    for (mask, w) in &coalitions {
        let v = background.value(model, x, mask, &mut buf);
        let z_last = f64::from(u8::from(mask[n]));
        let y = v - base - z_last * delta;
        for i in 0..n {
            row[i] = f64::from(u8::from(mask[i])) - z_last;
        }
        for i in 0..n {
            if row[i] == 0.0 {
                continue;
            }
            rhs[i] += w * row[i] * y;
            for k in 0..n {
                a[i * n + k] += w * row[i] * row[k];
            }
        }
    }
    let mut phi = solve(a, rhs, n)?;
    let rest: f64 = phi.iter().sum();
    phi.push(delta - rest);
    Ok(ShapValues { phi, base_value: base })
}

/// Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<f64>, mut b: Vec<f64>, n: usize) -> Result<Vec<f64>> {
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))
            .unwrap_or(col);
        if a[pivot * n + col].abs() <= 1e-12 * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::invalid("degenerate KernelSHAP weight system; raise the coalition budget"));
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            b.swap(col, pivot);
        }
        for i in col + 1..n {
            let f = a[i * n + col] / a[col * n + col];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[i * n + k] -= f * a[col * n + k];
            }
            b[i] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i * n + k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i * n + i];
    }
    Ok(x)
}

/// Shapley values by enumerating all `2^d` subsets; `d` at most 12.
pub fn exact_shapley<M: Scorer + ?Sized>(model: &M, x: &[f64], background: &Background) -> Result<ShapValues> {
    check(model, x, background)?;
    let d = x.len();
    if d > EXACT_MAX_D {
        return Err(Error::invalid(format!("exact Shapley supports at most {EXACT_MAX_D} features, got {d}")));
    }
    let mut buf = vec![0.0; d];
    let values: Vec<f64> = (0..1u64 << d)
        .map(|bits| background.value(model, x, &mask_of(bits, d), &mut buf))
        .collect();
    let fact = |n: usize| (1..=n).fold(1.0, |a, k| a * k as f64);
    let weights: Vec<f64> = (0..d).map(|s| fact(s) * fact(d - s - 1) / fact(d)).collect();
    let mut phi = vec![0.0; d];
    for (i, p) in phi.iter_mut().enumerate() {
        let bit = 1u64 << i;
        for s in (0..1u64 << d).filter(|s| s & bit == 0) {
            *p += weights[s.count_ones() as usize] * (values[(s | bit) as usize] - values[s as usize]);
        }
    }
    Ok(ShapValues { phi, base_value: values[0] })
}
