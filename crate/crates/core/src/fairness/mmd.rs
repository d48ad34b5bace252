use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::explain::{shap_explanations, Background, ExplanationSet, ShapBudget};
use crate::model::Scorer;
use crate::pairing::PairSet;
use crate::rng::{seeded, stream};

/// Kernel on attribution vectors.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    /// `exp(-|a - b| / sigma)`
    #[default]
    Exponential,
    /// `exp(-|a - b|^2 / (2 sigma^2))`
    Gaussian,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    /// Median pairwise distance over the pooled sample.
    #[default]
    Median,
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MmdConfig {
    pub kernel: Kernel,
    pub bandwidth: Bandwidth,
    pub n_permutations: usize,
    pub seed: u64,
}

impl Default for MmdConfig {
    fn default() -> Self {
        MmdConfig { kernel: Kernel::Exponential, bandwidth: Bandwidth::Median, n_permutations: 1000, seed: 0 }
    }
}

impl MmdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_permutations < 100 {
            return Err(Error::invalid(format!(
                "n_permutations must be at least 100, got {}",
                self.n_permutations
            )));
        }
        if let Bandwidth::Fixed(s) = self.bandwidth {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::invalid(format!("bandwidth must be positive, got {s}")));
            }
        }
        Ok(())
    }
}

/// Outcome of the MMD permutation test.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MmdTest {
    pub statistic: f64,
    pub p_value: f64,
    pub sigma: f64,
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Kernel matrix over `rows`, or `None` when the bandwidth degenerates to 0.
struct Gram {
    k: Vec<f64>,
    n: usize,
    sigma: f64,
}

impl Gram {
    fn new(rows: &[&[f64]], cfg: &MmdConfig) -> Option<Gram> {
        let n = rows.len();
        let mut dist = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let d = distance(rows[i], rows[j]);
                dist[i * n + j] = d;
                dist[j * n + i] = d;
            }
        }
        let sigma = match cfg.bandwidth {
            Bandwidth::Fixed(s) => s,
            Bandwidth::Median => {
                let upper: Vec<f64> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).map(|(i, j)| dist[i * n + j]).collect();
                crate::stats::median(&upper)
            }
        };
        if !(sigma > 0.0) {
            return None;
        }
        let k = dist
            .into_iter()
            .map(|d| match cfg.kernel {
                Kernel::Exponential => (-d / sigma).exp(),
                Kernel::Gaussian => (-d * d / (2.0 * sigma * sigma)).exp(),
            })
            .collect();
        Some(Gram { k, n, sigma })
    }

    /// Biased MMD^2 between the rows flagged in `in_first` and the rest.
    fn mmd(&self, in_first: &[bool]) -> f64 {
        let n = self.n;
        let (mut s11, mut s22, mut s12) = (0.0, 0.0, 0.0);
        for i in 0..n {
            let row = &self.k[i * n..(i + 1) * n];
            let (mut to1, mut to2) = (0.0, 0.0);
            for (j, v) in row.iter().enumerate() {
                if in_first[j] {
                    to1 += v;
                } else {
                    to2 += v;
                }
            }
            if in_first[i] {
                s11 += to1;
                s12 += to2;
            } else {
                s22 += to2;
            }
        }
        let n1 = in_first.iter().filter(|&&b| b).count() as f64;
        let n2 = n as f64 - n1;
        (s11 / (n1 * n1) + s22 / (n2 * n2) - 2.0 * s12 / (n1 * n2)).max(0.0)
    }
}

fn pooled<'a>(e1: &'a ExplanationSet, e2: &'a ExplanationSet) -> Result<Vec<&'a [f64]>> {
    if e1.is_empty() || e2.is_empty() {
        return Err(Error::invalid("MMD needs two non-empty explanation sets"));
    }
    if e1.n_features() != e2.n_features() {
        return Err(Error::Shape(format!(
            "explanation widths differ: {} vs {}",
            e1.n_features(),
            e2.n_features()
        )));
    }
    Ok(e1.rows().chain(e2.rows()).collect())
}

/// Biased MMD^2 estimate between two explanation sets; 0 when every pooled
/// point coincides under the median heuristic.
pub fn mmd(e1: &ExplanationSet, e2: &ExplanationSet, cfg: &MmdConfig) -> Result<f64> {
    let rows = pooled(e1, e2)?;
    let Some(gram) = Gram::new(&rows, cfg) else {
        return Ok(0.0);
    };
    let flags: Vec<bool> = (0..rows.len()).map(|i| i < e1.len()).collect();
    Ok(gram.mmd(&flags))
}

/// Permutation test on a fixed kernel matrix:
/// `p = (1 + #{perm >= observed}) / (1 + n_permutations)`.
pub fn mmd_permutation_test(e1: &ExplanationSet, e2: &ExplanationSet, cfg: &MmdConfig) -> Result<MmdTest> {
    cfg.validate()?;
    let rows = pooled(e1, e2)?;
    let Some(gram) = Gram::new(&rows, cfg) else {
        return Ok(MmdTest { statistic: 0.0, p_value: 1.0, sigma: 0.0 });
    };
    let mut flags: Vec<bool> = (0..rows.len()).map(|i| i < e1.len()).collect();
    let observed = gram.mmd(&flags);
    let tol = 1e-12 * observed.abs().max(1.0);
    let mut rng = seeded(cfg.seed, stream::PERMUTATION);
    let mut hits = 0usize;
    for _ in 0..cfg.n_permutations {
        flags.shuffle(&mut rng);
        if gram.mmd(&flags) >= observed - tol {
            hits += 1;
        }
    }
    Ok(MmdTest {
        statistic: observed,
        p_value: (1 + hits) as f64 / (1 + cfg.n_permutations) as f64,
        sigma: gram.sigma,
    })
}

/// Full procedural-fairness evaluation: SHAP explanations for both sides
/// of the pairs, then the permutation test between the two sets.
#[derive(Clone, Debug, PartialEq)]
pub struct GpfFae {
    pub test: MmdTest,
    pub advantaged: ExplanationSet,
    pub disadvantaged: ExplanationSet,
}

impl GpfFae {
    pub fn p_value(&self) -> f64 {
        self.test.p_value
    }
}

pub fn gpf_fae<M: Scorer>(
    model: &M,
    data: &Dataset,
    pairs: &PairSet,
    background: &Background,
    budget: ShapBudget,
    cfg: &MmdConfig,
) -> Result<GpfFae> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(Error::invalid("no evaluation pairs"));
    }
    pairs.validate_against(data)?;
    let n = pairs.len();
    let rows: Vec<usize> = pairs.advantaged_rows().into_iter().chain(pairs.disadvantaged_rows()).collect();
    let all = shap_explanations(model, data, &rows, background, budget, cfg.seed)?;
    let advantaged = all.slice(0, n);
    let disadvantaged = all.slice(n, 2 * n);
    let test = mmd_permutation_test(&advantaged, &disadvantaged, cfg)?;
    Ok(GpfFae { test, advantaged, disadvantaged })
}
