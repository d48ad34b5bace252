use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Dataset, Group};
use crate::error::{Error, Result};
use crate::rng::{seeded, stream};

/// Column order of generated data.
pub const SYNTHETIC_FEATURES: [&str; 4] = ["x1", "x2", "xp", "xs"];

/// Synthetic data with ground-truth bias control.
///
/// `p` is the probability that a positive row carries `xs = 1` (and a
/// negative row `xs = 0`); `p = 0.5` yields unbiased data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    #[serde(default = "default_points")]
    pub n_points: usize,
    pub p: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_points() -> usize {
    20_000
}

impl SyntheticConfig {
    pub fn new(p: f64, seed: u64) -> Self {
        SyntheticConfig {
            n_points: default_points(),
            p,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::invalid(format!("p = {} outside [0, 1]", self.p)));
        }
        if self.n_points < 4 {
            return Err(Error::invalid(format!("n_points = {} < 4", self.n_points)));
        }
        Ok(())
    }
}

/// Lower-triangular Cholesky factor of a 2x2 covariance matrix.
fn chol2(a: f64, b: f64, c: f64) -> [f64; 3] {
    let l11 = a.sqrt();
    let l21 = b / l11;
    [l11, l21, (c - l21 * l21).sqrt()]
}

pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mut rng = seeded(cfg.seed, stream::SYNTHETIC);
    let pos = chol2(5.0, 1.0, 5.0);
    let neg = chol2(10.0, 1.0, 3.0);
    let proxy_sd = 0.5f64.sqrt();

    let n = cfg.n_points;
    let mut features = Vec::with_capacity(n * 4);
    let mut labels = Vec::with_capacity(n);
    let mut groups = Vec::with_capacity(n);
    for _ in 0..n {
        let y = rng.random_bool(0.5);
        let z1: f64 = StandardNormal.sample(&mut rng);
        let z2: f64 = StandardNormal.sample(&mut rng);
        let (mu, l) = if y { (2.0, pos) } else { (-2.0, neg) };
        let x1 = mu + l[0] * z1;
        let x2 = mu + l[1] * z1 + l[2] * z2;
        let p_xs = if y { cfg.p } else { 1.0 - cfg.p };
        let xs = rng.random_bool(p_xs);
        let xs_val = if xs { 1.0 } else { 0.0 };
        let zp: f64 = StandardNormal.sample(&mut rng);
        let xp = xs_val + proxy_sd * zp;
        features.extend_from_slice(&[x1, x2, xp, xs_val]);
        labels.push(y as u8);
        groups.push(if xs { Group::Advantaged } else { Group::Disadvantaged });
    }
    let names = SYNTHETIC_FEATURES.iter().map(|s| s.to_string()).collect();
    Ok(Dataset::new(features, 4, labels, groups, Some(3), names, cfg.seed)?.standardized())
}
