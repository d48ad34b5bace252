//! Independent forward pass and finite-difference oracles shared by the
//! gradient and acceptance tests.
#![allow(dead_code)]

use procfair::data::{Dataset, Group};
use procfair::model::{GradTarget, MlpParams, Parameters};
use procfair::pairing::{Pair, PairSet};
use procfair::train::dp_proxy_grads;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const EPS: f64 = 1e-5;
/// Components smaller than this are compared absolutely.
pub const FLOOR: f64 = 1e-6;

pub struct Net {
    pub d: usize,
    pub h: usize,
    pub theta: Vec<f64>,
}

impl Net {
    pub fn w1(&self, j: usize, f: usize) -> f64 {
        self.theta[j * self.d + f]
    }
    pub fn b1(&self, j: usize) -> f64 {
        self.theta[self.h * self.d + j]
    }
    pub fn w2(&self, j: usize) -> f64 {
        self.theta[self.h * self.d + self.h + j]
    }
    pub fn b2(&self) -> f64 {
        self.theta[self.h * self.d + 2 * self.h]
    }

    pub fn pre(&self, x: &[f64], j: usize) -> f64 {
        self.b1(j) + (0..self.d).map(|f| self.w1(j, f) * x[f]).sum::<f64>()
    }

    pub fn logit(&self, x: &[f64]) -> f64 {
        self.b2() + (0..self.h).map(|j| self.w2(j) * self.pre(x, j).max(0.0)).sum::<f64>()
    }

    pub fn explanation(&self, x: &[f64], target: GradTarget) -> Vec<f64> {
        let scale = match target {
            GradTarget::Logit => 1.0,
            GradTarget::Probability => {
                let p = 1.0 / (1.0 + (-self.logit(x)).exp());
                p * (1.0 - p)
            }
        };
        (0..self.d)
            .map(|f| {
                scale
                    * (0..self.h)
                        .filter(|&j| self.pre(x, j) > 0.0)
                        .map(|j| self.w1(j, f) * self.w2(j))
                        .sum::<f64>()
            })
            .collect()
    }

    pub fn bce(&self, data: &Dataset) -> f64 {
        let m = data.n_rows() as f64;
        data.rows()
            .zip(data.labels())
            .map(|(x, &y)| {
                let p = 1.0 / (1.0 + (-self.logit(x)).exp());
                if y == 1 { -p.ln() } else { -(1.0 - p).ln() }
            })
            .sum::<f64>()
            / m
    }

    pub fn gpf(&self, data: &Dataset, pairs: &[(usize, usize)], target: GradTarget) -> f64 {
        pairs
            .iter()
            .map(|&(a, b)| {
                let ea = self.explanation(data.row(a), target);
                let eb = self.explanation(data.row(b), target);
                ea.iter().zip(&eb).map(|(u, v)| (u - v).abs()).sum::<f64>()
            })
            .sum::<f64>()
            / pairs.len() as f64
    }

    pub fn dp_proxy(&self, data: &Dataset) -> f64 {
        let mean = |g: Group| {
            let rows: Vec<&[f64]> = data.rows().zip(data.groups()).filter(|(_, &x)| x == g).map(|(r, _)| r).collect();
            rows.iter().map(|x| 1.0 / (1.0 + (-self.logit(x)).exp())).sum::<f64>() / rows.len() as f64
        };
        (mean(Group::Advantaged) - mean(Group::Disadvantaged)).abs()
    }

    pub fn min_abs_pre(&self, data: &Dataset) -> f64 {
        data.rows()
            .flat_map(|x| (0..self.h).map(move |j| self.pre(x, j).abs()))
            .fold(f64::INFINITY, f64::min)
    }
}

pub fn to_params(net: &Net) -> MlpParams {
    let (d, h) = (net.d, net.h);
    let t = &net.theta;
    MlpParams::from_parts(
        t[..h * d].to_vec(),
        t[h * d..h * d + h].to_vec(),
        t[h * d + h..h * d + 2 * h].to_vec(),
        t[h * d + 2 * h],
    )
    .unwrap()
}

pub fn random_case(seed: u64) -> (Net, Dataset, Vec<(usize, usize)>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.random_range(2..=5);
    let h = rng.random_range(2..=6);
    let m = rng.random_range(6..=12);
    let theta = (0..h * d + 2 * h + 1).map(|_| rng.random_range(-1.0..1.0)).collect();
    let features: Vec<f64> = (0..m * d).map(|_| rng.random_range(-2.0..2.0)).collect();
    let labels: Vec<u8> = (0..m).map(|_| rng.random_range(0..=1)).collect();
    let groups: Vec<Group> = (0..m)
        .map(|i| if i % 2 == 0 { Group::Advantaged } else { Group::Disadvantaged })
        .collect();
    let names = (0..d).map(|j| format!("f{j}")).collect();
    let data = Dataset::new(features, d, labels, groups, None, names, seed).unwrap();
    let k = rng.random_range(2..=m / 2);
    let pairs = (0..k)
        .map(|_| (2 * rng.random_range(0..m / 2), 2 * rng.random_range(0..m / 2) + 1))
        .collect();
    (Net { d, h, theta }, data, pairs)
}

pub fn max_rel_error(analytic: &[f64], mut loss: impl FnMut(&[f64]) -> f64, theta: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for k in 0..theta.len() {
        let mut hi = theta.to_vec();
        hi[k] += EPS;
        let mut lo = theta.to_vec();
        lo[k] -= EPS;
        let fd = (loss(&hi) - loss(&lo)) / (2.0 * EPS);
        let rel = (analytic[k] - fd).abs() / analytic[k].abs().max(fd.abs()).max(FLOOR);
        worst = worst.max(rel);
    }
    worst
}

/// Outcome of one oracle sweep: configurations checked and the worst
/// relative error among them.
pub struct Check {
    pub checked: usize,
    pub worst: f64,
}

pub fn bce_check(seeds: std::ops::Range<u64>) -> Check {
    let mut out = Check { checked: 0, worst: 0.0 };
    for seed in seeds {
        let (mut net, data, _) = random_case(seed);
        if net.min_abs_pre(&data) < 1e-3 {
            continue;
        }
        let (loss, grads) = to_params(&net).bce_loss_grads(&data).unwrap();
        assert!((loss - net.bce(&data)).abs() < 1e-12, "seed {seed}: loss mismatch");
        let theta = net.theta.clone();
        let err = max_rel_error(
            grads.values(),
            |t| {
                net.theta = t.to_vec();
                net.bce(&data)
            },
            &theta,
        );
        out.worst = out.worst.max(err);
        out.checked += 1;
    }
    out
}

pub fn gpf_check(target: GradTarget, seeds: std::ops::Range<u64>) -> Check {
    let mut out = Check { checked: 0, worst: 0.0 };
    for seed in seeds {
        let (mut net, data, raw) = random_case(seed);
        if net.min_abs_pre(&data) < 1e-3 {
            continue;
        }
        // stay away from the l1 kinks too
        let near_kink = raw.iter().any(|&(a, b)| {
            let ea = net.explanation(data.row(a), target);
            let eb = net.explanation(data.row(b), target);
            ea.iter().zip(&eb).any(|(u, v)| (u - v).abs() < 1e-4)
        });
        if near_kink {
            continue;
        }
        let pairs = PairSet {
            pairs: raw.iter().map(|&(a, b)| Pair { advantaged: a, disadvantaged: b, distance: 0.0 }).collect(),
            metric: "euclidean".into(),
            deduplicated: false,
            exhausted: false,
        };
        let (loss, grads) = to_params(&net).gpf_loss_grads(&data, &pairs, target).unwrap();
        assert!((loss - net.gpf(&data, &raw, target)).abs() < 1e-12, "seed {seed}: loss mismatch");
        let theta = net.theta.clone();
        let err = max_rel_error(
            grads.values(),
            |t| {
                net.theta = t.to_vec();
                net.gpf(&data, &raw, target)
            },
            &theta,
        );
        out.worst = out.worst.max(err);
        out.checked += 1;
    }
    out
}

pub fn dp_proxy_check(seeds: std::ops::Range<u64>) -> Check {
    let mut out = Check { checked: 0, worst: 0.0 };
    for seed in seeds {
        let (mut net, data, _) = random_case(seed);
        if net.min_abs_pre(&data) < 1e-3 || net.dp_proxy(&data) < 1e-4 {
            continue;
        }
        let (loss, grads) = dp_proxy_grads(&to_params(&net), &data).unwrap();
        assert!((loss - net.dp_proxy(&data)).abs() < 1e-12, "seed {seed}: loss mismatch");
        let theta = net.theta.clone();
        let err = max_rel_error(
            grads.values(),
            |t| {
                net.theta = t.to_vec();
                net.dp_proxy(&data)
            },
            &theta,
        );
        out.worst = out.worst.max(err);
        out.checked += 1;
    }
    out
}
