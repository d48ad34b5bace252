//! Small statistics used by aggregation and the test suites.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n - 1 denominator); 0 for a single value.
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return if xs.is_empty() { f64::NAN } else { 0.0 };
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Midranks (1-based, ties share their average rank).
pub fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    sab / (saa * sbb).sqrt()
}

pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::invalid("spearman needs two equal-length samples of size >= 2"));
    }
    Ok(pearson(&ranks(a), &ranks(b)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Alternative {
    /// First sample tends to be smaller.
    Less,
    /// First sample tends to be larger.
    Greater,
    TwoSided,
}

/// Wilcoxon rank-sum test p-value. Exact (tie-aware) when both samples
/// have at most 10 values, normal approximation with continuity and tie
/// corrections otherwise.
pub fn rank_sum_test(x: &[f64], y: &[f64], alt: Alternative) -> Result<f64> {
    let (n1, n2) = (x.len(), y.len());
    if n1 == 0 || n2 == 0 {
        return Err(Error::invalid("rank-sum test needs two non-empty samples"));
    }
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    let r = ranks(&pooled);
    let w: f64 = r[..n1].iter().sum();
    let (p_le, p_ge) = if n1 <= 10 && n2 <= 10 {
        exact_tails(&r, n1, w)
    } else {
        normal_tails(&r, n1, n2, w)
    };
    let p = match alt {
        Alternative::Less => p_le,
        Alternative::Greater => p_ge,
        Alternative::TwoSided => 2.0 * p_le.min(p_ge),
    };
    Ok(p.min(1.0))
}

/// `P(W <= w)` and `P(W >= w)` under random assignment of the pooled
/// (mid)ranks, counting subsets over doubled ranks so ties stay integral.
fn exact_tails(ranks: &[f64], n1: usize, w: f64) -> (f64, f64) {
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let max_sum: usize = doubled.iter().sum();
    // counts[k][s]: subsets of size k with doubled-rank sum s
    let mut counts = vec![vec![0.0f64; max_sum + 1]; n1 + 1];
    counts[0][0] = 1.0;
    for &v in &doubled {
        for k in (1..=n1).rev() {
            for s in (v..=max_sum).rev() {
                counts[k][s] += counts[k - 1][s - v];
            }
        }
    }
    let total: f64 = counts[n1].iter().sum();
    let target = (2.0 * w).round() as usize;
    let le: f64 = counts[n1][..=target.min(max_sum)].iter().sum();
    let ge: f64 = counts[n1][target.min(max_sum + 1)..].iter().sum();
    (le / total, ge / total)
}

fn normal_tails(ranks: &[f64], n1: usize, n2: usize, w: f64) -> (f64, f64) {
    let n = (n1 + n2) as f64;
    let (a, b) = (n1 as f64, n2 as f64);
    let mu = a * (n + 1.0) / 2.0;
    let mut sorted = ranks.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut ties = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|&&v| v == sorted[i]).count();
        let t = j as f64;
        ties += t * t * t - t;
        i += j;
    }
    let var = a * b / 12.0 * ((n + 1.0) - ties / (n * (n - 1.0)));
    if var <= 0.0 {
        return (1.0, 1.0);
    }
    let sd = var.sqrt();
    let std_normal = Normal::new(0.0, 1.0).expect("valid normal");
    let le = std_normal.cdf((w - mu + 0.5) / sd);
    let ge = 1.0 - std_normal.cdf((w - mu - 0.5) / sd);
    (le, ge)
}

/// Kolmogorov-Smirnov distance between the empirical CDF of `xs` and the
/// Uniform(0, 1) CDF.
pub fn ks_uniform(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = x.clamp(0.0, 1.0);
            ((i + 1) as f64 / n - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max)
}
