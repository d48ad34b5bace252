use serde::{Deserialize, Serialize};

use super::{is_timing, ResultBundle, METRICS};
use crate::error::{Error, Result};
use crate::stats::{mean, rank_sum_test, Alternative};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub first: String,
    pub second: String,
    pub metric: String,
    pub mean_first: f64,
    pub mean_second: f64,
    pub p_value: f64,
    pub significant: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub alpha: f64,
    pub rows: Vec<ComparisonRow>,
}

impl Comparison {
    pub fn get(&self, first: &str, second: &str, metric: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.first == first && r.second == second && r.metric == metric)
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.into_inner().map_err(|e| Error::invalid(e.to_string()))
    }
}

/// Two-sided Wilcoxon rank-sum tests between every pair of bundles for each
/// named metric (every non-timing metric when `metrics` is empty). Metrics
/// undefined in all repetitions of either bundle are skipped.
pub fn compare_scenarios(bundles: &[ResultBundle], metrics: &[String], alpha: f64) -> Result<Comparison> {
    if bundles.len() < 2 {
        return Err(Error::invalid("comparison needs at least two bundles"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha {alpha} outside (0, 1)")));
    }
    let reps = bundles[0].repetitions.len();
    if let Some(b) = bundles.iter().find(|b| b.repetitions.len() != reps) {
        return Err(Error::invalid(format!(
            "scenario `{}` has {} repetitions, `{}` has {reps}",
            b.scenario.id,
            b.repetitions.len(),
            bundles[0].scenario.id
        )));
    }
    let names: Vec<String> = if metrics.is_empty() {
        METRICS.iter().filter(|m| !is_timing(m)).map(|m| m.to_string()).collect()
    } else {
        for m in metrics {
            if !METRICS.contains(&m.as_str()) {
                return Err(Error::invalid(format!("unknown metric `{m}`")));
            }
        }
        metrics.to_vec()
    };

    let mut rows = Vec::new();
    for (i, a) in bundles.iter().enumerate() {
        for b in &bundles[i + 1..] {
            for m in &names {
                let (x, y) = (a.values(m), b.values(m));
                if x.is_empty() || y.is_empty() {
                    continue;
                }
                let p_value = rank_sum_test(&x, &y, Alternative::TwoSided)?;
                rows.push(ComparisonRow {
                    first: a.scenario.id.clone(),
                    second: b.scenario.id.clone(),
                    metric: m.clone(),
                    mean_first: mean(&x),
                    mean_second: mean(&y),
                    p_value,
                    significant: p_value < alpha,
                });
            }
        }
    }
    Ok(Comparison { alpha, rows })
}
