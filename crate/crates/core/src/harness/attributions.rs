use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Group};
use crate::error::{Error, Result};
use crate::explain::{shap_explanations, Background, ShapBudget};
use crate::fsutil::write_atomic;
use crate::model::Scorer;
use crate::pairing::PairSet;

/// Per-group SHAP statistics of the sensitive feature over the paired rows.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitiveSummary {
    pub mean_advantaged: f64,
    pub mean_disadvantaged: f64,
    pub mean_abs_advantaged: f64,
    pub mean_abs_disadvantaged: f64,
    /// Mean |SHAP| over every feature and row.
    pub global_mean_abs: f64,
}

pub struct SensitiveAttributions {
    pub rows: Vec<(usize, Group, f64)>,
    pub summary: SensitiveSummary,
}

/// SHAP values of the sensitive feature for every advantaged then every
/// disadvantaged row in `pairs`.
pub fn sensitive_attributions<M: Scorer>(
    model: &M,
    data: &Dataset,
    pairs: &PairSet,
    background: &Background,
    budget: ShapBudget,
    seed: u64,
) -> Result<SensitiveAttributions> {
    let s = data
        .sensitive_col()
        .ok_or_else(|| Error::invalid("dataset has no sensitive feature column"))?;
    if pairs.is_empty() {
        return Err(Error::invalid("no pairs"));
    }
    pairs.validate_against(data)?;
    let refs: Vec<usize> = pairs.advantaged_rows().into_iter().chain(pairs.disadvantaged_rows()).collect();
    let set = shap_explanations(model, data, &refs, background, budget, seed)?;
    let rows: Vec<(usize, Group, f64)> =
        refs.iter().zip(set.rows()).map(|(&r, phi)| (r, data.groups()[r], phi[s])).collect();

    let group_mean = |g: Group, f: fn(f64) -> f64| {
        let v: Vec<f64> = rows.iter().filter(|r| r.1 == g).map(|r| f(r.2)).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let all = set.rows().flatten().map(|v| v.abs());
    let summary = SensitiveSummary {
        mean_advantaged: group_mean(Group::Advantaged, |v| v),
        mean_disadvantaged: group_mean(Group::Disadvantaged, |v| v),
        mean_abs_advantaged: group_mean(Group::Advantaged, f64::abs),
        mean_abs_disadvantaged: group_mean(Group::Disadvantaged, f64::abs),
        global_mean_abs: all.sum::<f64>() / (set.len() * set.n_features()) as f64,
    };
    Ok(SensitiveAttributions { rows, summary })
}

/// Writes `row_ref,group,shap_sensitive` rows followed by one `mean` row
/// per group, and returns the summary.
pub fn emit_sensitive_attributions<M: Scorer>(
    model: &M,
    data: &Dataset,
    pairs: &PairSet,
    background: &Background,
    budget: ShapBudget,
    seed: u64,
    out: &Path,
) -> Result<SensitiveSummary> {
    let attr = sensitive_attributions(model, data, pairs, background, budget, seed)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["row_ref", "group", "shap_sensitive"])?;
    for (r, g, v) in &attr.rows {
        w.write_record([r.to_string(), g.tag().to_string(), v.to_string()])?;
    }
    w.write_record(["mean", Group::Advantaged.tag(), &attr.summary.mean_advantaged.to_string()])?;
    w.write_record(["mean", Group::Disadvantaged.tag(), &attr.summary.mean_disadvantaged.to_string()])?;
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    write_atomic(out, &bytes)?;
    Ok(attr.summary)
}
