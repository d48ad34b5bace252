//! Feature attributions: input gradients, KernelSHAP and exact Shapley
//! values. Every method explains the pre-sigmoid logit.

mod shap;

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::model::{MlpParams, Scorer};
use crate::rng::child_seed;

pub use shap::{exact_shapley, kernel_shap, Background, ShapBudget, ShapValues};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Grad,
    KernelShap,
    ExactShapley,
}

impl Method {
    pub fn tag(self) -> &'static str {
        match self {
            Method::Grad => "grad",
            Method::KernelShap => "kernel_shap",
            Method::ExactShapley => "exact_shapley",
        }
    }
}

/// Attributions for a list of dataset rows, one row of `n_features` values
/// per referenced row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplanationSet {
    attributions: Vec<f64>,
    n_features: usize,
    pub method: Method,
    pub row_refs: Vec<usize>,
    /// Expected model output over the background; 0 for gradients.
    pub base_value: f64,
}

impl ExplanationSet {
    pub fn new(attributions: Vec<f64>, n_features: usize, method: Method, row_refs: Vec<usize>, base_value: f64) -> Result<Self> {
        if n_features == 0 || attributions.len() != row_refs.len() * n_features {
            return Err(Error::Shape(format!(
                "{} attribution values for {} rows of {n_features}",
                attributions.len(),
                row_refs.len()
            )));
        }
        if attributions.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite attribution"));
        }
        Ok(ExplanationSet { attributions, n_features, method, row_refs, base_value })
    }

    pub fn len(&self) -> usize {
        self.row_refs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.row_refs.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.attributions[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn rows(&self) -> impl DoubleEndedIterator<Item = &[f64]> + ExactSizeIterator {
        self.attributions.chunks(self.n_features)
    }

    /// Attribution of feature `j` for every row.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    /// Rows `[from, to)` as a new set.
    pub fn slice(&self, from: usize, to: usize) -> ExplanationSet {
        let d = self.n_features;
        ExplanationSet {
            attributions: self.attributions[from * d..to * d].to_vec(),
            n_features: d,
            method: self.method,
            row_refs: self.row_refs[from..to].to_vec(),
            base_value: self.base_value,
        }
    }

    /// CSV with columns `row_ref, group, <features>, base_value, method`;
    /// groups are looked up in `data`.
    pub fn write_csv(&self, data: &Dataset, path: &Path) -> Result<()> {
        if data.n_features() != self.n_features {
            return Err(Error::Shape(format!(
                "dataset has {} features, explanations {}",
                data.n_features(),
                self.n_features
            )));
        }
        let mut wtr = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["row_ref".to_string(), "group".to_string()];
        header.extend(data.feature_names().iter().cloned());
        header.extend(["base_value".to_string(), "method".to_string()]);
        wtr.write_record(&header)?;
        for (r, attr) in self.row_refs.iter().zip(self.rows()) {
            let group = data
                .groups()
                .get(*r)
                .ok_or_else(|| Error::invalid(format!("row {r} is not in the dataset")))?;
            let mut rec = vec![r.to_string(), group.tag().to_string()];
            rec.extend(attr.iter().map(|v| v.to_string()));
            rec.push(self.base_value.to_string());
            rec.push(self.method.tag().to_string());
            wtr.write_record(&rec)?;
        }
        let bytes = wtr.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
        write_atomic(path, &bytes)
    }
}

fn check_rows(data: &Dataset, rows: &[usize]) -> Result<()> {
    match rows.iter().find(|&&r| r >= data.n_rows()) {
        Some(r) => Err(Error::invalid(format!("row {r} out of range for {} rows", data.n_rows()))),
        None => Ok(()),
    }
}

/// Logit input gradients of the given dataset rows.
pub fn grad_explanations(params: &MlpParams, data: &Dataset, rows: &[usize]) -> Result<ExplanationSet> {
    check_rows(data, rows)?;
    if data.n_features() != params.n_inputs() {
        return Err(Error::Shape(format!(
            "dataset has {} features, model expects {}",
            data.n_features(),
            params.n_inputs()
        )));
    }
    let attributions = rows.iter().flat_map(|&r| params.input_gradient(data.row(r))).collect();
    ExplanationSet::new(attributions, data.n_features(), Method::Grad, rows.to_vec(), 0.0)
}

/// KernelSHAP attributions of the given dataset rows. Row `r` draws its
/// coalitions from `child_seed(seed, r)`, so results do not depend on the
/// order or grouping of rows.
pub fn shap_explanations<M: Scorer>(
    model: &M,
    data: &Dataset,
    rows: &[usize],
    background: &Background,
    budget: ShapBudget,
    seed: u64,
) -> Result<ExplanationSet> {
    check_rows(data, rows)?;
    let per_row: Vec<ShapValues> = rows
        .par_iter()
        .map(|&r| kernel_shap(model, data.row(r), background, budget, child_seed(seed, r as u64)))
        .collect::<Result<_>>()?;
    let base = background.base_value(model);
    let attributions = per_row.into_iter().flat_map(|v| v.phi).collect();
    ExplanationSet::new(attributions, data.n_features(), Method::KernelShap, rows.to_vec(), base)
}
