//! Datasets, ingestion, preprocessing and bias-manipulating transforms.

mod csv;
mod synthetic;
mod transform;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use self::csv::{load_csv, preprocess, write_csv, RawTable, Role, Schema};
pub use self::synthetic::{generate_synthetic, SyntheticConfig, SYNTHETIC_FEATURES};
pub use self::transform::{
    attach_fake_sensitive, dataset_dp, pearson_select, resample_unfair, select_features, split,
};

/// Sensitive-group membership. `Advantaged` is s1, `Disadvantaged` is s2.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Advantaged,
    Disadvantaged,
}

impl Group {
    pub fn tag(self) -> &'static str {
        match self {
            Group::Advantaged => "s1",
            Group::Disadvantaged => "s2",
        }
    }
}

/// A preprocessed binary-classification dataset.
///
/// Features are stored row-major. Immutable once built; transforms return
/// new datasets.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    n_features: usize,
    labels: Vec<u8>,
    groups: Vec<Group>,
    sensitive_col: Option<usize>,
    feature_names: Vec<String>,
    seed_provenance: u64,
}

impl Dataset {
    pub fn new(
        features: Vec<f64>,
        n_features: usize,
        labels: Vec<u8>,
        groups: Vec<Group>,
        sensitive_col: Option<usize>,
        feature_names: Vec<String>,
        seed_provenance: u64,
    ) -> Result<Self> {
        let m = labels.len();
        if n_features == 0 {
            return Err(Error::invalid("dataset needs at least one feature"));
        }
        if features.len() != m * n_features {
            return Err(Error::Shape(format!(
                "{} feature values for {m} rows x {n_features} columns",
                features.len()
            )));
        }
        if groups.len() != m {
            return Err(Error::Shape(format!("{} group tags for {m} rows", groups.len())));
        }
        if feature_names.len() != n_features {
            return Err(Error::Shape(format!(
                "{} feature names for {n_features} columns",
                feature_names.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y > 1) {
            return Err(Error::invalid(format!("label {bad} is not binary")));
        }
        if let Some(c) = sensitive_col {
            if c >= n_features {
                return Err(Error::invalid(format!("sensitive column {c} out of range")));
            }
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite feature value"));
        }
        Ok(Dataset {
            features,
            n_features,
            labels,
            groups,
            sensitive_col,
            feature_names,
            seed_provenance,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.features.chunks_exact(self.n_features)
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    pub fn sensitive_col(&self) -> Option<usize> {
        self.sensitive_col
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn seed_provenance(&self) -> u64 {
        self.seed_provenance
    }

    pub fn group_indices(&self, group: Group) -> Vec<usize> {
        (0..self.n_rows()).filter(|&i| self.groups[i] == group).collect()
    }

    pub fn group_size(&self, group: Group) -> usize {
        self.groups.iter().filter(|&&g| g == group).count()
    }

    /// Fails unless both groups have at least one row.
    pub fn require_both_groups(&self) -> Result<()> {
        if self.group_size(Group::Advantaged) == 0 {
            return Err(Error::EmptyGroup("s1"));
        }
        if self.group_size(Group::Disadvantaged) == 0 {
            return Err(Error::EmptyGroup("s2"));
        }
        Ok(())
    }

    /// Dataset restricted to `indices`, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.n_features);
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        Dataset {
            features,
            n_features: self.n_features,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            groups: indices.iter().map(|&i| self.groups[i]).collect(),
            sensitive_col: self.sensitive_col,
            feature_names: self.feature_names.clone(),
            seed_provenance: self.seed_provenance,
        }
    }

    /// Dataset restricted to the given feature columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Result<Dataset> {
        if cols.is_empty() {
            return Err(Error::invalid("no columns selected"));
        }
        if let Some(&c) = cols.iter().find(|&&c| c >= self.n_features) {
            return Err(Error::invalid(format!("column {c} out of range")));
        }
        let mut features = Vec::with_capacity(self.n_rows() * cols.len());
        for r in self.rows() {
            features.extend(cols.iter().map(|&c| r[c]));
        }
        let sensitive_col = self
            .sensitive_col
            .and_then(|s| cols.iter().position(|&c| c == s));
        Ok(Dataset {
            features,
            n_features: cols.len(),
            labels: self.labels.clone(),
            groups: self.groups.clone(),
            sensitive_col,
            feature_names: cols.iter().map(|&c| self.feature_names[c].clone()).collect(),
            seed_provenance: self.seed_provenance,
        })
    }

    /// Marks column `col` (or none) as the sensitive attribute.
    pub fn with_sensitive_col(mut self, col: Option<usize>) -> Result<Dataset> {
        if let Some(c) = col {
            if c >= self.n_features {
                return Err(Error::invalid(format!("sensitive column {c} out of range")));
            }
        }
        self.sensitive_col = col;
        Ok(self)
    }

    pub(crate) fn with_seed_provenance(mut self, seed: u64) -> Self {
        self.seed_provenance = seed;
        self
    }

    /// Z-scores every column in place (population standard deviation;
    /// constant columns become zero).
    pub fn standardized(mut self) -> Dataset {
        let m = self.n_rows();
        let d = self.n_features;
        for j in 0..d {
            let (mean, sd) = column_moments(self.features.iter().skip(j).step_by(d).copied(), m);
            for i in 0..m {
                let v = &mut self.features[i * d + j];
                *v = if sd > 0.0 { (*v - mean) / sd } else { 0.0 };
            }
        }
        self
    }
}

/// Mean and population standard deviation; `sd` is exactly zero for a
/// constant column.
pub(crate) fn column_moments(values: impl Iterator<Item = f64> + Clone, m: usize) -> (f64, f64) {
    if m == 0 {
        return (0.0, 0.0);
    }
    let first = values.clone().next().unwrap_or(0.0);
    if values.clone().all(|v| v == first) {
        return (first, 0.0);
    }
    let mean = values.clone().sum::<f64>() / m as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / m as f64;
    (mean, var.sqrt())
}
