//! Cross-group nearest-neighbour pairs.
//!
//! Similarity is Euclidean distance over every feature column except the
//! sensitive one. Neighbour ties go to the lowest row index.

use std::collections::HashSet;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Group};
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;

/// One matched pair. Indices are rows of the dataset the pairs were built
/// from; `advantaged` is always an s1 row and `disadvantaged` an s2 row.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pair {
    pub advantaged: usize,
    pub disadvantaged: usize,
    pub distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairSet {
    pub pairs: Vec<Pair>,
    pub metric: String,
    pub deduplicated: bool,
    /// Set when fewer pairs were available than requested.
    pub exhausted: bool,
}

impl PairSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn advantaged_rows(&self) -> Vec<usize> {
        self.pairs.iter().map(|p| p.advantaged).collect()
    }

    pub fn disadvantaged_rows(&self) -> Vec<usize> {
        self.pairs.iter().map(|p| p.disadvantaged).collect()
    }

    /// Checks that every pair references an existing row with the right tag.
    pub fn validate_against(&self, data: &Dataset) -> Result<()> {
        for p in &self.pairs {
            let ok = p.advantaged < data.n_rows()
                && p.disadvantaged < data.n_rows()
                && data.groups()[p.advantaged] == Group::Advantaged
                && data.groups()[p.disadvantaged] == Group::Disadvantaged;
            if !ok {
                return Err(Error::invalid(format!(
                    "pair ({}, {}) does not match the dataset's groups",
                    p.advantaged, p.disadvantaged
                )));
            }
        }
        Ok(())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        wtr.write_record(["index1", "index2", "distance"])?;
        for p in &self.pairs {
            wtr.write_record([
                p.advantaged.to_string(),
                p.disadvantaged.to_string(),
                p.distance.to_string(),
            ])?;
        }
        let bytes = wtr.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
        write_atomic(path, &bytes)
    }
}

const METRIC: &str = "euclidean(non-sensitive)";

/// Non-sensitive coordinates of every row, packed row-major.
struct Points {
    coords: Vec<f64>,
    dim: usize,
}

impl Points {
    fn new(data: &Dataset) -> Points {
        let cols: Vec<usize> = (0..data.n_features())
            .filter(|&j| Some(j) != data.sensitive_col())
            .collect();
        let mut coords = Vec::with_capacity(data.n_rows() * cols.len());
        for r in data.rows() {
            coords.extend(cols.iter().map(|&j| r[j]));
        }
        Points { coords, dim: cols.len() }
    }

    fn get(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    fn sq_dist(&self, i: usize, j: usize) -> f64 {
        self.get(i)
            .iter()
            .zip(self.get(j))
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    /// Nearest candidate to `i`; candidates are in ascending row order so a
    /// strict `<` keeps the lowest index on ties.
    fn nearest(&self, i: usize, candidates: &[usize]) -> (usize, f64) {
        let mut best = (candidates[0], f64::INFINITY);
        for &j in candidates {
            let d = self.sq_dist(i, j);
            if d < best.1 {
                best = (j, d);
            }
        }
        (best.0, best.1.sqrt())
    }
}

/// Both sweeps in order (s1 -> s2, then s2 -> s1), deduplicated keeping the
/// first occurrence.
fn sweep(data: &Dataset) -> Result<Vec<Pair>> {
    data.require_both_groups()?;
    let g1 = data.group_indices(Group::Advantaged);
    let g2 = data.group_indices(Group::Disadvantaged);
    let pts = Points::new(data);

    let forward: Vec<Pair> = g1
        .par_iter()
        .map(|&i| {
            let (j, d) = pts.nearest(i, &g2);
            Pair { advantaged: i, disadvantaged: j, distance: d }
        })
        .collect();
    let backward: Vec<Pair> = g2
        .par_iter()
        .map(|&j| {
            let (i, d) = pts.nearest(j, &g1);
            Pair { advantaged: i, disadvantaged: j, distance: d }
        })
        .collect();

    let mut seen = HashSet::with_capacity(forward.len() + backward.len());
    Ok(forward
        .into_iter()
        .chain(backward)
        .filter(|p| seen.insert((p.advantaged, p.disadvantaged)))
        .collect())
}

/// Pairs every row with its nearest neighbour in the other group, in both
/// directions, for the training-time fairness loss.
pub fn build_pairs(data: &Dataset) -> Result<PairSet> {
    Ok(PairSet {
        pairs: sweep(data)?,
        metric: METRIC.into(),
        deduplicated: true,
        exhausted: false,
    })
}

/// The `n` closest distinct nearest-neighbour matches, ranked by distance
/// then by row indices.
pub fn select_eval_pairs(data: &Dataset, n: usize) -> Result<PairSet> {
    if n == 0 {
        return Err(Error::invalid("requested zero evaluation pairs"));
    }
    let mut pairs = sweep(data)?;
    pairs.sort_by(|a, b| {
        a.distance
            .total_cmp(&b.distance)
            .then(a.advantaged.cmp(&b.advantaged))
            .then(a.disadvantaged.cmp(&b.disadvantaged))
    });
    let exhausted = pairs.len() < n;
    pairs.truncate(n);
    Ok(PairSet {
        pairs,
        metric: METRIC.into(),
        deduplicated: true,
        exhausted,
    })
}
