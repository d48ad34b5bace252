//! Logistic-regression experiments that inject decision-process bias by
//! overriding the sensitive weight `w_s`, alone or crossed with the
//! synthetic bias parameter `p`.

use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{generate_synthetic, pearson_select, split, Dataset, SyntheticConfig};
use crate::error::{Error, Result};
use crate::explain::{Background, ShapBudget};
use crate::fairness::{demographic_parity, gpf_fae, GpfFae, MmdConfig};
use crate::fsutil::write_atomic;
use crate::model::{linear_train, override_sensitive_weight, LinearParams};
use crate::pairing::{select_eval_pairs, PairSet};
use crate::train::{predict, EvalConfig};

/// Evenly spaced values `lo, ..., hi`; written `lo:hi:count`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, count: usize) -> Result<Self> {
        let axis = Axis { lo, hi, count };
        axis.validate()?;
        Ok(axis)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite()) || self.count == 0 {
            return Err(Error::invalid(format!("bad axis {}:{}:{}", self.lo, self.hi, self.count)));
        }
        if self.count > 1 && !(self.lo < self.hi) {
            return Err(Error::invalid(format!("axis needs lo < hi, got {}:{}", self.lo, self.hi)));
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.lo];
        }
        let step = (self.hi - self.lo) / (self.count - 1) as f64;
        (0..self.count)
            .map(|i| if i + 1 == self.count { self.hi } else { self.lo + step * i as f64 })
            .collect()
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || Error::invalid(format!("expected lo:hi:count, got {s:?}"));
        let [lo, hi, count] = parts.as_slice() else {
            return Err(bad());
        };
        Axis::new(
            lo.trim().parse().map_err(|_| bad())?,
            hi.trim().parse().map_err(|_| bad())?,
            count.trim().parse().map_err(|_| bad())?,
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub n_points: usize,
    pub pearson_threshold: f64,
    pub split_ratio: f64,
    pub epochs: usize,
    pub lr: f64,
    /// Skip the permutation test and report only DP and accuracy.
    pub compute_gpf: bool,
    pub eval: EvalConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            n_points: 20_000,
            pearson_threshold: 0.4,
            split_ratio: 0.8,
            epochs: 300,
            lr: 0.05,
            compute_gpf: true,
            eval: EvalConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub p: f64,
    pub ws: f64,
    pub ws_normalized: f64,
    pub dp: f64,
    pub gpf_fae: Option<f64>,
    pub accuracy: f64,
}

/// How `ws_normalized` was derived: min-max onto `[-1, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub method: String,
    pub ws_min: f64,
    pub ws_max: f64,
}

impl Normalization {
    fn min_max(ws: &[f64]) -> Self {
        let lo = ws.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = ws.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Normalization { method: "min_max_to_[-1,1]".into(), ws_min: lo, ws_max: hi }
    }

    pub fn apply(&self, ws: f64) -> f64 {
        if self.ws_max > self.ws_min {
            2.0 * (ws - self.ws_min) / (self.ws_max - self.ws_min) - 1.0
        } else {
            0.0
        }
    }
}

/// Complete `p x w_s` grid, stored p-major.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepGrid {
    pub p_values: Vec<f64>,
    pub ws_values: Vec<f64>,
    pub cells: Vec<SweepCell>,
    pub normalization: Normalization,
}

impl SweepGrid {
    pub fn cell(&self, p_index: usize, ws_index: usize) -> &SweepCell {
        &self.cells[p_index * self.ws_values.len() + ws_index]
    }

    /// Cells along `w_s` at the grid `p` nearest to `p`.
    pub fn plane_at_p(&self, p: f64) -> Vec<SweepCell> {
        let i = nearest(&self.p_values, p);
        (0..self.ws_values.len()).map(|j| *self.cell(i, j)).collect()
    }

    /// Cells along `p` at the grid `w_s` nearest to `ws`.
    pub fn plane_at_ws(&self, ws: f64) -> Vec<SweepCell> {
        let j = nearest(&self.ws_values, ws);
        (0..self.p_values.len()).map(|i| *self.cell(i, j)).collect()
    }

    /// Long format: `p, ws, ws_normalized, dp, gpf_fae, acc`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        wtr.write_record(["p", "ws", "ws_normalized", "dp", "gpf_fae", "acc"])?;
        for c in &self.cells {
            wtr.write_record([
                c.p.to_string(),
                c.ws.to_string(),
                c.ws_normalized.to_string(),
                c.dp.to_string(),
                c.gpf_fae.map(|v| v.to_string()).unwrap_or_default(),
                c.accuracy.to_string(),
            ])?;
        }
        let bytes = wtr.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
        write_atomic(path, &bytes)
    }
}

/// Index of the value closest to `target`, lowest index on ties.
pub fn nearest(values: &[f64], target: f64) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if (v - target).abs() < (values[best] - target).abs() {
            best = i;
        }
    }
    best
}

/// GPF_FAE of a linear model. Its input gradient is the same for every
/// row, so attributions come from KernelSHAP instead.
pub fn linear_gpf_pairs(
    params: &LinearParams,
    data: &Dataset,
    pairs: &PairSet,
    background: &Background,
    budget: ShapBudget,
    cfg: &MmdConfig,
) -> Result<GpfFae> {
    gpf_fae(params, data, pairs, background, budget, cfg)
}

/// Fitted state shared by every `w_s` cell at one `p`.
struct Fitted {
    model: LinearParams,
    test: Dataset,
    pairs: PairSet,
    background: Background,
}

fn fit(data: &Dataset, cfg: &SweepConfig, seed: u64) -> Result<Fitted> {
    let (train, test) = split(data, cfg.split_ratio, seed)?;
    let model = linear_train(&train, cfg.epochs, cfg.lr, seed)?;
    let pairs = select_eval_pairs(&test, cfg.eval.n_pairs)?;
    let background = Background::sample(&train, cfg.eval.background_size, seed)?;
    Ok(Fitted { model, test, pairs, background })
}

fn cells_for(fitted: &Fitted, p: f64, ws_values: &[f64], norm: &Normalization, cfg: &SweepConfig, seed: u64) -> Result<Vec<SweepCell>> {
    ws_values
        .par_iter()
        .map(|&ws| {
            let model = override_sensitive_weight(&fitted.model, ws)?;
            let preds = predict(&model, &fitted.test);
            let correct = preds.iter().zip(fitted.test.labels()).filter(|(a, b)| a == b).count();
            let gpf = if cfg.compute_gpf {
                let mmd = MmdConfig { seed, ..cfg.eval.mmd };
                let r = linear_gpf_pairs(&model, &fitted.test, &fitted.pairs, &fitted.background, cfg.eval.shap_budget, &mmd)?;
                Some(r.p_value())
            } else {
                None
            };
            Ok(SweepCell {
                p,
                ws,
                ws_normalized: norm.apply(ws),
                dp: demographic_parity(&preds, fitted.test.groups())?,
                gpf_fae: gpf,
                accuracy: correct as f64 / fitted.test.n_rows() as f64,
            })
        })
        .collect()
}

/// One logistic fit on `data` (already feature-selected), then every `w_s`
/// in `ws` substituted for the sensitive weight and evaluated on the test
/// split. `p` only labels the output cells.
pub fn sweep_ws(data: &Dataset, p: f64, ws: Axis, cfg: &SweepConfig, seed: u64) -> Result<SweepGrid> {
    ws.validate()?;
    let ws_values = ws.values();
    let norm = Normalization::min_max(&ws_values);
    let fitted = fit(data, cfg, seed)?;
    let cells = cells_for(&fitted, p, &ws_values, &norm, cfg, seed)?;
    Ok(SweepGrid { p_values: vec![p], ws_values, cells, normalization: norm })
}

/// Synthetic data at every `p` (same seed throughout), Pearson selection,
/// one logistic fit per `p`, then the `w_s` sweep.
pub fn sweep_p_ws(p: Axis, ws: Axis, cfg: &SweepConfig, seed: u64) -> Result<SweepGrid> {
    p.validate()?;
    ws.validate()?;
    let p_values = p.values();
    let ws_values = ws.values();
    let norm = Normalization::min_max(&ws_values);
    let mut cells = Vec::with_capacity(p_values.len() * ws_values.len());
    for &pv in &p_values {
        let data = generate_synthetic(&SyntheticConfig { n_points: cfg.n_points, p: pv, seed })?;
        let selected = pearson_select(&data, cfg.pearson_threshold)?;
        let fitted = fit(&selected, cfg, seed)?;
        cells.extend(cells_for(&fitted, pv, &ws_values, &norm, cfg, seed)?);
    }
    Ok(SweepGrid { p_values, ws_values, cells, normalization: norm })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explain::shap_explanations;

    #[test]
    fn axis_parsing_and_values() {
        let a: Axis = "-5:5:11".parse().unwrap();
        assert_eq!(a.values().len(), 11);
        assert_eq!(a.values()[5], 0.0);
        assert_eq!(*a.values().last().unwrap(), 5.0);
        assert_eq!("0.3:0.7:1".parse::<Axis>().unwrap().values(), vec![0.3]);
        assert!("1:0:3".parse::<Axis>().is_err());
        assert!("1:2".parse::<Axis>().is_err());
        assert!("a:2:3".parse::<Axis>().is_err());
    }

    #[test]
    fn normalization_maps_to_unit_interval() {
        let n = Normalization::min_max(&[-5.0, 0.0, 5.0]);
        assert_eq!((n.apply(-5.0), n.apply(0.0), n.apply(5.0)), (-1.0, 0.0, 1.0));
        let n = Normalization::min_max(&[-2.0, 6.0]);
        assert_eq!(n.apply(2.0), 0.0);
    }

    #[test]
    fn nearest_breaks_ties_low() {
        assert_eq!(nearest(&[-0.1, 0.1, 0.3], 0.0), 0);
        assert_eq!(nearest(&[-1.0, 0.0, 1.0], 0.2), 1);
    }

    fn small_cfg() -> SweepConfig {
        SweepConfig {
            n_points: 2000,
            eval: EvalConfig { mmd: MmdConfig { n_permutations: 200, ..Default::default() }, ..Default::default() },
            ..Default::default()
        }
    }

    #[test]
    fn sensitive_shap_follows_ws_sign() {
        let data = generate_synthetic(&SyntheticConfig { n_points: 2000, p: 0.65, seed: 4 }).unwrap();
        let data = pearson_select(&data, 0.4).unwrap();
        let s = data.sensitive_col().unwrap();
        let fitted = fit(&data, &small_cfg(), 4).unwrap();
        let rows: Vec<usize> = fitted.pairs.advantaged_rows().into_iter().chain(fitted.pairs.disadvantaged_rows()).collect();
        let n = fitted.pairs.len();
        for (ws, check) in [(0.0, 0), (1.5, 1)] {
            let m = override_sensitive_weight(&fitted.model, ws).unwrap();
            let e = shap_explanations(&m, &fitted.test, &rows, &fitted.background, ShapBudget::Auto, 1).unwrap();
            let col = e.column(s);
            if check == 0 {
                assert!(col.iter().all(|v| v.abs() < 1e-12));
            } else {
                assert!(col[..n].iter().all(|&v| v > 0.0));
                assert!(col[n..].iter().all(|&v| v < 0.0));
            }
        }
    }

    #[test]
    fn cells_are_reproducible_and_complete() {
        let p: Axis = "0.5:0.65:2".parse().unwrap();
        let ws: Axis = "-2:2:3".parse().unwrap();
        let cfg = small_cfg();
        let a = sweep_p_ws(p, ws, &cfg, 3).unwrap();
        assert_eq!(a.cells.len(), 6);
        assert_eq!(a, sweep_p_ws(p, ws, &cfg, 3).unwrap());
        assert_eq!(a.plane_at_p(0.65).len(), 3);
        assert_eq!(a.plane_at_ws(0.1)[1].ws, 0.0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("grid.csv");
        a.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        assert_eq!(text.lines().count(), 7);
        assert!(text.starts_with("p,ws,ws_normalized,dp,gpf_fae,acc\n"));
    }
}
