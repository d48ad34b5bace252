//! Experiment orchestration: scenario configs, repeated runs, result
//! bundles, significance tables, attribution dumps and parameter sweeps.

mod attributions;
mod compare;
pub mod presets;
mod psweep;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{
    attach_fake_sensitive, generate_synthetic, load_csv, pearson_select, preprocess, resample_unfair,
    select_features, split, Dataset, Schema,
};
use crate::error::{Error, Result};
use crate::explain::Background;
use crate::fairness::FairnessReport;
pub use crate::fsutil::write_atomic;
use crate::model::MlpParams;
use crate::pairing::{select_eval_pairs, PairSet};
use crate::stats;
use crate::train::{evaluate, train, EvalConfig, TrainConfig, TrainHistory};

pub use attributions::{emit_sensitive_attributions, sensitive_attributions, SensitiveSummary};
pub use compare::{compare_scenarios, Comparison, ComparisonRow};
pub use psweep::{p_sweep, write_p_sweep_csv, PSweepPoint};

pub const BUNDLE_FORMAT: &str = "procfair-bundle";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSpec {
    Synthetic {
        p: f64,
        #[serde(default = "default_points")]
        n_points: usize,
    },
    Csv {
        path: PathBuf,
        schema: PathBuf,
    },
}

fn default_points() -> usize {
    20_000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Step {
    ResampleUnfair { dp_threshold: f64 },
    PearsonSelect { threshold: f64 },
    AttachFakeSensitive,
    SelectFeatures { names: Vec<String> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub id: String,
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub preprocess: Vec<Step>,
    #[serde(default = "default_split")]
    pub split_ratio: f64,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default = "default_reps")]
    pub repetitions: usize,
    #[serde(default)]
    pub master_seed: u64,
}

fn default_split() -> f64 {
    0.8
}

fn default_reps() -> usize {
    10
}

impl ScenarioConfig {
    /// Reads a JSON config. Relative dataset paths resolve against the
    /// config's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: ScenarioConfig = serde_json::from_str(&text)?;
        if let DatasetSpec::Csv { path: data, schema } = &mut cfg.dataset {
            let base = path.parent().unwrap_or(Path::new("."));
            for p in [data, schema] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() || self.id.contains(['/', '\\']) {
            return Err(Error::invalid(format!("scenario id {:?} must be a plain file name", self.id)));
        }
        if self.repetitions == 0 {
            return Err(Error::invalid("repetitions must be at least 1"));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(Error::invalid(format!("split ratio {} outside (0, 1)", self.split_ratio)));
        }
        if let DatasetSpec::Synthetic { p, n_points } = self.dataset {
            if !(0.0..=1.0).contains(&p) || n_points < 2 {
                return Err(Error::invalid("synthetic dataset needs p in [0, 1] and at least 2 points"));
            }
        }
        self.train.validate()?;
        self.eval.mmd.validate()
    }

    pub fn hash(&self) -> String {
        config_hash(self)
    }
}

/// SHA-256 of a value's compact JSON.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("config serializes");
    hex::encode(Sha256::digest(json))
}

/// Writes `<output>.meta.json` recording the hash of the configuration that
/// produced `output`.
pub fn write_output_meta(output: &Path, config_hash: &str) -> Result<PathBuf> {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    let path = output.with_file_name(name);
    let meta = serde_json::json!({
        "file": output.file_name().map(|n| n.to_string_lossy().into_owned()),
        "config_hash": config_hash,
        "version": env!("CARGO_PKG_VERSION"),
    });
    write_atomic(&path, serde_json::to_string_pretty(&meta)?.as_bytes())?;
    Ok(path)
}

/// Everything one repetition produces besides its report.
pub struct Prepared {
    pub train: Dataset,
    pub test: Dataset,
    pub eval_pairs: PairSet,
    pub background: Background,
}

fn stage<T>(name: &'static str, r: Result<T>) -> std::result::Result<T, StageError> {
    r.map_err(|e| StageError { stage: name.into(), message: e.to_string() })
}

/// Loads, preprocesses and splits the scenario data for one seed.
pub fn prepare(cfg: &ScenarioConfig, seed: u64) -> std::result::Result<Prepared, StageError> {
    let mut data = stage(
        "data",
        match &cfg.dataset {
            DatasetSpec::Synthetic { p, n_points } => {
                generate_synthetic(&crate::data::SyntheticConfig { n_points: *n_points, p: *p, seed })
            }
            DatasetSpec::Csv { path, schema } => Schema::from_json_file(schema)
                .and_then(|s| load_csv(path, &s).and_then(|raw| preprocess(&raw, &s)))
                .map(|d| d.with_seed_provenance(seed)),
        },
    )?;
    for step in &cfg.preprocess {
        data = stage(
            "preprocess",
            match step {
                Step::ResampleUnfair { dp_threshold } => {
                    resample_unfair(&data, *dp_threshold, seed).map(Dataset::standardized)
                }
                Step::PearsonSelect { threshold } => pearson_select(&data, *threshold),
                Step::AttachFakeSensitive => attach_fake_sensitive(&data, seed),
                Step::SelectFeatures { names } => select_features(&data, names),
            },
        )?;
    }
    let (train, test) = stage("split", split(&data, cfg.split_ratio, seed))?;
    let eval_pairs = stage("pairs", select_eval_pairs(&test, cfg.eval.n_pairs))?;
    let background = stage("background", Background::sample(&train, cfg.eval.background_size, seed))?;
    Ok(Prepared { train, test, eval_pairs, background })
}

/// Trains and evaluates one repetition.
pub fn run_once(cfg: &ScenarioConfig, seed: u64) -> std::result::Result<(MlpParams, TrainHistory, FairnessReport, Prepared), StageError> {
    let prepared = prepare(cfg, seed)?;
    let tcfg = TrainConfig { seed, ..cfg.train.clone() };
    let (model, history) = stage("train", train(&prepared.train, &tcfg))?;
    let ecfg = EvalConfig { mmd: crate::fairness::MmdConfig { seed, ..cfg.eval.mmd }, ..cfg.eval.clone() };
    let mut report = stage(
        "evaluate",
        evaluate(&model, &prepared.test, &prepared.eval_pairs, &prepared.background, &ecfg),
    )?;
    report.train_seconds = history.seconds;
    Ok((model, history, report, prepared))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageError {
    pub stage: String,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Repetition {
    pub index: usize,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub report: Option<FairnessReport>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<StageError>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    /// Repetitions where the metric was defined.
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultBundle {
    pub format: String,
    pub version: String,
    pub timestamp: String,
    pub config_hash: String,
    pub scenario: ScenarioConfig,
    pub repetitions: Vec<Repetition>,
    pub aggregate: BTreeMap<String, Summary>,
}

/// Metric names in bundle aggregates, with their accessors.
pub const METRICS: [&str; 10] = [
    "accuracy", "dp", "di", "eop", "eod", "gpf_fae", "mmd", "gpf_loss", "train_seconds", "eval_seconds",
];

pub fn metric(report: &FairnessReport, name: &str) -> Option<f64> {
    match name {
        "accuracy" => Some(report.accuracy),
        "dp" => Some(report.dp),
        "di" => report.di,
        "eop" => report.eop,
        "eod" => report.eod,
        "gpf_fae" => Some(report.gpf_fae),
        "mmd" => Some(report.mmd),
        "gpf_loss" => Some(report.gpf_loss),
        "train_seconds" => Some(report.train_seconds),
        "eval_seconds" => Some(report.eval_seconds),
        _ => None,
    }
}

/// Timing fields vary between runs; every other metric is deterministic.
pub fn is_timing(name: &str) -> bool {
    name.ends_with("_seconds")
}

fn aggregate(reps: &[Repetition]) -> BTreeMap<String, Summary> {
    METRICS
        .iter()
        .filter_map(|&name| {
            let values: Vec<f64> = reps.iter().filter_map(|r| r.report.as_ref().and_then(|rep| metric(rep, name))).collect();
            (!values.is_empty()).then(|| {
                (name.to_string(), Summary { mean: stats::mean(&values), std: stats::std_dev(&values), n: values.len() })
            })
        })
        .collect()
}

impl ResultBundle {
    /// Values of one metric across successful repetitions, in order.
    pub fn values(&self, name: &str) -> Vec<f64> {
        self.repetitions
            .iter()
            .filter_map(|r| r.report.as_ref().and_then(|rep| metric(rep, name)))
            .collect()
    }

    pub fn mean(&self, name: &str) -> Option<f64> {
        self.aggregate.get(name).map(|s| s.mean)
    }

    /// Aggregates recomputed from the stored repetitions.
    pub fn recompute_aggregate(&self) -> BTreeMap<String, Summary> {
        aggregate(&self.repetitions)
    }

    /// Canonical JSON of everything deterministic: the scenario, its hash and
    /// every non-timing metric of every repetition.
    pub fn metric_payload(&self) -> String {
        let reps: Vec<serde_json::Value> = self
            .repetitions
            .iter()
            .map(|r| {
                let metrics: BTreeMap<&str, Option<f64>> = match &r.report {
                    Some(rep) => METRICS.iter().filter(|m| !is_timing(m)).map(|&m| (m, metric(rep, m))).collect(),
                    None => BTreeMap::new(),
                };
                serde_json::json!({ "index": r.index, "seed": r.seed, "metrics": metrics, "error": r.error })
            })
            .collect();
        serde_json::json!({ "config_hash": self.config_hash, "repetitions": reps }).to_string()
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let bundle: ResultBundle = serde_json::from_str(&text)?;
        if bundle.format != BUNDLE_FORMAT {
            return Err(Error::invalid(format!("{} is not a result bundle", path.display())));
        }
        Ok(bundle)
    }

    /// Writes `<dir>/<scenario id>.json` atomically. An existing file is
    /// only replaced when `overwrite` is set.
    pub fn write(&self, dir: &Path, overwrite: bool) -> Result<PathBuf> {
        let path = dir.join(format!("{}.json", self.scenario.id));
        if path.exists() && !overwrite {
            return Err(Error::invalid(format!(
                "{} already exists; pass the overwrite flag to replace it",
                path.display()
            )));
        }
        let text = serde_json::to_string_pretty(self)?;
        write_atomic(&path, text.as_bytes())?;
        Ok(path)
    }
}

/// Runs every repetition with seed `master_seed + index`. A failing stage
/// is recorded in its repetition instead of aborting the scenario.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ResultBundle> {
    cfg.validate()?;
    let repetitions: Vec<Repetition> = (0..cfg.repetitions)
        .into_par_iter()
        .map(|index| {
            let seed = cfg.master_seed.wrapping_add(index as u64);
            match run_once(cfg, seed) {
                Ok((_, _, report, _)) => Repetition { index, seed, report: Some(report), error: None },
                Err(e) => Repetition { index, seed, report: None, error: Some(e) },
            }
        })
        .collect();
    Ok(ResultBundle {
        format: BUNDLE_FORMAT.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        timestamp: chrono::Utc::now().to_rfc3339(),
        config_hash: cfg.hash(),
        scenario: cfg.clone(),
        aggregate: aggregate(&repetitions),
        repetitions,
    })
}
