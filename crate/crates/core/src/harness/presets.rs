//! Built-in experiment configurations. The JSON files under `presets/` in
//! the repository are exports of these functions.

use serde::{Deserialize, Serialize};

use super::{DatasetSpec, ScenarioConfig, Step};
use crate::linexp::{Axis, SweepConfig};
use crate::train::TrainConfig;

fn synthetic(id: &str, p: f64, train: TrainConfig) -> ScenarioConfig {
    ScenarioConfig {
        id: id.into(),
        dataset: DatasetSpec::Synthetic { p, n_points: 20_000 },
        preprocess: vec![],
        split_ratio: 0.8,
        train,
        eval: Default::default(),
        repetitions: 10,
        master_seed: 0,
    }
}

pub fn synth65_bce() -> ScenarioConfig {
    synthetic("synth65_bce", 0.65, TrainConfig::bce_only(0))
}

pub fn synth65_procedural() -> ScenarioConfig {
    synthetic("synth65_procedural", 0.65, TrainConfig::procedural(0.5, 0))
}

pub fn synth50_procedural() -> ScenarioConfig {
    synthetic("synth50_procedural", 0.5, TrainConfig::procedural(0.5, 0))
}

pub fn synth50_inverse() -> ScenarioConfig {
    synthetic("synth50_inverse", 0.5, TrainConfig::procedural(-0.4, 0))
}

pub fn synth65_inverse() -> ScenarioConfig {
    synthetic("synth65_inverse", 0.65, TrainConfig::procedural(-0.02, 0))
}

pub fn synth65_dp_regularized() -> ScenarioConfig {
    synthetic("synth65_dp_regularized", 0.65, TrainConfig::dp_regularized(1.0, 0))
}

/// Plain training where a random coin flip replaces the sensitive attribute.
pub fn synth65_fake_sensitive_bce() -> ScenarioConfig {
    ScenarioConfig { preprocess: vec![Step::AttachFakeSensitive], ..synthetic("synth65_fake_sensitive_bce", 0.65, TrainConfig::bce_only(0)) }
}

pub fn scenarios() -> Vec<ScenarioConfig> {
    vec![
        synth65_bce(),
        synth65_procedural(),
        synth50_procedural(),
        synth50_inverse(),
        synth65_inverse(),
        synth65_dp_regularized(),
        synth65_fake_sensitive_bce(),
    ]
}

/// Procedural training across bias levels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PSweepPreset {
    pub base: ScenarioConfig,
    pub p: Axis,
}

pub fn p_sweep_procedural() -> PSweepPreset {
    PSweepPreset {
        base: ScenarioConfig { repetitions: 1, ..synthetic("p_sweep_procedural", 0.5, TrainConfig::procedural(0.5, 0)) },
        p: Axis { lo: 0.5, hi: 0.65, count: 20 },
    }
}

/// Linear-model `w_s` sweep; a single `p` value gives a curve, several a
/// surface.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPreset {
    pub id: String,
    pub p: Axis,
    pub ws: Axis,
    pub seed: u64,
    #[serde(default)]
    pub config: SweepConfig,
}

pub fn ws_sweep_linear() -> SweepPreset {
    SweepPreset {
        id: "ws_sweep_linear".into(),
        p: Axis { lo: 0.65, hi: 0.65, count: 1 },
        ws: Axis { lo: -5.0, hi: 5.0, count: 51 },
        seed: 0,
        config: SweepConfig::default(),
    }
}

pub fn p_ws_grid_linear() -> SweepPreset {
    SweepPreset {
        id: "p_ws_grid_linear".into(),
        p: Axis { lo: 0.3, hi: 0.7, count: 50 },
        ws: Axis { lo: -5.0, hi: 5.0, count: 50 },
        seed: 0,
        config: SweepConfig::default(),
    }
}

fn pretty<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("preset serializes") + "\n"
}

/// File name and pretty JSON of every preset.
pub fn exports() -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = scenarios().iter().map(|s| (format!("{}.json", s.id), pretty(s))).collect();
    out.push(("p_sweep_procedural.json".into(), pretty(&p_sweep_procedural())));
    for s in [ws_sweep_linear(), p_ws_grid_linear()] {
        out.push((format!("{}.json", s.id), pretty(&s)));
    }
    out
}
