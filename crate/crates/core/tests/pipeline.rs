//! End-to-end runs through the public API.

use procfair::data::{generate_synthetic, write_csv, SyntheticConfig};
use procfair::fairness::MmdConfig;
use procfair::harness::{presets, run_once, run_scenario, sensitive_attributions, DatasetSpec, ScenarioConfig, Step};
use procfair::train::{EvalConfig, Mode, TrainConfig};

fn attributions(cfg: &ScenarioConfig) -> procfair::harness::SensitiveSummary {
    let (model, _, _, prep) = run_once(cfg, cfg.master_seed).unwrap();
    sensitive_attributions(&model, &prep.test, &prep.eval_pairs, &prep.background, cfg.eval.shap_budget, 0)
        .unwrap()
        .summary
}

#[test]
fn bce_model_favours_advantaged_group() {
    let s = attributions(&presets::synth65_bce());
    assert!(s.mean_advantaged > 0.0 && s.mean_disadvantaged < 0.0, "{s:?}");
}

#[test]
fn procedural_model_ignores_sensitive_feature() {
    let s = attributions(&presets::synth65_procedural());
    let limit = 0.05 * s.global_mean_abs;
    assert!(s.mean_abs_advantaged <= limit && s.mean_abs_disadvantaged <= limit, "{s:?}");
}

fn small(id: &str, dataset: DatasetSpec) -> ScenarioConfig {
    ScenarioConfig {
        id: id.into(),
        dataset,
        preprocess: vec![],
        split_ratio: 0.8,
        train: TrainConfig { mode: Mode::Procedural, epochs: 40, hidden: 8, ..Default::default() },
        eval: EvalConfig {
            n_pairs: 40,
            background_size: 30,
            mmd: MmdConfig { n_permutations: 200, ..Default::default() },
            ..Default::default()
        },
        repetitions: 2,
        master_seed: 3,
    }
}

#[test]
fn csv_scenario_with_preprocessing() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate_synthetic(&SyntheticConfig { n_points: 1500, p: 0.55, seed: 1 }).unwrap();
    let csv = dir.path().join("d.csv");
    write_csv(&data, &csv).unwrap();
    let schema = dir.path().join("d.schema.json");
    std::fs::write(&schema, serde_json::to_string(&data.export_schema()).unwrap()).unwrap();

    let mut cfg = small("csv", DatasetSpec::Csv { path: csv, schema });
    cfg.preprocess = vec![
        Step::ResampleUnfair { dp_threshold: 0.25 },
        Step::PearsonSelect { threshold: 0.4 },
        Step::AttachFakeSensitive,
    ];
    let bundle = run_scenario(&cfg).unwrap();
    assert!(bundle.repetitions.iter().all(|r| r.error.is_none()), "{:?}", bundle.repetitions);
    let again = run_scenario(&cfg).unwrap();
    assert_eq!(bundle.metric_payload(), again.metric_payload());
    assert_eq!(bundle.aggregate, bundle.recompute_aggregate());
}

#[test]
fn unreachable_resampling_is_recorded_per_repetition() {
    let mut cfg = small("unreachable", DatasetSpec::Synthetic { p: 0.5, n_points: 600 });
    cfg.preprocess = vec![Step::ResampleUnfair { dp_threshold: 0.999 }];
    let bundle = run_scenario(&cfg).unwrap();
    for r in &bundle.repetitions {
        let e = r.error.as_ref().unwrap();
        assert_eq!(e.stage, "preprocess");
        assert!(e.message.contains("unreachable"), "{}", e.message);
    }
}
