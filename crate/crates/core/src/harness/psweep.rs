use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run_scenario, DatasetSpec, ScenarioConfig};
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::linexp::Axis;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PSweepPoint {
    pub p: f64,
    pub dp: f64,
    pub gpf_fae: f64,
    pub acc: f64,
    pub failed: usize,
}

/// Runs `base` once per `p` value with the synthetic bias parameter replaced
/// and reports repetition means. Every point uses the same master seed.
pub fn p_sweep(base: &ScenarioConfig, p: Axis) -> Result<Vec<PSweepPoint>> {
    p.validate()?;
    let DatasetSpec::Synthetic { n_points, .. } = base.dataset else {
        return Err(Error::invalid("p sweep needs a synthetic dataset"));
    };
    p.values()
        .into_par_iter()
        .map(|pv| {
            let cfg = ScenarioConfig {
                id: format!("{}-p{pv}", base.id),
                dataset: DatasetSpec::Synthetic { p: pv, n_points },
                ..base.clone()
            };
            let b = run_scenario(&cfg)?;
            let failed = b.repetitions.iter().filter(|r| r.error.is_some()).count();
            let get = |m: &str| b.mean(m).unwrap_or(f64::NAN);
            Ok(PSweepPoint { p: pv, dp: get("dp"), gpf_fae: get("gpf_fae"), acc: get("accuracy"), failed })
        })
        .collect()
}

pub fn write_p_sweep_csv(points: &[PSweepPoint], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for pt in points {
        w.serialize(pt)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    write_atomic(path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::tests::quick;
    use crate::train::Mode;

    #[test]
    fn sweep_shapes_and_csv() {
        let base = ScenarioConfig { repetitions: 1, ..quick("ps", 0.5, Mode::BceOnly) };
        let pts = p_sweep(&base, Axis::new(0.5, 0.7, 3).unwrap()).unwrap();
        assert_eq!(pts.iter().map(|p| p.p).collect::<Vec<_>>(), vec![0.5, 0.6, 0.7]);
        assert!(pts.iter().all(|p| p.failed == 0 && p.dp.is_finite()));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        write_p_sweep_csv(&pts, &path).unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        assert!(text.starts_with("p,dp,gpf_fae,acc,failed\n"));
        assert_eq!(text.lines().count(), 4);

        let csv_base = ScenarioConfig {
            dataset: DatasetSpec::Csv { path: "a".into(), schema: "b".into() },
            ..base
        };
        assert!(p_sweep(&csv_base, Axis::new(0.5, 0.6, 2).unwrap()).is_err());
    }
}
