//! Distributive metrics (DP, DI, EOP, EOD) and procedural ones (the paired
//! explanation loss and the MMD-based GPF_FAE p-value).

mod mmd;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::Group;
use crate::error::{Error, Result};
use crate::explain::ExplanationSet;

pub use mmd::{gpf_fae, mmd, mmd_permutation_test, Bandwidth, GpfFae, Kernel, MmdConfig, MmdTest};

fn check_lengths(preds: &[u8], groups: &[Group], labels: Option<&[u8]>) -> Result<()> {
    if preds.len() != groups.len() || labels.is_some_and(|l| l.len() != preds.len()) {
        return Err(Error::Shape("predictions, labels and groups differ in length".into()));
    }
    Ok(())
}

/// `P(yhat = 1 | group)` restricted to rows where `keep` holds.
fn rate(preds: &[u8], groups: &[Group], group: Group, keep: impl Fn(usize) -> bool) -> Option<f64> {
    let (mut n, mut pos) = (0usize, 0usize);
    for i in (0..preds.len()).filter(|&i| groups[i] == group && keep(i)) {
        n += 1;
        pos += usize::from(preds[i] == 1);
    }
    (n > 0).then(|| pos as f64 / n as f64)
}

fn positive_rates(preds: &[u8], groups: &[Group]) -> Result<(f64, f64)> {
    check_lengths(preds, groups, None)?;
    let r1 = rate(preds, groups, Group::Advantaged, |_| true).ok_or(Error::EmptyGroup("s1"))?;
    let r2 = rate(preds, groups, Group::Disadvantaged, |_| true).ok_or(Error::EmptyGroup("s2"))?;
    Ok((r1, r2))
}

/// `|P(yhat=1 | s1) - P(yhat=1 | s2)|`
pub fn demographic_parity(preds: &[u8], groups: &[Group]) -> Result<f64> {
    let (r1, r2) = positive_rates(preds, groups)?;
    Ok((r1 - r2).abs())
}

/// `P(yhat=1 | s1) / P(yhat=1 | s2)`; `None` when the denominator is 0.
pub fn disparate_impact(preds: &[u8], groups: &[Group]) -> Result<Option<f64>> {
    let (r1, r2) = positive_rates(preds, groups)?;
    Ok((r2 > 0.0).then(|| r1 / r2))
}

fn conditional_gap(preds: &[u8], labels: &[u8], groups: &[Group], label: u8) -> Option<f64> {
    let a = rate(preds, groups, Group::Advantaged, |i| labels[i] == label)?;
    let b = rate(preds, groups, Group::Disadvantaged, |i| labels[i] == label)?;
    Some((a - b).abs())
}

/// `|TPR_s1 - TPR_s2|`; `None` if a group has no positives.
pub fn equal_opportunity(preds: &[u8], labels: &[u8], groups: &[Group]) -> Result<Option<f64>> {
    check_lengths(preds, groups, Some(labels))?;
    Ok(conditional_gap(preds, labels, groups, 1))
}

/// `max(|TPR gap|, |FPR gap|)`; `None` if a group lacks either label.
pub fn equalized_odds(preds: &[u8], labels: &[u8], groups: &[Group]) -> Result<Option<f64>> {
    check_lengths(preds, groups, Some(labels))?;
    let tpr = conditional_gap(preds, labels, groups, 1);
    let fpr = conditional_gap(preds, labels, groups, 0);
    Ok(tpr.zip(fpr).map(|(a, b)| a.max(b)))
}

/// Mean l1 distance between aligned rows of two explanation sets.
pub fn gpf_loss(e1: &ExplanationSet, e2: &ExplanationSet) -> Result<f64> {
    if e1.len() != e2.len() || e1.n_features() != e2.n_features() {
        return Err(Error::Shape(format!(
            "paired explanation sets differ: {}x{} vs {}x{}",
            e1.len(),
            e1.n_features(),
            e2.len(),
            e2.n_features()
        )));
    }
    if e1.is_empty() {
        return Err(Error::invalid("no explanation pairs"));
    }
    let total: f64 = e1
        .rows()
        .zip(e2.rows())
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>())
        .sum();
    Ok(total / e1.len() as f64)
}

/// Evaluation of one model on one test split. Undefined metrics are `null`
/// with a reason in `undefined`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    /// Test accuracy at threshold 0.5.
    pub accuracy: f64,
    pub dp: f64,
    pub di: Option<f64>,
    pub eop: Option<f64>,
    pub eod: Option<f64>,
    pub gpf_fae: f64,
    pub mmd: f64,
    pub gpf_loss: f64,
    pub train_seconds: f64,
    pub eval_seconds: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub undefined: BTreeMap<String, String>,
}

/// DP, DI, EOP and EOD together with reasons for any undefined value.
#[derive(Clone, Debug, PartialEq)]
pub struct Distributive {
    pub dp: f64,
    pub di: Option<f64>,
    pub eop: Option<f64>,
    pub eod: Option<f64>,
    pub undefined: BTreeMap<String, String>,
}

pub fn distributive(preds: &[u8], labels: &[u8], groups: &[Group]) -> Result<Distributive> {
    let dp = demographic_parity(preds, groups)?;
    let di = disparate_impact(preds, groups)?;
    let eop = equal_opportunity(preds, labels, groups)?;
    let eod = equalized_odds(preds, labels, groups)?;
    let mut undefined = BTreeMap::new();
    if di.is_none() {
        undefined.insert("di".into(), "no positive predictions in s2".into());
    }
    if eop.is_none() {
        undefined.insert("eop".into(), "a group has no positive labels".into());
    }
    if eod.is_none() {
        undefined.insert("eod".into(), "a group lacks positive or negative labels".into());
    }
    Ok(Distributive { dp, di, eop, eod, undefined })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explain::Method;
    use proptest::prelude::*;
    use Group::{Advantaged as A, Disadvantaged as D};

    #[test]
    fn demographic_parity_examples() {
        assert_eq!(demographic_parity(&[1, 1, 0, 0], &[A, A, D, D]).unwrap(), 1.0);
        assert_eq!(demographic_parity(&[1, 0, 1, 0], &[A, A, D, D]).unwrap(), 0.0);
        let mut preds = vec![0u8; 200];
        let mut groups = vec![A; 100];
        groups.extend(vec![D; 100]);
        preds[..65].iter_mut().for_each(|p| *p = 1);
        preds[100..135].iter_mut().for_each(|p| *p = 1);
        assert!((demographic_parity(&preds, &groups).unwrap() - 0.30).abs() < 1e-12);
        assert!(matches!(demographic_parity(&[1], &[A]), Err(Error::EmptyGroup("s2"))));
    }

    #[test]
    fn disparate_impact_examples() {
        let groups: Vec<Group> = [vec![A; 10], vec![D; 10]].concat();
        let mut preds = vec![0u8; 20];
        preds[..4].iter_mut().for_each(|p| *p = 1);
        preds[10..15].iter_mut().for_each(|p| *p = 1);
        assert!((disparate_impact(&preds, &groups).unwrap().unwrap() - 0.8).abs() < 1e-12);
        assert_eq!(disparate_impact(&[1, 0, 1, 0], &[A, A, D, D]).unwrap(), Some(1.0));
        assert_eq!(disparate_impact(&[1, 0, 0, 0], &[A, A, D, D]).unwrap(), None);
    }

    #[test]
    fn opportunity_and_odds_examples() {
        let labels = [1, 1, 0, 0, 1, 1, 0, 0];
        let groups = [A, A, A, A, D, D, D, D];
        assert_eq!(equal_opportunity(&labels, &labels, &groups).unwrap(), Some(0.0));
        assert_eq!(equalized_odds(&labels, &labels, &groups).unwrap(), Some(0.0));
        // TPR 1.0 vs 0.5, FPR 0 vs 0
        let preds = [1, 1, 0, 0, 1, 0, 0, 0];
        assert_eq!(equal_opportunity(&preds, &labels, &groups).unwrap(), Some(0.5));
        assert_eq!(equalized_odds(&preds, &labels, &groups).unwrap(), Some(0.5));
        // TPRs equal, FPR 0.2 vs 0.6
        let labels: Vec<u8> = [vec![1, 1], vec![0; 5], vec![1, 1], vec![0; 5]].concat();
        let groups: Vec<Group> = [vec![A; 7], vec![D; 7]].concat();
        let preds: Vec<u8> = [vec![1, 1], vec![1, 0, 0, 0, 0], vec![1, 1], vec![1, 1, 1, 0, 0]].concat();
        assert_eq!(equal_opportunity(&preds, &labels, &groups).unwrap(), Some(0.0));
        assert!((equalized_odds(&preds, &labels, &groups).unwrap().unwrap() - 0.4).abs() < 1e-12);
        let d = distributive(&[0, 0], &[0, 0], &[A, D]).unwrap();
        assert_eq!((d.dp, d.di, d.eop, d.eod), (0.0, None, None, None));
        assert_eq!(d.undefined.len(), 3);
    }

    fn set(rows: &[&[f64]]) -> ExplanationSet {
        let d = rows[0].len();
        ExplanationSet::new(rows.concat(), d, Method::Grad, (0..rows.len()).collect(), 0.0).unwrap()
    }

    #[test]
    fn gpf_loss_examples() {
        let e1 = set(&[&[1.0, 2.0], &[0.0, 0.0]]);
        let e2 = set(&[&[0.0, 2.0], &[0.0, 0.0]]);
        assert_eq!(gpf_loss(&e1, &e2).unwrap(), 0.5);
        assert_eq!(gpf_loss(&e1, &e1).unwrap(), 0.0);
        let scaled = |e: &ExplanationSet, c: f64| {
            let rows: Vec<Vec<f64>> = e.rows().map(|r| r.iter().map(|v| v * c).collect()).collect();
            let refs: Vec<&[f64]> = rows.iter().map(|r| &r[..]).collect();
            set(&refs)
        };
        assert!((gpf_loss(&scaled(&e1, -3.0), &scaled(&e2, -3.0)).unwrap() - 1.5).abs() < 1e-12);
        assert!(gpf_loss(&e1, &set(&[&[0.0, 0.0]])).is_err());
    }

    #[test]
    fn report_serializes_undefined_as_null() {
        let mut undefined = BTreeMap::new();
        undefined.insert("di".to_string(), "no positive predictions in s2".to_string());
        let r = FairnessReport {
            accuracy: 0.9,
            dp: 0.0,
            di: None,
            eop: Some(0.1),
            eod: Some(0.2),
            gpf_fae: 1.0,
            mmd: 0.0,
            gpf_loss: 0.0,
            train_seconds: 1.0,
            eval_seconds: 0.5,
            undefined,
        };
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        assert!(v["di"].is_null());
        assert_eq!(v["undefined"]["di"], "no positive predictions in s2");
        assert_eq!(serde_json::from_value::<FairnessReport>(v).unwrap(), r);
    }

    fn arb_case() -> impl Strategy<Value = (Vec<u8>, Vec<u8>, Vec<Group>)> {
        (4usize..40).prop_flat_map(|n| {
            (
                proptest::collection::vec(0u8..=1, n),
                proptest::collection::vec(0u8..=1, n),
                proptest::collection::vec(prop_oneof![Just(A), Just(D)], n),
            )
        })
    }

    proptest! {
        #[test]
        fn metrics_invariant_under_joint_permutation((preds, labels, groups) in arb_case(), seed in any::<u64>()) {
            prop_assume!(groups.contains(&A) && groups.contains(&D));
            let mut order: Vec<usize> = (0..preds.len()).collect();
            use rand::{seq::SliceRandom, SeedableRng};
            order.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let p2: Vec<u8> = order.iter().map(|&i| preds[i]).collect();
            let l2: Vec<u8> = order.iter().map(|&i| labels[i]).collect();
            let g2: Vec<Group> = order.iter().map(|&i| groups[i]).collect();
            prop_assert_eq!(distributive(&preds, &labels, &groups).unwrap(), distributive(&p2, &l2, &g2).unwrap());
        }

        #[test]
        fn dp_symmetric_and_di_reciprocal((preds, _labels, groups) in arb_case()) {
            prop_assume!(groups.contains(&A) && groups.contains(&D));
            let swapped: Vec<Group> = groups.iter().map(|g| if *g == A { D } else { A }).collect();
            prop_assert_eq!(demographic_parity(&preds, &groups).unwrap(), demographic_parity(&preds, &swapped).unwrap());
            if let (Some(a), Some(b)) = (disparate_impact(&preds, &groups).unwrap(), disparate_impact(&preds, &swapped).unwrap()) {
                prop_assert!((a * b - 1.0).abs() < 1e-12);
            }
        }
    }
}
