use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng as _;

use super::{column_moments, Dataset, Group};
use crate::error::{Error, Result};
use crate::rng::{seeded, stream};
use crate::stats::pearson;

/// Seeded random partition into `(train, test)` with `round(ratio * m)`
/// training rows. Each part keeps the original row order.
///
/// Standardization statistics are not recomputed.
pub fn split(data: &Dataset, ratio: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::invalid(format!("split ratio {ratio} outside (0, 1)")));
    }
    let m = data.n_rows();
    let mut idx: Vec<usize> = (0..m).collect();
    idx.shuffle(&mut seeded(seed, stream::SPLIT));
    let n_train = ((ratio * m as f64).round() as usize).clamp(0, m);
    let (train, test) = idx.split_at_mut(n_train);
    train.sort_unstable();
    test.sort_unstable();
    Ok((data.select_rows(train), data.select_rows(test)))
}

fn positive_rates(labels: impl Iterator<Item = u8>, groups: &[Group]) -> Result<(f64, f64)> {
    let mut pos = [0usize; 2];
    let mut tot = [0usize; 2];
    for (y, g) in labels.zip(groups) {
        let k = (*g == Group::Disadvantaged) as usize;
        tot[k] += 1;
        pos[k] += y as usize;
    }
    if tot[0] == 0 {
        return Err(Error::EmptyGroup("s1"));
    }
    if tot[1] == 0 {
        return Err(Error::EmptyGroup("s2"));
    }
    Ok((pos[0] as f64 / tot[0] as f64, pos[1] as f64 / tot[1] as f64))
}

/// Demographic parity of the ground-truth labels.
pub fn dataset_dp(data: &Dataset) -> Result<f64> {
    let (r1, r2) = positive_rates(data.labels().iter().copied(), data.groups())?;
    Ok((r1 - r2).abs())
}

/// Appends with-replacement duplicates of advantaged positive rows, one at
/// a time, until the label DP exceeds `dp_threshold`.
///
/// The input rows come first and are unchanged. Callers that need
/// standardized columns afterwards should re-standardize; Z-scoring is
/// affine-invariant, so this equals resampling before preprocessing.
pub fn resample_unfair(data: &Dataset, dp_threshold: f64, seed: u64) -> Result<Dataset> {
    let (r1, r2) = positive_rates(data.labels().iter().copied(), data.groups())?;
    if (r1 - r2).abs() > dp_threshold {
        return Ok(data.clone());
    }
    let donors: Vec<usize> = (0..data.n_rows())
        .filter(|&i| data.groups()[i] == Group::Advantaged && data.labels()[i] == 1)
        .collect();
    if donors.is_empty() {
        return Err(Error::invalid("advantaged group has no positive rows to resample"));
    }
    if 1.0 - r2 <= dp_threshold {
        return Err(Error::Unreachable {
            threshold: dp_threshold,
            reason: format!("disadvantaged positive rate {r2:.4} leaves at most {:.4}", 1.0 - r2),
        });
    }

    let n1 = data.group_size(Group::Advantaged);
    let mut pos1 = (r1 * n1 as f64).round() as usize;
    let mut tot1 = n1;
    let mut rng = seeded(seed, stream::RESAMPLE);
    let mut rows: Vec<usize> = (0..data.n_rows()).collect();
    while pos1 as f64 / tot1 as f64 - r2 <= dp_threshold {
        rows.push(*donors.choose(&mut rng).expect("non-empty donors"));
        pos1 += 1;
        tot1 += 1;
    }
    Ok(data.select_rows(&rows))
}

/// Appends an i.i.d. Bernoulli(0.5) column named `s_fake` and makes it the
/// sensitive attribute. The old sensitive column stays as a plain feature.
pub fn attach_fake_sensitive(data: &Dataset, seed: u64) -> Result<Dataset> {
    let mut rng = seeded(seed, stream::FAKE_SENSITIVE);
    let m = data.n_rows();
    let d = data.n_features();
    let coin: Vec<bool> = (0..m).map(|_| rng.random_bool(0.5)).collect();
    let raw: Vec<f64> = coin.iter().map(|&c| c as u8 as f64).collect();
    let (mean, sd) = column_moments(raw.iter().copied(), m);
    let mut features = Vec::with_capacity(m * (d + 1));
    for (row, v) in data.rows().zip(&raw) {
        features.extend_from_slice(row);
        features.push(if sd > 0.0 { (v - mean) / sd } else { 0.0 });
    }
    let groups = coin
        .iter()
        .map(|&c| if c { Group::Advantaged } else { Group::Disadvantaged })
        .collect();
    let mut names = data.feature_names().to_vec();
    names.push("s_fake".into());
    Dataset::new(
        features,
        d + 1,
        data.labels().to_vec(),
        groups,
        Some(d),
        names,
        data.seed_provenance(),
    )
}

/// Keeps the sensitive column and every feature whose absolute Pearson
/// correlation with it is below `threshold`. Zero-variance features count
/// as uncorrelated.
pub fn pearson_select(data: &Dataset, threshold: f64) -> Result<Dataset> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::invalid(format!("threshold {threshold} outside (0, 1]")));
    }
    let s = data
        .sensitive_col()
        .ok_or_else(|| Error::invalid("dataset has no sensitive feature column"))?;
    let sens = data.column(s);
    if column_moments(sens.iter().copied(), sens.len()).1 == 0.0 {
        return Err(Error::invalid("sensitive column is constant"));
    }
    let keep: Vec<usize> = (0..data.n_features())
        .filter(|&j| j == s || pearson(&data.column(j), &sens).abs() < threshold)
        .collect();
    data.select_columns(&keep)
}

/// Keeps the named columns in dataset order.
pub fn select_features(data: &Dataset, names: &[String]) -> Result<Dataset> {
    for n in names {
        if !data.feature_names().contains(n) {
            return Err(Error::MissingColumn(n.clone()));
        }
    }
    let keep: Vec<usize> = (0..data.n_features())
        .filter(|&j| names.contains(&data.feature_names()[j]))
        .collect();
    data.select_columns(&keep)
}
