//! Class-balanced and class-imbalanced training subsets.
//!
//! Both protocols select, per class, a uniformly random subset without
//! replacement and then return the chosen samples in their original order, so
//! the two views, labels and ids all see the same index list.

use crate::error::{Error, Result};
use crate::rng::CounterRng;

use super::{LabelVector, PairedDataset};

// Slack when flooring/ceiling products such as 0.1 * 1000 / 10.
const ROUNDING_SLACK: f64 = 1e-9;

const BALANCED_STREAM: u64 = 0x0100_0000;
const IMBALANCE_STREAM: u64 = 0x0200_0000;

fn pick(class_members: &[usize], take: usize, rng: &mut CounterRng) -> Vec<usize> {
    let mut members = class_members.to_vec();
    rng.shuffle(&mut members);
    members.truncate(take);
    members
}

/// Keeps `floor(fraction · N / C)` samples of every class.
pub fn balanced_subsample(ds: &PairedDataset, fraction: f64, seed: u64) -> Result<PairedDataset> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "fraction must lie in (0, 1], got {fraction}"
        )));
    }
    let classes = ds.labels().num_classes() as usize;
    let per_class = fraction * ds.count() as f64 / classes as f64;
    let take = (per_class + ROUNDING_SLACK).floor() as usize;
    let required = (per_class - ROUNDING_SLACK).ceil() as usize;
    if take == 0 {
        return Err(Error::EmptyResult);
    }
    let by_class = ds.class_indices();
    let mut chosen = Vec::with_capacity(take * classes);
    for (c, members) in by_class.iter().enumerate() {
        if members.len() < required {
            return Err(Error::ClassTooSmall {
                class: c as u32,
                available: members.len(),
                required,
            });
        }
        let mut rng = CounterRng::stream(seed, BALANCED_STREAM + c as u64);
        chosen.extend(pick(members, take, &mut rng));
    }
    chosen.sort_unstable();
    Ok(ds.select(&chosen))
}

/// Geometric class-size profile `round(n · ratio^(-c / (C - 1)))`.
pub fn imbalance_class_sizes(base: usize, classes: usize, ratio: f64) -> Result<Vec<usize>> {
    if !(ratio.is_finite() && ratio >= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "imbalance ratio must be finite and >= 1, got {ratio}"
        )));
    }
    if classes < 2 {
        return Err(Error::InvalidArgument("need at least 2 classes".into()));
    }
    let sizes: Vec<usize> = (0..classes)
        .map(|c| {
            let exponent = -(c as f64) / (classes - 1) as f64;
            (base as f64 * ratio.powf(exponent)).round() as usize
        })
        .collect();
    if let Some(c) = sizes.iter().position(|s| *s < 1) {
        return Err(Error::InvalidArgument(format!(
            "ratio {ratio} is infeasible: class {c} would receive no samples (base size {base})"
        )));
    }
    Ok(sizes)
}

/// Subsets a balanced dataset so that class `c` keeps
/// `round(n · ratio^(-c / (C - 1)))` samples. Only training splits should go
/// through here; validation data keeps its original distribution.
pub fn imbalance_subsample(ds: &PairedDataset, ratio: f64, seed: u64) -> Result<PairedDataset> {
    let by_class = ds.class_indices();
    let base = by_class[0].len();
    if let Some((c, m)) = by_class.iter().enumerate().find(|(_, m)| m.len() != base) {
        return Err(Error::InvalidArgument(format!(
            "imbalance subsampling needs a balanced input: class 0 has {base} samples, class {c} has {}",
            m.len()
        )));
    }
    let sizes = imbalance_class_sizes(base, by_class.len(), ratio)?;
    let mut chosen = Vec::with_capacity(sizes.iter().sum());
    for (c, (members, size)) in by_class.iter().zip(&sizes).enumerate() {
        let mut rng = CounterRng::stream(seed, IMBALANCE_STREAM + c as u64);
        chosen.extend(pick(members, *size, &mut rng));
    }
    chosen.sort_unstable();
    Ok(ds.select(&chosen))
}

/// Largest class count over smallest class count; infinite if a class is empty.
pub fn realized_ratio(labels: &LabelVector) -> f64 {
    let h = labels.histogram();
    let max = *h.iter().max().unwrap_or(&0) as f64;
    let min = *h.iter().min().unwrap_or(&0) as f64;
    max / min
}
