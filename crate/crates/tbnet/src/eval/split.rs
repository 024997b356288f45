//! Stratified splitting, stratified k-fold plans, and balanced class
//! weights.

use crate::error::{Error, Result};
use crate::rng::RngState;

/// Validation-fold index lists; folds partition the full index set and
/// per-class fold sizes differ by at most one.
#[derive(Debug, Clone)]
pub struct FoldPlan {
    pub k: usize,
    folds: Vec<Vec<usize>>,
}

impl FoldPlan {
    pub fn validation_indices(&self, fold: usize) -> &[usize] {
        &self.folds[fold]
    }

    /// Complement of the fold: the training indices.
    pub fn training_indices(&self, fold: usize) -> Vec<usize> {
        let mut out = Vec::new();
        for (i, f) in self.folds.iter().enumerate() {
            if i != fold {
                out.extend_from_slice(f);
            }
        }
        out.sort_unstable();
        out
    }

    pub fn folds(&self) -> &[Vec<usize>] {
        &self.folds
    }
}

fn indices_by_class(labels: &[usize]) -> Vec<(usize, Vec<usize>)> {
    let classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &y) in labels.iter().enumerate() {
        per_class[y].push(i);
    }
    per_class.into_iter().enumerate().collect()
}

/// Per class: seeded shuffle, then `round(n_c * test_fraction)` samples to
/// the test side. The two sides are disjoint and exhaustive.
pub fn stratified_split(
    labels: &[usize],
    test_fraction: f64,
    rng: &mut RngState,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if labels.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(0.0..1.0).contains(&test_fraction) || test_fraction == 0.0 {
        return Err(Error::InvalidArgument(format!(
            "test fraction must be in (0, 1), got {test_fraction}"
        )));
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (class, mut idx) in indices_by_class(labels) {
        if idx.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "class {class} has {} samples; stratified split needs at least 2",
                idx.len()
            )));
        }
        rng.shuffle(&mut idx);
        let n_test = (idx.len() as f64 * test_fraction).round() as usize;
        test.extend_from_slice(&idx[..n_test]);
        train.extend_from_slice(&idx[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Per class: seeded shuffle, then deal round-robin into `k` folds.
pub fn stratified_kfold(labels: &[usize], k: usize, rng: &mut RngState) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!(
            "k-fold needs k >= 2, got {k}"
        )));
    }
    let mut folds: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (class, mut idx) in indices_by_class(labels) {
        if idx.len() < k {
            return Err(Error::InvalidArgument(format!(
                "class {class} has {} samples, fewer than k = {k}",
                idx.len()
            )));
        }
        rng.shuffle(&mut idx);
        for (j, i) in idx.into_iter().enumerate() {
            folds[j % k].push(i);
        }
    }
    for fold in &mut folds {
        fold.sort_unstable();
    }
    Ok(FoldPlan { k, folds })
}

/// Balanced weights `w_c = N / (C * n_c)`: the rarest class always gets
/// the largest weight.
pub fn class_weights(labels: &[usize], class_count: usize) -> Result<Vec<f32>> {
    let mut counts = vec![0usize; class_count];
    for (index, &y) in labels.iter().enumerate() {
        if y >= class_count {
            return Err(Error::LabelOutOfRange {
                index,
                label: y,
                classes: class_count,
            });
        }
        counts[y] += 1;
    }
    let n = labels.len() as f64;
    counts
        .iter()
        .enumerate()
        .map(|(class, &c)| {
            if c == 0 {
                Err(Error::InvalidArgument(format!(
                    "class {class} absent; cannot compute balanced weight"
                )))
            } else {
                Ok((n / (class_count as f64 * c as f64)) as f32)
            }
        })
        .collect()
}
