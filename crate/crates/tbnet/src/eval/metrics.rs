//! Confusion matrix and the scalar metrics derived from it.

use crate::error::{Error, Result};

/// C x C tally: rows are the true class, columns the predicted class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    class_count: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(class_count: usize) -> Self {
        ConfusionMatrix {
            class_count,
            counts: vec![0; class_count * class_count],
        }
    }

    pub fn from_counts(class_count: usize, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != class_count * class_count {
            return Err(Error::InvalidArgument(format!(
                "confusion matrix needs {} counts, got {}",
                class_count * class_count,
                counts.len()
            )));
        }
        Ok(ConfusionMatrix {
            class_count,
            counts,
        })
    }

    /// `counts[t][p] = #{i : true_i = t and pred_i = p}`.
    pub fn from_predictions(
        true_labels: &[usize],
        predictions: &[usize],
        class_count: usize,
    ) -> Result<Self> {
        if true_labels.len() != predictions.len() {
            return Err(Error::InvalidArgument(format!(
                "{} true labels but {} predictions",
                true_labels.len(),
                predictions.len()
            )));
        }
        let mut cm = ConfusionMatrix::new(class_count);
        for (index, (&t, &p)) in true_labels.iter().zip(predictions).enumerate() {
            if t >= class_count {
                return Err(Error::LabelOutOfRange {
                    index,
                    label: t,
                    classes: class_count,
                });
            }
            if p >= class_count {
                return Err(Error::LabelOutOfRange {
                    index,
                    label: p,
                    classes: class_count,
                });
            }
            cm.counts[t * class_count + p] += 1;
        }
        Ok(cm)
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn at(&self, true_class: usize, pred_class: usize) -> u64 {
        self.counts[true_class * self.class_count + pred_class]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    fn row_sum(&self, t: usize) -> u64 {
        (0..self.class_count).map(|p| self.at(t, p)).sum()
    }

    fn col_sum(&self, p: usize) -> u64 {
        (0..self.class_count).map(|t| self.at(t, p)).sum()
    }
}

/// Per-class precision/recall/F1. Zero-denominator cells report 0 with the
/// `zero_division` flag set, keeping reports machine-readable.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub zero_division: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
}

/// Accuracy, per-class precision/recall/F1, and their unweighted (macro)
/// means.
pub fn summarize(cm: &ConfusionMatrix) -> Summary {
    let c = cm.class_count();
    let total = cm.total();
    let trace: u64 = (0..c).map(|i| cm.at(i, i)).sum();
    let mut per_class = Vec::with_capacity(c);
    for i in 0..c {
        let tp = cm.at(i, i);
        let col = cm.col_sum(i);
        let row = cm.row_sum(i);
        let mut zero_division = false;
        let precision = if col == 0 {
            zero_division = true;
            0.0
        } else {
            tp as f64 / col as f64
        };
        let recall = if row == 0 {
            zero_division = true;
            0.0
        } else {
            tp as f64 / row as f64
        };
        let f1 = if precision + recall == 0.0 {
            zero_division = true;
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        per_class.push(ClassMetrics {
            precision,
            recall,
            f1,
            zero_division,
        });
    }
    let mean = |f: fn(&ClassMetrics) -> f64| -> f64 {
        per_class.iter().map(f).sum::<f64>() / c as f64
    };
    Summary {
        accuracy: if total == 0 {
            0.0
        } else {
            trace as f64 / total as f64
        },
        macro_precision: mean(|m| m.precision),
        macro_recall: mean(|m| m.recall),
        macro_f1: mean(|m| m.f1),
        per_class,
    }
}
