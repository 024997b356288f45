//! One-vs-rest ROC curves and AUC.

use crate::error::{Error, Result};

/// Stepwise ROC curve: `(false positive rate, true positive rate)` points
/// from (0, 0) to (1, 1), both coordinates non-decreasing. Tied scores are
/// collapsed into single segments, which makes the trapezoidal AUC equal
/// to the rank-average Mann-Whitney statistic.
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct RocResult {
    pub curves: Vec<RocCurve>,
    /// `None` when the class has no positives or no negatives; such
    /// classes are excluded from the macro mean.
    pub per_class_auc: Vec<Option<f64>>,
    pub macro_auc: Option<f64>,
}

fn curve_for_class(scores: &[f64], positives: &[bool]) -> (RocCurve, Option<f64>) {
    let p = positives.iter().filter(|&&x| x).count();
    let n = positives.len() - p;
    if p == 0 || n == 0 {
        return (RocCurve { points: Vec::new() }, None);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));

    let mut points = vec![(0.0, 0.0)];
    let mut auc = 0.0f64;
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut i = 0;
    while i < order.len() {
        // Advance over the whole tie group at this threshold.
        let threshold = scores[order[i]];
        let (mut dtp, mut dfp) = (0u64, 0u64);
        while i < order.len() && scores[order[i]] == threshold {
            if positives[order[i]] {
                dtp += 1;
            } else {
                dfp += 1;
            }
            i += 1;
        }
        let prev = (fp as f64 / n as f64, tp as f64 / p as f64);
        tp += dtp;
        fp += dfp;
        let next = (fp as f64 / n as f64, tp as f64 / p as f64);
        auc += (next.0 - prev.0) * (prev.1 + next.1) / 2.0;
        points.push(next);
    }
    (RocCurve { points }, Some(auc))
}

/// Per-class one-vs-rest ROC with trapezoidal AUC and the unweighted macro
/// mean over classes where AUC is defined.
pub fn roc_auc(scores: &[Vec<f64>], true_labels: &[usize]) -> Result<RocResult> {
    if scores.len() != true_labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} score rows but {} labels",
            scores.len(),
            true_labels.len()
        )));
    }
    if scores.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let classes = scores[0].len();
    for (index, row) in scores.iter().enumerate() {
        if row.len() != classes {
            return Err(Error::shape("score row", &[classes], &[row.len()]));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("score row {index}"),
            });
        }
    }
    for (index, &label) in true_labels.iter().enumerate() {
        if label >= classes {
            return Err(Error::LabelOutOfRange {
                index,
                label,
                classes,
            });
        }
    }

    let mut curves = Vec::with_capacity(classes);
    let mut per_class_auc = Vec::with_capacity(classes);
    for c in 0..classes {
        let class_scores: Vec<f64> = scores.iter().map(|row| row[c]).collect();
        let positives: Vec<bool> = true_labels.iter().map(|&y| y == c).collect();
        let (curve, auc) = curve_for_class(&class_scores, &positives);
        curves.push(curve);
        per_class_auc.push(auc);
    }
    let defined: Vec<f64> = per_class_auc.iter().flatten().copied().collect();
    let macro_auc = if defined.is_empty() {
        None
    } else {
        Some(defined.iter().sum::<f64>() / defined.len() as f64)
    };
    Ok(RocResult {
        curves,
        per_class_auc,
        macro_auc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Exhaustive pairwise-ranking oracle: the Mann-Whitney U statistic
    /// normalized by P * N, ties counted half.
    fn mann_whitney(scores: &[f64], positives: &[bool]) -> f64 {
        let mut wins = 0.0f64;
        let mut pairs = 0.0f64;
        for (sp, &p) in scores.iter().zip(positives) {
            if !p {
                continue;
            }
            for (sn, &q) in scores.iter().zip(positives) {
                if q {
                    continue;
                }
                pairs += 1.0;
                if sp > sn {
                    wins += 1.0;
                } else if sp == sn {
                    wins += 0.5;
                }
            }
        }
        wins / pairs
    }

    #[test]
    fn perfect_separation_gives_one() {
        let scores = vec![
            vec![0.9, 0.1],
            vec![0.8, 0.2],
            vec![0.1, 0.9],
            vec![0.2, 0.8],
        ];
        let labels = [0usize, 0, 1, 1];
        let r = roc_auc(&scores, &labels).unwrap();
        assert_eq!(r.per_class_auc, vec![Some(1.0), Some(1.0)]);
        assert_eq!(r.macro_auc, Some(1.0));
    }

    #[test]
    fn identical_scores_give_half() {
        let scores = vec![vec![0.5, 0.5]; 6];
        let labels = [0usize, 1, 0, 1, 0, 1];
        let r = roc_auc(&scores, &labels).unwrap();
        assert_eq!(r.per_class_auc, vec![Some(0.5), Some(0.5)]);
    }

    #[test]
    fn binary_reference_value() {
        // Positive-class scores (0.8, 0.7, 0.6, 0.2) for labels (1,0,1,0):
        // three of four pos/neg pairs rank correctly.
        let scores = vec![
            vec![0.2, 0.8],
            vec![0.3, 0.7],
            vec![0.4, 0.6],
            vec![0.8, 0.2],
        ];
        let labels = [1usize, 0, 1, 0];
        let r = roc_auc(&scores, &labels).unwrap();
        assert!((r.per_class_auc[1].unwrap() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn single_class_flagged_undefined() {
        let scores = vec![vec![0.9, 0.1], vec![0.8, 0.2]];
        let labels = [0usize, 0];
        let r = roc_auc(&scores, &labels).unwrap();
        assert_eq!(r.per_class_auc[1], None);
        // Class 0 has no negatives either.
        assert_eq!(r.per_class_auc[0], None);
        assert_eq!(r.macro_auc, None);
    }

    #[test]
    fn curve_endpoints_and_monotonicity() {
        let mut rng = crate::RngState::new(77);
        for _ in 0..50 {
            let n = 3 + rng.below(60) as usize;
            let scores: Vec<Vec<f64>> = (0..n)
                .map(|_| {
                    let a = rng.next_f64();
                    vec![a, 1.0 - a]
                })
                .collect();
            let labels: Vec<usize> = (0..n).map(|_| rng.below(2) as usize).collect();
            let Ok(r) = roc_auc(&scores, &labels) else { continue };
            for (curve, auc) in r.curves.iter().zip(&r.per_class_auc) {
                let Some(auc) = auc else { continue };
                assert!((0.0..=1.0).contains(auc));
                assert_eq!(curve.points.first(), Some(&(0.0, 0.0)));
                assert_eq!(curve.points.last(), Some(&(1.0, 1.0)));
                for w in curve.points.windows(2) {
                    assert!(w[1].0 >= w[0].0 && w[1].1 >= w[0].1);
                }
            }
        }
    }

    #[test]
    fn auc_equals_mann_whitney_on_random_sets() {
        let mut rng = crate::RngState::new(2025);
        for trial in 0..200 {
            let n = 4 + rng.below(197) as usize;
            // Coarse score grid to force plenty of ties.
            let scores: Vec<Vec<f64>> = (0..n)
                .map(|_| {
                    let a = (rng.below(20) as f64) / 19.0;
                    vec![1.0 - a, a]
                })
                .collect();
            let mut labels: Vec<usize> = (0..n).map(|_| rng.below(2) as usize).collect();
            // Ensure both classes appear.
            labels[0] = 0;
            labels[1] = 1;
            let r = roc_auc(&scores, &labels).unwrap();
            let class_scores: Vec<f64> = scores.iter().map(|row| row[1]).collect();
            let positives: Vec<bool> = labels.iter().map(|&y| y == 1).collect();
            let oracle = mann_whitney(&class_scores, &positives);
            let got = r.per_class_auc[1].unwrap();
            assert!(
                (got - oracle).abs() < 1e-9,
                "trial {trial}: trapezoid {got} vs mann-whitney {oracle}"
            );
        }
    }
}
