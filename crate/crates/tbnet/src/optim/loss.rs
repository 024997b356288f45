//! Sparse categorical cross-entropy with optional class weights, fused
//! with softmax for numerical stability.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Weighted-mean cross-entropy over a batch of logit rows:
///
/// `loss = sum_i w_{y_i} * -log softmax(logits_i)[y_i] / sum_i w_{y_i}`
///
/// Returns the loss and its exact gradient with respect to the logits,
/// `w_{y_i} * (softmax(logits_i) - onehot(y_i)) / sum w` per row. Weights
/// default to 1 when absent.
pub fn sparse_ce_loss(
    logits: &Tensor,
    labels: &[usize],
    class_weights: Option<&[f32]>,
) -> Result<(f32, Tensor)> {
    if logits.rank() != 2 || logits.dim(0) != labels.len() {
        return Err(Error::shape(
            "sparse_ce_loss logits",
            &[labels.len(), logits.shape().last().copied().unwrap_or(0)],
            logits.shape(),
        ));
    }
    let classes = logits.dim(1);
    if let Some(w) = class_weights {
        if w.len() != classes {
            return Err(Error::shape("class weights", &[classes], &[w.len()]));
        }
    }
    for (index, &label) in labels.iter().enumerate() {
        if label >= classes {
            return Err(Error::LabelOutOfRange {
                index,
                label,
                classes,
            });
        }
    }

    let weight_of = |label: usize| class_weights.map_or(1.0f32, |w| w[label]);
    let weight_sum: f64 = labels.iter().map(|&y| weight_of(y) as f64).sum();

    let mut grad = Tensor::zeros(logits.shape());
    let mut loss_sum = 0.0f64;
    for ((row, &label), grad_row) in logits
        .data()
        .chunks_exact(classes)
        .zip(labels)
        .zip(grad.data_mut().chunks_exact_mut(classes))
    {
        let max = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
        let mut sum_exp = 0.0f64;
        for &l in row {
            sum_exp += ((l - max) as f64).exp();
        }
        let lse = max as f64 + sum_exp.ln();
        let w = weight_of(label) as f64;
        loss_sum += w * (lse - row[label] as f64);

        let scale = (w / weight_sum) as f32;
        for (c, (g, &l)) in grad_row.iter_mut().zip(row).enumerate() {
            let p = ((l as f64 - lse).exp()) as f32;
            let onehot = if c == label { 1.0 } else { 0.0 };
            *g = scale * (p - onehot);
        }
    }
    Ok(((loss_sum / weight_sum) as f32, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::finite_diff_check;

    #[test]
    fn uniform_logits_give_ln_c() {
        let logits = Tensor::zeros(&[4, 3]);
        let (loss, _) = sparse_ce_loss(&logits, &[0, 1, 2, 0], None).unwrap();
        assert!((loss - 3.0f32.ln()).abs() < 1e-6, "loss {loss}");
    }

    #[test]
    fn huge_margin_drives_loss_to_zero() {
        let logits = Tensor::new(
            vec![2, 3],
            vec![50.0, 0.0, 0.0, 0.0, 50.0, 0.0],
        )
        .unwrap();
        let (loss, _) = sparse_ce_loss(&logits, &[0, 1], None).unwrap();
        assert!(loss < 1e-6, "loss {loss}");
    }

    #[test]
    fn label_out_of_range_names_record() {
        let logits = Tensor::zeros(&[2, 3]);
        let err = sparse_ce_loss(&logits, &[0, 7], None).unwrap_err();
        match err {
            Error::LabelOutOfRange { index, label, classes } => {
                assert_eq!((index, label, classes), (1, 7, 3));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    /// Direct high-precision evaluation of the weighted formula plus a
    /// finite-difference check of the gradient.
    #[test]
    fn weighted_case_matches_direct_formula() {
        let logits = Tensor::new(vec![2, 2], vec![1.0f32, 0.0, 0.0, 1.0]).unwrap();
        let labels = [0usize, 1];
        let weights = [2.0f32, 1.0];
        let (loss, grad) = sparse_ce_loss(&logits, &labels, Some(&weights)).unwrap();

        // Oracle: per-sample -log softmax at f64, weighted mean.
        let per_sample = |l0: f64, l1: f64, y: usize| {
            let m = l0.max(l1);
            let lse = m + ((l0 - m).exp() + (l1 - m).exp()).ln();
            lse - if y == 0 { l0 } else { l1 }
        };
        let expected =
            (2.0 * per_sample(1.0, 0.0, 0) + 1.0 * per_sample(0.0, 1.0, 1)) / 3.0;
        assert!((loss as f64 - expected).abs() < 1e-6);

        // Finite-difference the scalar loss w.r.t. the logits at f64.
        let f = |x: &[f64]| {
            let w = [2.0f64, 1.0];
            let mut total = 0.0;
            let mut wsum = 0.0;
            for (i, row) in x.chunks_exact(2).enumerate() {
                let y = labels[i];
                total += w[y] * per_sample(row[0], row[1], y);
                wsum += w[y];
            }
            total / wsum
        };
        let x: Vec<f64> = logits.iter().map(|&v| v as f64).collect();
        let analytic: Vec<f64> = grad.iter().map(|&v| v as f64).collect();
        let report = finite_diff_check(f, &x, &analytic, 1e-6, 1e-6);
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn gradient_is_softmax_minus_onehot_scaled() {
        let mut rng = crate::RngState::new(99);
        let data: Vec<f32> = (0..12).map(|_| rng.uniform(-2.0, 2.0) as f32).collect();
        let logits = Tensor::new(vec![4, 3], data).unwrap();
        let labels = [2usize, 0, 1, 1];
        let weights = [0.5f32, 2.0, 1.5];
        let (_, grad) = sparse_ce_loss(&logits, &labels, Some(&weights)).unwrap();

        let wsum: f32 = labels.iter().map(|&y| weights[y]).sum();
        for (i, row) in logits.data().chunks_exact(3).enumerate() {
            let t = Tensor::from_slice(row);
            let p = crate::ops::softmax(&t).unwrap();
            for c in 0..3 {
                let onehot = if c == labels[i] { 1.0 } else { 0.0 };
                let expected = weights[labels[i]] * (p.at(&[c]) - onehot) / wsum;
                let got = grad.at(&[i, c]);
                assert!((got - expected).abs() < 1e-6, "row {i} class {c}");
            }
        }
    }

    #[test]
    fn loss_is_nonnegative_and_matches_per_sample_loop() {
        let mut rng = crate::RngState::new(5);
        for _ in 0..20 {
            let b = 1 + rng.below(6) as usize;
            let c = 2 + rng.below(4) as usize;
            let data: Vec<f32> = (0..b * c).map(|_| rng.uniform(-3.0, 3.0) as f32).collect();
            let logits = Tensor::new(vec![b, c], data).unwrap();
            let labels: Vec<usize> = (0..b).map(|_| rng.below(c as u64) as usize).collect();
            let (loss, _) = sparse_ce_loss(&logits, &labels, None).unwrap();
            assert!(loss >= 0.0);

            let mut total = 0.0f64;
            for (row, &y) in logits.data().chunks_exact(c).zip(&labels) {
                let t = Tensor::from_slice(row);
                let p = crate::ops::softmax(&t).unwrap();
                total += -(p.at(&[y]) as f64).ln();
            }
            assert!((loss as f64 - total / b as f64).abs() < 1e-5);
        }
    }
}
