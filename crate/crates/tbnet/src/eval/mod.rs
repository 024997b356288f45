//! Dataset splitting, class weighting, and the reported metrics: accuracy,
//! precision/recall/F1, ROC/AUC, confusion matrices, and cross-dataset
//! evaluation.

mod metrics;
mod roc;
mod split;

pub use metrics::{summarize, ClassMetrics, ConfusionMatrix, Summary};
pub use roc::{roc_auc, RocCurve, RocResult};
pub use split::{class_weights, stratified_kfold, stratified_split, FoldPlan};

use crate::error::{Error, Result};
use crate::models::{predict_probs, ModelSpec};
use crate::tensor::Tensor;

/// Everything a run reports for one evaluated set; the scalar metrics are
/// all derivable from the embedded confusion matrix and score set.
#[derive(Debug, Clone)]
pub struct MetricsReport {
    pub model_name: String,
    pub dataset: String,
    pub seed: u64,
    pub fold: Option<usize>,
    pub external: bool,
    pub summary: Summary,
    pub confusion: ConfusionMatrix,
    pub roc: RocResult,
}

impl MetricsReport {
    /// Fixed-order `key = value` text form (the documented report schema).
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut push = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        push("model", self.model_name.clone());
        push("dataset", self.dataset.clone());
        push("seed", self.seed.to_string());
        push(
            "fold",
            self.fold.map_or("-".to_string(), |f| f.to_string()),
        );
        push("external", self.external.to_string());
        push("samples", self.confusion.total().to_string());
        push("accuracy", format!("{:.6}", self.summary.accuracy));
        push(
            "precision_macro",
            format!("{:.6}", self.summary.macro_precision),
        );
        push("recall_macro", format!("{:.6}", self.summary.macro_recall));
        push("f1_macro", format!("{:.6}", self.summary.macro_f1));
        push(
            "auc_macro",
            self.roc
                .macro_auc
                .map_or("undefined".to_string(), |a| format!("{a:.6}")),
        );
        for (c, m) in self.summary.per_class.iter().enumerate() {
            push(&format!("class.{c}.precision"), format!("{:.6}", m.precision));
            push(&format!("class.{c}.recall"), format!("{:.6}", m.recall));
            push(&format!("class.{c}.f1"), format!("{:.6}", m.f1));
            push(
                &format!("class.{c}.auc"),
                self.roc.per_class_auc[c]
                    .map_or("undefined".to_string(), |a| format!("{a:.6}")),
            );
            if m.zero_division {
                push(&format!("class.{c}.zero_division"), "true".to_string());
            }
        }
        out
    }
}

/// Runs the model over an evaluated set and assembles the full report.
pub fn evaluate_model(
    model: &ModelSpec,
    images: &[Tensor],
    labels: &[usize],
    batch_size: usize,
    dataset: &str,
    fold: Option<usize>,
    external: bool,
) -> Result<MetricsReport> {
    let probs = predict_probs(model, images, batch_size)?;
    let classes = model.class_count;
    let preds: Vec<usize> = probs
        .data()
        .chunks_exact(classes)
        .map(|row| {
            row.iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .map(|(i, _)| i)
                .unwrap()
        })
        .collect();
    let confusion = ConfusionMatrix::from_predictions(labels, &preds, classes)?;
    let summary = summarize(&confusion);
    let scores: Vec<Vec<f64>> = probs
        .data()
        .chunks_exact(classes)
        .map(|row| row.iter().map(|&v| v as f64).collect())
        .collect();
    let roc = roc_auc(&scores, labels)?;
    Ok(MetricsReport {
        model_name: model.name.clone(),
        dataset: dataset.to_string(),
        seed: model.meta.seed,
        fold,
        external,
        summary,
        confusion,
        roc,
    })
}

/// Cross-dataset evaluation: drops excluded external classes, remaps the
/// rest onto the model's training class indices via `class_map`
/// (external class name -> model class index), and evaluates. The report
/// is flagged `external = true`.
pub fn cross_dataset_eval(
    model: &ModelSpec,
    images: &[Tensor],
    labels: &[usize],
    external_classes: &[String],
    class_map: &[(String, usize)],
    exclude: &[String],
    batch_size: usize,
    dataset: &str,
) -> Result<MetricsReport> {
    let mut mapping: Vec<Option<usize>> = Vec::with_capacity(external_classes.len());
    let mut unmapped = Vec::new();
    for name in external_classes {
        if exclude.contains(name) {
            mapping.push(None);
            continue;
        }
        match class_map.iter().find(|(n, _)| n == name) {
            Some((_, idx)) => {
                if *idx >= model.class_count {
                    return Err(Error::InvalidArgument(format!(
                        "class map sends {name} to index {idx}, but the model has {} classes",
                        model.class_count
                    )));
                }
                mapping.push(Some(*idx));
            }
            None => {
                unmapped.push(name.clone());
                mapping.push(None);
            }
        }
    }
    if !unmapped.is_empty() {
        return Err(Error::UnmappedClasses(unmapped));
    }

    let mut kept_images = Vec::new();
    let mut kept_labels = Vec::new();
    for (img, &label) in images.iter().zip(labels) {
        let name = external_classes.get(label).ok_or(Error::LabelOutOfRange {
            index: kept_labels.len(),
            label,
            classes: external_classes.len(),
        })?;
        if exclude.contains(name) {
            continue;
        }
        kept_images.push(img.clone());
        kept_labels.push(mapping[label].expect("non-excluded classes are mapped"));
    }
    if kept_images.is_empty() {
        return Err(Error::EmptyDataset);
    }
    evaluate_model(
        model,
        &kept_images,
        &kept_labels,
        batch_size,
        dataset,
        None,
        true,
    )
}
