//! Shared command plumbing: model construction, report/CSV emission.

use std::path::Path;

use tbnet::eval::MetricsReport;
use tbnet::models::{build_cnn3, build_tl_head, build_unet_classifier, make_toy_backbone, ModelSpec};
use tbnet::optim::EpochStats;
use tbnet::{Error, Result, RngState, Tensor};

use crate::config::ModelKind;

pub fn build_model(
    kind: ModelKind,
    size: usize,
    classes: usize,
    rng: &mut RngState,
) -> Result<ModelSpec> {
    match kind {
        ModelKind::Cnn3 => build_cnn3([size, size, 1], classes, rng),
        ModelKind::Unet => build_unet_classifier([size, size, 1], classes, rng),
        ModelKind::TlHead => {
            let backbone = make_toy_backbone([size, size, 1], rng)?;
            build_tl_head(&backbone, classes, 0.2, rng)
        }
    }
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// `epoch,loss,acc,val_loss,val_acc,lr` rows behind the accuracy/loss
/// figures.
pub fn stats_csv(stats: &[EpochStats]) -> String {
    let mut out = String::from("epoch,loss,acc,val_loss,val_acc,lr\n");
    for s in stats {
        let val_loss = s.val_loss.map_or(String::new(), |v| format!("{v:.6}"));
        let val_acc = s.val_acc.map_or(String::new(), |v| format!("{v:.6}"));
        out.push_str(&format!(
            "{},{:.6},{:.6},{},{},{:.8}\n",
            s.epoch, s.train_loss, s.train_acc, val_loss, val_acc, s.lr
        ));
    }
    out
}

pub fn confusion_csv(report: &MetricsReport) -> String {
    let c = report.confusion.class_count();
    let mut out = String::new();
    for t in 0..c {
        let row: Vec<String> = (0..c)
            .map(|p| report.confusion.at(t, p).to_string())
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn roc_csv(report: &MetricsReport) -> String {
    let mut out = String::from("class,fpr,tpr\n");
    for (class, curve) in report.roc.curves.iter().enumerate() {
        for (fpr, tpr) in &curve.points {
            out.push_str(&format!("{class},{fpr:.6},{tpr:.6}\n"));
        }
    }
    out
}

/// Writes `report.txt`, `confusion.csv`, and `roc.csv` into `dir`.
pub fn write_report_files(dir: &Path, report: &MetricsReport) -> Result<()> {
    write_file(&dir.join("report.txt"), &report.to_text())?;
    write_file(&dir.join("confusion.csv"), &confusion_csv(report))?;
    write_file(&dir.join("roc.csv"), &roc_csv(report))
}

pub fn select(
    images: &[Tensor],
    labels: &[usize],
    idx: &[usize],
) -> (Vec<Tensor>, Vec<usize>) {
    (
        idx.iter().map(|&i| images[i].clone()).collect(),
        idx.iter().map(|&i| labels[i]).collect(),
    )
}
