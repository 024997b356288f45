//! `eval`: internal evaluation of a checkpoint on a manifest, or external
//! cross-dataset evaluation with class exclusion and name remapping.

use std::path::Path;

use tbnet::data::{load_dataset, load_manifest};
use tbnet::eval::{cross_dataset_eval, evaluate_model};
use tbnet::models::load_checkpoint;
use tbnet::{Error, Result};

use super::common;

/// Lines of `external_name = model_class_index`.
fn parse_class_map(path: &Path) -> Result<Vec<(String, usize)>> {
    let entries = crate::config::parse_config_file(path)?;
    entries
        .into_iter()
        .map(|(name, value)| {
            let index = value.parse().map_err(|_| {
                Error::InvalidArgument(format!(
                    "{}: class map value for `{name}` must be a class index, got `{value}`",
                    path.display()
                ))
            })?;
            Ok((name, index))
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
pub fn run(
    checkpoint: &Path,
    data: &Path,
    report_dir: &Path,
    exclude: &[String],
    class_map: Option<&Path>,
    batch: usize,
) -> Result<()> {
    if batch == 0 {
        return Err(Error::InvalidArgument("--batch must be at least 1".into()));
    }
    let model = load_checkpoint(checkpoint)?;
    let manifest = load_manifest(data)?;
    let size = model.input_shape[0];
    let ds = load_dataset(&manifest, Some(size))?;
    let dataset_name = data
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());

    let external = !exclude.is_empty() || class_map.is_some();
    let report = if external {
        // Unmapped identity: names map onto their manifest indices when
        // no map file is given.
        let map = match class_map {
            Some(path) => parse_class_map(path)?,
            None => ds
                .classes
                .iter()
                .enumerate()
                .map(|(i, n)| (n.clone(), i))
                .collect(),
        };
        cross_dataset_eval(
            &model,
            &ds.images,
            &ds.labels,
            &ds.classes,
            &map,
            exclude,
            batch,
            &dataset_name,
        )?
    } else {
        if ds.classes.len() != model.class_count {
            return Err(Error::ClassCountMismatch {
                model_classes: model.class_count,
                dataset_classes: ds.classes.len(),
            });
        }
        evaluate_model(&model, &ds.images, &ds.labels, batch, &dataset_name, None, false)?
    };

    common::create_dir(report_dir)?;
    common::write_report_files(report_dir, &report)?;
    let resolved = format!(
        "checkpoint = {}\ndata = {}\nreport = {}\nexclude = {}\nclass_map = {}\nbatch = {}\n",
        checkpoint.display(),
        data.display(),
        report_dir.display(),
        exclude.join(";"),
        class_map.map_or("-".to_string(), |p| p.display().to_string()),
        batch
    );
    common::write_file(&report_dir.join("run.cfg"), &resolved)?;
    println!(
        "evaluated {} samples: acc {:.4}, macro F1 {:.4}",
        report.confusion.total(),
        report.summary.accuracy,
        report.summary.macro_f1
    );
    println!("{}", report_dir.join("report.txt").display());
    Ok(())
}
