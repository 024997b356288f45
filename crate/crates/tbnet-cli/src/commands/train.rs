//! `train`: stratified 80/20 split, training on the 80%, checkpoint,
//! per-epoch stats CSV, and a metrics report on the held-out 20%.

use tbnet::data::{load_dataset, load_manifest};
use tbnet::eval::{class_weights, evaluate_model, stratified_split};
use tbnet::models::save_checkpoint;
use tbnet::optim::{train, PlateauSchedule, TrainConfig};
use tbnet::{Result, RngState};

use crate::config::{RunConfig, TrainArgs, WeightMode};

use super::common;

pub fn run(args: &TrainArgs) -> Result<()> {
    let config = RunConfig::resolve(args)?;
    common::create_dir(&config.out)?;
    config.write_resolved()?;

    let manifest = load_manifest(&config.data)?;
    let ds = load_dataset(&manifest, Some(config.size))?;
    let classes = ds.classes.len();

    let mut rng = RngState::new(config.seed);
    let (train_idx, test_idx) = stratified_split(&ds.labels, 0.2, &mut rng)?;
    let (train_images, train_labels) = common::select(&ds.images, &ds.labels, &train_idx);
    let (test_images, test_labels) = common::select(&ds.images, &ds.labels, &test_idx);

    let mut model = common::build_model(config.model, config.size, classes, &mut rng)?;

    let mut train_config = TrainConfig::new(config.epochs, config.batch_size, config.lr);
    train_config.seed = config.seed;
    if config.class_weights == WeightMode::Balanced {
        train_config.class_weights = Some(class_weights(&train_labels, classes)?);
    }
    if config.plateau {
        train_config.schedule = Some(PlateauSchedule::default());
    }

    let stats = train(
        &mut model,
        &train_images,
        &train_labels,
        Some((&test_images, &test_labels)),
        &train_config,
        &mut rng,
    )?;
    common::write_file(&config.out.join("stats.csv"), &common::stats_csv(&stats))?;
    save_checkpoint(&model, &config.out.join("model.tbck"))?;

    let dataset_name = config
        .data
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    let report = evaluate_model(
        &model,
        &test_images,
        &test_labels,
        config.batch_size,
        &dataset_name,
        None,
        false,
    )?;
    common::write_report_files(&config.out, &report)?;

    // The held-out split as a manifest, so `eval` can reproduce this
    // report from the checkpoint alone.
    let mut test_manifest = String::from("path,label\n");
    for &i in &test_idx {
        let record = &manifest.records[i];
        test_manifest.push_str(&format!(
            "{},{}\n",
            manifest.resolve(record).display(),
            record.label
        ));
    }
    common::write_file(&config.out.join("test_manifest.csv"), &test_manifest)?;
    common::write_file(
        &config.out.join("classes.txt"),
        &format!("{}\n", ds.classes.join("\n")),
    )?;

    let last = stats.last().expect("at least one epoch");
    println!(
        "trained {} for {} epochs: train_acc {:.4}, held-out acc {:.4} ({} samples)",
        config.model,
        stats.len(),
        last.train_acc,
        report.summary.accuracy,
        test_labels.len()
    );
    println!("{}", config.out.join("model.tbck").display());
    Ok(())
}
