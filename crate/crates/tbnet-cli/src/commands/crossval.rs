//! `crossval`: stratified k-fold over the 80% training pool, one model
//! per fold, per-fold reports plus a mean/sd summary table.

use tbnet::data::{load_dataset, load_manifest};
use tbnet::eval::{class_weights, evaluate_model, stratified_kfold, stratified_split, MetricsReport};
use tbnet::optim::{train, PlateauSchedule, TrainConfig};
use tbnet::{Result, RngState};

use crate::config::{RunConfig, TrainArgs, WeightMode};

use super::common;

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn run(args: &TrainArgs) -> Result<()> {
    let config = RunConfig::resolve(args)?;
    common::create_dir(&config.out)?;
    config.write_resolved()?;

    let manifest = load_manifest(&config.data)?;
    let ds = load_dataset(&manifest, Some(config.size))?;
    let classes = ds.classes.len();
    let dataset_name = config
        .data
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());

    let mut rng = RngState::new(config.seed);
    // The 20% test side stays untouched; folds partition the 80% pool.
    let (pool_idx, _test_idx) = stratified_split(&ds.labels, 0.2, &mut rng)?;
    let pool_labels: Vec<usize> = pool_idx.iter().map(|&i| ds.labels[i]).collect();
    let plan = stratified_kfold(&pool_labels, config.k, &mut rng)?;

    let mut reports: Vec<MetricsReport> = Vec::with_capacity(config.k);
    for fold in 0..config.k {
        let to_global = |positions: &[usize]| -> Vec<usize> {
            positions.iter().map(|&p| pool_idx[p]).collect()
        };
        let train_global = to_global(&plan.training_indices(fold));
        let val_global = to_global(plan.validation_indices(fold));
        let (train_images, train_labels) = common::select(&ds.images, &ds.labels, &train_global);
        let (val_images, val_labels) = common::select(&ds.images, &ds.labels, &val_global);

        let mut fold_rng = rng.split();
        let mut model = common::build_model(config.model, config.size, classes, &mut fold_rng)?;
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
            Some((&val_images, &val_labels)),
            &train_config,
            &mut fold_rng,
        )?;

        let fold_dir = config.out.join(format!("fold_{fold}"));
        common::create_dir(&fold_dir)?;
        common::write_file(&fold_dir.join("stats.csv"), &common::stats_csv(&stats))?;
        let report = evaluate_model(
            &model,
            &val_images,
            &val_labels,
            config.batch_size,
            &dataset_name,
            Some(fold),
            false,
        )?;
        common::write_report_files(&fold_dir, &report)?;
        println!(
            "fold {fold}: val_acc {:.4} ({} samples)",
            report.summary.accuracy,
            val_labels.len()
        );
        reports.push(report);
    }

    let mut summary = String::from("fold,accuracy,precision_macro,recall_macro,f1_macro,auc_macro\n");
    let columns: Vec<Vec<f64>> = reports
        .iter()
        .map(|r| {
            vec![
                r.summary.accuracy,
                r.summary.macro_precision,
                r.summary.macro_recall,
                r.summary.macro_f1,
                r.roc.macro_auc.unwrap_or(f64::NAN),
            ]
        })
        .collect();
    for (fold, row) in columns.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.6}")).collect();
        summary.push_str(&format!("{fold},{}\n", cells.join(",")));
    }
    for (label, pick) in [("mean", 0usize), ("sd", 1)] {
        let cells: Vec<String> = (0..5)
            .map(|c| {
                let col: Vec<f64> = columns.iter().map(|row| row[c]).collect();
                let (mean, sd) = mean_sd(&col);
                format!("{:.6}", if pick == 0 { mean } else { sd })
            })
            .collect();
        summary.push_str(&format!("{label},{}\n", cells.join(",")));
    }
    common::write_file(&config.out.join("summary.csv"), &summary)?;
    println!("{}", config.out.join("summary.csv").display());
    Ok(())
}
