//! `tbnet` command line: synthesize datasets, train and cross-validate the
//! classifier families, evaluate checkpoints (internally or against an
//! external cohort), and run the region-proposal pipeline.
//!
//! Exit codes are a stable contract: 0 success, 2 usage or malformed
//! input content, 3 I/O, 4 numeric failure, 5 model/data mismatch.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "tbnet", version, about = "Brain-tumor MRI classification pipelines")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic 3-class blob dataset.
    Synth {
        /// Output directory for images, manifest.csv, classes.txt, boxes.csv.
        #[arg(long)]
        out: PathBuf,
        /// Images per class.
        #[arg(long = "per-class")]
        per_class: usize,
        /// Square image side in pixels.
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Noise standard deviation on the [0,1] scale.
        #[arg(long, default_value_t = 0.02)]
        noise: f64,
    },
    /// Train on an 80/20 stratified split and report on the held-out 20%.
    Train(config::TrainArgs),
    /// Stratified k-fold cross-validation over the 80% training pool.
    Crossval(config::TrainArgs),
    /// Evaluate a checkpoint on a manifest, optionally as an external
    /// cohort with class exclusion and remapping.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Manifest CSV of the evaluation set.
        #[arg(long)]
        data: PathBuf,
        /// Report output directory.
        #[arg(long)]
        report: PathBuf,
        /// External class names to drop before evaluation (repeatable).
        #[arg(long)]
        exclude: Vec<String>,
        /// File of `external_name = model_class_index` lines mapping the
        /// external labels onto the model's training classes.
        #[arg(long = "class-map")]
        class_map: Option<PathBuf>,
        #[arg(long, default_value_t = 32)]
        batch: usize,
    },
    /// Selective search plus IoU filtering (and optional classification)
    /// on one image.
    Regions {
        #[arg(long)]
        image: PathBuf,
        /// Ground-truth boxes CSV (`image_path,x0,y0,x1,y1,label`).
        #[arg(long)]
        boxes: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// IoU threshold; kept proposals must exceed it strictly.
        #[arg(long, default_value_t = 0.7)]
        iou: f64,
        /// Classify kept regions with this checkpoint.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Over-segmentation threshold on the [0,255] intensity scale.
        #[arg(long, default_value_t = 8.0)]
        tau: f64,
        #[arg(long = "min-region", default_value_t = 20)]
        min_region: usize,
        #[arg(long = "max-proposals", default_value_t = 200)]
        max_proposals: usize,
    },
}

fn exit_code(err: &tbnet::Error) -> u8 {
    use tbnet::Error::*;
    match err {
        InvalidArgument(_) | ManifestParse { .. } | LabelOutOfRange { .. }
        | UnmappedClasses(_) => 2,
        Io { .. } | Truncated(_) | BadMagic { .. } | UnsupportedVersion(_) | EmptyDataset => 3,
        NanLoss { .. } | NonFinite { .. } => 4,
        ShapeMismatch { .. } | ClassCountMismatch { .. } => 5,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth {
            out,
            per_class,
            size,
            seed,
            noise,
        } => commands::synth::run(&out, per_class, size, seed, noise),
        Command::Train(args) => commands::train::run(&args),
        Command::Crossval(args) => commands::crossval::run(&args),
        Command::Eval {
            checkpoint,
            data,
            report,
            exclude,
            class_map,
            batch,
        } => commands::eval::run(&checkpoint, &data, &report, &exclude, class_map.as_deref(), batch),
        Command::Regions {
            image,
            boxes,
            out,
            iou,
            checkpoint,
            tau,
            min_region,
            max_proposals,
        } => commands::regions::run(
            &image,
            &boxes,
            &out,
            iou,
            checkpoint.as_deref(),
            tau,
            min_region,
            max_proposals,
        ),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
