//! Dataset ingestion, preprocessing, and the synthetic 3-class generator.

mod image;
mod manifest;
mod synth;

pub use image::{load_image, resize_bilinear, save_pgm, save_raw};
pub use manifest::{load_manifest, DatasetManifest, ManifestRecord};
pub use synth::{synth_generate, BlobRule, SyntheticSpec};

use crate::error::Result;
use crate::tensor::Tensor;

/// A manifest's images loaded into memory, optionally resized, in manifest
/// order.
#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub images: Vec<Tensor>,
    pub labels: Vec<usize>,
    pub classes: Vec<String>,
}

/// Loads every record; `target_size` resizes each image to a square of
/// that side with bilinear interpolation.
pub fn load_dataset(
    manifest: &DatasetManifest,
    target_size: Option<usize>,
) -> Result<LoadedDataset> {
    let mut images = Vec::with_capacity(manifest.records.len());
    let mut labels = Vec::with_capacity(manifest.records.len());
    for record in &manifest.records {
        let img = load_image(&manifest.resolve(record))?;
        let img = match target_size {
            Some(s) if img.dim(0) != s || img.dim(1) != s => resize_bilinear(&img, s, s)?,
            _ => img,
        };
        images.push(img);
        labels.push(record.label);
    }
    Ok(LoadedDataset {
        images,
        labels,
        classes: manifest.classes.clone(),
    })
}
