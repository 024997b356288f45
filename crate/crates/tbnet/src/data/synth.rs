//! Synthetic 3-class blob dataset.
//!
//! Cartoon-fidelity stand-in for the MRI set: each class draws a single
//! hard-edged bright blob whose position band, radius range, and intensity
//! range are class-specific (mid blob in the upper band, large irregular
//! blob in the center, small bright blob low-center). Gaussian noise is
//! clamped to two sigma so a `background + 3 sigma` threshold cleanly
//! separates blob pixels from background, which the ground-truth boxes
//! rely on.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::rng::RngState;
use crate::tensor::Tensor;

use super::image::save_pgm;
use super::manifest::{DatasetManifest, ManifestRecord};

const BACKGROUND: f64 = 0.08;

/// Geometry rules for one class, in unit coordinates of the image side.
#[derive(Debug, Clone)]
pub struct BlobRule {
    pub y_band: (f64, f64),
    pub x_band: (f64, f64),
    pub radius: (f64, f64),
    pub intensity: (f64, f64),
    /// Modulate the radius over angle to break circularity.
    pub irregular: bool,
}

#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub per_class: usize,
    pub size: usize,
    /// Noise standard deviation on the [0, 1] intensity scale.
    pub noise: f64,
    pub seed: u64,
    pub rules: [BlobRule; 3],
}

impl SyntheticSpec {
    pub fn new(per_class: usize, size: usize, seed: u64) -> Self {
        SyntheticSpec {
            per_class,
            size,
            noise: 0.02,
            seed,
            rules: [
                // meningioma: mid-size blob, upper band
                BlobRule {
                    y_band: (0.18, 0.32),
                    x_band: (0.35, 0.65),
                    radius: (0.10, 0.16),
                    intensity: (0.55, 0.75),
                    irregular: false,
                },
                // glioma: large irregular blob, centered
                BlobRule {
                    y_band: (0.42, 0.58),
                    x_band: (0.42, 0.58),
                    radius: (0.20, 0.28),
                    intensity: (0.45, 0.65),
                    irregular: true,
                },
                // pituitary: small bright blob, lower center
                BlobRule {
                    y_band: (0.68, 0.82),
                    x_band: (0.40, 0.60),
                    radius: (0.06, 0.10),
                    intensity: (0.80, 0.95),
                    irregular: false,
                },
            ],
        }
    }
}

pub(crate) struct BlobImage {
    pub image: Tensor,
    /// Half-open pixel box of the painted blob.
    pub bbox: (usize, usize, usize, usize),
}

/// Renders one blob image; all randomness comes from `rng` in a fixed
/// order (blob parameters first, then per-pixel noise row-major).
pub(crate) fn render_blob(spec: &SyntheticSpec, class: usize, rng: &mut RngState) -> BlobImage {
    let s = spec.size as f64;
    let rule = &spec.rules[class];
    let cy = rng.uniform(rule.y_band.0, rule.y_band.1) * s;
    let cx = rng.uniform(rule.x_band.0, rule.x_band.1) * s;
    let r = rng.uniform(rule.radius.0, rule.radius.1) * s;
    let intensity = rng.uniform(rule.intensity.0, rule.intensity.1);
    let (amp1, phase1, amp2, phase2) = if rule.irregular {
        (
            rng.uniform(0.06, 0.14),
            rng.uniform(0.0, std::f64::consts::TAU),
            rng.uniform(0.04, 0.10),
            rng.uniform(0.0, std::f64::consts::TAU),
        )
    } else {
        (0.0, 0.0, 0.0, 0.0)
    };

    let n = spec.size;
    let mut data = vec![BACKGROUND as f32; n * n];
    let (mut x0, mut y0, mut x1, mut y1) = (n, n, 0usize, 0usize);
    for y in 0..n {
        for x in 0..n {
            let dy = y as f64 + 0.5 - cy;
            let dx = x as f64 + 0.5 - cx;
            let dist = (dy * dy + dx * dx).sqrt();
            let theta = dy.atan2(dx);
            let r_eff = r * (1.0 + amp1 * (2.0 * theta + phase1).sin()
                + amp2 * (3.0 * theta + phase2).sin());
            if dist <= r_eff {
                data[y * n + x] = intensity as f32;
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x + 1);
                y1 = y1.max(y + 1);
            }
        }
    }
    // Bands keep blobs inside the frame, so the box is always non-empty.
    debug_assert!(x1 > x0 && y1 > y0, "blob fell outside the frame");

    for v in data.iter_mut() {
        let z = rng.normal().clamp(-2.0, 2.0);
        *v = ((*v as f64 + spec.noise * z).clamp(0.0, 1.0)) as f32;
    }
    BlobImage {
        image: Tensor::new(vec![n, n, 1], data).unwrap(),
        bbox: (x0, y0, x1, y1),
    }
}

/// Writes `per_class` PGM images per class plus `manifest.csv`,
/// `classes.txt`, and `boxes.csv` into `out_dir`. Fully seeded: the same
/// spec produces byte-identical files.
pub fn synth_generate(spec: &SyntheticSpec, out_dir: &Path) -> Result<DatasetManifest> {
    if spec.per_class == 0 {
        return Err(Error::InvalidArgument("per_class must be >= 1".into()));
    }
    if spec.size < 16 {
        return Err(Error::InvalidArgument(format!(
            "image size must be >= 16, got {}",
            spec.size
        )));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let classes = ["meningioma", "glioma", "pituitary"];
    let mut rng = RngState::new(spec.seed);
    let mut records = Vec::with_capacity(3 * spec.per_class);
    let mut manifest_csv = String::from("path,label\n");
    let mut boxes_csv = String::from("image_path,x0,y0,x1,y1,label\n");

    for class in 0..3 {
        for i in 0..spec.per_class {
            let blob = render_blob(spec, class, &mut rng);
            let file = format!("class{class}_{i:04}.pgm");
            save_pgm(&out_dir.join(&file), &blob.image)?;
            let (x0, y0, x1, y1) = blob.bbox;
            manifest_csv.push_str(&format!("{file},{class}\n"));
            boxes_csv.push_str(&format!("{file},{x0},{y0},{x1},{y1},{class}\n"));
            records.push(ManifestRecord {
                path: PathBuf::from(file),
                label: class,
            });
        }
    }

    let write = |name: &str, contents: &str| -> Result<()> {
        let p = out_dir.join(name);
        std::fs::write(&p, contents).map_err(|e| Error::io(p, e))
    };
    write("manifest.csv", &manifest_csv)?;
    write("classes.txt", &format!("{}\n", classes.join("\n")))?;
    write("boxes.csv", &boxes_csv)?;

    Ok(DatasetManifest {
        root: out_dir.to_path_buf(),
        records,
        classes: classes.iter().map(|s| s.to_string()).collect(),
    })
}
