//! Region pipeline: selective-search proposals, IoU filtering, RoI
//! pooling, and region-level classification.

mod selective_search;

pub use selective_search::selective_search;

use crate::error::{Error, Result};
use crate::models::{predict_probs, ModelSpec};
use crate::par;
use crate::tensor::Tensor;

/// Axis-aligned pixel rectangle, half-open `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl BBox {
    pub fn new(x0: usize, y0: usize, x1: usize, y1: usize) -> Result<Self> {
        if x1 <= x0 || y1 <= y0 {
            return Err(Error::InvalidArgument(format!(
                "degenerate box ({x0},{y0},{x1},{y1}): x1 > x0 and y1 > y0 required"
            )));
        }
        Ok(BBox { x0, y0, x1, y1 })
    }

    pub fn width(&self) -> usize {
        self.x1 - self.x0
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0
    }

    pub fn area(&self) -> usize {
        self.width() * self.height()
    }
}

/// Candidate region with a merge-order score (higher = larger region,
/// emitted later in the merge hierarchy).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Proposal {
    pub bbox: BBox,
    pub score: f64,
}

/// Selective-search knobs. `tau` is the over-segmentation threshold on a
/// [0, 255] intensity scale; regions smaller than `min_region` pixels are
/// absorbed into a neighbor before merging starts.
#[derive(Debug, Clone)]
pub struct SegmentationParams {
    pub tau: f64,
    pub min_region: usize,
    pub max_proposals: usize,
}

impl Default for SegmentationParams {
    fn default() -> Self {
        SegmentationParams {
            tau: 8.0,
            min_region: 20,
            max_proposals: 200,
        }
    }
}

/// Intersection area over union area; 0 for disjoint boxes.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let ix0 = a.x0.max(b.x0);
    let iy0 = a.y0.max(b.y0);
    let ix1 = a.x1.min(b.x1);
    let iy1 = a.y1.min(b.y1);
    if ix1 <= ix0 || iy1 <= iy0 {
        return 0.0;
    }
    let inter = (ix1 - ix0) * (iy1 - iy0);
    let union = a.area() + b.area() - inter;
    inter as f64 / union as f64
}

/// Keeps proposals whose best IoU against any ground-truth box is
/// strictly greater than `threshold`, recording the argmax ground-truth
/// index (IoU ties break to the lower index). An empty ground-truth list
/// yields an empty result.
pub fn filter_proposals(
    proposals: &[Proposal],
    ground_truth: &[BBox],
    threshold: f64,
) -> Result<Vec<(Proposal, usize)>> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "IoU threshold must be in (0, 1], got {threshold}"
        )));
    }
    let mut kept = Vec::new();
    for &p in proposals {
        let mut best: Option<(usize, f64)> = None;
        for (gi, gt) in ground_truth.iter().enumerate() {
            let v = iou(&p.bbox, gt);
            if best.map_or(true, |(_, b)| v > b) {
                best = Some((gi, v));
            }
        }
        if let Some((gi, v)) = best {
            if v > threshold {
                kept.push((p, gi));
            }
        }
    }
    Ok(kept)
}

/// Max-pools the box region of a channels-last feature map into a fixed
/// `out_h x out_w` grid. Cell boundaries sit at `floor(i * extent / out)`;
/// when the box extent is smaller than the grid, empty cells replicate the
/// nearest row/column.
pub fn roi_pool(
    feature_map: &Tensor,
    bbox: &BBox,
    out_h: usize,
    out_w: usize,
) -> Result<Tensor> {
    if feature_map.rank() != 3 {
        return Err(Error::shape("roi_pool input", &[0, 0, 0], feature_map.shape()));
    }
    let (h, w, c) = (
        feature_map.dim(0),
        feature_map.dim(1),
        feature_map.dim(2),
    );
    if bbox.x1 > w || bbox.y1 > h {
        return Err(Error::InvalidArgument(format!(
            "box ({},{},{},{}) outside {w}x{h} map",
            bbox.x0, bbox.y0, bbox.x1, bbox.y1
        )));
    }
    let (bh, bw) = (bbox.height(), bbox.width());
    let mut out = Tensor::zeros(&[out_h, out_w, c]);
    let src = feature_map.data();
    let dst = out.data_mut();
    let cell = |i: usize, extent: usize, cells: usize| -> (usize, usize) {
        let lo = i * extent / cells;
        let hi = ((i + 1) * extent / cells).max(lo + 1).min(extent);
        let lo = lo.min(extent - 1);
        (lo, hi.max(lo + 1))
    };
    for oy in 0..out_h {
        let (ry0, ry1) = cell(oy, bh, out_h);
        for ox in 0..out_w {
            let (rx0, rx1) = cell(ox, bw, out_w);
            for ch in 0..c {
                let mut best = f32::NEG_INFINITY;
                for y in bbox.y0 + ry0..bbox.y0 + ry1 {
                    for x in bbox.x0 + rx0..bbox.x0 + rx1 {
                        best = best.max(src[(y * w + x) * c + ch]);
                    }
                }
                dst[(oy * out_w + ox) * c + ch] = best;
            }
        }
    }
    Ok(out)
}

/// One classified region.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionClass {
    pub bbox: BBox,
    pub class: usize,
    pub probability: f32,
}

/// Classifies arbitrary boxes by RoI-pooling each to the model's input
/// size and running inference. Region pooling fans out in parallel;
/// results keep box order.
pub fn classify_boxes(
    image: &Tensor,
    boxes: &[BBox],
    model: &ModelSpec,
) -> Result<Vec<RegionClass>> {
    if boxes.is_empty() {
        return Ok(Vec::new());
    }
    let [mh, mw, mc] = model.input_shape;
    if image.dim(2) != mc {
        return Err(Error::shape(
            "region image channels",
            &[mc],
            &[image.dim(2)],
        ));
    }
    let pooled: Vec<Result<Tensor>> =
        par::map_indexed(boxes.len(), |i| roi_pool(image, &boxes[i], mh, mw));
    let pooled: Vec<Tensor> = pooled.into_iter().collect::<Result<_>>()?;
    let probs = predict_probs(model, &pooled, 32)?;
    let classes = model.class_count;
    Ok(boxes
        .iter()
        .zip(probs.data().chunks_exact(classes))
        .map(|(&bbox, row)| {
            let (class, &probability) = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap();
            RegionClass {
                bbox,
                class,
                probability,
            }
        })
        .collect())
}

/// The full pipeline on one image: selective-search proposals, RoI
/// pooling on the raster, per-region classification.
pub fn classify_regions(
    image: &Tensor,
    model: &ModelSpec,
    params: &SegmentationParams,
) -> Result<Vec<RegionClass>> {
    let proposals = selective_search(image, params)?;
    let boxes: Vec<BBox> = proposals.iter().map(|p| p.bbox).collect();
    classify_boxes(image, &boxes, model)
}
