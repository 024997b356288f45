//! Selective search: graph-based over-segmentation followed by
//! hierarchical greedy merging, emitting a bounding box at every level.
//!
//! Stage 1 grows regions over the 4-connected pixel graph (edge weight =
//! absolute intensity difference on a [0, 255] scale), joining when the
//! edge is no heavier than either side's internal contrast plus a
//! size credit `tau / |region|`, then absorbing regions below the minimum
//! size. Stage 2 repeatedly merges the most similar adjacent pair, where
//! similarity is the equal-weighted sum of intensity-histogram
//! intersection (16 bins), a size term, and a bounding-box fill term.
//! Everything is deterministic: ties break on region indices.

use std::collections::BTreeSet;
use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::{BBox, Proposal, SegmentationParams};

const HIST_BINS: usize = 16;

struct DisjointSet {
    parent: Vec<usize>,
    size: Vec<usize>,
    /// Max accepted edge weight inside the component.
    internal: Vec<f64>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet {
            parent: (0..n).collect(),
            size: vec![1; n],
            internal: vec![0.0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize, weight: f64) -> usize {
        let (a, b) = (self.find(a), self.find(b));
        let (big, small) = if self.size[a] >= self.size[b] { (a, b) } else { (b, a) };
        self.parent[small] = big;
        self.size[big] += self.size[small];
        self.internal[big] = weight;
        big
    }
}

#[derive(Clone)]
struct Region {
    size: usize,
    bbox: BBox,
    /// L1-normalized intensity histogram.
    hist: [f64; HIST_BINS],
    neighbors: BTreeSet<usize>,
    alive: bool,
}

fn similarity(a: &Region, b: &Region, total: f64) -> f64 {
    let hist_intersection: f64 = a
        .hist
        .iter()
        .zip(&b.hist)
        .map(|(x, y)| x.min(*y))
        .sum();
    let size_sim = 1.0 - (a.size + b.size) as f64 / total;
    let union_bbox_area = ((a.bbox.x1.max(b.bbox.x1) - a.bbox.x0.min(b.bbox.x0))
        * (a.bbox.y1.max(b.bbox.y1) - a.bbox.y0.min(b.bbox.y0))) as f64;
    let fill = 1.0 - (union_bbox_area - (a.size + b.size) as f64) / total;
    hist_intersection + size_sim + fill
}

/// Fixed-point similarity key for a totally ordered, deterministic queue.
fn sim_key(s: f64) -> i64 {
    (s * 1e12).round() as i64
}

pub fn selective_search(image: &Tensor, params: &SegmentationParams) -> Result<Vec<Proposal>> {
    if image.rank() != 3 || image.dim(2) != 1 {
        return Err(Error::shape(
            "selective_search image",
            &[0, 0, 1],
            image.shape(),
        ));
    }
    let (h, w) = (image.dim(0), image.dim(1));
    if h < 4 || w < 4 {
        return Err(Error::InvalidArgument(format!(
            "selective_search needs at least 4x4 input, got {h}x{w}"
        )));
    }
    if !image.all_finite() {
        return Err(Error::NonFinite {
            context: "selective_search image".into(),
        });
    }
    if params.max_proposals == 0 || params.min_region == 0 || params.tau < 0.0 {
        return Err(Error::InvalidArgument(
            "segmentation params: tau >= 0, min_region >= 1, max_proposals >= 1".into(),
        ));
    }

    let v255: Vec<f64> = image.iter().map(|&v| v as f64 * 255.0).collect();

    // Stage 1: graph-based region growing.
    let mut edges: Vec<(u32, u32, f64)> = Vec::with_capacity(2 * h * w);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if x + 1 < w {
                edges.push((i as u32, (i + 1) as u32, (v255[i] - v255[i + 1]).abs()));
            }
            if y + 1 < h {
                edges.push((i as u32, (i + w) as u32, (v255[i] - v255[i + w]).abs()));
            }
        }
    }
    edges.sort_by(|a, b| a.2.partial_cmp(&b.2).unwrap().then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));

    let mut ds = DisjointSet::new(h * w);
    for &(a, b, weight) in &edges {
        let (ra, rb) = (ds.find(a as usize), ds.find(b as usize));
        if ra == rb {
            continue;
        }
        let credit_a = ds.internal[ra] + params.tau / ds.size[ra] as f64;
        let credit_b = ds.internal[rb] + params.tau / ds.size[rb] as f64;
        if weight <= credit_a.min(credit_b) {
            ds.union(ra, rb, weight);
        }
    }
    // Absorb undersized regions.
    for &(a, b, weight) in &edges {
        let (ra, rb) = (ds.find(a as usize), ds.find(b as usize));
        if ra != rb && (ds.size[ra] < params.min_region || ds.size[rb] < params.min_region) {
            ds.union(ra, rb, weight);
        }
    }

    // Collect initial regions in raster order of their first pixel.
    let mut region_of_root: HashMap<usize, usize> = HashMap::new();
    let mut regions: Vec<Region> = Vec::new();
    let mut region_of_pixel = vec![0usize; h * w];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let root = ds.find(i);
            let id = *region_of_root.entry(root).or_insert_with(|| {
                regions.push(Region {
                    size: 0,
                    bbox: BBox {
                        x0: x,
                        y0: y,
                        x1: x + 1,
                        y1: y + 1,
                    },
                    hist: [0.0; HIST_BINS],
                    neighbors: BTreeSet::new(),
                    alive: true,
                });
                regions.len() - 1
            });
            region_of_pixel[i] = id;
            let r = &mut regions[id];
            r.size += 1;
            r.bbox.x0 = r.bbox.x0.min(x);
            r.bbox.y0 = r.bbox.y0.min(y);
            r.bbox.x1 = r.bbox.x1.max(x + 1);
            r.bbox.y1 = r.bbox.y1.max(y + 1);
            let bin = ((image.data()[i] * HIST_BINS as f32) as usize).min(HIST_BINS - 1);
            r.hist[bin] += 1.0;
        }
    }
    for r in &mut regions {
        for b in r.hist.iter_mut() {
            *b /= r.size as f64;
        }
    }
    for &(a, b, _) in &edges {
        let (ra, rb) = (region_of_pixel[a as usize], region_of_pixel[b as usize]);
        if ra != rb {
            regions[ra].neighbors.insert(rb);
            regions[rb].neighbors.insert(ra);
        }
    }

    // Emit initial regions, then one box per merge; scores are assigned
    // from emission order afterwards.
    let total = (h * w) as f64;
    let mut emitted: Vec<BBox> = Vec::new();
    for r in &regions {
        emitted.push(r.bbox);
    }

    // Stage 2: hierarchical greedy merging (max similarity first; queue
    // keys are exact integers so order never depends on float formatting).
    let mut queue: BTreeSet<(i64, usize, usize)> = BTreeSet::new();
    let initial_sims: Vec<(usize, usize)> = regions
        .iter()
        .enumerate()
        .flat_map(|(a, r)| {
            r.neighbors
                .iter()
                .filter(move |&&b| b > a)
                .map(move |&b| (a, b))
                .collect::<Vec<_>>()
        })
        .collect();
    for (a, b) in initial_sims {
        let s = similarity(&regions[a], &regions[b], total);
        queue.insert((-sim_key(s), a, b));
    }

    while let Some(&(key, a, b)) = queue.iter().next() {
        queue.remove(&(key, a, b));
        if !regions[a].alive || !regions[b].alive {
            continue;
        }
        // Merge b into a new region.
        let (ra, rb) = (regions[a].clone(), regions[b].clone());
        regions[a].alive = false;
        regions[b].alive = false;
        let merged_size = ra.size + rb.size;
        let mut hist = [0.0; HIST_BINS];
        for i in 0..HIST_BINS {
            hist[i] = (ra.hist[i] * ra.size as f64 + rb.hist[i] * rb.size as f64)
                / merged_size as f64;
        }
        let bbox = BBox {
            x0: ra.bbox.x0.min(rb.bbox.x0),
            y0: ra.bbox.y0.min(rb.bbox.y0),
            x1: ra.bbox.x1.max(rb.bbox.x1),
            y1: ra.bbox.y1.max(rb.bbox.y1),
        };
        let mut neighbors: BTreeSet<usize> = ra
            .neighbors
            .union(&rb.neighbors)
            .copied()
            .filter(|&n| n != a && n != b && regions[n].alive)
            .collect();
        let new_id = regions.len();
        emitted.push(bbox);
        regions.push(Region {
            size: merged_size,
            bbox,
            hist,
            neighbors: neighbors.clone(),
            alive: true,
        });
        for &n in neighbors.iter() {
            regions[n].neighbors.remove(&a);
            regions[n].neighbors.remove(&b);
            regions[n].neighbors.insert(new_id);
            let s = similarity(&regions[new_id], &regions[n], total);
            let (lo, hi) = (n.min(new_id), n.max(new_id));
            queue.insert((-sim_key(s), lo, hi));
        }
        neighbors.clear();
    }

    // Score by emission order: initial regions and early merges rank
    // highest, so coherent small regions survive the cap ahead of late
    // whole-image agglomerates. Duplicates keep their first (best) score.
    let n_emitted = emitted.len() as f64;
    let mut seen: HashMap<BBox, ()> = HashMap::new();
    let mut proposals: Vec<Proposal> = Vec::new();
    for (i, bbox) in emitted.into_iter().enumerate() {
        if seen.insert(bbox, ()).is_none() {
            proposals.push(Proposal {
                bbox,
                score: (n_emitted - i as f64) / n_emitted,
            });
        }
    }
    let _ = total;
    proposals.sort_by(|p, q| {
        q.score
            .partial_cmp(&p.score)
            .unwrap()
            .then_with(|| (p.bbox.x0, p.bbox.y0, p.bbox.x1, p.bbox.y1)
                .cmp(&(q.bbox.x0, q.bbox.y0, q.bbox.x1, q.bbox.y1)))
    });
    proposals.truncate(params.max_proposals);
    Ok(proposals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regions::iou;

    fn blob_image(h: usize, w: usize, blobs: &[(usize, usize, usize, usize, f32)]) -> Tensor {
        let mut data = vec![0.05f32; h * w];
        for &(x0, y0, x1, y1, v) in blobs {
            for y in y0..y1 {
                for x in x0..x1 {
                    data[y * w + x] = v;
                }
            }
        }
        Tensor::new(vec![h, w, 1], data).unwrap()
    }

    #[test]
    fn constant_image_single_full_frame_proposal() {
        let image = Tensor::full(&[24, 20, 1], 0.4);
        let proposals = selective_search(&image, &SegmentationParams::default()).unwrap();
        assert_eq!(proposals.len(), 1);
        assert_eq!(
            proposals[0].bbox,
            BBox {
                x0: 0,
                y0: 0,
                x1: 20,
                y1: 24
            }
        );
    }

    #[test]
    fn two_blobs_found_above_iou_07() {
        let truth = [
            BBox::new(4, 4, 14, 14).unwrap(),
            BBox::new(20, 18, 30, 28).unwrap(),
        ];
        let image = blob_image(
            36,
            36,
            &[(4, 4, 14, 14, 0.8), (20, 18, 30, 28, 0.9)],
        );
        let proposals = selective_search(&image, &SegmentationParams::default()).unwrap();
        for gt in &truth {
            let best = proposals
                .iter()
                .map(|p| iou(&p.bbox, gt))
                .fold(0.0f64, f64::max);
            assert!(best >= 0.7, "blob {gt:?} best IoU {best}");
        }
    }

    #[test]
    fn proposals_stay_in_bounds_and_respect_cap() {
        let image = blob_image(40, 32, &[(2, 2, 12, 10, 0.7), (20, 20, 30, 36, 0.6)]);
        let params = SegmentationParams {
            max_proposals: 7,
            ..Default::default()
        };
        let proposals = selective_search(&image, &params).unwrap();
        assert!(proposals.len() <= 7);
        for p in &proposals {
            assert!(p.bbox.x1 <= 32 && p.bbox.y1 <= 40);
        }
    }

    #[test]
    fn proposal_count_monotone_in_cap() {
        let image = blob_image(
            40,
            40,
            &[(3, 3, 12, 12, 0.8), (20, 5, 33, 15, 0.5), (8, 22, 30, 36, 0.65)],
        );
        let mut last = 0;
        for cap in [1, 2, 4, 8, 16, 64, 256] {
            let params = SegmentationParams {
                max_proposals: cap,
                ..Default::default()
            };
            let n = selective_search(&image, &params).unwrap().len();
            assert!(n >= last, "cap {cap}: {n} < {last}");
            last = n;
        }
    }

    #[test]
    fn deterministic() {
        let image = blob_image(32, 32, &[(5, 5, 15, 18, 0.75)]);
        let a = selective_search(&image, &SegmentationParams::default()).unwrap();
        let b = selective_search(&image, &SegmentationParams::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn tiny_image_rejected() {
        let image = Tensor::full(&[3, 10, 1], 0.5);
        assert!(selective_search(&image, &SegmentationParams::default()).is_err());
    }
}
