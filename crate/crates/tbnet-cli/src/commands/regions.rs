//! `regions`: selective search on one image, IoU filtering against its
//! ground-truth boxes, optional classification of the kept regions.

use std::path::Path;

use tbnet::data::load_image;
use tbnet::models::load_checkpoint;
use tbnet::regions::{
    classify_boxes, filter_proposals, iou, selective_search, BBox, SegmentationParams,
};
use tbnet::{Error, Result};

use super::common;

/// Ground-truth rows for `image` from a `image_path,x0,y0,x1,y1,label`
/// CSV. A row matches on the full image argument or its file name.
fn load_ground_truth(boxes_path: &Path, image: &Path) -> Result<Vec<BBox>> {
    let parse_err = |line: u64, message: String| Error::ManifestParse {
        path: boxes_path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(boxes_path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => Error::Io {
                path: boxes_path.to_path_buf(),
                source: std::io::Error::other(e.to_string()),
            },
            _ => parse_err(1, e.to_string()),
        })?;
    {
        let headers = reader.headers().map_err(|e| parse_err(1, e.to_string()))?;
        let expected = ["image_path", "x0", "y0", "x1", "y1", "label"];
        if headers.len() != 6 || headers.iter().zip(expected).any(|(h, e)| h.trim() != e) {
            return Err(parse_err(
                1,
                "expected header `image_path,x0,y0,x1,y1,label`".into(),
            ));
        }
    }
    let image_str = image.display().to_string();
    let image_name = image
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut out = Vec::new();
    for row in reader.records() {
        let record = row.map_err(|e| parse_err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 6 {
            return Err(parse_err(line, format!("expected 6 fields, found {}", record.len())));
        }
        let row_path = record[0].trim();
        if row_path != image_str && row_path != image_name {
            continue;
        }
        let coord = |i: usize| -> Result<usize> {
            record[i]
                .trim()
                .parse()
                .map_err(|_| parse_err(line, format!("invalid coordinate `{}`", &record[i])))
        };
        let bbox = BBox::new(coord(1)?, coord(2)?, coord(3)?, coord(4)?)
            .map_err(|e| parse_err(line, e.to_string()))?;
        out.push(bbox);
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
pub fn run(
    image_path: &Path,
    boxes_path: &Path,
    out: &Path,
    iou_threshold: f64,
    checkpoint: Option<&Path>,
    tau: f64,
    min_region: usize,
    max_proposals: usize,
) -> Result<()> {
    if !(iou_threshold > 0.0 && iou_threshold <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "--iou must be in (0, 1], got {iou_threshold}"
        )));
    }
    let image = load_image(image_path)?;
    let ground_truth = load_ground_truth(boxes_path, image_path)?;
    let params = SegmentationParams {
        tau,
        min_region,
        max_proposals,
    };
    let proposals = selective_search(&image, &params)?;
    let kept = filter_proposals(&proposals, &ground_truth, iou_threshold)?;

    let classified = match checkpoint {
        Some(ckpt) => {
            let model = load_checkpoint(ckpt)?;
            let boxes: Vec<BBox> = kept.iter().map(|(p, _)| p.bbox).collect();
            Some(classify_boxes(&image, &boxes, &model)?)
        }
        None => None,
    };

    common::create_dir(out)?;
    let mut csv_text = String::from(match classified {
        Some(_) => "x0,y0,x1,y1,score,class,prob\n",
        None => "x0,y0,x1,y1,score\n",
    });
    for (i, (p, _)) in kept.iter().enumerate() {
        let b = p.bbox;
        match &classified {
            Some(list) => {
                let r = &list[i];
                csv_text.push_str(&format!(
                    "{},{},{},{},{:.6},{},{:.6}\n",
                    b.x0, b.y0, b.x1, b.y1, p.score, r.class, r.probability
                ));
            }
            None => {
                csv_text.push_str(&format!(
                    "{},{},{},{},{:.6}\n",
                    b.x0, b.y0, b.x1, b.y1, p.score
                ));
            }
        }
    }
    common::write_file(&out.join("proposals.csv"), &csv_text)?;

    let mut summary = format!(
        "proposals = {}\nkept = {}\n",
        proposals.len(),
        kept.len()
    );
    for (gi, gt) in ground_truth.iter().enumerate() {
        let best = proposals
            .iter()
            .map(|p| iou(&p.bbox, gt))
            .fold(0.0f64, f64::max);
        summary.push_str(&format!("gt_{gi}_best_iou = {best:.6}\n"));
    }
    common::write_file(&out.join("summary.txt"), &summary)?;
    let resolved = format!(
        "image = {}\nboxes = {}\nout = {}\niou = {}\ncheckpoint = {}\ntau = {}\nmin_region = {}\nmax_proposals = {}\n",
        image_path.display(),
        boxes_path.display(),
        out.display(),
        iou_threshold,
        checkpoint.map_or("-".to_string(), |p| p.display().to_string()),
        tau,
        min_region,
        max_proposals
    );
    common::write_file(&out.join("run.cfg"), &resolved)?;
    println!(
        "{} proposals, {} kept above IoU {iou_threshold}",
        proposals.len(),
        kept.len()
    );
    println!("{}", out.join("proposals.csv").display());
    Ok(())
}
