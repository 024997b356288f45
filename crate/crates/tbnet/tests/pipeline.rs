//! End-to-end library pipeline at small scale: generate, split, train,
//! checkpoint, evaluate, and run the region pipeline.

use tbnet::data::{load_dataset, synth_generate, SyntheticSpec};
use tbnet::eval::{evaluate_model, stratified_split};
use tbnet::models::{build_cnn3, forward, load_checkpoint, save_checkpoint};
use tbnet::optim::{train, TrainConfig};
use tbnet::regions::{classify_boxes, filter_proposals, selective_search, BBox, SegmentationParams};
use tbnet::{RngState, Tensor};

fn select(images: &[Tensor], labels: &[usize], idx: &[usize]) -> (Vec<Tensor>, Vec<usize>) {
    (
        idx.iter().map(|&i| images[i].clone()).collect(),
        idx.iter().map(|&i| labels[i]).collect(),
    )
}

#[test]
fn synthetic_training_improves_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SyntheticSpec::new(12, 32, 41);
    let manifest = synth_generate(&spec, dir.path()).unwrap();
    let ds = load_dataset(&manifest, Some(32)).unwrap();

    let mut rng = RngState::new(5);
    let (train_idx, test_idx) = stratified_split(&ds.labels, 0.25, &mut rng).unwrap();
    let (train_images, train_labels) = select(&ds.images, &ds.labels, &train_idx);
    let (test_images, test_labels) = select(&ds.images, &ds.labels, &test_idx);

    let mut model = build_cnn3([32, 32, 1], 3, &mut rng).unwrap();
    let config = TrainConfig::new(6, 8, 1e-3);
    let stats = train(
        &mut model,
        &train_images,
        &train_labels,
        Some((&test_images, &test_labels)),
        &config,
        &mut rng,
    )
    .unwrap();
    assert_eq!(stats.len(), 6);
    let first = stats.first().unwrap();
    let last = stats.last().unwrap();
    assert!(
        last.train_loss < first.train_loss,
        "loss did not improve: {} -> {}",
        first.train_loss,
        last.train_loss
    );

    // Checkpoint round trip reproduces inference bit-exactly.
    let ckpt = dir.path().join("model.tbck");
    save_checkpoint(&model, &ckpt).unwrap();
    let loaded = load_checkpoint(&ckpt).unwrap();
    let mut batch_data = Vec::new();
    for img in test_images.iter().take(4) {
        batch_data.extend_from_slice(img.data());
    }
    let batch = Tensor::new(vec![4, 32, 32, 1], batch_data).unwrap();
    assert_eq!(
        forward(&model, &batch).unwrap().data(),
        forward(&loaded, &batch).unwrap().data()
    );

    // Evaluation produces a consistent report on the held-out set.
    let report =
        evaluate_model(&loaded, &test_images, &test_labels, 8, "synth", None, false).unwrap();
    assert_eq!(report.confusion.total(), test_labels.len() as u64);
}

#[test]
fn region_pipeline_finds_and_classifies_synthetic_blobs() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SyntheticSpec::new(4, 48, 10);
    let manifest = synth_generate(&spec, dir.path()).unwrap();

    // Ground-truth boxes straight from the generator's CSV.
    let boxes_text = std::fs::read_to_string(dir.path().join("boxes.csv")).unwrap();
    let mut found = 0usize;
    let mut total = 0usize;
    for line in boxes_text.lines().skip(1) {
        let parts: Vec<&str> = line.split(',').collect();
        let img = tbnet::data::load_image(&dir.path().join(parts[0])).unwrap();
        let gt = BBox::new(
            parts[1].parse().unwrap(),
            parts[2].parse().unwrap(),
            parts[3].parse().unwrap(),
            parts[4].parse().unwrap(),
        )
        .unwrap();
        let proposals = selective_search(&img, &SegmentationParams::default()).unwrap();
        assert!(proposals.len() <= SegmentationParams::default().max_proposals);
        let kept = filter_proposals(&proposals, &[gt], 0.7).unwrap();
        total += 1;
        if !kept.is_empty() {
            // Post-hoc recheck of the gate.
            for (p, gi) in &kept {
                assert!(tbnet::regions::iou(&p.bbox, &gt) > 0.7);
                assert_eq!(*gi, 0);
            }
            found += 1;
        }
    }
    assert!(
        found * 10 >= total * 8,
        "selective search matched only {found}/{total} blobs"
    );

    // Region classification is deterministic and order-stable.
    let img = tbnet::data::load_image(&dir.path().join(manifest.records[0].path.clone())).unwrap();
    let mut rng = RngState::new(3);
    let model = build_cnn3([16, 16, 1], 3, &mut rng).unwrap();
    let boxes = [
        BBox::new(2, 2, 20, 20).unwrap(),
        BBox::new(10, 10, 40, 40).unwrap(),
    ];
    let a = classify_boxes(&img, &boxes, &model).unwrap();
    let b = classify_boxes(&img, &boxes, &model).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 2);
    assert!(a.iter().all(|r| r.probability > 0.0 && r.class < 3));
}
