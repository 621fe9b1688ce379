mod support;

use hcvrd::geometry::{iou, nms, Category, Detection, NMS_IOU_THRESHOLD, NMS_SCORE_THRESHOLD};
use hcvrd::BoundingBox;
use support::*;

const LABELS: [&str; 4] = ["man", "girl", "horse", "cup"];

fn to_detections(raw: &[RawDet]) -> Vec<Detection> {
    raw.iter()
        .enumerate()
        .map(|(i, d)| Detection {
            region_id: i.to_string(),
            bbox: BoundingBox::from_array(d.bbox).unwrap(),
            category: Category::from_label(LABELS[d.category]),
            score: d.score,
        })
        .collect()
}

#[test]
fn nms_equals_brute_force_suppression() {
    for seed in 0..200 {
        let raw = random_nms_instance(seed, 100);
        let got: Vec<usize> = nms(&to_detections(&raw), NMS_IOU_THRESHOLD, NMS_SCORE_THRESHOLD)
            .iter()
            .map(|d| d.region_id.parse().unwrap())
            .collect();
        assert_eq!(got, brute_force_nms(&raw, 0.3, 0.2), "seed {seed}");
    }
}

#[test]
fn iou_agrees_with_corner_formula() {
    for seed in 0..50 {
        let raw = random_nms_instance(seed, 30);
        for a in &raw {
            for b in &raw {
                let got = iou(&BoundingBox::from_array(a.bbox).unwrap(), &BoundingBox::from_array(b.bbox).unwrap());
                assert!((got - reference_iou(a.bbox, b.bbox)).abs() < 1e-12);
            }
        }
    }
}
