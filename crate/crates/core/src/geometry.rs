//! Box overlap, non-maximum suppression and human/object pairing.

use std::cmp::Ordering;

use crate::relmodel::{span_overlap, BoundingBox, HumanSubtype};

pub const NMS_IOU_THRESHOLD: f64 = 0.3;
pub const NMS_SCORE_THRESHOLD: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Category {
    Human(HumanSubtype),
    Object(String),
}

impl Category {
    /// Human subtypes are recognised by name; anything else is an object.
    pub fn from_label(label: &str) -> Self {
        match label.parse::<HumanSubtype>() {
            Ok(h) => Category::Human(h),
            Err(_) => Category::Object(label.trim().to_lowercase()),
        }
    }

    pub fn is_human(&self) -> bool {
        matches!(self, Category::Human(_))
    }

    pub fn name(&self) -> &str {
        match self {
            Category::Human(h) => h.as_str(),
            Category::Object(o) => o,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub region_id: String,
    pub bbox: BoundingBox,
    pub category: Category,
    pub score: f64,
}

pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let iw = span_overlap((a.x, a.w), (b.x, b.w));
    let ih = span_overlap((a.y, a.h), (b.y, b.h));
    let inter = iw * ih;
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Greedy per-category NMS.
///
/// Detections with `score <= score_threshold` are dropped first. Ties in score
/// keep input order. The result is sorted by descending score.
pub fn nms(dets: &[Detection], iou_threshold: f64, score_threshold: f64) -> Vec<Detection> {
    let mut order: Vec<usize> = (0..dets.len()).filter(|&i| dets[i].score > score_threshold).collect();
    order.sort_by(|&a, &b| {
        dets[b]
            .score
            .partial_cmp(&dets[a].score)
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });

    let mut kept: Vec<usize> = Vec::new();
    for &i in &order {
        let suppressed = kept
            .iter()
            .any(|&k| dets[k].category == dets[i].category && iou(&dets[k].bbox, &dets[i].bbox) > iou_threshold);
        if !suppressed {
            kept.push(i);
        }
    }
    kept.into_iter().map(|i| dets[i].clone()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairCandidate {
    pub human: Detection,
    pub object: Detection,
    pub union_box: BoundingBox,
}

/// Every human detection crossed with every non-human detection.
pub fn pair_candidates(dets: &[Detection]) -> Vec<PairCandidate> {
    let humans = dets.iter().filter(|d| d.category.is_human());
    humans
        .flat_map(|h| {
            dets.iter().filter(|d| !d.category.is_human()).map(move |o| PairCandidate {
                human: h.clone(),
                object: o.clone(),
                union_box: h.bbox.union(&o.bbox),
            })
        })
        .collect()
}
