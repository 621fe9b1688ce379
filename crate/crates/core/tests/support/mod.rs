//! Independent reference implementations used as test oracles. Nothing in
//! this file calls into the code paths it checks; `scenarios` holds
//! end-to-end setups built from the library itself.
#![allow(dead_code)]

pub mod scenarios;

use hcvrd::metric::{MetricModel, PairBatch, Sample};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Forward pass written against the flat parameter vector.
pub fn reference_embed_dataset(model: &MetricModel, x: &[f64]) -> Vec<f64> {
    let s = model.shape();
    let p = model.params();
    let (w1, rest) = p.split_at(s.dataset_input * s.hidden);
    let (b1, rest) = rest.split_at(s.hidden);
    let (w2, rest) = rest.split_at(s.hidden * s.embed);
    let b2 = &rest[..s.embed];
    let mut hidden = vec![0.0; s.hidden];
    for h in 0..s.hidden {
        let mut acc = b1[h];
        for i in 0..s.dataset_input {
            acc += w1[h * s.dataset_input + i] * x[i];
        }
        hidden[h] = if acc > 0.0 { acc } else { 0.0 };
    }
    (0..s.embed)
        .map(|o| b2[o] + (0..s.hidden).map(|h| w2[o * s.hidden + h] * hidden[h]).sum::<f64>())
        .collect()
}

pub fn reference_embed_web(model: &MetricModel, x: &[f64]) -> Vec<f64> {
    let s = model.shape();
    let p = model.params();
    let off = s.dataset_input * s.hidden + s.hidden + s.hidden * s.embed + s.embed;
    let w = &p[off..off + s.web_input * s.embed];
    let b = &p[off + s.web_input * s.embed..];
    (0..s.embed)
        .map(|o| b[o] + (0..s.web_input).map(|i| w[o * s.web_input + i] * x[i]).sum::<f64>())
        .collect()
}

fn norm_diff(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for k in 0..a.len() {
        s += (a[k] - b[k]).powi(2);
    }
    s.sqrt()
}

/// Literal transcription: for each positive (i, j),
/// L = log(Σ_{(i,k)∈N} exp(α − D_ik) + Σ_{(l,j)∈N} exp(α − D_lj)) + D_ij,
/// loss = Σ max(0, L)² / (2|P|). No max-shift.
pub fn literal_lifted_loss(model: &MetricModel, batch: &PairBatch) -> f64 {
    let data: Vec<Vec<f64>> = batch.dataset.iter().map(|s| reference_embed_dataset(model, &s.features)).collect();
    let web: Vec<Vec<f64>> = batch.web.iter().map(|s| reference_embed_web(model, &s.features)).collect();
    let f_data = |i: usize| data[i].clone();
    let f_web = |j: usize| web[j].clone();
    let mut total = 0.0;
    for &(i, j) in &batch.positives {
        let d_ij = norm_diff(&f_data(i), &f_web(j));
        let mut sum = 0.0;
        let mut any = false;
        for &(a, k) in &batch.negatives {
            if a == i {
                sum += (batch.margin - norm_diff(&f_data(a), &f_web(k))).exp();
                any = true;
            }
        }
        for &(l, b) in &batch.negatives {
            if b == j {
                sum += (batch.margin - norm_diff(&f_data(l), &f_web(b))).exp();
                any = true;
            }
        }
        let l_ij = if any { sum.ln() + d_ij } else { d_ij };
        let h = if l_ij > 0.0 { l_ij } else { 0.0 };
        total += h * h;
    }
    total / (2.0 * batch.positives.len() as f64)
}

/// Central differences of `literal_lifted_loss` for the listed parameter indices.
pub fn finite_difference(model: &MetricModel, batch: &PairBatch, eps: f64, indices: &[usize]) -> Vec<f64> {
    let base = model.params();
    let mut m = model.clone();
    indices
        .iter()
        .map(|&p| {
            let mut plus = base.clone();
            plus[p] += eps;
            m.set_params(&plus).unwrap();
            let lp = literal_lifted_loss(&m, batch);
            let mut minus = base.clone();
            minus[p] -= eps;
            m.set_params(&minus).unwrap();
            let lm = literal_lifted_loss(&m, batch);
            (lp - lm) / (2.0 * eps)
        })
        .collect()
}

/// Relative error with a floor on the denominator so that parameters with
/// (numerically) zero gradient compare on an absolute scale.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-4)
}

/// Random batch: `n` dataset and `n` web samples of `dim` features over
/// `classes` classes; all same-class cross pairs positive, all different-class
/// cross pairs negative.
pub fn random_batch(seed: u64, dim: usize, n: usize, classes: usize, margin: f64) -> PairBatch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gen = |rng: &mut ChaCha8Rng, i: usize| Sample {
        features: (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
        class: i % classes,
    };
    let dataset: Vec<Sample> = (0..n).map(|i| gen(&mut rng, i)).collect();
    let web: Vec<Sample> = (0..n).map(|i| gen(&mut rng, i + 1)).collect();
    let mut positives = Vec::new();
    let mut negatives = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if dataset[i].class == web[j].class {
                positives.push((i, j));
            } else {
                negatives.push((i, j));
            }
        }
    }
    PairBatch { dataset, web, positives, negatives, margin }
}

/// Axis-aligned box as `[x, y, w, h]`.
pub type RawBox = [f64; 4];

/// Intersection over union from corner coordinates.
pub fn reference_iou(a: RawBox, b: RawBox) -> f64 {
    let (ax2, ay2, bx2, by2) = (a[0] + a[2], a[1] + a[3], b[0] + b[2], b[1] + b[3]);
    let iw = (ax2.min(bx2) - a[0].max(b[0])).max(0.0);
    let ih = (ay2.min(by2) - a[1].max(b[1])).max(0.0);
    let inter = iw * ih;
    if inter == 0.0 {
        return 0.0;
    }
    inter / (a[2] * a[3] + b[2] * b[3] - inter)
}

pub fn reference_union(a: RawBox, b: RawBox) -> RawBox {
    let x = a[0].min(b[0]);
    let y = a[1].min(b[1]);
    [x, y, (a[0] + a[2]).max(b[0] + b[2]) - x, (a[1] + a[3]).max(b[1] + b[3]) - y]
}

/// A labelled detection for the NMS oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDet {
    pub bbox: RawBox,
    pub category: usize,
    pub score: f64,
}

/// Repeatedly take the best-scoring survivor and strike every same-category
/// survivor overlapping it beyond `iou_thr`. Returns input indices in
/// selection order.
pub fn brute_force_nms(dets: &[RawDet], iou_thr: f64, score_thr: f64) -> Vec<usize> {
    let mut alive: Vec<bool> = dets.iter().map(|d| d.score > score_thr).collect();
    let mut out = Vec::new();
    loop {
        let mut best: Option<usize> = None;
        for i in 0..dets.len() {
            if alive[i] && best.is_none_or(|b| dets[i].score > dets[b].score) {
                best = Some(i);
            }
        }
        let Some(b) = best else { break };
        out.push(b);
        alive[b] = false;
        for j in 0..dets.len() {
            if alive[j] && dets[j].category == dets[b].category && reference_iou(dets[b].bbox, dets[j].bbox) > iou_thr {
                alive[j] = false;
            }
        }
    }
    out
}

/// Random NMS instance with up to `max_boxes` boxes over four categories.
pub fn random_nms_instance(seed: u64, max_boxes: usize) -> Vec<RawDet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(0..=max_boxes);
    (0..n)
        .map(|_| RawDet {
            bbox: [
                rng.random_range(0.0..200.0),
                rng.random_range(0.0..200.0),
                rng.random_range(5.0..60.0),
                rng.random_range(5.0..60.0),
            ],
            category: rng.random_range(0..4),
            score: rng.random_range(0.0..1.0),
        })
        .collect()
}

/// A relationship instance or hypothesis with plain labels.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTriplet {
    pub subject: String,
    pub predicate: String,
    pub object: String,
    pub subject_box: RawBox,
    pub object_box: RawBox,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RawTask {
    Predicate,
    Phrase,
    Relationship,
}

pub fn reference_match(p: &RawTriplet, g: &RawTriplet, task: RawTask) -> bool {
    let labels = p.subject == g.subject && p.predicate == g.predicate && p.object == g.object;
    labels
        && match task {
            RawTask::Predicate => true,
            RawTask::Phrase => {
                reference_iou(reference_union(p.subject_box, p.object_box), reference_union(g.subject_box, g.object_box)) >= 0.5
            }
            RawTask::Relationship => reference_iou(p.subject_box, g.subject_box) >= 0.5 && reference_iou(p.object_box, g.object_box) >= 0.5,
        }
}

/// Maximum number of GT instances that can be matched one-to-one by the `r`
/// highest-scoring predictions, found by trying every assignment.
pub fn exhaustive_matches(preds: &[RawTriplet], gts: &[RawTriplet], r: usize, task: RawTask) -> usize {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].score.partial_cmp(&preds[a].score).unwrap().then(a.cmp(&b)));
    order.truncate(r);
    // candidate predictions per GT, as positions in `order`
    let cands: Vec<Vec<usize>> = gts
        .iter()
        .map(|g| (0..order.len()).filter(|&k| reference_match(&preds[order[k]], g, task)).collect())
        .collect();
    fn best(g: usize, used: &mut Vec<bool>, cands: &[Vec<usize>]) -> usize {
        if g == cands.len() {
            return 0;
        }
        let mut top = best(g + 1, used, cands);
        for &k in &cands[g] {
            if !used[k] {
                used[k] = true;
                top = top.max(1 + best(g + 1, used, cands));
                used[k] = false;
            }
        }
        top
    }
    best(0, &mut vec![false; order.len()], &cands)
}

/// Per-pair top-k selection: predictions sharing labels of subject/object and
/// both boxes form a pair; keep the k best of each.
pub fn reference_top_k(preds: &[RawTriplet], k: usize) -> Vec<RawTriplet> {
    let same_pair = |a: &RawTriplet, b: &RawTriplet| {
        a.subject == b.subject && a.object == b.object && a.subject_box == b.subject_box && a.object_box == b.object_box
    };
    preds
        .iter()
        .enumerate()
        .filter(|(i, p)| {
            let better = preds
                .iter()
                .enumerate()
                .filter(|(j, q)| same_pair(p, q) && (q.score > p.score || (q.score == p.score && j < i)))
                .count();
            better < k
        })
        .map(|(_, p)| p.clone())
        .collect()
}

/// One image: GT instances with distinct types and well-separated boxes, and
/// scripted predictions (three per pair, some mislocalised, some wrong,
/// plus distractor pairs). Each prediction can match at most one GT.
pub struct Scene {
    pub gts: Vec<RawTriplet>,
    pub preds: Vec<RawTriplet>,
}

const SUBJECTS: [&str; 4] = ["man", "woman", "boy", "girl"];
const PREDICATES: [&str; 5] = ["ride", "hold", "feed", "walk", "push"];
const OBJECTS: [&str; 4] = ["horse", "cup", "dog", "bicycle"];

/// A set of up to five scenes with at most `max_gt` GT each and at most
/// `max_pairs` predicted pairs (three predicates each) per image.
pub fn random_scene_set(seed: u64, max_gt: usize, max_pairs: usize) -> Vec<Scene> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_images = rng.random_range(1..=5);
    (0..n_images)
        .map(|_| {
            let n_gt = rng.random_range(0..=max_gt);
            let mut types: Vec<(usize, usize, usize)> = Vec::new();
            while types.len() < n_gt {
                let t = (rng.random_range(0..4), rng.random_range(0..5), rng.random_range(0..4));
                if !types.contains(&t) {
                    types.push(t);
                }
            }
            // GT pairs laid out on a grid so boxes of different pairs never overlap
            let gts: Vec<RawTriplet> = types
                .iter()
                .enumerate()
                .map(|(i, &(s, p, o))| {
                    let (cx, cy) = ((i % 4) as f64 * 300.0, (i / 4) as f64 * 300.0);
                    RawTriplet {
                        subject: SUBJECTS[s].into(),
                        predicate: PREDICATES[p].into(),
                        object: OBJECTS[o].into(),
                        subject_box: [cx + 10.0, cy + 10.0, 100.0, 200.0],
                        object_box: [cx + 120.0, cy + 60.0, 120.0, 100.0],
                        score: 0.0,
                    }
                })
                .collect();
            let n_pairs = rng.random_range(gts.len()..=max_pairs.max(gts.len()));
            let mut preds = Vec::new();
            for k in 0..n_pairs {
                let (subject, object, sb, ob) = if k < gts.len() {
                    let g = &gts[k];
                    // shift subject box: 0 keeps IoU 1, 60 drops it to 0.25
                    let shift = [0.0, 0.0, 10.0, 60.0][rng.random_range(0..4)];
                    let mut sb = g.subject_box;
                    sb[0] += shift;
                    let subject = if rng.random_bool(0.9) { g.subject.clone() } else { SUBJECTS[rng.random_range(0..4)].into() };
                    (subject, g.object.clone(), sb, g.object_box)
                } else {
                    let (cx, cy) = (rng.random_range(0.0..1000.0), 2000.0 + rng.random_range(0.0..1000.0));
                    (
                        SUBJECTS[rng.random_range(0..4)].to_string(),
                        OBJECTS[rng.random_range(0..4)].to_string(),
                        [cx, cy, 50.0, 80.0],
                        [cx + 60.0, cy, 40.0, 40.0],
                    )
                };
                let mut preds_here: Vec<usize> = (0..5).collect();
                // shuffle predicate order so the correct one lands at any rank
                for i in (1..5).rev() {
                    preds_here.swap(i, rng.random_range(0..=i));
                }
                let top = rng.random_range(0.0..1.0);
                for (rank, &p) in preds_here.iter().take(3).enumerate() {
                    preds.push(RawTriplet {
                        subject: subject.clone(),
                        predicate: PREDICATES[p].into(),
                        object: object.clone(),
                        subject_box: sb,
                        object_box: ob,
                        score: top - 0.1 * rank as f64 - rng.random_range(0.0..0.05),
                    });
                }
            }
            // input order should not matter
            for i in (1..preds.len()).rev() {
                preds.swap(i, rng.random_range(0..=i));
            }
            Scene { gts, preds }
        })
        .collect()
}

/// Indices of the `k` nearest points to `query` by a full sort on
/// (squared distance, id).
pub fn full_sort_knn(query: &[f64], points: &[Vec<f64>], ids: &[String], k: usize) -> Vec<usize> {
    let mut all: Vec<(f64, &str, usize)> = points
        .iter()
        .enumerate()
        .map(|(i, p)| (p.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), ids[i].as_str(), i))
        .collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(b.1)));
    all.into_iter().take(k).map(|t| t.2).collect()
}
