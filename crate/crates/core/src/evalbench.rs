//! Recall@R evaluation for predicate, phrase and relationship detection,
//! over the full, long-tail and zero-shot suites.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::iou;
use crate::infer::Prediction;
use crate::ingest::{type_counts, SplitSpec};
use crate::relmodel::{BoundingBox, HumanSubtype, ImageRecord, RelType};

pub const MATCH_IOU: f64 = 0.5;
pub const RECALL_AT: [usize; 2] = [50, 100];
pub const TOP_K: [usize; 2] = [1, 3];
/// Cell used for the per-type table.
pub const PER_TYPE_SETTING: (usize, usize) = (50, 1);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalTask {
    PredicateDet,
    PhraseDet,
    RelationshipDet,
}

impl EvalTask {
    pub const ALL: [EvalTask; 3] = [EvalTask::PredicateDet, EvalTask::PhraseDet, EvalTask::RelationshipDet];

    pub fn as_str(self) -> &'static str {
        match self {
            EvalTask::PredicateDet => "predicate_det",
            EvalTask::PhraseDet => "phrase_det",
            EvalTask::RelationshipDet => "relationship_det",
        }
    }
}

impl fmt::Display for EvalTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One annotated relationship instance.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub rel: RelType,
    pub subject_box: BoundingBox,
    pub object_box: BoundingBox,
}

pub fn ground_truth(record: &ImageRecord) -> Result<Vec<GroundTruth>> {
    Ok(record
        .typed_relationships()?
        .into_iter()
        .map(|t| GroundTruth {
            rel: t.rel,
            subject_box: t.subject.bbox,
            object_box: t.object.bbox,
        })
        .collect())
}

fn labels_equal(pred: &Prediction, gt: &GroundTruth) -> bool {
    pred.subject == gt.rel.subject.as_str() && pred.predicate == gt.rel.predicate && pred.object == gt.rel.object
}

pub fn match_instance(pred: &Prediction, gt: &GroundTruth, task: EvalTask) -> bool {
    if !labels_equal(pred, gt) {
        return false;
    }
    match task {
        EvalTask::PredicateDet => true,
        EvalTask::PhraseDet => {
            let p = pred.subject_box.union(&pred.object_box);
            let g = gt.subject_box.union(&gt.object_box);
            iou(&p, &g) >= MATCH_IOU
        }
        EvalTask::RelationshipDet => {
            iou(&pred.subject_box, &gt.subject_box) >= MATCH_IOU && iou(&pred.object_box, &gt.object_box) >= MATCH_IOU
        }
    }
}

/// Indices of `preds` by descending score, ties in input order.
fn rank(preds: &[Prediction]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].score.partial_cmp(&preds[a].score).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
    order
}

/// Greedy one-to-one matching of the top `r` predictions of one image.
/// Returns, per GT instance, whether it was matched.
pub fn match_image(preds: &[Prediction], gts: &[GroundTruth], r: usize, task: EvalTask) -> Vec<bool> {
    let mut matched = vec![false; gts.len()];
    for i in rank(preds).into_iter().take(r) {
        if let Some(g) = (0..gts.len()).find(|&g| !matched[g] && match_instance(&preds[i], &gts[g], task)) {
            matched[g] = true;
        }
    }
    matched
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecallCount {
    pub matched: usize,
    pub total: usize,
}

impl RecallCount {
    /// `None` when there is no ground truth.
    pub fn recall(&self) -> Option<f64> {
        (self.total > 0).then(|| self.matched as f64 / self.total as f64)
    }
}

/// Recall over all images with ground truth; predictions for images without
/// ground truth are ignored.
pub fn recall_at(
    preds: &BTreeMap<String, Vec<Prediction>>,
    gts: &BTreeMap<String, Vec<GroundTruth>>,
    r: usize,
    task: EvalTask,
) -> RecallCount {
    let empty = Vec::new();
    let mut count = RecallCount::default();
    for (image, g) in gts {
        let p = preds.get(image).unwrap_or(&empty);
        count.total += g.len();
        count.matched += match_image(p, g, r, task).into_iter().filter(|&m| m).count();
    }
    count
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct PairKey {
    image: String,
    subject: String,
    object: String,
    boxes: [u64; 8],
}

fn pair_key(p: &Prediction) -> PairKey {
    let s = p.subject_box.to_array();
    let o = p.object_box.to_array();
    let mut boxes = [0u64; 8];
    for (b, v) in boxes.iter_mut().zip(s.iter().chain(&o)) {
        *b = v.to_bits();
    }
    PairKey {
        image: p.image_id.clone(),
        subject: p.subject.clone(),
        object: p.object.clone(),
        boxes,
    }
}

/// The `k` best-scoring predictions of every (image, subject, object, boxes)
/// pair, in input order.
pub fn select_top_k(preds: &[Prediction], k: usize) -> Vec<Prediction> {
    let mut groups: HashMap<PairKey, Vec<usize>> = HashMap::new();
    for (i, p) in preds.iter().enumerate() {
        groups.entry(pair_key(p)).or_default().push(i);
    }
    let mut keep = vec![false; preds.len()];
    for members in groups.values() {
        let mut m = members.clone();
        m.sort_by(|&a, &b| preds[b].score.partial_cmp(&preds[a].score).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
        for &i in m.iter().take(k) {
            keep[i] = true;
        }
    }
    preds.iter().zip(keep).filter(|(_, k)| *k).map(|(p, _)| p.clone()).collect()
}

pub fn group_by_image(preds: &[Prediction]) -> BTreeMap<String, Vec<Prediction>> {
    let mut out: BTreeMap<String, Vec<Prediction>> = BTreeMap::new();
    for p in preds {
        out.entry(p.image_id.clone()).or_default().push(p.clone());
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Full,
    Longtail,
    Zeroshot,
}

impl Suite {
    pub const ALL: [Suite; 3] = [Suite::Full, Suite::Longtail, Suite::Zeroshot];

    pub fn as_str(self) -> &'static str {
        match self {
            Suite::Full => "full",
            Suite::Longtail => "longtail",
            Suite::Zeroshot => "zeroshot",
        }
    }
}

impl std::str::FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| Error::UnknownName {
                kind: "suite",
                name: s.to_string(),
            })
    }
}

/// Ground truth of a suite, keyed by image. Images left without instances
/// are omitted.
pub fn suite_ground_truth(records: &[ImageRecord], split: &SplitSpec, suite: Suite) -> Result<BTreeMap<String, Vec<GroundTruth>>> {
    let train_types: BTreeSet<RelType> = match suite {
        Suite::Zeroshot => type_counts(records, Some(&split.train))?.into_keys().collect(),
        _ => BTreeSet::new(),
    };
    let mut out = BTreeMap::new();
    for r in records {
        let in_suite = match suite {
            Suite::Full | Suite::Longtail => split.test_seen.contains(&r.image_id),
            Suite::Zeroshot => split.test_zeroshot.contains(&r.image_id),
        };
        if !in_suite {
            continue;
        }
        let gts: Vec<GroundTruth> = ground_truth(r)?
            .into_iter()
            .filter(|g| match suite {
                Suite::Full => true,
                Suite::Longtail => split.longtail_types.contains(&g.rel),
                Suite::Zeroshot => !train_types.contains(&g.rel),
            })
            .collect();
        if !gts.is_empty() {
            out.insert(r.image_id.clone(), gts);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub task: EvalTask,
    pub recall_at: usize,
    pub top_k: usize,
    pub matched: usize,
    pub total: usize,
    pub recall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeRecall {
    #[serde(rename = "type")]
    pub rel: RelType,
    pub gt: usize,
    pub predicate_det: Option<f64>,
    pub phrase_det: Option<f64>,
    pub relationship_det: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalDiagnostics {
    pub predictions: usize,
    pub predicate_predictions: usize,
    /// Predictions naming a subject, predicate or object unknown to the annotations.
    pub unknown_labels: usize,
    /// Predictions on images that have no ground truth in this suite.
    pub ignored_predictions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub gt_images: usize,
    pub gt_instances: usize,
    pub cells: Vec<Cell>,
    pub per_type: Vec<TypeRecall>,
    pub diagnostics: EvalDiagnostics,
}

impl SuiteReport {
    pub fn cell(&self, task: EvalTask, r: usize, top_k: usize) -> Option<&Cell> {
        self.cells.iter().find(|c| c.task == task && c.recall_at == r && c.top_k == top_k)
    }
}

#[derive(Debug, Clone, Default)]
struct KnownLabels {
    predicates: BTreeSet<String>,
    objects: BTreeSet<String>,
}

impl KnownLabels {
    fn from_records(records: &[ImageRecord]) -> Self {
        let mut k = KnownLabels::default();
        for r in records {
            for rel in &r.relationships {
                k.predicates.insert(rel.predicate.clone());
            }
            for reg in &r.regions {
                if reg.human_subtype().is_none() {
                    k.objects.insert(reg.category.clone());
                }
            }
        }
        k
    }

    fn knows(&self, p: &Prediction) -> bool {
        p.subject.parse::<HumanSubtype>().is_ok() && self.predicates.contains(&p.predicate) && self.objects.contains(&p.object)
    }
}

/// Scores `preds` (and optionally separate ground-truth-pair predictions for
/// predicate detection) against one suite. Predictions may carry several
/// predicates per pair; each top-k setting keeps the k best per pair.
pub fn run_suite(
    preds: &[Prediction],
    predicate_preds: Option<&[Prediction]>,
    records: &[ImageRecord],
    split: &SplitSpec,
    suite: Suite,
) -> Result<SuiteReport> {
    let gts = suite_ground_truth(records, split, suite)?;
    let known = KnownLabels::from_records(records);
    let pred_preds = predicate_preds.unwrap_or(preds);

    let mut diag = EvalDiagnostics {
        predictions: preds.len(),
        predicate_predictions: predicate_preds.map_or(0, <[Prediction]>::len),
        ..Default::default()
    };
    for p in preds.iter().chain(predicate_preds.unwrap_or(&[])) {
        if !known.knows(p) {
            diag.unknown_labels += 1;
        }
        if !gts.contains_key(&p.image_id) {
            diag.ignored_predictions += 1;
        }
    }
    if diag.unknown_labels > 0 {
        log::warn!("{} predictions carry labels absent from the annotations", diag.unknown_labels);
    }
    if diag.ignored_predictions > 0 {
        log::warn!("{} predictions fall on images without {} ground truth", diag.ignored_predictions, suite.as_str());
    }

    let mut cells = Vec::new();
    let mut per_type_hits: BTreeMap<RelType, [usize; 3]> = BTreeMap::new();
    for (t, task) in EvalTask::ALL.into_iter().enumerate() {
        let source = if task == EvalTask::PredicateDet { pred_preds } else { preds };
        for top_k in TOP_K {
            let by_image = group_by_image(&select_top_k(source, top_k));
            for r in RECALL_AT {
                let c = recall_at(&by_image, &gts, r, task);
                cells.push(Cell {
                    task,
                    recall_at: r,
                    top_k,
                    matched: c.matched,
                    total: c.total,
                    recall: c.recall(),
                });
                if (r, top_k) == PER_TYPE_SETTING {
                    let empty = Vec::new();
                    for (image, g) in &gts {
                        let flags = match_image(by_image.get(image).unwrap_or(&empty), g, r, task);
                        for (gt, hit) in g.iter().zip(flags) {
                            per_type_hits.entry(gt.rel.clone()).or_default()[t] += hit as usize;
                        }
                    }
                }
            }
        }
    }

    let mut type_totals: BTreeMap<RelType, usize> = BTreeMap::new();
    for g in gts.values().flatten() {
        *type_totals.entry(g.rel.clone()).or_default() += 1;
    }
    let per_type = type_totals
        .into_iter()
        .map(|(rel, n)| {
            let hits = per_type_hits.get(&rel).copied().unwrap_or_default();
            let frac = |h: usize| Some(h as f64 / n as f64);
            TypeRecall {
                gt: n,
                predicate_det: frac(hits[0]),
                phrase_det: frac(hits[1]),
                relationship_det: frac(hits[2]),
                rel,
            }
        })
        .collect();

    Ok(SuiteReport {
        suite,
        gt_images: gts.len(),
        gt_instances: gts.values().map(Vec::len).sum(),
        cells,
        per_type,
        diagnostics: diag,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub suites: Vec<SuiteReport>,
}

impl EvalReport {
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        std::fs::write(path, s).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// One row per suite and cell: `suite,task,recall_at,top_k,matched,total,recall`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("suite,task,recall_at,top_k,matched,total,recall\n");
        for s in &self.suites {
            for c in &s.cells {
                let recall = c.recall.map_or(String::new(), |r| r.to_string());
                out.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    s.suite.as_str(),
                    c.task,
                    c.recall_at,
                    c.top_k,
                    c.matched,
                    c.total,
                    recall
                ));
            }
        }
        out
    }
}
