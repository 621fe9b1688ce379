//! Relationship prediction by nearest-neighbour retrieval against embedded
//! web samples, restricted to the detected human and object categories.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featstore::FeatureStore;
use crate::geometry::{nms, pair_candidates, Category, Detection, PairCandidate};
use crate::metric::MetricModel;
use crate::relmodel::{pair_sample_id, BoundingBox, HumanSubtype, ImageRecord, RelType};
use crate::webfilter::WebCorpus;

pub const DEFAULT_K: usize = 20;

/// Searchable web samples: one embedding and one relationship type each,
/// plus the mean raw feature of every type.
#[derive(Debug, Clone, PartialEq)]
pub struct WebIndex {
    pub sample_ids: Vec<String>,
    pub embeddings: Vec<Vec<f64>>,
    pub labels: Vec<RelType>,
    pub class_means: BTreeMap<RelType, Vec<f64>>,
}

impl WebIndex {
    /// Embeds every corpus sample through the web branch of `model`, or keeps
    /// the raw features when `model` is `None`.
    pub fn build(model: Option<&MetricModel>, corpus: &WebCorpus) -> Result<Self> {
        let mut index = WebIndex {
            sample_ids: Vec::new(),
            embeddings: Vec::new(),
            labels: Vec::new(),
            class_means: BTreeMap::new(),
        };
        let raw_dim = corpus.dim().unwrap_or(0);
        let mut sums: BTreeMap<RelType, (Vec<f64>, usize)> = BTreeMap::new();
        for (c, s) in corpus.iter() {
            let x = &s.vector.values;
            if x.len() != raw_dim {
                return Err(Error::DimensionMismatch {
                    expected: raw_dim,
                    got: x.len(),
                });
            }
            let e = match model {
                Some(m) => m.embed_web(x)?,
                None => x.clone(),
            };
            if e.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!("non-finite embedding for '{}'", s.vector.sample_id)));
            }
            let label = corpus.classes[c].clone();
            let entry = sums.entry(label.clone()).or_insert_with(|| (vec![0.0; raw_dim], 0));
            entry.0.iter_mut().zip(x).for_each(|(a, v)| *a += v);
            entry.1 += 1;
            index.sample_ids.push(s.vector.sample_id.clone());
            index.embeddings.push(e);
            index.labels.push(label);
        }
        index.class_means = sums
            .into_iter()
            .map(|(k, (sum, n))| (k, sum.into_iter().map(|v| v / n as f64).collect()))
            .collect();
        Ok(index)
    }

    pub fn len(&self) -> usize {
        self.embeddings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.embeddings.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    /// Position in the index.
    pub index: usize,
    pub distance: f64,
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Exact k nearest neighbours by Euclidean distance, ties by sample id.
pub fn knn_retrieve(query: &[f64], index: &WebIndex, k: usize) -> Result<Vec<Neighbor>> {
    knn_among(query, index, k, |_| true)
}

fn knn_among(query: &[f64], index: &WebIndex, k: usize, keep: impl Fn(usize) -> bool) -> Result<Vec<Neighbor>> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be >= 1".into()));
    }
    if index.is_empty() {
        return Err(Error::EmptyIndex);
    }
    let dim = index.embeddings[0].len();
    if query.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: query.len(),
        });
    }
    let mut all: Vec<Neighbor> = (0..index.len())
        .filter(|&i| keep(i))
        .map(|i| Neighbor {
            index: i,
            distance: euclidean(query, &index.embeddings[i]),
        })
        .collect();
    let cmp = |a: &Neighbor, b: &Neighbor| {
        a.distance
            .partial_cmp(&b.distance)
            .unwrap_or(Ordering::Equal)
            .then_with(|| index.sample_ids[a.index].cmp(&index.sample_ids[b.index]))
    };
    if all.len() > k {
        all.select_nth_unstable_by(k - 1, cmp);
        all.truncate(k);
    }
    all.sort_by(cmp);
    Ok(all)
}

/// How retrieved neighbours become a ranked predicate list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Rank predicates by their closest matching neighbour.
    #[default]
    BestDistance,
    /// Rank by number of matching neighbours, ties by closest distance.
    Vote,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedPredicate {
    pub predicate: String,
    pub distance: f64,
    pub votes: usize,
}

/// Keeps neighbours whose type has the given subject and object and collapses
/// them to distinct predicates.
pub fn constrain_candidates(
    neighbors: &[Neighbor],
    index: &WebIndex,
    human: HumanSubtype,
    object: &str,
    aggregation: Aggregation,
) -> Vec<RankedPredicate> {
    let mut out: Vec<RankedPredicate> = Vec::new();
    for n in neighbors {
        let label = &index.labels[n.index];
        if label.subject != human || label.object != object {
            continue;
        }
        match out.iter_mut().find(|p| p.predicate == label.predicate) {
            Some(p) => {
                p.votes += 1;
                p.distance = p.distance.min(n.distance);
            }
            None => out.push(RankedPredicate {
                predicate: label.predicate.clone(),
                distance: n.distance,
                votes: 1,
            }),
        }
    }
    // `out` is in first-seen order, which is ascending best distance.
    if aggregation == Aggregation::Vote {
        out.sort_by_key(|p| std::cmp::Reverse(p.votes));
    }
    out
}

/// Every type in `universe` with the given subject and object.
pub fn zero_shot_space<'a>(human: HumanSubtype, object: &str, universe: impl IntoIterator<Item = &'a RelType>) -> Vec<RelType> {
    universe
        .into_iter()
        .filter(|t| t.subject == human && t.object == object)
        .cloned()
        .collect()
}

fn cosine_or_minus_one(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        -1.0
    } else {
        dot / (na * nb)
    }
}

/// Cosine similarity of the raw query against the mean of every matching
/// type, best first (ties by predicate name), truncated to `top_k`.
pub fn classmean_baseline(query: &[f64], index: &WebIndex, human: HumanSubtype, object: &str, top_k: usize) -> Vec<(String, f64)> {
    let mut scored: Vec<(String, f64)> = index
        .class_means
        .iter()
        .filter(|(t, _)| t.subject == human && t.object == object)
        .map(|(t, mean)| (t.predicate.clone(), cosine_or_minus_one(query, mean)))
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(top_k);
    scored
}

/// One scored relationship hypothesis; also one line of a prediction file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub image_id: String,
    pub subject: String,
    pub predicate: String,
    pub object: String,
    pub subject_box: BoundingBox,
    pub object_box: BoundingBox,
    pub score: f64,
}

pub type ScoredTriplet = Prediction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Nearest neighbours in the learned embedding space.
    #[default]
    Metric,
    /// Nearest neighbours on raw features (index built without a model).
    RawNeighbors,
    /// Cosine similarity to per-type mean raw features.
    ClassMean,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferOptions {
    pub k: usize,
    pub top_k: usize,
    pub aggregation: Aggregation,
    pub method: Method,
    /// When set, retrieval for a pair only considers index samples whose type
    /// lies in this universe and matches the pair's categories.
    pub universe: Option<BTreeSet<RelType>>,
}

impl Default for InferOptions {
    fn default() -> Self {
        InferOptions {
            k: DEFAULT_K,
            top_k: 3,
            aggregation: Aggregation::BestDistance,
            method: Method::Metric,
            universe: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InferDiagnostics {
    pub images: usize,
    pub pairs: usize,
    pub missing_features: usize,
    pub empty_candidates: usize,
    pub predictions: usize,
}

impl InferDiagnostics {
    fn add(&mut self, o: &InferDiagnostics) {
        self.images += o.images;
        self.pairs += o.pairs;
        self.missing_features += o.missing_features;
        self.empty_candidates += o.empty_candidates;
        self.predictions += o.predictions;
    }
}

/// Scores human/object pairs of one image. A pair's union-region feature is
/// looked up as `image_id/subject_region/object_region`.
pub fn predict_pairs(
    image_id: &str,
    pairs: &[PairCandidate],
    features: &FeatureStore,
    model: Option<&MetricModel>,
    index: &WebIndex,
    opts: &InferOptions,
    diag: &mut InferDiagnostics,
) -> Result<Vec<Prediction>> {
    let mut out = Vec::new();
    for pair in pairs {
        diag.pairs += 1;
        let Category::Human(human) = pair.human.category else {
            return Err(Error::InvalidArgument(format!("pair subject '{}' is not human", pair.human.region_id)));
        };
        let object = pair.object.category.name();
        let id = pair_sample_id(image_id, &pair.human.region_id, &pair.object.region_id);
        let Some(raw) = features.get_f64(&id) else {
            diag.missing_features += 1;
            log::debug!("no union-region feature for {id}");
            continue;
        };
        let ranked: Vec<(String, f64)> = match opts.method {
            Method::ClassMean => classmean_baseline(&raw, index, human, object, opts.top_k),
            Method::Metric | Method::RawNeighbors => {
                let query = match (opts.method, model) {
                    (Method::Metric, Some(m)) => m.embed_dataset(&raw)?,
                    (Method::Metric, None) => return Err(Error::InvalidArgument("metric inference needs a model".into())),
                    _ => raw,
                };
                let neighbors = match &opts.universe {
                    None => knn_retrieve(&query, index, opts.k)?,
                    Some(u) => {
                        let space: BTreeSet<RelType> = zero_shot_space(human, object, u).into_iter().collect();
                        if space.is_empty() {
                            Vec::new()
                        } else {
                            knn_among(&query, index, opts.k, |i| space.contains(&index.labels[i]))?
                        }
                    }
                };
                constrain_candidates(&neighbors, index, human, object, opts.aggregation)
                    .into_iter()
                    .take(opts.top_k)
                    .map(|p| (p.predicate, -p.distance))
                    .collect()
            }
        };
        if ranked.is_empty() {
            diag.empty_candidates += 1;
        }
        for (predicate, score) in ranked {
            out.push(Prediction {
                image_id: image_id.to_string(),
                subject: human.as_str().to_string(),
                predicate,
                object: object.to_string(),
                subject_box: pair.human.bbox,
                object_box: pair.object.bbox,
                score,
            });
        }
    }
    diag.predictions += out.len();
    Ok(out)
}

/// NMS, pairing and scoring for one image of detections.
pub fn predict_triplets(
    image_id: &str,
    dets: &[Detection],
    features: &FeatureStore,
    model: Option<&MetricModel>,
    index: &WebIndex,
    opts: &InferOptions,
    diag: &mut InferDiagnostics,
) -> Result<Vec<Prediction>> {
    predict_pairs(image_id, &pair_candidates(dets), features, model, index, opts, diag)
}

/// Where a pair list comes from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PairSource {
    /// Regions are detections: NMS with the given thresholds, then all
    /// human × object pairs.
    Detections { iou_threshold: f64, score_threshold: f64 },
    /// Regions are ground truth: one pair per distinct annotated relationship
    /// pair (used for predicate detection).
    GroundTruth,
}

fn detections(record: &ImageRecord) -> Vec<Detection> {
    record
        .regions
        .iter()
        .map(|r| Detection {
            region_id: r.id.clone(),
            bbox: r.bbox,
            category: Category::from_label(&r.category),
            score: r.score,
        })
        .collect()
}

pub fn image_pairs(record: &ImageRecord, source: PairSource) -> Vec<PairCandidate> {
    let dets = detections(record);
    match source {
        PairSource::Detections {
            iou_threshold,
            score_threshold,
        } => pair_candidates(&nms(&dets, iou_threshold, score_threshold)),
        PairSource::GroundTruth => {
            let mut seen = BTreeSet::new();
            let mut pairs = Vec::new();
            for rel in &record.relationships {
                if !seen.insert((rel.subject.clone(), rel.object.clone())) {
                    continue;
                }
                let find = |id: &str| dets.iter().find(|d| d.region_id == id);
                if let (Some(h), Some(o)) = (find(&rel.subject), find(&rel.object)) {
                    if h.category.is_human() && !o.category.is_human() {
                        pairs.push(PairCandidate {
                            human: h.clone(),
                            object: o.clone(),
                            union_box: h.bbox.union(&o.bbox),
                        });
                    }
                }
            }
            pairs
        }
    }
}

/// Predictions for many images, in input order. Images are processed in
/// parallel on the current rayon pool; output does not depend on it.
pub fn predict_records(
    records: &[ImageRecord],
    source: PairSource,
    features: &FeatureStore,
    model: Option<&MetricModel>,
    index: &WebIndex,
    opts: &InferOptions,
) -> Result<(Vec<Prediction>, InferDiagnostics)> {
    let per_image: Vec<Result<(Vec<Prediction>, InferDiagnostics)>> = records
        .par_iter()
        .map(|r| {
            let mut d = InferDiagnostics {
                images: 1,
                ..Default::default()
            };
            let p = predict_pairs(&r.image_id, &image_pairs(r, source), features, model, index, opts, &mut d)?;
            Ok((p, d))
        })
        .collect();
    let mut all = Vec::new();
    let mut diag = InferDiagnostics::default();
    for r in per_image {
        let (p, d) = r?;
        all.extend(p);
        diag.add(&d);
    }
    Ok((all, diag))
}

pub fn write_predictions(path: &Path, preds: &[Prediction]) -> Result<()> {
    let mut out = String::new();
    for p in preds {
        out.push_str(&serde_json::to_string(p)?);
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_predictions(path: &Path) -> Result<Vec<Prediction>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            let p: Prediction = serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.display().to_string(),
                line: n + 1,
                msg: e.to_string(),
            })?;
            if !p.score.is_finite() {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    line: n + 1,
                    msg: "score is not finite".into(),
                });
            }
            Ok(p)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rt(s: HumanSubtype, p: &str, o: &str) -> RelType {
        RelType::new(s, p, o)
    }

    fn index_of(points: &[(&str, RelType, Vec<f64>)]) -> WebIndex {
        WebIndex {
            sample_ids: points.iter().map(|p| p.0.to_string()).collect(),
            labels: points.iter().map(|p| p.1.clone()).collect(),
            embeddings: points.iter().map(|p| p.2.clone()).collect(),
            class_means: BTreeMap::new(),
        }
    }

    use HumanSubtype::*;

    #[test]
    fn knn_examples() {
        let idx = index_of(&[("a", rt(Man, "ride", "horse"), vec![1.0, 1.0])]);
        let n = knn_retrieve(&[5.0, 5.0], &idx, 20).unwrap();
        assert_eq!(n.len(), 1);
        assert_eq!(n[0].index, 0);

        let idx = index_of(&[
            ("a", rt(Man, "ride", "horse"), vec![1.0, 1.0]),
            ("b", rt(Man, "ride", "horse"), vec![0.0, 0.0]),
            ("c", rt(Man, "ride", "horse"), vec![3.0, 0.0]),
        ]);
        let n = knn_retrieve(&[0.0, 0.0], &idx, 2).unwrap();
        assert_eq!((n[0].index, n[0].distance), (1, 0.0));
        assert_eq!(n[1].index, 0);
        assert!(knn_retrieve(&[0.0], &idx, 2).is_err());
        assert!(knn_retrieve(&[0.0, 0.0], &idx, 0).is_err());
        assert!(matches!(knn_retrieve(&[0.0], &index_of(&[]), 1), Err(Error::EmptyIndex)));
    }

    #[test]
    fn knn_ties_by_sample_id() {
        let idx = index_of(&[
            ("z", rt(Man, "ride", "horse"), vec![1.0]),
            ("m", rt(Man, "ride", "horse"), vec![-1.0]),
            ("a", rt(Man, "ride", "horse"), vec![1.0]),
        ]);
        let n: Vec<usize> = knn_retrieve(&[0.0], &idx, 2).unwrap().iter().map(|n| n.index).collect();
        assert_eq!(n, vec![2, 1]);
    }

    fn neighbors_case() -> (WebIndex, Vec<Neighbor>) {
        let idx = index_of(&[
            ("0", rt(Man, "ride", "bicycle"), vec![0.0]),
            ("1", rt(Woman, "ride", "bicycle"), vec![0.0]),
            ("2", rt(Man, "push", "bicycle"), vec![0.0]),
        ]);
        let n = vec![
            Neighbor { index: 1, distance: 0.1 },
            Neighbor { index: 0, distance: 0.3 },
            Neighbor { index: 2, distance: 0.5 },
        ];
        (idx, n)
    }

    #[test]
    fn constrain_examples() {
        let (idx, n) = neighbors_case();
        let got = constrain_candidates(&n, &idx, Man, "bicycle", Aggregation::BestDistance);
        let got: Vec<(&str, f64)> = got.iter().map(|p| (p.predicate.as_str(), p.distance)).collect();
        assert_eq!(got, vec![("ride", 0.3), ("push", 0.5)]);
        assert!(constrain_candidates(&n, &idx, Girl, "bicycle", Aggregation::BestDistance).is_empty());
    }

    #[test]
    fn constrain_vote_mode() {
        let idx = index_of(&[
            ("0", rt(Man, "ride", "bicycle"), vec![0.0]),
            ("1", rt(Man, "push", "bicycle"), vec![0.0]),
            ("2", rt(Man, "push", "bicycle"), vec![0.0]),
        ]);
        let n = vec![
            Neighbor { index: 0, distance: 0.1 },
            Neighbor { index: 1, distance: 0.2 },
            Neighbor { index: 2, distance: 0.3 },
        ];
        let best: Vec<String> = constrain_candidates(&n, &idx, Man, "bicycle", Aggregation::BestDistance)
            .into_iter()
            .map(|p| p.predicate)
            .collect();
        assert_eq!(best, vec!["ride", "push"]);
        let vote = constrain_candidates(&n, &idx, Man, "bicycle", Aggregation::Vote);
        assert_eq!(vote[0].predicate, "push");
        assert_eq!((vote[0].votes, vote[0].distance), (2, 0.2));
    }

    #[test]
    fn zero_shot_examples() {
        let u = [rt(Man, "ride", "bicycle"), rt(Woman, "ride", "bicycle"), rt(Man, "feed", "horse")];
        assert_eq!(zero_shot_space(Man, "bicycle", &u), vec![rt(Man, "ride", "bicycle")]);
        assert!(zero_shot_space(Man, "bicycle", &[]).is_empty());
    }

    #[test]
    fn classmean_examples() {
        let mut idx = index_of(&[]);
        idx.class_means.insert(rt(Man, "ride", "horse"), vec![1.0, 0.0]);
        idx.class_means.insert(rt(Man, "feed", "horse"), vec![0.0, 1.0]);
        idx.class_means.insert(rt(Man, "pat", "horse"), vec![0.0, 0.0]);
        let got = classmean_baseline(&[1.0, 0.0], &idx, Man, "horse", 3);
        assert_eq!(got, vec![("ride".into(), 1.0), ("feed".into(), 0.0), ("pat".into(), -1.0)]);
        assert!(classmean_baseline(&[1.0, 0.0], &idx, Boy, "horse", 3).is_empty());
        assert_eq!(classmean_baseline(&[0.0, 0.0], &idx, Man, "horse", 1)[0].1, -1.0);
    }

    fn det(id: &str, cat: &str, b: [f64; 4]) -> Detection {
        Detection {
            region_id: id.into(),
            bbox: BoundingBox::from_array(b).unwrap(),
            category: Category::from_label(cat),
            score: 0.9,
        }
    }

    #[test]
    fn predict_examples() {
        let (idx, _) = neighbors_case();
        // raw-feature retrieval, distances set by the query position
        let idx = WebIndex {
            embeddings: vec![vec![0.1], vec![0.0], vec![0.3]],
            ..idx
        };
        let mut feats = FeatureStore::new(1);
        feats.push_f64("img/h/o", &[0.0]).unwrap();
        let dets = [det("h", "man", [0., 0., 10., 10.]), det("o", "bicycle", [5., 5., 10., 10.])];
        let opts = InferOptions {
            top_k: 1,
            method: Method::RawNeighbors,
            ..Default::default()
        };
        let mut d = InferDiagnostics::default();
        let p = predict_triplets("img", &dets, &feats, None, &idx, &opts, &mut d).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!((p[0].predicate.as_str(), p[0].score), ("ride", -0.1));
        assert_eq!(p[0].subject_box, dets[0].bbox);

        let opts3 = InferOptions { top_k: 3, ..opts.clone() };
        let p = predict_triplets("img", &dets, &feats, None, &idx, &opts3, &mut d).unwrap();
        assert_eq!(p.len(), 2);
        assert!(p[0].score >= p[1].score);

        assert!(predict_triplets("img", &[], &feats, None, &idx, &opts, &mut d).unwrap().is_empty());
        let before = d.missing_features;
        let p = predict_triplets("other", &dets, &feats, None, &idx, &opts, &mut d).unwrap();
        assert!(p.is_empty());
        assert_eq!(d.missing_features, before + 1);
    }

    #[test]
    fn universe_restricts_search() {
        let idx = index_of(&[
            ("0", rt(Man, "ride", "bicycle"), vec![0.0]),
            ("1", rt(Man, "repair", "bicycle"), vec![5.0]),
        ]);
        let mut feats = FeatureStore::new(1);
        feats.push_f64("img/h/o", &[0.0]).unwrap();
        let dets = [det("h", "man", [0., 0., 10., 10.]), det("o", "bicycle", [5., 5., 10., 10.])];
        let opts = InferOptions {
            k: 1,
            top_k: 1,
            method: Method::RawNeighbors,
            universe: Some([rt(Man, "repair", "bicycle")].into_iter().collect()),
            ..Default::default()
        };
        let mut d = InferDiagnostics::default();
        let p = predict_triplets("img", &dets, &feats, None, &idx, &opts, &mut d).unwrap();
        assert_eq!(p[0].predicate, "repair");
        assert_eq!(p[0].score, -5.0);
    }

    #[test]
    fn prediction_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.jsonl");
        let p = Prediction {
            image_id: "i".into(),
            subject: "man".into(),
            predicate: "ride".into(),
            object: "horse".into(),
            subject_box: BoundingBox::new(0.0, 0.0, 1.0, 2.0).unwrap(),
            object_box: BoundingBox::new(1.0, 1.0, 3.0, 3.0).unwrap(),
            score: -0.25,
        };
        write_predictions(&path, std::slice::from_ref(&p)).unwrap();
        let line = std::fs::read_to_string(&path).unwrap();
        assert!(line.starts_with(r#"{"image_id":"i","subject":"man","predicate":"ride","object":"horse","subject_box":[0.0,0.0,1.0,2.0]"#));
        assert_eq!(read_predictions(&path).unwrap(), vec![p]);
    }
}
