//! Noise filtering for web-collected samples.
//!
//! Samples of one class are randomly grouped; each group is pooled with
//! softmax attention and the pooled vector is classified. After training, a
//! sample's attention weight inside its group (rescaled so a uniform member
//! scores 1.0) is its confidence, and each class keeps its most confident
//! fraction.

use std::cmp::Ordering;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featstore::{FeatureStore, FeatureVector};
use crate::metric::Dense;
use crate::relmodel::{HumanSubtype, RelType};

pub const DEFAULT_GROUP_SIZE: usize = 4;
pub const DEFAULT_KEEP_RATIO: f64 = 0.8;

#[derive(Debug, Clone, PartialEq)]
pub struct WebSample {
    pub vector: FeatureVector,
    pub confidence: Option<f64>,
}

/// Web samples bucketed by relationship class.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WebCorpus {
    pub classes: Vec<RelType>,
    pub samples: Vec<Vec<WebSample>>,
}

impl WebCorpus {
    pub fn new(classes: Vec<RelType>) -> Self {
        let samples = vec![Vec::new(); classes.len()];
        WebCorpus { classes, samples }
    }

    pub fn push(&mut self, class: usize, vector: FeatureVector) {
        self.samples[class].push(WebSample { vector, confidence: None });
    }

    pub fn len(&self) -> usize {
        self.samples.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> Option<usize> {
        self.samples.iter().flatten().next().map(|s| s.vector.values.len())
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &WebSample)> {
        self.samples.iter().enumerate().flat_map(|(c, v)| v.iter().map(move |s| (c, s)))
    }
}

/// Shuffle then chunk into groups of `group_size`; the remainder forms a
/// shorter final group.
pub fn random_group(n: usize, group_size: usize, rng: &mut impl Rng) -> Result<Vec<Vec<usize>>> {
    if group_size < 2 {
        return Err(Error::InvalidArgument(format!("group size must be >= 2, got {group_size}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    Ok(idx.chunks(group_size).map(<[usize]>::to_vec).collect())
}

/// Softmax attention over members: `weights = softmax(w · f_m)`,
/// `pooled = Σ weight_m f_m`.
pub fn attention_pool(members: &[&[f64]], attention: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let logits: Vec<f64> = members.iter().map(|f| dot(attention, f)).collect();
    let weights = softmax(&logits);
    let dim = members.first().map_or(0, |f| f.len());
    let mut pooled = vec![0.0; dim];
    for (f, &a) in members.iter().zip(&weights) {
        pooled.iter_mut().zip(f.iter()).for_each(|(p, v)| *p += a * v);
    }
    (pooled, weights)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn l2_normalized(v: &[f64]) -> Vec<f64> {
    let n = dot(v, v).sqrt();
    if n == 0.0 {
        v.to_vec()
    } else {
        v.iter().map(|x| x / n).collect()
    }
}

/// One attention vector per class (selected by the group's label) and a linear classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterModel {
    pub attention: Vec<Vec<f64>>,
    pub classifier: Dense,
}

impl FilterModel {
    pub fn new(classes: usize, dim: usize, rng: &mut impl Rng) -> Self {
        FilterModel {
            attention: vec![vec![0.0; dim]; classes],
            classifier: Dense::seeded(dim, classes, rng),
        }
    }

    /// Cross-entropy of one labelled group; returns (loss, member weights) and
    /// applies one SGD step when `lr > 0`.
    fn group_step(&mut self, members: &[&[f64]], class: usize, lr: f64) -> (f64, Vec<f64>) {
        let (pooled, weights) = attention_pool(members, &self.attention[class]);
        let probs = softmax(&self.classifier.forward(&pooled));
        let loss = -probs[class].max(f64::MIN_POSITIVE).ln();
        if lr <= 0.0 {
            return (loss, weights);
        }
        let mut dlogits = probs;
        dlogits[class] -= 1.0;
        let dim = pooled.len();
        // ∂L/∂pooled = Wᵀ dlogits
        let mut dpooled = vec![0.0; dim];
        for (c, &g) in dlogits.iter().enumerate() {
            let row = &self.classifier.weight[c * dim..(c + 1) * dim];
            dpooled.iter_mut().zip(row).for_each(|(d, w)| *d += g * w);
        }
        // softmax backward through the attention logits
        let da: Vec<f64> = members.iter().map(|f| dot(&dpooled, f)).collect();
        let mean_da: f64 = weights.iter().zip(&da).map(|(a, d)| a * d).sum();
        let att = &mut self.attention[class];
        for ((f, &a), &d) in members.iter().zip(&weights).zip(&da) {
            let ds = a * (d - mean_da);
            att.iter_mut().zip(f.iter()).for_each(|(w, v)| *w -= lr * ds * v);
        }
        for (c, &g) in dlogits.iter().enumerate() {
            self.classifier.bias[c] -= lr * g;
            let row = &mut self.classifier.weight[c * dim..(c + 1) * dim];
            row.iter_mut().zip(&pooled).for_each(|(w, p)| *w -= lr * g * p);
        }
        (loss, weights)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterConfig {
    pub group_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            group_size: DEFAULT_GROUP_SIZE,
            epochs: 30,
            learning_rate: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FilterOutcome {
    pub model: FilterModel,
    /// Mean cross-entropy per epoch.
    pub curve: Vec<f64>,
    /// Per class, per sample (corpus order).
    pub confidences: Vec<Vec<f64>>,
}

impl FilterOutcome {
    pub fn apply(&self, corpus: &mut WebCorpus) {
        for (samples, conf) in corpus.samples.iter_mut().zip(&self.confidences) {
            for (s, &c) in samples.iter_mut().zip(conf) {
                s.confidence = Some(c);
            }
        }
    }
}

/// Trains the grouped attention classifier and scores every sample.
///
/// Features are L2-normalised before use. Groups are redrawn each epoch. The
/// confidence of a sample is its attention weight times its group's size,
/// measured with the trained model on the final epoch's grouping.
pub fn train_filter(corpus: &WebCorpus, config: &FilterConfig) -> Result<FilterOutcome> {
    let populated = corpus.samples.iter().filter(|s| !s.is_empty()).count();
    if populated < 2 {
        return Err(Error::InvalidArgument("noise filter needs at least two non-empty classes".into()));
    }
    if config.group_size < 2 {
        return Err(Error::InvalidArgument(format!("group size must be >= 2, got {}", config.group_size)));
    }
    let dim = corpus.dim().unwrap_or(0);
    let feats: Vec<Vec<Vec<f64>>> = corpus
        .samples
        .iter()
        .map(|v| {
            v.iter()
                .map(|s| {
                    if s.vector.values.len() != dim {
                        return Err(Error::DimensionMismatch {
                            expected: dim,
                            got: s.vector.values.len(),
                        });
                    }
                    Ok(l2_normalized(&s.vector.values))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = FilterModel::new(corpus.classes.len(), dim, &mut rng);
    let draw = |rng: &mut ChaCha8Rng| -> Result<Vec<(usize, Vec<usize>)>> {
        let mut groups = Vec::new();
        for (c, f) in feats.iter().enumerate() {
            for g in random_group(f.len(), config.group_size, rng)? {
                groups.push((c, g));
            }
        }
        Ok(groups)
    };

    let mut curve = Vec::with_capacity(config.epochs);
    let mut groups = Vec::new();
    for _ in 0..config.epochs {
        groups = draw(&mut rng)?;
        let mut order: Vec<usize> = (0..groups.len()).collect();
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &g in &order {
            let (c, members) = &groups[g];
            let refs: Vec<&[f64]> = members.iter().map(|&m| feats[*c][m].as_slice()).collect();
            total += model.group_step(&refs, *c, config.learning_rate).0;
        }
        curve.push(total / groups.len().max(1) as f64);
    }
    if groups.is_empty() {
        groups = draw(&mut rng)?;
    }

    let mut confidences: Vec<Vec<f64>> = feats.iter().map(|f| vec![0.0; f.len()]).collect();
    for (c, members) in &groups {
        let refs: Vec<&[f64]> = members.iter().map(|&m| feats[*c][m].as_slice()).collect();
        let (_, weights) = attention_pool(&refs, &model.attention[*c]);
        for (&m, w) in members.iter().zip(weights) {
            confidences[*c][m] = w * members.len() as f64;
        }
    }
    Ok(FilterOutcome {
        model,
        curve,
        confidences,
    })
}

fn keep_count(n: usize, keep_ratio: f64) -> usize {
    // Guard against products like 0.7 * 10 = 7.000000000000001.
    (((keep_ratio * n as f64) - 1e-9).ceil().max(0.0) as usize).min(n)
}

/// Per class, the `⌈keep_ratio · n⌉` most confident samples (ties by sample id).
/// Samples without a confidence rank last.
pub fn filter_top(corpus: &WebCorpus, keep_ratio: f64) -> Result<WebCorpus> {
    if !(0.0..=1.0).contains(&keep_ratio) {
        return Err(Error::InvalidArgument(format!("keep_ratio {keep_ratio} outside [0, 1]")));
    }
    let mut out = WebCorpus::new(corpus.classes.clone());
    for (c, samples) in corpus.samples.iter().enumerate() {
        let mut ranked: Vec<&WebSample> = samples.iter().collect();
        ranked.sort_by(|a, b| {
            let (ca, cb) = (a.confidence.unwrap_or(f64::NEG_INFINITY), b.confidence.unwrap_or(f64::NEG_INFINITY));
            cb.partial_cmp(&ca)
                .unwrap_or(Ordering::Equal)
                .then_with(|| a.vector.sample_id.cmp(&b.vector.sample_id))
        });
        ranked.truncate(keep_count(samples.len(), keep_ratio));
        out.samples[c] = ranked.into_iter().cloned().collect();
    }
    Ok(out)
}

/// Probability that a random positive outranks a random negative (ties count half).
pub fn ranking_auc(positives: &[f64], negatives: &[f64]) -> f64 {
    if positives.is_empty() || negatives.is_empty() {
        return f64::NAN;
    }
    let mut wins = 0.0;
    for p in positives {
        for n in negatives {
            wins += match p.partial_cmp(n) {
                Some(Ordering::Greater) => 1.0,
                Some(Ordering::Equal) => 0.5,
                _ => 0.0,
            };
        }
    }
    wins / (positives.len() * negatives.len()) as f64
}

/// One line of the filtered-corpus manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub class: RelType,
    pub sample_id: String,
    pub confidence: f64,
    pub kept: bool,
}

/// Manifest rows for every scored sample in `scored`, flagged by membership in `kept`.
pub fn manifest(scored: &WebCorpus, kept: &WebCorpus) -> Vec<ManifestEntry> {
    let mut rows = Vec::new();
    for (c, samples) in scored.samples.iter().enumerate() {
        let kept_ids: std::collections::HashSet<&str> =
            kept.samples.get(c).map(|v| v.iter().map(|s| s.vector.sample_id.as_str()).collect()).unwrap_or_default();
        for s in samples {
            rows.push(ManifestEntry {
                class: scored.classes[c].clone(),
                sample_id: s.vector.sample_id.clone(),
                confidence: s.confidence.unwrap_or(f64::NAN),
                kept: kept_ids.contains(s.vector.sample_id.as_str()),
            });
        }
    }
    rows
}

pub fn write_manifest(path: &Path, rows: &[ManifestEntry]) -> Result<()> {
    let mut out = String::new();
    for r in rows {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.display().to_string(),
                line: n + 1,
                msg: e.to_string(),
            })
        })
        .collect()
}

/// Reads a web corpus from an HCVF feature store and a labels file with
/// `sample_id<TAB>subject<TAB>predicate<TAB>object` per line. Classes are
/// sorted; samples keep label-file order within a class.
pub fn read_web_corpus(features: &Path, labels: &Path) -> Result<WebCorpus> {
    let store = FeatureStore::read(features)?;
    let text = std::fs::read_to_string(labels).map_err(|e| Error::io(labels, e))?;
    let mut rows = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |msg: String| Error::Parse {
            path: labels.display().to_string(),
            line: n + 1,
            msg,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(parse_err(format!("expected 4 tab-separated fields, got {}", fields.len())));
        }
        let subject: HumanSubtype = fields[1].parse().map_err(|e: Error| parse_err(e.to_string()))?;
        let vector = store
            .vector(fields[0])
            .ok_or_else(|| parse_err(format!("sample '{}' has no feature vector", fields[0])))?;
        rows.push((RelType::new(subject, fields[2].trim(), fields[3].trim()), vector));
    }
    let classes: Vec<RelType> = rows.iter().map(|(t, _)| t.clone()).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
    let mut corpus = WebCorpus::new(classes);
    for (t, v) in rows {
        let c = corpus.classes.binary_search(&t).expect("class was collected above");
        corpus.push(c, v);
    }
    Ok(corpus)
}

/// Keeps only the samples a manifest marks as kept, carrying their confidences.
pub fn apply_manifest(corpus: &WebCorpus, rows: &[ManifestEntry]) -> WebCorpus {
    let kept: std::collections::HashMap<&str, f64> =
        rows.iter().filter(|r| r.kept).map(|r| (r.sample_id.as_str(), r.confidence)).collect();
    let mut out = WebCorpus::new(corpus.classes.clone());
    for (c, s) in corpus.iter() {
        if let Some(&conf) = kept.get(s.vector.sample_id.as_str()) {
            out.samples[c].push(WebSample {
                vector: s.vector.clone(),
                confidence: Some(conf),
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relmodel::HumanSubtype;
    use proptest::prelude::*;

    fn fv(id: &str, values: Vec<f64>) -> FeatureVector {
        FeatureVector {
            sample_id: id.into(),
            values,
        }
    }

    #[test]
    fn grouping_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = random_group(8, 4, &mut rng).unwrap();
        assert_eq!(g.iter().map(Vec::len).collect::<Vec<_>>(), vec![4, 4]);
        let g = random_group(9, 4, &mut rng).unwrap();
        assert_eq!(g.iter().map(Vec::len).collect::<Vec<_>>(), vec![4, 4, 1]);
        assert!(random_group(0, 4, &mut rng).unwrap().is_empty());
        assert!(random_group(5, 1, &mut rng).is_err());
        let a = random_group(20, 4, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = random_group(20, 4, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn attention_examples() {
        let f = [1.0, 2.0, 3.0];
        let (pooled, w) = attention_pool(&[&f], &[0.3, -1.0, 2.0]);
        assert_eq!(w, vec![1.0]);
        assert_eq!(pooled, f.to_vec());

        let members: [&[f64]; 4] = [&[1.0, 0.0], &[0.0, 1.0], &[2.0, 2.0], &[-1.0, 0.5]];
        let (_, w) = attention_pool(&members, &[0.0, 0.0]);
        assert!(w.iter().all(|v| (v - 0.25).abs() < 1e-15));

        // attention aligned with the first member, others orthogonal
        let members: [&[f64]; 3] = [&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]];
        let (_, w) = attention_pool(&members, &[10.0, 0.0, 0.0]);
        // softmax([10, 0, 0])[0] = 1 / (1 + 2e^-10)
        assert!((w[0] - 1.0 / (1.0 + 2.0 * (-10f64).exp())).abs() < 1e-15);
        assert!(w[0] > 0.99);
    }

    fn two_class_constant() -> WebCorpus {
        let classes = vec![RelType::new(HumanSubtype::Man, "ride", "horse"), RelType::new(HumanSubtype::Man, "feed", "horse")];
        let mut c = WebCorpus::new(classes);
        for i in 0..9 {
            c.push(0, fv(&format!("a{i}"), vec![1.0, 0.0, 0.5]));
            c.push(1, fv(&format!("b{i}"), vec![0.0, 1.0, 0.5]));
        }
        c
    }

    #[test]
    fn identical_members_score_one() {
        let out = train_filter(&two_class_constant(), &FilterConfig { epochs: 5, ..Default::default() }).unwrap();
        for c in out.confidences.iter().flatten() {
            assert!((c - 1.0).abs() < 1e-12, "{c}");
        }
    }

    #[test]
    fn zero_epochs_still_scores() {
        let out = train_filter(&two_class_constant(), &FilterConfig { epochs: 0, ..Default::default() }).unwrap();
        assert!(out.curve.is_empty());
        assert_eq!(out.confidences.iter().map(Vec::len).sum::<usize>(), 18);
        assert!(out.confidences.iter().flatten().all(|c| c.is_finite()));
    }

    #[test]
    fn single_class_is_rejected() {
        let mut c = WebCorpus::new(vec![RelType::new(HumanSubtype::Boy, "kick", "ball")]);
        c.push(0, fv("x", vec![1.0]));
        assert!(train_filter(&c, &FilterConfig::default()).is_err());
    }

    #[test]
    fn filter_top_examples() {
        let mut c = WebCorpus::new(vec![RelType::new(HumanSubtype::Girl, "hold", "cup")]);
        for (i, conf) in [0.3, 0.9, 0.1, 0.7, 0.5].into_iter().enumerate() {
            c.samples[0].push(WebSample {
                vector: fv(&format!("s{i}"), vec![0.0]),
                confidence: Some(conf),
            });
        }
        let kept = filter_top(&c, 0.8).unwrap();
        let ids: Vec<&str> = kept.samples[0].iter().map(|s| s.vector.sample_id.as_str()).collect();
        assert_eq!(ids, vec!["s1", "s3", "s4", "s0"]);
        assert_eq!(filter_top(&c, 1.0).unwrap().samples[0].len(), 5);

        let mut big = WebCorpus::new(vec![RelType::new(HumanSubtype::Girl, "hold", "cup")]);
        for i in 0..100 {
            big.samples[0].push(WebSample {
                vector: fv(&format!("{i:03}"), vec![0.0]),
                confidence: Some(i as f64),
            });
        }
        assert_eq!(filter_top(&big, 0.8).unwrap().samples[0].len(), 80);
        assert_eq!(keep_count(10, 0.7), 7);
    }

    #[test]
    fn filter_top_ties_by_id() {
        let mut c = WebCorpus::new(vec![RelType::new(HumanSubtype::Girl, "hold", "cup")]);
        for id in ["c", "a", "b"] {
            c.samples[0].push(WebSample {
                vector: fv(id, vec![0.0]),
                confidence: Some(1.0),
            });
        }
        let kept = filter_top(&c, 0.5).unwrap();
        let ids: Vec<&str> = kept.samples[0].iter().map(|s| s.vector.sample_id.as_str()).collect();
        assert_eq!(ids, vec!["a", "b"]);
    }

    #[test]
    fn auc_examples() {
        assert_eq!(ranking_auc(&[3.0, 4.0], &[1.0, 2.0]), 1.0);
        assert_eq!(ranking_auc(&[1.0], &[1.0]), 0.5);
        assert_eq!(ranking_auc(&[0.0], &[1.0]), 0.0);
    }

    proptest! {
        #[test]
        fn attention_weights_are_a_distribution(
            members in proptest::collection::vec(proptest::collection::vec(-5.0..5.0f64, 3), 1..8),
            w in proptest::collection::vec(-3.0..3.0f64, 3),
        ) {
            let refs: Vec<&[f64]> = members.iter().map(Vec::as_slice).collect();
            let (_, weights) = attention_pool(&refs, &w);
            prop_assert!(weights.iter().all(|&a| a > 0.0));
            prop_assert!((weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn filter_top_keeps_confident_prefix(confs in proptest::collection::vec(0.0..1.0f64, 0..40), ratio in 0.0..=1.0f64) {
            let mut c = WebCorpus::new(vec![RelType::new(HumanSubtype::Man, "a", "b")]);
            for (i, &conf) in confs.iter().enumerate() {
                c.samples[0].push(WebSample { vector: fv(&format!("{i:02}"), vec![]), confidence: Some(conf) });
            }
            let kept = filter_top(&c, ratio).unwrap();
            let n = kept.samples[0].len();
            prop_assert_eq!(n, keep_count(confs.len(), ratio));
            prop_assert_eq!(n, ((ratio * confs.len() as f64) - 1e-9).ceil().max(0.0) as usize);
            let min_kept = kept.samples[0].iter().filter_map(|s| s.confidence).fold(f64::INFINITY, f64::min);
            let kept_ids: std::collections::HashSet<_> = kept.samples[0].iter().map(|s| s.vector.sample_id.clone()).collect();
            for s in &c.samples[0] {
                if !kept_ids.contains(&s.vector.sample_id) {
                    prop_assert!(s.confidence.unwrap() <= min_kept);
                }
            }
        }
    }
}
