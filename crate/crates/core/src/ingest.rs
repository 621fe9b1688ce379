//! Dataset construction: annotation parsing, predicate and object cleanup,
//! human subtyping, split construction and statistics.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::{BufRead, BufReader};
use std::path::Path;

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::relmodel::{HumanSubtype, ImageRecord, RelType};

pub const DEFAULT_BLOCKLIST: [&str; 3] = ["has", "is", "are"];
pub const DEFAULT_MERGE_THRESHOLD: f64 = 0.9;
pub const LONGTAIL_MAX_COUNT: u64 = 9;

/// Parses an annotation JSON-lines file. Blank lines are skipped.
pub fn parse_annotations(path: &Path) -> Result<Vec<ImageRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    AnnotationReader::new(BufReader::new(file), path.display().to_string()).collect()
}

/// Streaming reader over annotation lines; each item is one validated record.
pub struct AnnotationReader<R> {
    lines: std::io::Lines<R>,
    source: String,
    line_no: usize,
}

impl<R: BufRead> AnnotationReader<R> {
    pub fn new(reader: R, source: impl Into<String>) -> Self {
        AnnotationReader {
            lines: reader.lines(),
            source: source.into(),
            line_no: 0,
        }
    }
}

impl<R: BufRead> Iterator for AnnotationReader<R> {
    type Item = Result<ImageRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = self.lines.next()?;
            self.line_no += 1;
            let err = |msg: String| Error::Parse {
                path: self.source.clone(),
                line: self.line_no,
                msg,
            };
            let line = match line {
                Ok(l) => l,
                Err(e) => return Some(Err(err(e.to_string()))),
            };
            if line.trim().is_empty() {
                continue;
            }
            let rec: ImageRecord = match serde_json::from_str(&line) {
                Ok(r) => r,
                Err(e) => return Some(Err(err(e.to_string()))),
            };
            if let Err(msg) = rec.validate() {
                return Some(Err(err(msg)));
            }
            return Some(Ok(rec));
        }
    }
}

pub fn write_annotations(path: &Path, records: &[ImageRecord]) -> Result<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn read_tsv_pairs(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (a, b) = line.split_once('\t').ok_or_else(|| Error::Parse {
            path: path.display().to_string(),
            line: n + 1,
            msg: "expected two tab-separated fields".into(),
        })?;
        out.push((a.to_string(), b.to_string()));
    }
    Ok(out)
}

fn clean_text(raw: &str) -> String {
    let kept: String = raw
        .to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() || c == ' ' || c == '-' || c == '\'' { c } else { ' ' })
        .collect();
    kept.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Inflected form → canonical form. Chains are closed at construction so a
/// single lookup always lands on a fixed point.
#[derive(Debug, Clone, Default)]
pub struct LemmaTable {
    map: HashMap<String, String>,
}

impl LemmaTable {
    pub fn new<I, A, B>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (A, B)>,
        A: AsRef<str>,
        B: AsRef<str>,
    {
        let raw: HashMap<String, String> = entries
            .into_iter()
            .map(|(a, b)| (clean_text(a.as_ref()), clean_text(b.as_ref())))
            .filter(|(a, b)| a != b)
            .collect();
        let mut map = HashMap::with_capacity(raw.len());
        for start in raw.keys() {
            let mut cur = start;
            let mut seen = HashSet::new();
            while let Some(next) = raw.get(cur) {
                if !seen.insert(cur.clone()) {
                    return Err(Error::InvalidArgument(format!("lemma table cycle through '{start}'")));
                }
                cur = next;
            }
            map.insert(start.clone(), cur.clone());
        }
        Ok(LemmaTable { map })
    }

    /// Tab-separated `inflected<TAB>canonical` lines.
    pub fn read(path: &Path) -> Result<Self> {
        Self::new(read_tsv_pairs(path)?)
    }

    fn apply(&self, phrase: &str) -> String {
        if let Some(c) = self.map.get(phrase) {
            return c.clone();
        }
        phrase
            .split(' ')
            .map(|tok| self.map.get(tok).map(String::as_str).unwrap_or(tok))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NormalizedPredicate {
    Predicate(String),
    Discarded,
}

impl NormalizedPredicate {
    pub fn as_str(&self) -> Option<&str> {
        match self {
            NormalizedPredicate::Predicate(p) => Some(p),
            NormalizedPredicate::Discarded => None,
        }
    }
}

pub fn default_blocklist() -> BTreeSet<String> {
    DEFAULT_BLOCKLIST.iter().map(|s| s.to_string()).collect()
}

pub fn normalize_predicate(raw: &str, lemmas: &LemmaTable, blocklist: &BTreeSet<String>) -> NormalizedPredicate {
    let mut cur = clean_text(raw);
    // Whole-phrase and per-token lookups can feed each other; iterate to a fixed point.
    for _ in 0..8 {
        let next = clean_text(&lemmas.apply(&cur));
        if next == cur {
            break;
        }
        cur = next;
    }
    if cur.is_empty() || blocklist.contains(&cur) {
        NormalizedPredicate::Discarded
    } else {
        NormalizedPredicate::Predicate(cur)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubjectClass {
    Human(HumanSubtype),
    NonHuman,
}

/// Raw subject label → subtype (or explicitly non-human).
#[derive(Debug, Clone)]
pub struct SubtypeTable {
    map: HashMap<String, SubjectClass>,
}

impl Default for SubtypeTable {
    fn default() -> Self {
        SubtypeTable {
            map: HumanSubtype::ALL
                .iter()
                .map(|h| (h.as_str().to_string(), SubjectClass::Human(*h)))
                .collect(),
        }
    }
}

impl SubtypeTable {
    /// Entries are merged over the default identity table for the four subtypes.
    pub fn new<I, A>(entries: I) -> Self
    where
        I: IntoIterator<Item = (A, SubjectClass)>,
        A: AsRef<str>,
    {
        let mut t = SubtypeTable::default();
        for (label, class) in entries {
            t.map.insert(clean_text(label.as_ref()), class);
        }
        t
    }

    /// Tab-separated `label<TAB>man|woman|boy|girl|none` lines.
    pub fn read(path: &Path) -> Result<Self> {
        let mut entries = Vec::new();
        for (label, target) in read_tsv_pairs(path)? {
            let class = match target.trim().to_lowercase().as_str() {
                "none" | "nonhuman" | "non-human" => SubjectClass::NonHuman,
                other => SubjectClass::Human(other.parse()?),
            };
            entries.push((label, class));
        }
        Ok(Self::new(entries))
    }
}

pub fn classify_human(label: &str, table: &SubtypeTable) -> SubjectClass {
    table.map.get(&clean_text(label)).copied().unwrap_or(SubjectClass::NonHuman)
}

#[derive(Debug, Clone, Default)]
pub struct WordVectorTable {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl WordVectorTable {
    pub fn new(dim: usize) -> Self {
        WordVectorTable {
            dim,
            vectors: HashMap::new(),
        }
    }

    pub fn insert(&mut self, token: impl Into<String>, v: Vec<f64>) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: v.len(),
            });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("non-finite word vector entry".into()));
        }
        self.vectors.insert(token.into(), v);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.vectors.get(token).map(Vec::as_slice)
    }

    /// Text format: `token f1 f2 ... fd` per line. The first line fixes `d`.
    pub fn read(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut table: Option<WordVectorTable> = None;
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let mut parts = line.split_whitespace();
            let Some(token) = parts.next() else { continue };
            let err = |msg: String| Error::Parse {
                path: path.display().to_string(),
                line: n + 1,
                msg,
            };
            let v = parts
                .map(|p| p.parse::<f64>().map_err(|_| err(format!("bad float '{p}'"))))
                .collect::<Result<Vec<f64>>>()?;
            let t = table.get_or_insert_with(|| WordVectorTable::new(v.len()));
            t.insert(token, v).map_err(|e| err(e.to_string()))?;
        }
        Ok(table.unwrap_or_default())
    }

    /// Unweighted mean of known token vectors; `None` when no token is known.
    pub fn embed_phrase(&self, phrase: &str) -> Option<Vec<f64>> {
        let mut acc = vec![0.0; self.dim];
        let mut n = 0usize;
        for tok in phrase.split(|c: char| c.is_whitespace() || c == '_' || c == '-') {
            if let Some(v) = self.get(tok) {
                acc.iter_mut().zip(v).for_each(|(a, b)| *a += b);
                n += 1;
            }
        }
        (n > 0).then(|| acc.into_iter().map(|a| a / n as f64).collect())
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na * nb)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MergeMap {
    pub map: BTreeMap<String, String>,
    /// Names with no known tokens, left unmerged.
    pub unembedded: Vec<String>,
}

impl MergeMap {
    pub fn canonical<'a>(&'a self, name: &'a str) -> &'a str {
        self.map.get(name).map(String::as_str).unwrap_or(name)
    }

    pub fn canonical_count(&self) -> usize {
        self.map.values().collect::<BTreeSet<_>>().len()
    }
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Single-link clustering of object names whose phrase vectors have cosine
/// similarity `>= threshold`. Each cluster maps onto its most frequent member
/// (ties: lexicographically smallest name).
pub fn merge_objects(objects: &BTreeMap<String, u64>, vectors: &WordVectorTable, threshold: f64) -> MergeMap {
    let names: Vec<&String> = objects.keys().collect();
    let mut embedded: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut unembedded = Vec::new();
    for (i, n) in names.iter().enumerate() {
        match vectors.embed_phrase(n) {
            Some(v) => embedded.push((i, v)),
            None => {
                warn!("object '{n}' has no known word vectors; left unmerged");
                unembedded.push((*n).clone());
            }
        }
    }

    let mut parent: Vec<usize> = (0..names.len()).collect();
    for a in 0..embedded.len() {
        for b in a + 1..embedded.len() {
            if cosine(&embedded[a].1, &embedded[b].1) >= threshold {
                let (ra, rb) = (find(&mut parent, embedded[a].0), find(&mut parent, embedded[b].0));
                if ra != rb {
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
    }

    let mut clusters: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..names.len() {
        let r = find(&mut parent, i);
        clusters.entry(r).or_default().push(i);
    }
    let mut map = BTreeMap::new();
    for members in clusters.values() {
        let canon = members
            .iter()
            .copied()
            .max_by(|&a, &b| objects[names[a]].cmp(&objects[names[b]]).then(names[b].cmp(names[a])))
            .expect("cluster is non-empty");
        for &m in members {
            map.insert(names[m].clone(), names[canon].clone());
        }
    }
    MergeMap { map, unembedded }
}

/// Configuration tables applied by [`clean_records`].
#[derive(Debug, Clone, Default)]
pub struct CleanupTables {
    pub lemmas: LemmaTable,
    pub blocklist: BTreeSet<String>,
    pub subtypes: SubtypeTable,
}

impl CleanupTables {
    pub fn with_defaults() -> Self {
        CleanupTables {
            lemmas: LemmaTable::default(),
            blocklist: default_blocklist(),
            subtypes: SubtypeTable::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CleanReport {
    pub images_in: usize,
    pub images_out: usize,
    pub relationships_in: usize,
    pub relationships_out: usize,
    pub discarded_predicates: usize,
    pub non_human_subjects: usize,
    pub objects_before_merge: usize,
    pub objects_after_merge: usize,
}

fn object_label(raw: &str, tables: &CleanupTables) -> String {
    match classify_human(raw, &tables.subtypes) {
        SubjectClass::Human(h) => h.as_str().to_string(),
        SubjectClass::NonHuman => clean_text(raw),
    }
}

/// Object category frequencies (by relationship instance) after label cleanup,
/// before merging. Used as merge weights.
pub fn object_frequencies(records: &[ImageRecord], tables: &CleanupTables) -> BTreeMap<String, u64> {
    let mut freq = BTreeMap::new();
    for rec in records {
        for rel in &rec.relationships {
            if let Some(obj) = rec.region(&rel.object) {
                let label = object_label(&obj.category, tables);
                if label.parse::<HumanSubtype>().is_err() {
                    *freq.entry(label).or_insert(0) += 1;
                }
            }
        }
    }
    freq
}

/// Applies subtyping, predicate normalisation and object merging.
///
/// Relationships with discarded predicates or non-human subjects are dropped,
/// as are images left without relationships.
pub fn clean_records(records: &[ImageRecord], tables: &CleanupTables, merge: &MergeMap) -> (Vec<ImageRecord>, CleanReport) {
    let mut report = CleanReport {
        images_in: records.len(),
        ..Default::default()
    };
    let mut objects_before = BTreeSet::new();
    let mut objects_after = BTreeSet::new();
    let mut out = Vec::new();
    for rec in records {
        let mut rec = rec.clone();
        for region in &mut rec.regions {
            region.category = match classify_human(&region.category, &tables.subtypes) {
                SubjectClass::Human(h) => h.as_str().to_string(),
                SubjectClass::NonHuman => merge.canonical(&clean_text(&region.category)).to_string(),
            };
        }
        report.relationships_in += rec.relationships.len();
        let mut kept = Vec::new();
        for rel in std::mem::take(&mut rec.relationships) {
            let subject_human = rec.region(&rel.subject).and_then(|r| r.human_subtype()).is_some();
            if !subject_human {
                report.non_human_subjects += 1;
                continue;
            }
            match normalize_predicate(&rel.predicate, &tables.lemmas, &tables.blocklist) {
                NormalizedPredicate::Discarded => report.discarded_predicates += 1,
                NormalizedPredicate::Predicate(p) => {
                    if let Some(o) = rec.region(&rel.object) {
                        objects_after.insert(o.category.clone());
                    }
                    kept.push(crate::relmodel::Relation { predicate: p, ..rel });
                }
            }
        }
        report.relationships_out += kept.len();
        rec.relationships = kept;
        if !rec.relationships.is_empty() {
            out.push(rec);
        }
    }
    for rec in records {
        for rel in &rec.relationships {
            if let Some(o) = rec.region(&rel.object) {
                objects_before.insert(object_label(&o.category, tables));
            }
        }
    }
    report.images_out = out.len();
    report.objects_before_merge = objects_before.len();
    report.objects_after_merge = objects_after.len();
    (out, report)
}

/// Relationship-type counts over the given images (all images when `ids` is `None`).
pub fn type_counts(records: &[ImageRecord], ids: Option<&BTreeSet<String>>) -> Result<BTreeMap<RelType, u64>> {
    let mut counts = BTreeMap::new();
    for rec in records {
        if ids.is_some_and(|s| !s.contains(&rec.image_id)) {
            continue;
        }
        for r in rec.typed_relationships()? {
            *counts.entry(r.rel).or_insert(0) += 1;
        }
    }
    Ok(counts)
}

fn image_types(rec: &ImageRecord) -> Result<BTreeSet<RelType>> {
    Ok(rec.typed_relationships()?.into_iter().map(|r| r.rel).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CountScope {
    #[default]
    Train,
    Global,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: BTreeSet<String>,
    pub test_seen: BTreeSet<String>,
    pub test_zeroshot: BTreeSet<String>,
    pub longtail_types: BTreeSet<RelType>,
}

impl SplitSpec {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitMove {
    pub image_id: String,
    pub from: String,
    pub to: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitReport {
    pub moves: Vec<SplitMove>,
    /// Requested minus achieved test-seen size, when eligible images ran out.
    pub test_seen_shortfall: usize,
    pub unassigned: usize,
}

/// Long-tail types: count in `[1, 9]` over train (or all images for [`CountScope::Global`]).
pub fn longtail_types(records: &[ImageRecord], train: &BTreeSet<String>, scope: CountScope) -> Result<BTreeSet<RelType>> {
    let counts = match scope {
        CountScope::Train => type_counts(records, Some(train))?,
        CountScope::Global => type_counts(records, None)?,
    };
    Ok(counts
        .into_iter()
        .filter(|(_, c)| (1..=LONGTAIL_MAX_COUNT).contains(c))
        .map(|(t, _)| t)
        .collect())
}

/// Seeded split construction.
///
/// Images are shuffled; train is filled first from images whose types all occur
/// in at least two images, then (only if needed) from images carrying a
/// single-image type. Test-seen candidates follow in shuffled order; a
/// candidate with a type missing from train is moved to the zero-shot split and
/// replaced by the next eligible image. Every remaining image with a type
/// absent from train joins the zero-shot split.
pub fn build_splits(
    records: &[ImageRecord],
    train_size: usize,
    test_seen_size: usize,
    seed: u64,
    scope: CountScope,
) -> Result<(SplitSpec, SplitReport)> {
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if train_size + test_seen_size > records.len() {
        return Err(Error::InvalidArgument(format!(
            "train_size + test_seen_size = {} exceeds {} images",
            train_size + test_seen_size,
            records.len()
        )));
    }
    let types: Vec<BTreeSet<RelType>> = records.iter().map(image_types).collect::<Result<_>>()?;
    let mut images_per_type: HashMap<&RelType, usize> = HashMap::new();
    for ts in &types {
        for t in ts {
            *images_per_type.entry(t).or_insert(0) += 1;
        }
    }

    let mut order: Vec<usize> = (0..records.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (shared, singular): (Vec<usize>, Vec<usize>) =
        order.iter().partition(|&&i| types[i].iter().all(|t| images_per_type[t] >= 2));
    let mut queue: Vec<usize> = shared.into_iter().chain(singular).collect();
    let rest = queue.split_off(train_size);
    let train_idx = queue;

    let mut train_types: HashSet<&RelType> = HashSet::new();
    for &i in &train_idx {
        train_types.extend(types[i].iter());
    }
    let eligible = |i: usize| types[i].iter().all(|t| train_types.contains(t));

    // Remaining images in original shuffled order.
    let position: HashMap<usize, usize> = order.iter().enumerate().map(|(p, &i)| (i, p)).collect();
    let mut rest = rest;
    rest.sort_by_key(|i| position[i]);

    let mut report = SplitReport::default();
    let mut test_seen = Vec::new();
    let mut zeroshot = Vec::new();
    let mut unassigned = 0usize;
    for (p, &i) in rest.iter().enumerate() {
        let candidate = p < test_seen_size;
        if eligible(i) {
            if test_seen.len() < test_seen_size {
                if !candidate {
                    report.moves.push(SplitMove {
                        image_id: records[i].image_id.clone(),
                        from: "unassigned".into(),
                        to: "test_seen".into(),
                    });
                }
                test_seen.push(i);
            } else {
                unassigned += 1;
            }
        } else {
            if candidate {
                report.moves.push(SplitMove {
                    image_id: records[i].image_id.clone(),
                    from: "test_seen".into(),
                    to: "test_zeroshot".into(),
                });
            }
            zeroshot.push(i);
        }
    }
    report.test_seen_shortfall = test_seen_size - test_seen.len();
    report.unassigned = unassigned;
    if report.test_seen_shortfall > 0 {
        warn!("only {} of {} test-seen images satisfy the seen-type constraint", test_seen.len(), test_seen_size);
    }

    let ids = |v: &[usize]| -> BTreeSet<String> { v.iter().map(|&i| records[i].image_id.clone()).collect() };
    let train = ids(&train_idx);
    let longtail = longtail_types(records, &train, scope)?;
    Ok((
        SplitSpec {
            train,
            test_seen: ids(&test_seen),
            test_zeroshot: ids(&zeroshot),
            longtail_types: longtail,
        },
        report,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeCount {
    #[serde(rename = "type")]
    pub rel: RelType,
    pub count: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n_images: usize,
    pub n_instances: usize,
    pub n_relationship_types: usize,
    pub n_zeroshot_types: usize,
    pub n_predicates: usize,
    pub n_objects: usize,
    pub instances_per_image_mean: f64,
    pub relationships_per_person_mean: f64,
    pub predicates_per_object_mean: f64,
    pub n_longtail_types: usize,
    pub n_types_over_100: usize,
    pub count_scope: CountScope,
    pub type_frequency_histogram: Vec<TypeCount>,
    pub human_subtype_distribution: BTreeMap<String, usize>,
    /// relationships-per-image value → number of images
    pub instances_per_image_distribution: BTreeMap<usize, usize>,
    /// relationships-per-person value → number of people
    pub relationships_per_person_distribution: BTreeMap<usize, usize>,
}

impl DatasetStats {
    /// `(rank, count)` rows of the frequency histogram, rank starting at 1.
    pub fn rank_frequency(&self) -> Vec<(usize, u64)> {
        self.type_frequency_histogram.iter().enumerate().map(|(i, t)| (i + 1, t.count)).collect()
    }
}

fn mean(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Direct counts over `records`. Seen/zero-shot/long-tail figures use train
/// counts from `split` (or global counts when `scope` is `Global`).
pub fn compute_stats(records: &[ImageRecord], split: &SplitSpec, scope: CountScope) -> Result<DatasetStats> {
    let all_counts = type_counts(records, None)?;
    let train_counts = type_counts(records, Some(&split.train))?;
    let ref_counts = match scope {
        CountScope::Train => &train_counts,
        CountScope::Global => &all_counts,
    };

    let mut predicates = BTreeSet::new();
    let mut preds_per_object: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for t in all_counts.keys() {
        predicates.insert(t.predicate.as_str());
        preds_per_object.entry(t.object.as_str()).or_default().insert(t.predicate.as_str());
    }

    let mut people: BTreeMap<(&str, &str), (HumanSubtype, usize)> = BTreeMap::new();
    let mut per_image = BTreeMap::new();
    for rec in records {
        let rels = rec.typed_relationships()?;
        *per_image.entry(rels.len()).or_insert(0) += 1;
        for r in rels {
            people.entry((rec.image_id.as_str(), r.subject.id.as_str())).or_insert((r.rel.subject, 0)).1 += 1;
        }
    }
    let mut subtype_dist: BTreeMap<String, usize> = HumanSubtype::ALL.iter().map(|h| (h.as_str().to_string(), 0)).collect();
    let mut per_person = BTreeMap::new();
    for (h, n) in people.values() {
        *subtype_dist.entry(h.as_str().to_string()).or_insert(0) += 1;
        *per_person.entry(*n).or_insert(0) += 1;
    }

    let n_instances: u64 = all_counts.values().sum();
    let mut hist: Vec<TypeCount> = all_counts.iter().map(|(t, &c)| TypeCount { rel: t.clone(), count: c }).collect();
    hist.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.rel.cmp(&b.rel)));

    let total_pairs: usize = preds_per_object.values().map(BTreeSet::len).sum();
    Ok(DatasetStats {
        n_images: records.len(),
        n_instances: n_instances as usize,
        n_relationship_types: all_counts.keys().filter(|t| train_counts.get(*t).copied().unwrap_or(0) > 0).count(),
        n_zeroshot_types: all_counts.keys().filter(|t| train_counts.get(*t).copied().unwrap_or(0) == 0).count(),
        n_predicates: predicates.len(),
        n_objects: preds_per_object.len(),
        instances_per_image_mean: mean(n_instances as usize, records.len()),
        relationships_per_person_mean: mean(n_instances as usize, people.len()),
        predicates_per_object_mean: mean(total_pairs, preds_per_object.len()),
        n_longtail_types: ref_counts.values().filter(|c| (1..=LONGTAIL_MAX_COUNT).contains(*c)).count(),
        n_types_over_100: ref_counts.values().filter(|&&c| c > 100).count(),
        count_scope: scope,
        type_frequency_histogram: hist,
        human_subtype_distribution: subtype_dist,
        instances_per_image_distribution: per_image,
        relationships_per_person_distribution: per_person,
    })
}
