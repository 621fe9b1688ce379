//! Seeded synthetic data: Gaussian class clusters, a planted-noise web corpus
//! and a small end-to-end fixture (annotations, detections, features, web
//! corpus, lexical tables).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::featstore::{FeatureStore, FeatureVector};
use crate::ingest::write_annotations;
use crate::metric::Sample;
use crate::relmodel::{pair_sample_id, write_triple_list, BoundingBox, HumanSubtype, ImageRecord, Region, RelType, Relation};
use crate::webfilter::WebCorpus;

/// Coordinate range of synthetic features. Comparable in norm to pooled CNN
/// activations, which the default metric-learning rate is tuned for.
pub const FEATURE_SCALE: f64 = 40.0;

/// `n` centres with coordinates uniform in `[0, scale)`.
pub fn cluster_centers(n: usize, dim: usize, scale: f64, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..dim).map(|_| rng.random_range(0.0..scale)).collect()).collect()
}

/// `center` plus isotropic Gaussian noise.
pub fn jitter(center: &[f64], sigma: f64, rng: &mut impl Rng) -> Vec<f64> {
    let normal = Normal::new(0.0, sigma).expect("sigma must be finite and >= 0");
    center.iter().map(|c| c + normal.sample(rng)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterConfig {
    pub classes: usize,
    pub dim: usize,
    pub train_per_class: usize,
    pub web_per_class: usize,
    pub test_per_class: usize,
    pub scale: f64,
    pub sigma: f64,
    pub seed: u64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            classes: 5,
            dim: 32,
            train_per_class: 60,
            web_per_class: 40,
            test_per_class: 20,
            scale: FEATURE_SCALE,
            sigma: FEATURE_SCALE / 10.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterData {
    pub centers: Vec<Vec<f64>>,
    pub train: Vec<Sample>,
    pub web: Vec<Sample>,
    pub test: Vec<Sample>,
}

/// One Gaussian cluster per class, sampled independently for the dataset
/// (train/test) and web sides.
pub fn gaussian_clusters(cfg: &ClusterConfig) -> ClusterData {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let centers = cluster_centers(cfg.classes, cfg.dim, cfg.scale, &mut rng);
    let draw = |n: usize, rng: &mut ChaCha8Rng| -> Vec<Sample> {
        (0..cfg.classes)
            .flat_map(|c| (0..n).map(move |_| c))
            .map(|c| Sample {
                features: jitter(&centers[c], cfg.sigma, rng),
                class: c,
            })
            .collect()
    };
    let train = draw(cfg.train_per_class, &mut rng);
    let web = draw(cfg.web_per_class, &mut rng);
    let test = draw(cfg.test_per_class, &mut rng);
    ClusterData { centers, train, web, test }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoisyCorpus {
    pub corpus: WebCorpus,
    /// Per class, per sample: whether the sample was drawn from another class.
    pub noisy: Vec<Vec<bool>>,
}

/// A web corpus in which `noise_fraction` of each class (rounded) is replaced
/// by samples of a different, uniformly chosen class.
pub fn planted_noise(classes: &[RelType], per_class: usize, noise_fraction: f64, dim: usize, seed: u64) -> NoisyCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = cluster_centers(classes.len(), dim, 4.0, &mut rng);
    let n_noise = ((per_class as f64) * noise_fraction).round() as usize;
    let mut corpus = WebCorpus::new(classes.to_vec());
    let mut noisy = Vec::with_capacity(classes.len());
    for c in 0..classes.len() {
        let mut flags = vec![false; per_class];
        let mut slots: Vec<usize> = (0..per_class).collect();
        slots.shuffle(&mut rng);
        for &s in slots.iter().take(n_noise) {
            flags[s] = true;
        }
        for (i, &is_noise) in flags.iter().enumerate() {
            let source = if is_noise && classes.len() > 1 {
                let other = rng.random_range(0..classes.len() - 1);
                if other >= c {
                    other + 1
                } else {
                    other
                }
            } else {
                c
            };
            corpus.push(
                c,
                FeatureVector {
                    sample_id: format!("{c:02}/{i:04}"),
                    values: jitter(&centers[source], 0.8, &mut rng),
                },
            );
        }
        noisy.push(flags);
    }
    NoisyCorpus { corpus, noisy }
}

/// A relationship type of the fixture and its relative frequency.
const FIXTURE_TYPES: &[(HumanSubtype, &str, &str, u32)] = &[
    (HumanSubtype::Man, "ride", "horse", 30),
    (HumanSubtype::Man, "ride", "bicycle", 25),
    (HumanSubtype::Woman, "ride", "horse", 20),
    (HumanSubtype::Boy, "kick", "ball", 20),
    (HumanSubtype::Girl, "hold", "cup", 15),
    (HumanSubtype::Woman, "hold", "cup", 15),
    (HumanSubtype::Man, "feed", "horse", 12),
    (HumanSubtype::Girl, "walk", "dog", 10),
    (HumanSubtype::Boy, "hold", "ball", 8),
    (HumanSubtype::Woman, "walk", "dog", 6),
    (HumanSubtype::Man, "push", "bicycle", 4),
    (HumanSubtype::Girl, "feed", "dog", 3),
    (HumanSubtype::Man, "hold", "dog", 2),
    (HumanSubtype::Boy, "ride", "bicycle", 2),
    (HumanSubtype::Woman, "kick", "ball", 1),
];

/// Raw spellings used in the fixture annotations.
const PREDICATE_FORMS: &[(&str, &[&str])] = &[
    ("ride", &["ride", "riding", "rides"]),
    ("kick", &["kick", "kicking"]),
    ("hold", &["hold", "holding", "holds"]),
    ("feed", &["feed", "feeding"]),
    ("walk", &["walk", "walking"]),
    ("push", &["push", "pushing"]),
];

const OBJECT_SYNONYMS: &[(&str, &str)] = &[("horse", "pony"), ("bicycle", "bike")];

pub const FIXTURE_DIM: usize = 32;
pub const FIXTURE_IMAGES: usize = 100;
pub const FIXTURE_WEB_PER_TYPE: usize = 20;

/// Everything the command-line pipeline consumes.
#[derive(Debug, Clone)]
pub struct Fixture {
    /// Raw annotations (unnormalised predicates, synonym object names, attribute relations).
    pub annotations: Vec<ImageRecord>,
    /// Detector output in the cleaned vocabulary.
    pub detections: Vec<ImageRecord>,
    /// Union-region features for both annotated and detected pairs.
    pub dataset_features: FeatureStore,
    pub web: WebCorpus,
    pub lemmas: Vec<(String, String)>,
    pub word_vectors: Vec<(String, Vec<f64>)>,
    pub universe: BTreeMap<RelType, u64>,
}

/// Output paths written by [`Fixture::write`].
#[derive(Debug, Clone)]
pub struct FixturePaths {
    pub annotations: PathBuf,
    pub detections: PathBuf,
    pub dataset_features: PathBuf,
    pub web_features: PathBuf,
    pub web_labels: PathBuf,
    pub lemmas: PathBuf,
    pub word_vectors: PathBuf,
    pub universe: PathBuf,
}

impl FixturePaths {
    pub fn in_dir(dir: &Path) -> Self {
        FixturePaths {
            annotations: dir.join("annotations.jsonl"),
            detections: dir.join("detections.jsonl"),
            dataset_features: dir.join("dataset_features.hcvf"),
            web_features: dir.join("web_features.hcvf"),
            web_labels: dir.join("web_labels.tsv"),
            lemmas: dir.join("lemmas.tsv"),
            word_vectors: dir.join("word_vectors.txt"),
            universe: dir.join("universe.tsv"),
        }
    }
}

fn random_box(rng: &mut impl Rng, x0: f64, x1: f64, height: f64) -> BoundingBox {
    let w = rng.random_range(60.0..(x1 - x0) * 0.45);
    let h = rng.random_range(80.0..height * 0.7);
    let x = rng.random_range(x0..x1 - w);
    let y = rng.random_range(0.0..height - h);
    BoundingBox::new(x, y, w, h).expect("generated box is valid")
}

/// Shifts each side by at most `frac` of the box size.
fn jitter_box(b: &BoundingBox, frac: f64, rng: &mut impl Rng) -> BoundingBox {
    let dx = rng.random_range(-frac..=frac) * b.w;
    let dy = rng.random_range(-frac..=frac) * b.h;
    let sw = 1.0 + rng.random_range(-frac..=frac);
    let sh = 1.0 + rng.random_range(-frac..=frac);
    BoundingBox::new((b.x + dx).max(0.0), (b.y + dy).max(0.0), b.w * sw, b.h * sh).expect("jittered box is valid")
}

/// Builds the 100-image fixture.
pub fn fixture(seed: u64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let types: Vec<RelType> = FIXTURE_TYPES.iter().map(|&(s, p, o, _)| RelType::new(s, p, o)).collect();
    let weights: Vec<u32> = FIXTURE_TYPES.iter().map(|t| t.3).collect();
    let centers = cluster_centers(types.len(), FIXTURE_DIM, FEATURE_SCALE, &mut rng);
    let sigma = FEATURE_SCALE / 10.0;
    let mut features = FeatureStore::new(FIXTURE_DIM);
    let push_feature = |store: &mut FeatureStore, id: String, class: Option<usize>, rng: &mut ChaCha8Rng| {
        let v = match class {
            Some(c) => jitter(&centers[c], sigma, rng),
            None => (0..FIXTURE_DIM).map(|_| rng.random_range(0.0..FEATURE_SCALE)).collect(),
        };
        store.push_f64(id, &v).expect("fixture ids are unique");
    };
    let pick_type = |rng: &mut ChaCha8Rng| -> usize {
        let total: u32 = weights.iter().sum();
        let mut r = rng.random_range(0..total);
        for (i, &w) in weights.iter().enumerate() {
            if r < w {
                return i;
            }
            r -= w;
        }
        unreachable!()
    };
    let raw_predicate = |p: &str, rng: &mut ChaCha8Rng| -> String {
        let forms = PREDICATE_FORMS.iter().find(|f| f.0 == p).map(|f| f.1).unwrap_or(&[]);
        forms.choose(rng).map_or(p, |v| v).to_string()
    };
    let raw_object = |o: &str, rng: &mut ChaCha8Rng| -> String {
        match OBJECT_SYNONYMS.iter().find(|s| s.0 == o) {
            Some(&(_, syn)) if rng.random_bool(0.25) => syn.to_string(),
            _ => o.to_string(),
        }
    };

    let (width, height) = (640u32, 480u32);
    let mut annotations = Vec::new();
    let mut detections = Vec::new();
    for img in 0..FIXTURE_IMAGES {
        let image_id = format!("img{img:03}");
        let n_pairs = if rng.random_bool(0.4) { 2 } else { 1 };
        let mut regions = Vec::new();
        let mut relationships = Vec::new();
        // (human region, object region, feature class)
        let mut pairs: Vec<(usize, usize, Option<usize>)> = Vec::new();
        for p in 0..n_pairs {
            let (x0, x1) = if n_pairs == 1 {
                (0.0, width as f64)
            } else {
                let half = width as f64 / 2.0;
                (p as f64 * half, (p + 1) as f64 * half)
            };
            let t = pick_type(&mut rng);
            let rel = &types[t];
            let h_idx = regions.len();
            regions.push(Region {
                id: format!("r{}", regions.len()),
                category: rel.subject.as_str().to_string(),
                bbox: random_box(&mut rng, x0, x1, height as f64),
                score: 1.0,
            });
            let o_idx = regions.len();
            regions.push(Region {
                id: format!("r{}", regions.len()),
                category: raw_object(&rel.object, &mut rng),
                bbox: random_box(&mut rng, x0, x1, height as f64),
                score: 1.0,
            });
            relationships.push(Relation {
                subject: regions[h_idx].id.clone(),
                predicate: raw_predicate(&rel.predicate, &mut rng),
                object: regions[o_idx].id.clone(),
            });
            // a second predicate on the same pair
            if rng.random_bool(0.15) {
                if let Some(second) = (0..types.len()).find(|&u| u != t && types[u].subject == rel.subject && types[u].object == rel.object) {
                    relationships.push(Relation {
                        subject: regions[h_idx].id.clone(),
                        predicate: raw_predicate(&types[second].predicate, &mut rng),
                        object: regions[o_idx].id.clone(),
                    });
                }
            }
            // attribute-style relation removed during cleaning
            if rng.random_bool(0.2) {
                relationships.push(Relation {
                    subject: regions[h_idx].id.clone(),
                    predicate: "has".into(),
                    object: regions[o_idx].id.clone(),
                });
            }
            pairs.push((h_idx, o_idx, Some(t)));
        }

        // annotated pairs
        for &(h, o, class) in &pairs {
            push_feature(&mut features, pair_sample_id(&image_id, &regions[h].id, &regions[o].id), class, &mut rng);
        }

        // detections: one jittered box per region, some duplicates and one low-score box
        let mut dets: Vec<(Region, usize)> = Vec::new();
        for (i, r) in regions.iter().enumerate() {
            let category = OBJECT_SYNONYMS
                .iter()
                .find(|s| s.1 == r.category)
                .map_or(r.category.clone(), |s| s.0.to_string());
            dets.push((
                Region {
                    id: format!("d{}", dets.len()),
                    category: category.clone(),
                    bbox: jitter_box(&r.bbox, 0.05, &mut rng),
                    score: rng.random_range(0.6..1.0),
                },
                i,
            ));
            if rng.random_bool(0.3) {
                dets.push((
                    Region {
                        id: format!("d{}", dets.len()),
                        category,
                        bbox: jitter_box(&r.bbox, 0.1, &mut rng),
                        score: rng.random_range(0.3..0.55),
                    },
                    i,
                ));
            }
        }
        let junk = random_box(&mut rng, 0.0, width as f64, height as f64);
        dets.push((
            Region {
                id: format!("d{}", dets.len()),
                category: "cup".into(),
                bbox: junk,
                score: 0.1,
            },
            usize::MAX,
        ));
        for (hd, hsrc) in &dets {
            if hd.human_subtype().is_none() {
                continue;
            }
            for (od, osrc) in &dets {
                if od.human_subtype().is_some() {
                    continue;
                }
                let class = pairs.iter().find(|p| p.0 == *hsrc && p.1 == *osrc).and_then(|p| p.2);
                push_feature(&mut features, pair_sample_id(&image_id, &hd.id, &od.id), class, &mut rng);
            }
        }

        annotations.push(ImageRecord {
            image_id: image_id.clone(),
            width,
            height,
            regions,
            relationships,
        });
        detections.push(ImageRecord {
            image_id,
            width,
            height,
            regions: dets.into_iter().map(|d| d.0).collect(),
            relationships: Vec::new(),
        });
    }

    // web corpus: every type, with 15% of each class drawn from another type
    let mut web = WebCorpus::new(types.clone());
    let n_noise = (FIXTURE_WEB_PER_TYPE as f64 * 0.15).round() as usize;
    for (c, rel) in types.iter().enumerate() {
        for i in 0..FIXTURE_WEB_PER_TYPE {
            let source = if i < n_noise { (c + 1 + rng.random_range(0..types.len() - 1)) % types.len() } else { c };
            web.push(
                c,
                FeatureVector {
                    sample_id: format!("web/{}/{i:03}", rel.to_string().replace(' ', "_")),
                    values: jitter(&centers[source], sigma, &mut rng),
                },
            );
        }
    }
    let universe = types.iter().map(|t| (t.clone(), FIXTURE_WEB_PER_TYPE as u64)).collect();

    let mut lemmas = Vec::new();
    for (lemma, forms) in PREDICATE_FORMS {
        for f in forms.iter().filter(|f| *f != lemma) {
            lemmas.push((f.to_string(), lemma.to_string()));
        }
    }
    let mut word_vectors = Vec::new();
    let base = cluster_centers(8, 8, 1.0, &mut rng);
    for (i, name) in ["horse", "bicycle", "ball", "cup", "dog"].iter().enumerate() {
        let v: Vec<f64> = base[i].iter().map(|x| x - 0.5).collect();
        word_vectors.push((name.to_string(), v.clone()));
        if let Some(&(_, syn)) = OBJECT_SYNONYMS.iter().find(|s| s.0 == *name) {
            word_vectors.push((syn.to_string(), v.iter().map(|x| x * 1.05 + 0.01).collect()));
        }
    }

    Fixture {
        annotations,
        detections,
        dataset_features: features,
        web,
        lemmas,
        word_vectors,
        universe,
    }
}

/// Web labels file: `sample_id<TAB>subject<TAB>predicate<TAB>object` per line.
pub fn write_web_labels(path: &Path, corpus: &WebCorpus) -> Result<()> {
    let mut out = String::new();
    for (c, s) in corpus.iter() {
        let t = &corpus.classes[c];
        out.push_str(&format!("{}\t{}\t{}\t{}\n", s.vector.sample_id, t.subject, t.predicate, t.object));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

impl Fixture {
    pub fn write(&self, dir: &Path) -> Result<FixturePaths> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let paths = FixturePaths::in_dir(dir);
        write_annotations(&paths.annotations, &self.annotations)?;
        write_annotations(&paths.detections, &self.detections)?;
        self.dataset_features.write(&paths.dataset_features)?;
        let mut web = FeatureStore::new(FIXTURE_DIM);
        for (_, s) in self.web.iter() {
            web.push_f64(s.vector.sample_id.clone(), &s.vector.values)?;
        }
        web.write(&paths.web_features)?;
        write_web_labels(&paths.web_labels, &self.web)?;
        let lemmas: String = self.lemmas.iter().map(|(a, b)| format!("{a}\t{b}\n")).collect();
        std::fs::write(&paths.lemmas, lemmas).map_err(|e| Error::io(&paths.lemmas, e))?;
        let vectors: String = self
            .word_vectors
            .iter()
            .map(|(w, v)| {
                let nums: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
                format!("{w} {}\n", nums.join(" "))
            })
            .collect();
        std::fs::write(&paths.word_vectors, vectors).map_err(|e| Error::io(&paths.word_vectors, e))?;
        write_triple_list(&paths.universe, &self.universe)?;
        Ok(paths)
    }
}
