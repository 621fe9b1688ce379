//! Small end-to-end scenarios assembled from library components, shared by
//! the benchmark tests and the acceptance suite.

use std::collections::BTreeMap;

use hcvrd::evalbench::{ground_truth, group_by_image, recall_at, select_top_k, EvalTask, RecallCount};
use hcvrd::featstore::{FeatureStore, FeatureVector};
use hcvrd::infer::{predict_records, InferOptions, PairSource, WebIndex};
use hcvrd::metric::{train, MetricModel, ModelShape, TrainConfig};
use hcvrd::relmodel::{pair_sample_id, ImageRecord, Region, Relation};
use hcvrd::synth::{gaussian_clusters, planted_noise, ClusterConfig};
use hcvrd::webfilter::{filter_top, ranking_auc, train_filter, FilterConfig, WebCorpus};
use hcvrd::{BoundingBox, HumanSubtype, RelType};

pub fn cluster_types(n: usize) -> Vec<RelType> {
    (0..n).map(|c| RelType::new(HumanSubtype::Man, format!("pred{c}"), "horse")).collect()
}

/// Gaussian clusters → metric training → web index → predicate detection on
/// one ground-truth pair per test sample. Returns Recall@50 for top-1.
pub fn separability_recall(seed: u64) -> RecallCount {
    let cfg = ClusterConfig { seed, ..Default::default() };
    let data = gaussian_clusters(&cfg);
    let init = MetricModel::seeded(ModelShape::for_input(cfg.dim), seed);
    let outcome = train(init, &data.train, &data.web, &TrainConfig { seed, ..Default::default() }).expect("training succeeds");

    let types = cluster_types(cfg.classes);
    let mut corpus = WebCorpus::new(types.clone());
    for (i, s) in data.web.iter().enumerate() {
        corpus.push(
            s.class,
            FeatureVector {
                sample_id: format!("web{i:04}"),
                values: s.features.clone(),
            },
        );
    }
    let index = WebIndex::build(Some(&outcome.model), &corpus).expect("index builds");

    let mut features = FeatureStore::new(cfg.dim);
    let records: Vec<ImageRecord> = data
        .test
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let image_id = format!("test{i:04}");
            features.push_f64(pair_sample_id(&image_id, "h", "o"), &s.features).unwrap();
            ImageRecord {
                image_id,
                width: 100,
                height: 100,
                regions: vec![
                    Region {
                        id: "h".into(),
                        category: "man".into(),
                        bbox: BoundingBox::new(0.0, 0.0, 40.0, 80.0).unwrap(),
                        score: 1.0,
                    },
                    Region {
                        id: "o".into(),
                        category: "horse".into(),
                        bbox: BoundingBox::new(30.0, 20.0, 60.0, 60.0).unwrap(),
                        score: 1.0,
                    },
                ],
                relationships: vec![Relation {
                    subject: "h".into(),
                    predicate: types[s.class].predicate.clone(),
                    object: "o".into(),
                }],
            }
        })
        .collect();
    let opts = InferOptions { top_k: 1, ..Default::default() };
    let (preds, _) = predict_records(&records, PairSource::GroundTruth, &features, Some(&outcome.model), &index, &opts).unwrap();
    let gts: BTreeMap<_, _> = records.iter().map(|r| (r.image_id.clone(), ground_truth(r).unwrap())).collect();
    recall_at(&group_by_image(&select_top_k(&preds, 1)), &gts, 50, EvalTask::PredicateDet)
}

pub struct NoiseRecovery {
    pub auc: f64,
    pub planted: usize,
    pub removed: usize,
    pub clean_mean: f64,
    pub noise_mean: f64,
}

/// Planted-noise corpus (3 classes, 100 per class, 20% noise, dim 32) →
/// filter training → confidence AUC and noise removed by keeping the top 80%.
pub fn noise_recovery(seed: u64) -> NoiseRecovery {
    let noisy = planted_noise(&cluster_types(3), 100, 0.2, 32, seed);
    let outcome = train_filter(&noisy.corpus, &FilterConfig { seed, ..Default::default() }).expect("filter trains");
    let mut scored = noisy.corpus.clone();
    outcome.apply(&mut scored);
    let kept = filter_top(&scored, 0.8).unwrap();

    let (mut clean, mut noise) = (Vec::new(), Vec::new());
    let mut removed = 0;
    for (c, flags) in noisy.noisy.iter().enumerate() {
        for (i, &is_noise) in flags.iter().enumerate() {
            let conf = outcome.confidences[c][i];
            if is_noise {
                noise.push(conf);
                let id = &scored.samples[c][i].vector.sample_id;
                if !kept.samples[c].iter().any(|s| &s.vector.sample_id == id) {
                    removed += 1;
                }
            } else {
                clean.push(conf);
            }
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    NoiseRecovery {
        // clean samples should outrank planted noise
        auc: ranking_auc(&clean, &noise),
        planted: noise.len(),
        removed,
        clean_mean: mean(&clean),
        noise_mean: mean(&noise),
    }
}
