//! One function per pipeline stage. Each reads its inputs from the configured
//! paths or earlier artifacts in the output directory and writes its own
//! artifacts there.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use hcvrd::evalbench::{run_suite, EvalReport, Suite};
use hcvrd::featstore::FeatureStore;
use hcvrd::infer::{predict_records, read_predictions, write_predictions, InferDiagnostics, InferOptions, Method, PairSource, WebIndex};
use hcvrd::ingest::{
    build_splits, clean_records, compute_stats, merge_objects, object_frequencies, parse_annotations, type_counts, write_annotations,
    CleanupTables, DatasetStats, LemmaTable, MergeMap, SplitSpec, SubtypeTable, WordVectorTable,
};
use hcvrd::metric::{train, write_loss_curve, MetricModel, ModelShape, Sample, EMBED_DIM};
use hcvrd::relmodel::{pair_sample_id, read_triple_list, write_triple_list, ImageRecord, RelType};
use hcvrd::webfilter::{apply_manifest, filter_top, manifest, read_manifest, read_web_corpus, train_filter, write_manifest, WebCorpus};
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult, StageContext};

pub const CLEAN_ANNOTATIONS: &str = "annotations.clean.jsonl";
pub const INGEST_REPORT: &str = "ingest_report.json";
pub const SPLIT: &str = "split.json";
pub const SPLIT_REPORT: &str = "split_report.json";
pub const STATS: &str = "stats.json";
pub const RANK_FREQUENCY: &str = "rank_frequency.csv";
pub const WEB_MANIFEST: &str = "web_manifest.jsonl";
pub const FILTER_CURVE: &str = "filter_curve.csv";
pub const MODEL: &str = "model.hcvm";
pub const LOSS_CURVE: &str = "loss_curve.csv";
pub const PREDICTIONS: &str = "predictions.jsonl";
pub const PREDICATE_PREDICTIONS: &str = "predictions_predicate.jsonl";
pub const INFER_DIAGNOSTICS: &str = "infer_diagnostics.json";
pub const EVAL_REPORT: &str = "eval_report.json";
pub const EVAL_CSV: &str = "eval_report.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const SUMMARY_MD: &str = "summary.md";

fn write_text(path: &Path, text: &str, stage: &'static str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| hcvrd::Error::io(path, e)).stage(stage)
}

fn write_json<T: Serialize>(path: &Path, value: &T, stage: &'static str) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(hcvrd::Error::from).stage(stage)?;
    write_text(path, &(text + "\n"), stage)
}

fn ensure_output_dir(cfg: &RunConfig, stage: &'static str) -> CliResult<()> {
    std::fs::create_dir_all(&cfg.output_dir)
        .map_err(|e| hcvrd::Error::io(&cfg.output_dir, e))
        .stage(stage)
}

fn clean_annotations(cfg: &RunConfig, stage: &'static str) -> CliResult<Vec<ImageRecord>> {
    parse_annotations(&cfg.artifact(CLEAN_ANNOTATIONS)?).stage(stage)
}

fn split_spec(cfg: &RunConfig, stage: &'static str) -> CliResult<SplitSpec> {
    SplitSpec::read(&cfg.artifact(SPLIT)?).stage(stage)
}

/// The web corpus, restricted to the filter's kept samples when
/// `train.use_filtered` is set.
fn web_corpus(cfg: &RunConfig, stage: &'static str) -> CliResult<WebCorpus> {
    let features = cfg.input("web_features", &cfg.paths.web_features)?;
    let labels = cfg.input("web_labels", &cfg.paths.web_labels)?;
    let corpus = read_web_corpus(&features, &labels).stage(stage)?;
    if !cfg.train.use_filtered {
        return Ok(corpus);
    }
    let rows = read_manifest(&cfg.artifact(WEB_MANIFEST)?).stage(stage)?;
    Ok(apply_manifest(&corpus, &rows))
}

pub fn ingest(cfg: &RunConfig) -> CliResult<()> {
    const STAGE: &str = "ingest";
    let raw = parse_annotations(&cfg.input("annotations", &cfg.paths.annotations)?).stage(STAGE)?;
    let mut tables = CleanupTables::with_defaults();
    tables.blocklist = cfg.ingest.blocklist.iter().map(|s| s.trim().to_lowercase()).collect();
    if let Some(p) = &cfg.paths.lemmas {
        tables.lemmas = LemmaTable::read(p).stage(STAGE)?;
    }
    if let Some(p) = &cfg.paths.subtypes {
        tables.subtypes = SubtypeTable::read(p).stage(STAGE)?;
    }
    let merge = match &cfg.paths.word_vectors {
        Some(p) => {
            let vectors = WordVectorTable::read(p).stage(STAGE)?;
            merge_objects(&object_frequencies(&raw, &tables), &vectors, cfg.ingest.merge_threshold)
        }
        None => MergeMap::default(),
    };
    let (clean, report) = clean_records(&raw, &tables, &merge);
    log::info!(
        "ingest: {} of {} images kept, {} relationships",
        report.images_out,
        report.images_in,
        report.relationships_out
    );

    ensure_output_dir(cfg, STAGE)?;
    write_annotations(&cfg.out(CLEAN_ANNOTATIONS), &clean).stage(STAGE)?;
    write_json(&cfg.out(INGEST_REPORT), &report, STAGE)?;
    let counts = type_counts(&clean, None).stage(STAGE)?;
    let predicates: BTreeSet<&str> = counts.keys().map(|t| t.predicate.as_str()).collect();
    let objects: BTreeSet<&str> = counts.keys().map(|t| t.object.as_str()).collect();
    let lines = |set: BTreeSet<&str>| set.into_iter().map(|s| format!("{s}\n")).collect::<String>();
    write_text(&cfg.out("predicates.txt"), &lines(predicates), STAGE)?;
    write_text(&cfg.out("objects.txt"), &lines(objects), STAGE)?;
    write_triple_list(&cfg.out("triples.tsv"), &counts).stage(STAGE)
}

pub fn split(cfg: &RunConfig) -> CliResult<()> {
    const STAGE: &str = "split";
    let records = clean_annotations(cfg, STAGE)?;
    let (spec, report) = build_splits(&records, cfg.split.train_size, cfg.split.test_seen_size, cfg.seed, cfg.split.count_scope).stage(STAGE)?;
    log::info!(
        "split: train {}, test_seen {}, test_zeroshot {}, {} long-tail types",
        spec.train.len(),
        spec.test_seen.len(),
        spec.test_zeroshot.len(),
        spec.longtail_types.len()
    );
    spec.write(&cfg.out(SPLIT)).stage(STAGE)?;
    write_json(&cfg.out(SPLIT_REPORT), &report, STAGE)
}

pub fn stats(cfg: &RunConfig) -> CliResult<()> {
    const STAGE: &str = "stats";
    let records = clean_annotations(cfg, STAGE)?;
    let spec = split_spec(cfg, STAGE)?;
    let stats = compute_stats(&records, &spec, cfg.split.count_scope).stage(STAGE)?;
    write_json(&cfg.out(STATS), &stats, STAGE)?;
    let mut csv = String::from("rank,count\n");
    for (rank, count) in stats.rank_frequency() {
        csv.push_str(&format!("{rank},{count}\n"));
    }
    write_text(&cfg.out(RANK_FREQUENCY), &csv, STAGE)
}

pub fn filter_web(cfg: &RunConfig) -> CliResult<()> {
    const STAGE: &str = "filter-web";
    let features = cfg.input("web_features", &cfg.paths.web_features)?;
    let labels = cfg.input("web_labels", &cfg.paths.web_labels)?;
    let mut corpus = read_web_corpus(&features, &labels).stage(STAGE)?;
    let outcome = train_filter(&corpus, &cfg.filter_config()).stage(STAGE)?;
    outcome.apply(&mut corpus);
    let kept = filter_top(&corpus, cfg.filter.keep_ratio).stage(STAGE)?;
    log::info!("filter-web: kept {} of {} web samples", kept.len(), corpus.len());
    ensure_output_dir(cfg, STAGE)?;
    write_manifest(&cfg.out(WEB_MANIFEST), &manifest(&corpus, &kept)).stage(STAGE)?;
    let mut csv = String::from("epoch,mean_loss\n");
    for (epoch, loss) in outcome.curve.iter().enumerate() {
        csv.push_str(&format!("{epoch},{loss}\n"));
    }
    write_text(&cfg.out(FILTER_CURVE), &csv, STAGE)
}

fn missing_feature(id: &str) -> hcvrd::Error {
    hcvrd::Error::UnknownName {
        kind: "dataset feature",
        name: id.to_string(),
    }
}

pub fn train_model(cfg: &RunConfig) -> CliResult<()> {
    const STAGE: &str = "train";
    let records = clean_annotations(cfg, STAGE)?;
    let spec = split_spec(cfg, STAGE)?;
    let features = FeatureStore::read(&cfg.input("dataset_features", &cfg.paths.dataset_features)?).stage(STAGE)?;
    let web = web_corpus(cfg, STAGE)?;

    let train_records: Vec<&ImageRecord> = records.iter().filter(|r| spec.train.contains(&r.image_id)).collect();
    let mut classes: BTreeSet<RelType> = web.classes.iter().cloned().collect();
    for r in &train_records {
        for t in r.typed_relationships().stage(STAGE)? {
            classes.insert(t.rel);
        }
    }
    let classes: Vec<RelType> = classes.into_iter().collect();
    let class_of = |t: &RelType| classes.binary_search(t).expect("class set covers every type");

    let mut dataset = Vec::new();
    for r in &train_records {
        for t in r.typed_relationships().stage(STAGE)? {
            let id = pair_sample_id(&r.image_id, &t.subject.id, &t.object.id);
            let x = features.get_f64(&id).ok_or_else(|| missing_feature(&id)).stage(STAGE)?;
            dataset.push(Sample {
                features: x,
                class: class_of(&t.rel),
            });
        }
    }
    let web_samples: Vec<Sample> = web
        .iter()
        .map(|(c, s)| Sample {
            features: s.vector.values.clone(),
            class: class_of(&web.classes[c]),
        })
        .collect();
    if dataset.is_empty() || web_samples.is_empty() {
        return Err(hcvrd::Error::EmptyDataset).stage(STAGE);
    }

    let shape = ModelShape {
        dataset_input: features.dim(),
        web_input: web.dim().unwrap_or(0),
        hidden: cfg.train.hidden,
        embed: EMBED_DIM,
    };
    let init = MetricModel::seeded(shape, cfg.seed);
    log::info!(
        "train: {} dataset samples, {} web samples, {} classes",
        dataset.len(),
        web_samples.len(),
        classes.len()
    );
    let outcome = train(init, &dataset, &web_samples, &cfg.train_config()).stage(STAGE)?;
    outcome.model.save(&cfg.out(MODEL)).stage(STAGE)?;
    write_loss_curve(&cfg.out(LOSS_CURVE), &outcome.curve).stage(STAGE)
}

/// Every relationship type the pipeline may predict: the configured universe,
/// or the annotated types plus the web classes.
fn universe(cfg: &RunConfig, records: &[ImageRecord], web: &WebCorpus, stage: &'static str) -> CliResult<BTreeSet<RelType>> {
    match &cfg.paths.universe {
        Some(p) => Ok(read_triple_list(p).stage(stage)?.into_keys().collect()),
        None => {
            let mut u: BTreeSet<RelType> = type_counts(records, None).stage(stage)?.into_keys().collect();
            u.extend(web.classes.iter().cloned());
            Ok(u)
        }
    }
}

#[derive(Debug, Serialize)]
struct InferSummary {
    detections: InferDiagnostics,
    ground_truth_pairs: InferDiagnostics,
}

fn add_diag(a: &mut InferDiagnostics, b: &InferDiagnostics) {
    a.images += b.images;
    a.pairs += b.pairs;
    a.missing_features += b.missing_features;
    a.empty_candidates += b.empty_candidates;
    a.predictions += b.predictions;
}

pub fn infer(cfg: &RunConfig) -> CliResult<()> {
    const STAGE: &str = "infer";
    let records = clean_annotations(cfg, STAGE)?;
    let spec = split_spec(cfg, STAGE)?;
    let features = FeatureStore::read(&cfg.input("dataset_features", &cfg.paths.dataset_features)?).stage(STAGE)?;
    let web = web_corpus(cfg, STAGE)?;
    let model = match cfg.infer.method {
        Method::Metric => Some(MetricModel::load(&cfg.artifact(MODEL)?).stage(STAGE)?),
        Method::RawNeighbors | Method::ClassMean => None,
    };
    let index = WebIndex::build(model.as_ref(), &web).stage(STAGE)?;
    let universe = universe(cfg, &records, &web, STAGE)?;

    let detections = match &cfg.paths.detections {
        Some(p) => parse_annotations(p).stage(STAGE)?,
        None => {
            log::warn!("paths.detections is not configured; only predicate predictions are produced");
            Vec::new()
        }
    };
    let pick = |set: &BTreeSet<String>, from: &[ImageRecord]| -> Vec<ImageRecord> {
        from.iter().filter(|r| set.contains(&r.image_id)).cloned().collect()
    };
    let seen_opts = InferOptions {
        k: cfg.infer.k,
        top_k: cfg.infer.top_k,
        aggregation: cfg.infer.aggregation,
        method: cfg.infer.method,
        universe: None,
    };
    let zeroshot_opts = InferOptions {
        universe: Some(universe),
        ..seen_opts.clone()
    };
    let det_source = PairSource::Detections {
        iou_threshold: cfg.infer.nms_iou,
        score_threshold: cfg.infer.nms_score,
    };

    let mut summary = InferSummary {
        detections: InferDiagnostics::default(),
        ground_truth_pairs: InferDiagnostics::default(),
    };
    let mut preds = Vec::new();
    let mut predicate_preds = Vec::new();
    for (set, opts) in [(&spec.test_seen, &seen_opts), (&spec.test_zeroshot, &zeroshot_opts)] {
        let (p, d) = predict_records(&pick(set, &detections), det_source, &features, model.as_ref(), &index, opts).stage(STAGE)?;
        preds.extend(p);
        add_diag(&mut summary.detections, &d);
        let (p, d) = predict_records(&pick(set, &records), PairSource::GroundTruth, &features, model.as_ref(), &index, opts).stage(STAGE)?;
        predicate_preds.extend(p);
        add_diag(&mut summary.ground_truth_pairs, &d);
    }
    for d in [&summary.detections, &summary.ground_truth_pairs] {
        if d.missing_features > 0 {
            log::warn!("infer: {} pairs had no union-region feature", d.missing_features);
        }
    }
    write_predictions(&cfg.out(PREDICTIONS), &preds).stage(STAGE)?;
    write_predictions(&cfg.out(PREDICATE_PREDICTIONS), &predicate_preds).stage(STAGE)?;
    write_json(&cfg.out(INFER_DIAGNOSTICS), &summary, STAGE)
}

pub fn eval(cfg: &RunConfig) -> CliResult<()> {
    const STAGE: &str = "eval";
    let records = clean_annotations(cfg, STAGE)?;
    let spec = split_spec(cfg, STAGE)?;
    let preds = read_predictions(&cfg.artifact(PREDICTIONS)?).stage(STAGE)?;
    let predicate_path = cfg.out(PREDICATE_PREDICTIONS);
    let predicate_preds = if predicate_path.exists() {
        Some(read_predictions(&predicate_path).stage(STAGE)?)
    } else {
        None
    };
    let mut suites = Vec::new();
    for name in &cfg.eval.suites {
        let suite: Suite = name.parse().map_err(|e: hcvrd::Error| CliError::Usage(e.to_string()))?;
        suites.push(run_suite(&preds, predicate_preds.as_deref(), &records, &spec, suite).stage(STAGE)?);
    }
    let report = EvalReport { suites };
    report.write(&cfg.out(EVAL_REPORT)).stage(STAGE)?;
    write_text(&cfg.out(EVAL_CSV), &report.to_csv(), STAGE)
}

fn fmt_recall(r: Option<f64>) -> String {
    r.map_or_else(|| "n/a".to_string(), |v| format!("{:.2}", 100.0 * v))
}

pub fn report(cfg: &RunConfig) -> CliResult<()> {
    const STAGE: &str = "report";
    let eval = EvalReport::read(&cfg.artifact(EVAL_REPORT)?).stage(STAGE)?;
    let stats: Option<DatasetStats> = match cfg.out(STATS) {
        p if p.exists() => {
            let text = std::fs::read_to_string(&p).map_err(|e| hcvrd::Error::io(&p, e)).stage(STAGE)?;
            Some(serde_json::from_str(&text).map_err(hcvrd::Error::from).stage(STAGE)?)
        }
        _ => None,
    };
    let final_loss = match cfg.out(LOSS_CURVE) {
        p if p.exists() => {
            let text = std::fs::read_to_string(&p).map_err(|e| hcvrd::Error::io(&p, e)).stage(STAGE)?;
            text.lines().last().and_then(|l| l.split(',').nth(1)).and_then(|v| v.parse::<f64>().ok())
        }
        _ => None,
    };

    let mut recalls = BTreeMap::new();
    let mut md = String::from("# Evaluation summary\n\n");
    if let Some(s) = &stats {
        md.push_str(&format!(
            "{} images, {} relationship instances, {} relationship types ({} zero-shot, {} long-tail).\n\n",
            s.n_images, s.n_instances, s.n_relationship_types, s.n_zeroshot_types, s.n_longtail_types
        ));
    }
    if let Some(l) = final_loss {
        md.push_str(&format!("Final training loss: {l:.6}\n\n"));
    }
    md.push_str("| suite | task | top-k | R@50 | R@100 |\n|---|---|---|---|---|\n");
    for s in &eval.suites {
        let mut by_suite = BTreeMap::new();
        for c in &s.cells {
            by_suite.insert(format!("{}_r{}_top{}", c.task, c.recall_at, c.top_k), c.recall);
        }
        for task in hcvrd::evalbench::EvalTask::ALL {
            for k in hcvrd::evalbench::TOP_K {
                let r = |at| s.cell(task, at, k).and_then(|c| c.recall);
                md.push_str(&format!(
                    "| {} | {} | {} | {} | {} |\n",
                    s.suite.as_str(),
                    task,
                    k,
                    fmt_recall(r(50)),
                    fmt_recall(r(100))
                ));
            }
        }
        recalls.insert(
            s.suite.as_str(),
            json!({
                "gt_images": s.gt_images,
                "gt_instances": s.gt_instances,
                "recall": by_suite,
                "diagnostics": s.diagnostics,
            }),
        );
    }
    let summary = json!({
        "seed": cfg.seed,
        "dataset": stats.as_ref().map(|s| json!({
            "n_images": s.n_images,
            "n_instances": s.n_instances,
            "n_relationship_types": s.n_relationship_types,
            "n_zeroshot_types": s.n_zeroshot_types,
            "n_longtail_types": s.n_longtail_types,
        })),
        "final_train_loss": final_loss,
        "suites": recalls,
    });
    write_json(&cfg.out(SUMMARY_JSON), &summary, STAGE)?;
    write_text(&cfg.out(SUMMARY_MD), &md, STAGE)
}

/// Every stage in order. `filter-web` runs only when the filtered corpus is used.
pub fn pipeline(cfg: &RunConfig) -> CliResult<()> {
    ingest(cfg)?;
    split(cfg)?;
    stats(cfg)?;
    if cfg.train.use_filtered {
        filter_web(cfg)?;
    }
    if cfg.infer.method == Method::Metric {
        train_model(cfg)?;
    }
    infer(cfg)?;
    eval(cfg)?;
    report(cfg)
}

/// Writes the synthetic fixture and a config that runs the pipeline on it.
pub fn synth(dir: &Path, seed: u64) -> CliResult<()> {
    const STAGE: &str = "synth";
    let fx = hcvrd::synth::fixture(seed);
    fx.write(dir).stage(STAGE)?;
    let config = format!(
        "# Pipeline configuration for the synthetic fixture. Paths are relative to this file.\n\
         seed = {seed}\n\
         output_dir = \"out\"\n\
         \n\
         [paths]\n\
         annotations = \"annotations.jsonl\"\n\
         detections = \"detections.jsonl\"\n\
         lemmas = \"lemmas.tsv\"\n\
         word_vectors = \"word_vectors.txt\"\n\
         dataset_features = \"dataset_features.hcvf\"\n\
         web_features = \"web_features.hcvf\"\n\
         web_labels = \"web_labels.tsv\"\n\
         universe = \"universe.tsv\"\n\
         \n\
         [split]\n\
         train_size = 70\n\
         test_seen_size = 20\n"
    );
    write_text(&dir.join("hcvrd.toml"), &config, STAGE)
}
