//! Run configuration: a TOML file, `--set section.key=value` overrides and
//! typed flags, applied in that order.

use std::path::{Path, PathBuf};

use hcvrd::infer::{Aggregation, Method};
use hcvrd::ingest::CountScope;
use hcvrd::metric::TrainConfig;
use hcvrd::webfilter::FilterConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Input files. Relative paths are resolved against the config file's directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Raw annotation JSON-lines file.
    pub annotations: Option<PathBuf>,
    /// Detector output in the same JSON-lines schema (regions only).
    pub detections: Option<PathBuf>,
    /// `inflected<TAB>lemma` per line.
    pub lemmas: Option<PathBuf>,
    /// `label<TAB>man|woman|boy|girl|none` per line.
    pub subtypes: Option<PathBuf>,
    /// Word-vector text file used for object merging.
    pub word_vectors: Option<PathBuf>,
    /// HCVF store of union-region features, ids `image/subject_region/object_region`.
    pub dataset_features: Option<PathBuf>,
    /// HCVF store of web sample features.
    pub web_features: Option<PathBuf>,
    /// `sample_id<TAB>subject<TAB>predicate<TAB>object` per line.
    pub web_labels: Option<PathBuf>,
    /// Triple list of every relationship type (seen and zero-shot).
    pub universe: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestSection {
    pub merge_threshold: f64,
    pub blocklist: Vec<String>,
}

impl Default for IngestSection {
    fn default() -> Self {
        IngestSection {
            merge_threshold: hcvrd::ingest::DEFAULT_MERGE_THRESHOLD,
            blocklist: hcvrd::ingest::DEFAULT_BLOCKLIST.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub train_size: usize,
    pub test_seen_size: usize,
    pub count_scope: CountScope,
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection {
            train_size: 31_586,
            test_seen_size: 10_000,
            count_scope: CountScope::Train,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterSection {
    pub group_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub keep_ratio: f64,
}

impl Default for FilterSection {
    fn default() -> Self {
        let d = FilterConfig::default();
        FilterSection {
            group_size: d.group_size,
            epochs: d.epochs,
            learning_rate: d.learning_rate,
            keep_ratio: hcvrd::webfilter::DEFAULT_KEEP_RATIO,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub decay_factor: f64,
    pub decay_every: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub web_per_class: usize,
    pub web_negative_pool: usize,
    pub per_anchor_negatives: usize,
    /// α in the lifted loss.
    pub margin: f64,
    pub hidden: usize,
    /// Train on the web samples kept by `filter-web` (requires its manifest).
    pub use_filtered: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        TrainSection {
            learning_rate: d.learning_rate,
            decay_factor: d.decay_factor,
            decay_every: d.decay_every,
            epochs: d.epochs,
            batch_size: d.batch_size,
            web_per_class: d.web_per_class,
            web_negative_pool: d.web_negative_pool,
            per_anchor_negatives: d.per_anchor_negatives,
            margin: d.margin,
            hidden: hcvrd::metric::DEFAULT_HIDDEN,
            use_filtered: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferSection {
    pub k: usize,
    pub top_k: usize,
    pub nms_iou: f64,
    pub nms_score: f64,
    pub aggregation: Aggregation,
    pub method: Method,
}

impl Default for InferSection {
    fn default() -> Self {
        InferSection {
            k: hcvrd::infer::DEFAULT_K,
            top_k: 3,
            nms_iou: hcvrd::geometry::NMS_IOU_THRESHOLD,
            nms_score: hcvrd::geometry::NMS_SCORE_THRESHOLD,
            aggregation: Aggregation::BestDistance,
            method: Method::Metric,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub suites: Vec<String>,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            suites: hcvrd::evalbench::Suite::ALL.iter().map(|s| s.as_str().to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads for data-parallel stages; 0 lets the runtime decide.
    pub threads: usize,
    pub output_dir: PathBuf,
    pub paths: Paths,
    pub ingest: IngestSection,
    pub split: SplitSection,
    pub filter: FilterSection,
    pub train: TrainSection,
    pub infer: InferSection,
    pub eval: EvalSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            threads: 0,
            output_dir: PathBuf::from("hcvrd-out"),
            paths: Paths::default(),
            ingest: IngestSection::default(),
            split: SplitSection::default(),
            filter: FilterSection::default(),
            train: TrainSection::default(),
            infer: InferSection::default(),
            eval: EvalSection::default(),
        }
    }
}

/// Parses `a.b.c=value`; the value is read as a TOML literal when possible
/// and as a bare string otherwise.
fn parse_override(spec: &str) -> CliResult<(Vec<String>, toml::Value)> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("override '{spec}' is not of the form key=value")))?;
    let keys: Vec<String> = key.trim().split('.').map(str::to_string).collect();
    if keys.iter().any(String::is_empty) {
        return Err(CliError::Usage(format!("override '{spec}' has an empty key segment")));
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    Ok((keys, value))
}

fn apply_override(table: &mut toml::Table, keys: &[String], value: toml::Value) -> CliResult<()> {
    let (last, parents) = keys.split_last().expect("keys are non-empty");
    let mut cur = table;
    for k in parents {
        cur = cur
            .entry(k.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| CliError::Usage(format!("'{k}' is not a section")))?;
    }
    cur.insert(last.clone(), value);
    Ok(())
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl RunConfig {
    /// Reads `path` (if given), applies overrides and resolves relative paths
    /// against the config file's directory.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> CliResult<Self> {
        let mut table = match path {
            Some(p) => {
                if !p.exists() {
                    return Err(CliError::MissingInput(p.to_path_buf()));
                }
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
                text.parse::<toml::Table>()
                    .map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for spec in overrides {
            let (keys, value) = parse_override(spec)?;
            apply_override(&mut table, &keys, value)?;
        }
        let mut cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Usage(format!("invalid configuration: {}", e.message())))?;
        let base = path.and_then(Path::parent).map(Path::to_path_buf).unwrap_or_default();
        resolve(&base, &mut cfg.output_dir);
        for p in cfg.paths.iter_mut() {
            resolve(&base, p);
            existing(p)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |msg: String| Err(CliError::Usage(msg));
        if !(self.ingest.merge_threshold > 0.0 && self.ingest.merge_threshold <= 1.0) {
            return bad(format!("ingest.merge_threshold must be in (0, 1], got {}", self.ingest.merge_threshold));
        }
        if self.filter.group_size < 2 {
            return bad(format!("filter.group_size must be >= 2, got {}", self.filter.group_size));
        }
        if !(0.0..=1.0).contains(&self.filter.keep_ratio) {
            return bad(format!("filter.keep_ratio must be in [0, 1], got {}", self.filter.keep_ratio));
        }
        if self.infer.k == 0 || self.infer.top_k == 0 {
            return bad("infer.k and infer.top_k must be >= 1".into());
        }
        for (name, v) in [("infer.nms_iou", self.infer.nms_iou), ("infer.nms_score", self.infer.nms_score)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must be in [0, 1], got {v}"));
            }
        }
        for s in &self.eval.suites {
            s.parse::<hcvrd::evalbench::Suite>().map_err(|e| CliError::Usage(e.to_string()))?;
        }
        self.train_config().validate().map_err(|e| CliError::Usage(format!("train: {e}")))?;
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            learning_rate: t.learning_rate,
            decay_factor: t.decay_factor,
            decay_every: t.decay_every,
            epochs: t.epochs,
            batch_size: t.batch_size,
            web_per_class: t.web_per_class,
            web_negative_pool: t.web_negative_pool,
            per_anchor_negatives: t.per_anchor_negatives,
            margin: t.margin,
            seed: self.seed,
        }
    }

    pub fn filter_config(&self) -> FilterConfig {
        FilterConfig {
            group_size: self.filter.group_size,
            epochs: self.filter.epochs,
            learning_rate: self.filter.learning_rate,
            seed: self.seed,
        }
    }

    /// A configured input path that must exist.
    pub fn input(&self, name: &str, p: &Option<PathBuf>) -> CliResult<PathBuf> {
        let p = p.as_ref().ok_or_else(|| CliError::Usage(format!("paths.{name} is not configured")))?;
        existing(p)
    }

    /// A file under the output directory.
    pub fn out(&self, file: &str) -> PathBuf {
        self.output_dir.join(file)
    }

    /// A file under the output directory produced by an earlier stage.
    pub fn artifact(&self, file: &str) -> CliResult<PathBuf> {
        existing(&self.out(file))
    }
}

pub fn existing(p: &Path) -> CliResult<PathBuf> {
    if p.exists() {
        Ok(p.to_path_buf())
    } else {
        Err(CliError::MissingInput(p.to_path_buf()))
    }
}

impl Paths {
    fn iter_mut(&mut self) -> impl Iterator<Item = &mut PathBuf> {
        [
            &mut self.annotations,
            &mut self.detections,
            &mut self.lemmas,
            &mut self.subtypes,
            &mut self.word_vectors,
            &mut self.dataset_features,
            &mut self.web_features,
            &mut self.web_labels,
            &mut self.universe,
        ]
        .into_iter()
        .flatten()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn overrides_and_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(dir.path().join("a.jsonl"), "").unwrap();
        std::fs::write(&path, "seed = 3\n[paths]\nannotations = \"a.jsonl\"\n[split]\ntrain_size = 5\n").unwrap();
        let cfg = RunConfig::load(
            Some(&path),
            &["split.test_seen_size=2".into(), "infer.method=class_mean".into(), "output_dir=out".into()],
        )
        .unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!((cfg.split.train_size, cfg.split.test_seen_size), (5, 2));
        assert_eq!(cfg.infer.method, Method::ClassMean);
        assert_eq!(cfg.paths.annotations, Some(dir.path().join("a.jsonl")));
        assert_eq!(cfg.output_dir, dir.path().join("out"));
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(matches!(RunConfig::load(None, &["bogus=1".into()]), Err(CliError::Usage(_))));
        assert!(matches!(RunConfig::load(None, &["filter.keep_ratio=1.5".into()]), Err(CliError::Usage(_))));
        assert!(matches!(RunConfig::load(None, &["eval.suites=[\"odd\"]".into()]), Err(CliError::Usage(_))));
        assert!(matches!(RunConfig::load(None, &["novalue".into()]), Err(CliError::Usage(_))));
    }

    #[test]
    fn missing_input_path_is_named() {
        let err = RunConfig::load(None, &["paths.lemmas=\"/nonexistent/lemmas.tsv\"".into()]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("/nonexistent/lemmas.tsv"));
    }

    #[test]
    fn missing_config_file_is_named() {
        let err = RunConfig::load(Some(Path::new("/nonexistent/run.toml")), &[]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("/nonexistent/run.toml"));
    }
}
