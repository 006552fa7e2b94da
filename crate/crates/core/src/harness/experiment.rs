use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::features::{build_features, FeatureSet};
use super::metrics::Metrics;
use super::split::{assign_splits, SplitSpec};
use super::train::{predict, train_predictor, TrainHistory};
use crate::error::{Error, Result};
use crate::nn::{LayerSpec, Model, TrainConfig};
use crate::predictors::{self, PredictorKind};
use crate::scene_sim::{load_dataset, Dataset};
use crate::seed::derive_seed;

pub const REPORT_FILE: &str = "report.json";
pub const DETAILS_FILE: &str = "details.json";
pub const TRADEOFF_FILE: &str = "tradeoff.csv";

/// Inference passes per predictor; the median is reported.
const TIMING_PASSES: usize = 5;

fn default_predictors() -> Vec<PredictorKind> {
    PredictorKind::ALL.to_vec()
}

/// Experiment description, read from TOML.
///
/// ```toml
/// dataset = "d5"
/// seed = 0
/// predictors = ["position_mlp", "bbox_mlp", "mask_lenet", "image_cnn_baseline"]
///
/// [train.bbox_mlp]
/// batch_size = 128
/// base_lr = 0.01
/// decay_epochs = [15, 30]
/// decay_factor = 0.1
/// total_epochs = 50
/// ```
///
/// A relative `dataset` path is resolved against the config file's directory.
/// Missing `train` sections fall back to each predictor's defaults, `layers`
/// sections replace the default architecture, and a `split` section re-tags
/// the manifest instead of using its stored split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_predictors")]
    pub predictors: Vec<PredictorKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitSpec>,
    #[serde(default)]
    pub train: BTreeMap<String, TrainConfig>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub layers: BTreeMap<String, Vec<LayerSpec>>,
    /// Directory a relative `dataset` is resolved against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    /// All four predictors with their default training settings written out.
    pub fn with_defaults(dataset: impl Into<PathBuf>) -> Self {
        Self {
            dataset: dataset.into(),
            seed: 0,
            predictors: default_predictors(),
            split: None,
            train: PredictorKind::ALL
                .iter()
                .map(|k| (k.tag().to_string(), k.default_train_config()))
                .collect(),
            layers: BTreeMap::new(),
            base_dir: None,
        }
    }

    pub fn from_toml(text: &str, origin: &Path) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::parse(origin, e))?;
        cfg.validate().map_err(|e| Error::parse(origin, e))?;
        Ok(cfg)
    }

    /// Reads a config and resolves a relative dataset path against its directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text, path)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn dataset_path(&self) -> PathBuf {
        match &self.base_dir {
            Some(dir) if self.dataset.is_relative() => dir.join(&self.dataset),
            _ => self.dataset.clone(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.predictors.is_empty() {
            return Err(Error::Config("no predictors configured".into()));
        }
        for (i, k) in self.predictors.iter().enumerate() {
            if self.predictors[..i].contains(k) {
                return Err(Error::Config(format!("predictor `{k}` listed twice")));
            }
        }
        for name in self.train.keys().chain(self.layers.keys()) {
            name.parse::<PredictorKind>()?;
        }
        for (name, t) in &self.train {
            t.validate()
                .map_err(|e| Error::Config(format!("train.{name}: {e}")))?;
        }
        if let Some(s) = &self.split {
            s.validate()?;
        }
        Ok(())
    }

    pub fn train_config(&self, kind: PredictorKind) -> TrainConfig {
        self.train
            .get(kind.tag())
            .cloned()
            .unwrap_or_else(|| kind.default_train_config())
    }

    /// SHA-256 of the canonical TOML form (dataset path as written), hex encoded.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }
}

/// Per-predictor results on the test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorReport {
    pub top1: f64,
    pub top2: f64,
    pub top3: f64,
    pub params: usize,
    pub train_s: f64,
    pub infer_ms_per_sample: f64,
    pub best_epoch: usize,
    pub test_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub seed: u64,
    pub config_digest: String,
    pub predictors: BTreeMap<String, PredictorReport>,
}

impl ExperimentReport {
    pub fn from_json(text: &str, origin: &Path) -> Result<Self> {
        let r: Self = serde_json::from_str(text).map_err(|e| Error::parse(origin, e))?;
        if let Some((name, _)) = r.predictors.iter().find(|(_, p)| {
            !((0.0..=100.0).contains(&p.top1) && p.top1 <= p.top2 && p.top2 <= p.top3 && p.top3 <= 100.0)
        }) {
            return Err(Error::parse(origin, format!("{name}: top-k accuracies are not monotone")));
        }
        Ok(r)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorDetails {
    pub history: TrainHistory,
    pub confusion: Vec<Vec<u32>>,
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub report: ExperimentReport,
    pub details: BTreeMap<String, PredictorDetails>,
}

impl ExperimentOutput {
    /// Writes `report.json`, `details.json` and `tradeoff.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let put = |name: &str, body: String| {
            let p = dir.join(name);
            std::fs::write(&p, body).map_err(|e| Error::io(&p, e))
        };
        put(REPORT_FILE, self.report.to_json())?;
        put(
            DETAILS_FILE,
            serde_json::to_string_pretty(&self.details).expect("details serialize"),
        )?;
        put(TRADEOFF_FILE, super::report::tradeoff_csv(&super::report::tradeoff_table(&self.report)))
    }
}

/// Loads the configured dataset, re-tagging splits when the config asks to.
pub fn load_for(cfg: &ExperimentConfig) -> Result<Dataset> {
    let mut ds = load_dataset(&cfg.dataset_path())?;
    if let Some(spec) = &cfg.split {
        let mut rows = ds.manifest();
        assign_splits(&mut rows, spec)?;
        for (rec, row) in ds.records.iter_mut().zip(rows) {
            rec.row.split = row.split;
        }
    }
    Ok(ds)
}

/// Seed for a predictor's initialization and shuffling within an experiment.
pub fn predictor_seed(experiment_seed: u64, kind: PredictorKind, train: &TrainConfig) -> u64 {
    derive_seed(experiment_seed, &[kind.ordinal(), train.seed])
}

/// Builds and trains one predictor on prepared features.
pub fn fit(
    cfg: &ExperimentConfig,
    kind: PredictorKind,
    features: &FeatureSet,
    num_classes: usize,
) -> Result<(Model, TrainHistory, f64)> {
    let mut tc = cfg.train_config(kind);
    let seed = predictor_seed(cfg.seed, kind, &tc);
    tc.seed = seed;
    let model = predictors::build(
        kind,
        &features.input_shape,
        num_classes,
        cfg.layers.get(kind.tag()).map(Vec::as_slice),
        seed,
    )
    .map_err(|e| e.in_stage("build"))?;
    let started = Instant::now();
    let (model, history) = train_predictor(model, &features.train, &features.val, &tc)
        .map_err(|e| e.in_stage("train"))?;
    Ok((model, history, started.elapsed().as_secs_f64()))
}

/// Test-split metrics plus the median per-sample inference time in ms.
pub fn evaluate(model: &Model, features: &FeatureSet) -> Result<(Metrics, f64)> {
    let test = &features.test;
    if test.is_empty() {
        return Err(Error::Split("test split is empty".into()));
    }
    let mut times = Vec::with_capacity(TIMING_PASSES);
    let mut logits = Vec::new();
    for _ in 0..TIMING_PASSES {
        let t = Instant::now();
        logits = predict(model, test)?;
        times.push(t.elapsed().as_secs_f64());
    }
    times.sort_by(f64::total_cmp);
    let ms = times[TIMING_PASSES / 2] * 1e3 / test.len() as f64;
    Ok((Metrics::evaluate(&logits, &test.labels, model.num_classes())?, ms))
}

/// Build, train and evaluate every configured predictor.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate().map_err(|e| e.in_stage("config"))?;
    let ds = load_for(cfg).map_err(|e| e.in_stage("load"))?;
    run_on_dataset(cfg, &ds)
}

/// Like [`run_experiment`] with the dataset already in memory.
pub fn run_on_dataset(cfg: &ExperimentConfig, ds: &Dataset) -> Result<ExperimentOutput> {
    let q = ds.meta.preset.channel.num_beams;
    let mut predictors = BTreeMap::new();
    let mut details = BTreeMap::new();
    for &kind in &cfg.predictors {
        log::info!("{kind}: preparing features");
        let features = build_features(ds, kind).map_err(|e| e.in_stage("features"))?;
        log::info!(
            "{kind}: training on {} samples ({} val, {} test)",
            features.train.len(),
            features.val.len(),
            features.test.len()
        );
        let (model, history, train_s) = fit(cfg, kind, &features, q)?;
        let (metrics, infer_ms) = evaluate(&model, &features).map_err(|e| e.in_stage("evaluate"))?;
        log::info!(
            "{kind}: top-1 {:.2}% top-3 {:.2}% with {} parameters",
            metrics.top1,
            metrics.top3,
            model.param_count()
        );
        predictors.insert(
            kind.tag().to_string(),
            PredictorReport {
                top1: metrics.top1,
                top2: metrics.top2,
                top3: metrics.top3,
                params: model.param_count(),
                train_s,
                infer_ms_per_sample: infer_ms,
                best_epoch: history.best_epoch,
                test_samples: metrics.samples,
            },
        );
        details.insert(
            kind.tag().to_string(),
            PredictorDetails {
                history,
                confusion: metrics.confusion,
            },
        );
    }
    Ok(ExperimentOutput {
        report: ExperimentReport {
            seed: cfg.seed,
            config_digest: cfg.digest(),
            predictors,
        },
        details,
    })
}
