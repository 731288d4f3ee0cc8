//! File-level workflow shared by the CLI and the runnable examples:
//! prepare → pretrain → evaluate → report.
//!
//! Everything a run produces lives under one output directory:
//!
//! ```text
//! <out>/data/manifest.toml      synthetic corpora (unless a manifest is supplied)
//! <out>/meta.jsonl              verbalized pretraining examples
//! <out>/build_report.json
//! <out>/contrastive.ckpt        + contrastive.loss.jsonl
//! <out>/efl.ckpt                + efl.loss.jsonl
//! <out>/<command>/results.{json,md}
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::efl::train_efl_baseline;
use crate::error::{Error, Result};
use crate::eval::{
    evaluate_few_shot, evaluate_zero_shot, repetition_seeds, sweep, Classifier, ContrastiveModel, EflModel,
    EvalReport, RandomGuess, DEFAULT_SHOT_GRID,
};
use crate::meta_task::{
    build_meta_dataset, read_jsonl, write_jsonl, DatasetManifest, LabelKeyScope, LabelSet, MetaExample, Partition,
};
use crate::predictor::{rank_labels, PredictorConfig};
use crate::report::{emit_report, render_case_study};
use crate::synthetic::{default_suite, write_suite};
use crate::training::{init_checkpoint, pretrain_excluding, TrainConfig, TrainOutcome};

pub const OUT_DIR_ENV: &str = "NESTED_ENTAIL_OUT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    pub synthetic_seed: u64,
    pub per_label_cap: usize,
    pub meta_seed: u64,
    pub label_key_scope: LabelKeyScope,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            synthetic_seed: 7,
            per_label_cap: 128,
            meta_seed: 7,
            label_key_scope: LabelKeyScope::Global,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub k: usize,
    pub repetitions: usize,
    pub seed: u64,
    pub grid: Vec<usize>,
    /// Test datasets to evaluate; empty means the whole test partition.
    pub datasets: Vec<String>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            k: 10,
            repetitions: 3,
            seed: 100,
            grid: DEFAULT_SHOT_GRID.to_vec(),
            datasets: Vec::new(),
        }
    }
}

impl EvalConfig {
    pub fn seeds(&self) -> Vec<u64> {
        repetition_seeds(self.seed, self.repetitions)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub data: DataConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub predictor: PredictorConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            data: DataConfig::default(),
            train: desk_scale_train_config(),
            eval: EvalConfig::default(),
            predictor: PredictorConfig::default(),
        }
    }
}

/// Training settings for the bundled toy encoder. The peak learning rate is
/// raised to 1e-2 because the encoder starts from random weights.
pub fn desk_scale_train_config() -> TrainConfig {
    TrainConfig {
        learning_rate: 1e-2,
        ..TrainConfig::default()
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&raw).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let body = toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))?;
        fs::write(path, body).map_err(|e| Error::io(path, e))
    }

    /// One seed for every stage.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.data.synthetic_seed = seed;
        self.data.meta_seed = seed;
        self.train.seed = seed;
        self.eval.seed = seed.wrapping_add(100);
        self
    }
}

#[derive(Debug, Clone)]
pub struct Workspace {
    pub root: PathBuf,
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn default_manifest(&self) -> PathBuf {
        self.root.join("data").join("manifest.toml")
    }

    pub fn meta(&self) -> PathBuf {
        self.root.join("meta.jsonl")
    }

    pub fn build_report(&self) -> PathBuf {
        self.root.join("build_report.json")
    }

    pub fn checkpoint(&self, model: &str) -> PathBuf {
        self.root.join(format!("{model}.ckpt"))
    }

    pub fn loss_curve(&self, model: &str) -> PathBuf {
        self.root.join(format!("{model}.loss.jsonl"))
    }

    pub fn results_dir(&self, command: &str) -> PathBuf {
        self.root.join(command)
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Generates the synthetic suite (unless `manifest` is given), then builds
/// and writes the verbalized pretraining set and its build report.
pub fn prepare(cfg: &PipelineConfig, ws: &Workspace, manifest: Option<&Path>) -> Result<DatasetManifest> {
    ensure_dir(&ws.root)?;
    let manifest = match manifest {
        Some(path) => DatasetManifest::load(path)?,
        None => {
            let dir = ws.root.join("data");
            write_suite(&dir, &default_suite(), cfg.data.synthetic_seed)?;
            DatasetManifest::load(dir.join("manifest.toml"))?
        }
    };
    let meta = build_meta_dataset(&manifest, cfg.data.per_label_cap, cfg.data.meta_seed, cfg.data.label_key_scope)?;
    write_jsonl(&ws.meta(), &meta.examples)?;
    let mut report = serde_json::to_string_pretty(&meta.report)?;
    report.push('\n');
    fs::write(ws.build_report(), report).map_err(|e| Error::io(ws.build_report(), e))?;
    manifest.access.clear();
    Ok(manifest)
}

pub fn load_meta(ws: &Workspace) -> Result<Vec<MetaExample>> {
    read_jsonl(&ws.meta())
}

fn test_ids(manifest: &DatasetManifest) -> BTreeSet<String> {
    manifest.partition(Partition::Test).map(|e| e.dataset_id.clone()).collect()
}

fn label_sets(manifest: &DatasetManifest) -> Result<BTreeMap<String, LabelSet>> {
    manifest
        .entries
        .iter()
        .map(|e| Ok((e.dataset_id.clone(), e.label_set()?)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelChoice {
    Contrastive,
    Efl,
}

impl ModelChoice {
    pub fn file_stem(self) -> &'static str {
        match self {
            ModelChoice::Contrastive => "contrastive",
            ModelChoice::Efl => "efl",
        }
    }
}

/// Trains one model on the prepared meta dataset and writes its checkpoint
/// and loss curve. Batches from test-partition datasets abort the run.
pub fn pretrain(cfg: &PipelineConfig, ws: &Workspace, manifest: &DatasetManifest, model: ModelChoice) -> Result<TrainOutcome> {
    let meta = load_meta(ws)?;
    let outcome = match model {
        ModelChoice::Contrastive => pretrain_excluding(&meta, &cfg.train, &test_ids(manifest))?,
        ModelChoice::Efl => {
            if let Some(ex) = meta.iter().find(|m| test_ids(manifest).contains(&m.dataset_id)) {
                return Err(Error::ExcludedDataset { batch: 0, dataset_id: ex.dataset_id.clone() });
            }
            train_efl_baseline(&meta, &label_sets(manifest)?, &cfg.train)?
        }
    };
    outcome.checkpoint.save(ws.checkpoint(model.file_stem()))?;
    write_jsonl(&ws.loss_curve(model.file_stem()), &outcome.curve)?;
    Ok(outcome)
}

pub fn load_model(path: &Path, cfg: &PipelineConfig) -> Result<Box<dyn Classifier>> {
    let ckpt = Checkpoint::load(path)?;
    Ok(match ckpt.kind {
        crate::checkpoint::ModelKind::Contrastive => {
            let mut m = ContrastiveModel::new("contrastive", ckpt);
            m.predictor = cfg.predictor;
            Box::new(m)
        }
        crate::checkpoint::ModelKind::Efl => Box::new(EflModel::new("efl", ckpt)?),
    })
}

pub fn eval_zero(cfg: &PipelineConfig, ws: &Workspace, manifest: &DatasetManifest, model: &dyn Classifier) -> Result<EvalReport> {
    let report = evaluate_zero_shot(model, manifest, &cfg.eval.datasets)?;
    let dir = ws.results_dir("eval-zero");
    ensure_dir(&dir)?;
    emit_report(std::slice::from_ref(&report), &dir, &cfg.train.hash(), &[])?;
    Ok(report)
}

pub fn eval_few(cfg: &PipelineConfig, ws: &Workspace, manifest: &DatasetManifest, model: &dyn Classifier) -> Result<EvalReport> {
    let seeds = cfg.eval.seeds();
    let report = evaluate_few_shot(model, manifest, &cfg.eval.datasets, cfg.eval.k, &seeds, &cfg.train)?;
    let dir = ws.results_dir("eval-few");
    ensure_dir(&dir)?;
    emit_report(std::slice::from_ref(&report), &dir, &cfg.train.hash(), &seeds)?;
    Ok(report)
}

pub fn run_sweep(cfg: &PipelineConfig, ws: &Workspace, manifest: &DatasetManifest, model: &dyn Classifier) -> Result<Vec<EvalReport>> {
    let seeds = cfg.eval.seeds();
    let reports = sweep(model, manifest, &cfg.eval.datasets, &cfg.eval.grid, &seeds, &cfg.train)?;
    let dir = ws.results_dir("sweep");
    ensure_dir(&dir)?;
    emit_report(&reports, &dir, &cfg.train.hash(), &seeds)?;
    Ok(reports)
}

/// Paired comparison: the contrastive model, the EFL baseline, random
/// guessing and an untrained contrastive encoder, each at 0-shot and
/// `cfg.eval.k`-shot on identical test inputs and support seeds.
pub fn comparison(cfg: &PipelineConfig, ws: &Workspace, manifest: &DatasetManifest) -> Result<Vec<EvalReport>> {
    let seeds = cfg.eval.seeds();
    let meta = load_meta(ws)?;
    let mut untrained = ContrastiveModel::new("untrained", init_checkpoint(&meta, &cfg.train));
    untrained.predictor = cfg.predictor;
    let mut models: Vec<Box<dyn Classifier>> = Vec::new();
    models.push(load_model(&ws.checkpoint("contrastive"), cfg)?);
    models.push(load_model(&ws.checkpoint("efl"), cfg)?);
    models.push(Box::new(RandomGuess { seed: cfg.eval.seed }));
    models.push(Box::new(untrained));

    let mut reports = Vec::new();
    for model in &models {
        reports.push(evaluate_zero_shot(model.as_ref(), manifest, &cfg.eval.datasets)?);
        reports.push(evaluate_few_shot(
            model.as_ref(),
            manifest,
            &cfg.eval.datasets,
            cfg.eval.k,
            &seeds,
            &cfg.train,
        )?);
    }
    let dir = ws.results_dir("report");
    ensure_dir(&dir)?;
    emit_report(&reports, &dir, &cfg.train.hash(), &seeds)?;
    Ok(reports)
}

/// Zero-shot label rankings for free-text inputs.
pub fn case_study(ckpt: &Checkpoint, labels: &LabelSet, texts: &[String], top: usize) -> Result<String> {
    let rows = texts
        .iter()
        .map(|t| Ok((t.clone(), rank_labels(t, labels, &ckpt.encoder)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(render_case_study(&rows, top))
}
