//! Zero-shot and few-shot evaluation protocols over the test partition.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, ModelKind};
use crate::efl;
use crate::error::{Error, Result};
use crate::meta_task::{DatasetManifest, LabelSet, ManifestEntry, Partition, RawExample};
use crate::predictor::{Predictor, PredictorConfig};
use crate::sampler::{sample_support_set, SupportSet};
use crate::training::{finetune, TrainConfig};

/// Realized random-guess accuracy on a balanced 4-class news benchmark.
pub const REFERENCE_RANDOM_4WAY: f64 = 0.240;
/// Random-guess average over the nine-dataset reference benchmark.
pub const REFERENCE_RANDOM_AVERAGE: f64 = 0.449;

/// Few-shot sweep grid.
pub const DEFAULT_SHOT_GRID: [usize; 5] = [0, 10, 20, 40, 80];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetResult {
    pub model: String,
    pub dataset_id: String,
    pub k: usize,
    pub repetition_seeds: Vec<u64>,
    pub accuracies: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub seen: Option<bool>,
    pub n_test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub k: usize,
    pub repetitions: usize,
    pub checkpoint_hash: Option<String>,
    pub datasets: Vec<DatasetResult>,
    /// Arithmetic mean of the per-dataset means.
    pub average: f64,
}

impl EvalReport {
    pub fn new(model: String, k: usize, repetitions: usize, checkpoint_hash: Option<String>, datasets: Vec<DatasetResult>) -> Self {
        let average = if datasets.is_empty() {
            0.0
        } else {
            datasets.iter().map(|d| d.mean).sum::<f64>() / datasets.len() as f64
        };
        Self {
            model,
            k,
            repetitions,
            checkpoint_hash,
            datasets,
            average,
        }
    }

    pub fn get(&self, dataset_id: &str) -> Option<&DatasetResult> {
        self.datasets.iter().find(|d| d.dataset_id == dataset_id)
    }
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    // Identical values must give their exact value and a std of exactly 0,
    // which summation rounding would not guarantee.
    if values.iter().all(|v| *v == values[0]) {
        return (values[0], 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// `(acc_with - acc_without) / acc_without`.
pub fn relative_performance_gain(acc_with: f64, acc_without: f64) -> Result<f64> {
    if acc_without == 0.0 {
        return Err(Error::ZeroBaseline);
    }
    Ok((acc_with - acc_without) / acc_without)
}

/// One seed per repetition, derived from a base seed.
pub fn repetition_seeds(base: u64, repetitions: usize) -> Vec<u64> {
    (0..repetitions as u64).map(|r| base.wrapping_add(r)).collect()
}

/// A classifier under evaluation.
pub trait Classifier {
    fn name(&self) -> String;

    fn checkpoint_hash(&self) -> Option<String> {
        None
    }

    /// Accuracy on `test` with only the label names available.
    fn zero_shot(&self, test: &[RawExample], labels: &LabelSet) -> Result<f64>;

    /// Accuracy on `test` after adapting a fresh copy of the model to `support`.
    fn few_shot(&self, test: &[RawExample], support: &SupportSet, cfg: &TrainConfig) -> Result<f64>;
}

fn accuracy<F>(test: &[RawExample], mut predict: F) -> Result<f64>
where
    F: FnMut(&str) -> Result<String>,
{
    if test.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    for ex in test {
        if predict(&ex.text)? == ex.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / test.len() as f64)
}

/// The dual-use encoder ranked by query/candidate similarity.
pub struct ContrastiveModel {
    pub name: String,
    pub checkpoint: Checkpoint,
    pub predictor: PredictorConfig,
}

impl ContrastiveModel {
    pub fn new(name: impl Into<String>, checkpoint: Checkpoint) -> Self {
        Self {
            name: name.into(),
            checkpoint,
            predictor: PredictorConfig::default(),
        }
    }

    fn accuracy_with(&self, ckpt: &Checkpoint, test: &[RawExample], support: &SupportSet) -> Result<f64> {
        let predictor = Predictor::new(&ckpt.encoder, support, self.predictor)?;
        accuracy(test, |t| Ok(predictor.predict(t)?.label))
    }
}

impl Classifier for ContrastiveModel {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn checkpoint_hash(&self) -> Option<String> {
        self.checkpoint.digest().ok()
    }

    fn zero_shot(&self, test: &[RawExample], labels: &LabelSet) -> Result<f64> {
        self.accuracy_with(&self.checkpoint, test, &SupportSet::empty(labels.clone()))
    }

    fn few_shot(&self, test: &[RawExample], support: &SupportSet, cfg: &TrainConfig) -> Result<f64> {
        if support.labels.len() < 2 {
            return self.accuracy_with(&self.checkpoint, test, support);
        }
        let tuned = finetune(&self.checkpoint, support, cfg)?.checkpoint;
        self.accuracy_with(&tuned, test, support)
    }
}

/// Binary entailment discriminator.
pub struct EflModel {
    pub name: String,
    pub checkpoint: Checkpoint,
}

impl EflModel {
    pub fn new(name: impl Into<String>, checkpoint: Checkpoint) -> Result<Self> {
        if checkpoint.kind != ModelKind::Efl {
            return Err(Error::Checkpoint("expected an EFL checkpoint".into()));
        }
        Ok(Self {
            name: name.into(),
            checkpoint,
        })
    }
}

impl Classifier for EflModel {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn checkpoint_hash(&self) -> Option<String> {
        self.checkpoint.digest().ok()
    }

    fn zero_shot(&self, test: &[RawExample], labels: &LabelSet) -> Result<f64> {
        accuracy(test, |t| Ok(efl::predict(&self.checkpoint, t, labels)?.label))
    }

    fn few_shot(&self, test: &[RawExample], support: &SupportSet, cfg: &TrainConfig) -> Result<f64> {
        let tuned = efl::finetune_efl(&self.checkpoint, support, cfg)?.checkpoint;
        accuracy(test, |t| Ok(efl::predict(&tuned, t, &support.labels)?.label))
    }
}

/// Uniform random label per test example.
pub struct RandomGuess {
    pub seed: u64,
}

impl RandomGuess {
    fn guess(&self, test: &[RawExample], labels: &LabelSet, salt: u64) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ salt);
        accuracy(test, |_| Ok(labels.labels()[rng.gen_range(0..labels.len())].clone()))
    }
}

impl Classifier for RandomGuess {
    fn name(&self) -> String {
        "random".into()
    }

    fn zero_shot(&self, test: &[RawExample], labels: &LabelSet) -> Result<f64> {
        self.guess(test, labels, 0)
    }

    fn few_shot(&self, test: &[RawExample], support: &SupportSet, _cfg: &TrainConfig) -> Result<f64> {
        self.guess(test, &support.labels, support.seed.wrapping_add(1))
    }
}

fn test_entries<'m>(manifest: &'m DatasetManifest, dataset_ids: &[String]) -> Result<Vec<&'m ManifestEntry>> {
    if dataset_ids.is_empty() {
        return Ok(manifest.partition(Partition::Test).collect());
    }
    dataset_ids
        .iter()
        .map(|id| {
            let entry = manifest
                .get(id)
                .ok_or_else(|| Error::Manifest(format!("unknown dataset `{id}`")))?;
            if entry.partition != Partition::Test {
                return Err(Error::Manifest(format!("`{id}` is not in the test partition")));
            }
            Ok(entry)
        })
        .collect()
}

/// Zero-shot protocol: label names only, one repetition, full test splits.
/// Only the test splits are read. An empty `dataset_ids` means every test dataset.
pub fn evaluate_zero_shot(model: &dyn Classifier, manifest: &DatasetManifest, dataset_ids: &[String]) -> Result<EvalReport> {
    let mut results = Vec::new();
    for entry in test_entries(manifest, dataset_ids)? {
        let labels = entry.label_set()?;
        let test = manifest.read_test(entry)?;
        let acc = model.zero_shot(&test, &labels)?;
        results.push(DatasetResult {
            model: model.name(),
            dataset_id: entry.dataset_id.clone(),
            k: 0,
            repetition_seeds: Vec::new(),
            accuracies: vec![acc],
            mean: acc,
            std: 0.0,
            seen: entry.seen,
            n_test: test.len(),
        });
    }
    Ok(EvalReport::new(model.name(), 0, 1, model.checkpoint_hash(), results))
}

/// Few-shot protocol: one fresh support set per seed, each adapting a fresh
/// copy of the model, reported as mean ± std per dataset.
pub fn evaluate_few_shot(
    model: &dyn Classifier,
    manifest: &DatasetManifest,
    dataset_ids: &[String],
    k: usize,
    seeds: &[u64],
    cfg: &TrainConfig,
) -> Result<EvalReport> {
    if k == 0 {
        return Err(Error::Config("few-shot evaluation needs k >= 1".into()));
    }
    if seeds.is_empty() {
        return Err(Error::Config("at least one repetition seed is required".into()));
    }
    let mut results = Vec::new();
    for entry in test_entries(manifest, dataset_ids)? {
        let labels = entry.label_set()?;
        let train = manifest.read_train(entry)?;
        let test = manifest.read_test(entry)?;
        let accuracies = seeds
            .iter()
            .map(|&seed| {
                let support = sample_support_set(&train, &labels, k, seed)?;
                model.few_shot(&test, &support, cfg)
            })
            .collect::<Result<Vec<_>>>()?;
        let (mean, std) = mean_std(&accuracies);
        results.push(DatasetResult {
            model: model.name(),
            dataset_id: entry.dataset_id.clone(),
            k,
            repetition_seeds: seeds.to_vec(),
            accuracies,
            mean,
            std,
            seen: entry.seen,
            n_test: test.len(),
        });
    }
    Ok(EvalReport::new(model.name(), k, seeds.len(), model.checkpoint_hash(), results))
}

/// Zero-shot at `k = 0` and few-shot at every other grid point.
pub fn sweep(
    model: &dyn Classifier,
    manifest: &DatasetManifest,
    dataset_ids: &[String],
    grid: &[usize],
    seeds: &[u64],
    cfg: &TrainConfig,
) -> Result<Vec<EvalReport>> {
    grid.iter()
        .map(|&k| {
            if k == 0 {
                evaluate_zero_shot(model, manifest, dataset_ids)
            } else {
                evaluate_few_shot(model, manifest, dataset_ids, k, seeds, cfg)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rpg_examples() {
        let g = relative_performance_gain(0.632, 0.498).unwrap();
        assert!((g - 0.134 / 0.498).abs() < 1e-15);
        assert!((g - 0.2691).abs() < 1e-4);
        assert_eq!(relative_performance_gain(0.7, 0.7).unwrap(), 0.0);
        assert_eq!(relative_performance_gain(0.0, 0.5).unwrap(), -1.0);
        assert!(matches!(relative_performance_gain(0.5, 0.0), Err(Error::ZeroBaseline)));
    }

    #[test]
    fn std_zero_for_single_or_identical() {
        assert_eq!(mean_std(&[0.4]), (0.4, 0.0));
        assert_eq!(mean_std(&[0.5, 0.5, 0.5]).1, 0.0);
        let (m, s) = mean_std(&[0.0, 1.0]);
        assert_eq!((m, s), (0.5, 0.5));
    }

    #[test]
    fn average_is_mean_of_means() {
        let mk = |id: &str, mean: f64| DatasetResult {
            model: "m".into(),
            dataset_id: id.into(),
            k: 0,
            repetition_seeds: vec![],
            accuracies: vec![mean],
            mean,
            std: 0.0,
            seen: None,
            n_test: 1,
        };
        let r = EvalReport::new("m".into(), 0, 1, None, vec![mk("a", 0.1), mk("b", 0.7), mk("c", 0.4)]);
        assert!((r.average - 0.4).abs() < 1e-12);
    }

    #[test]
    fn one_label_dataset_is_always_right() {
        let labels = LabelSet::new("one", vec!["only".into()]).unwrap();
        let test: Vec<RawExample> = (0..5).map(|i| RawExample::new(format!("t{i}"), "only", "one").unwrap()).collect();
        assert_eq!(RandomGuess { seed: 3 }.zero_shot(&test, &labels).unwrap(), 1.0);
    }

    #[test]
    fn seeds_are_distinct() {
        assert_eq!(repetition_seeds(10, 3), vec![10, 11, 12]);
    }
}
