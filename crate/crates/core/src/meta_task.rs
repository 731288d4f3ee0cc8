//! Verbalization of labeled datasets into the nested-entailment format.
//!
//! A raw `(text, label)` record becomes a [`MetaExample`] with three surface
//! forms: the query (the sentence with every candidate label enumerated as a
//! multiple-choice prefix), the premise (the same sentence with a `sentence:`
//! prefix) and the hypothesis (the label name). The encoder learns whether the
//! query entails "premise entails hypothesis".

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Placeholder premise used for zero-shot pairs.
pub const NULL_PREMISE: &str = "NULL";
/// Separator between premise and hypothesis, and between the two halves of a
/// sentence pair.
pub const SEP_TOKEN: &str = "[SEP]";

/// One labeled sentence (or sentence pair joined with [`SEP_TOKEN`]).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawExample {
    pub text: String,
    pub label: String,
    pub dataset_id: String,
}

impl RawExample {
    pub fn new(
        text: impl Into<String>,
        label: impl Into<String>,
        dataset_id: impl Into<String>,
    ) -> Result<Self> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(Error::EmptyText);
        }
        Ok(Self {
            text,
            label: label.into(),
            dataset_id: dataset_id.into(),
        })
    }

    /// Builds a pair example; the halves are trimmed and joined with the separator.
    pub fn pair(
        text: &str,
        text2: &str,
        label: impl Into<String>,
        dataset_id: impl Into<String>,
    ) -> Result<Self> {
        if text.trim().is_empty() || text2.trim().is_empty() {
            return Err(Error::EmptyText);
        }
        Self::new(
            format!("{} {} {}", text.trim(), SEP_TOKEN, text2.trim()),
            label,
            dataset_id,
        )
    }
}

/// Ordered, duplicate-free label names of one dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSet {
    pub dataset_id: String,
    labels: Vec<String>,
}

impl LabelSet {
    pub fn new(dataset_id: impl Into<String>, labels: Vec<String>) -> Result<Self> {
        let dataset_id = dataset_id.into();
        if labels.is_empty() {
            return Err(Error::EmptyLabelSet(dataset_id));
        }
        let mut seen = BTreeSet::new();
        for label in &labels {
            if label.trim().is_empty() {
                return Err(Error::EmptyLabel);
            }
            if !seen.insert(label.as_str()) {
                return Err(Error::DuplicateLabel {
                    label: label.clone(),
                    dataset_id,
                });
            }
        }
        Ok(Self { dataset_id, labels })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn contains(&self, label: &str) -> bool {
        self.index_of(label).is_some()
    }

    fn check(&self, label: &str) -> Result<()> {
        if label.is_empty() {
            return Err(Error::EmptyLabel);
        }
        if !self.contains(label) {
            return Err(Error::UnknownLabel {
                label: label.to_string(),
                dataset_id: self.dataset_id.clone(),
            });
        }
        Ok(())
    }
}

/// Which records count as the same class for positive-pair matching.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelKeyScope {
    /// The hypothesis string alone; `positive` in two datasets is one class.
    #[default]
    Global,
    /// `(dataset_id, hypothesis)`.
    PerDataset,
}

impl LabelKeyScope {
    pub fn key(self, dataset_id: &str, hypothesis: &str) -> String {
        match self {
            LabelKeyScope::Global => hypothesis.to_string(),
            LabelKeyScope::PerDataset => format!("{dataset_id}::{hypothesis}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetaExample {
    pub query: String,
    pub premise: String,
    pub hypothesis: String,
    pub label_key: String,
    pub dataset_id: String,
}

impl MetaExample {
    pub fn is_null(&self) -> bool {
        self.premise == NULL_PREMISE
    }
}

/// `(1) a (2) b ... (n) z` for the labels in set order.
pub fn choice_prefix(labels: &LabelSet) -> String {
    labels
        .labels()
        .iter()
        .enumerate()
        .map(|(i, l)| format!("({}) {}", i + 1, l))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Query form of an arbitrary sentence against `labels`; used at test time
/// where the gold label is unknown.
pub fn query_for_text(text: &str, labels: &LabelSet) -> Result<String> {
    let text = text.trim();
    if text.is_empty() {
        return Err(Error::EmptyText);
    }
    Ok(format!("{}, sentence: {}", choice_prefix(labels), text))
}

/// Premise form of an arbitrary sentence.
pub fn premise_for_text(text: &str) -> Result<String> {
    let text = text.trim();
    if text.is_empty() {
        return Err(Error::EmptyText);
    }
    Ok(format!("sentence: {text}"))
}

pub fn verbalize_query(example: &RawExample, labels: &LabelSet) -> Result<String> {
    labels.check(&example.label)?;
    query_for_text(&example.text, labels)
}

pub fn verbalize_premise(example: &RawExample) -> Result<String> {
    premise_for_text(&example.text)
}

pub fn verbalize_hypothesis(label: &str, labels: &LabelSet) -> Result<String> {
    labels.check(label)?;
    Ok(label.to_string())
}

pub fn verbalize(example: &RawExample, labels: &LabelSet, scope: LabelKeyScope) -> Result<MetaExample> {
    let hypothesis = verbalize_hypothesis(&example.label, labels)?;
    Ok(MetaExample {
        query: verbalize_query(example, labels)?,
        premise: verbalize_premise(example)?,
        label_key: scope.key(&example.dataset_id, &hypothesis),
        hypothesis,
        dataset_id: example.dataset_id.clone(),
    })
}

/// Replaces each premise with [`NULL_PREMISE`] independently with probability
/// `ratio`. Every call draws fresh from `rng`.
pub fn nullify_premises<R: Rng + ?Sized>(
    batch: &[MetaExample],
    ratio: f64,
    rng: &mut R,
) -> Result<Vec<MetaExample>> {
    let mask = null_mask(batch.len(), ratio, rng)?;
    Ok(batch
        .iter()
        .zip(mask)
        .map(|(ex, null)| {
            let mut ex = ex.clone();
            if null {
                ex.premise = NULL_PREMISE.to_string();
            }
            ex
        })
        .collect())
}

/// Bernoulli(`ratio`) draw per position; `true` means nullify.
pub fn null_mask<R: Rng + ?Sized>(n: usize, ratio: f64, rng: &mut R) -> Result<Vec<bool>> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::Fraction {
            what: "null ratio",
            value: ratio,
        });
    }
    Ok((0..n).map(|_| rng.gen::<f64>() < ratio).collect())
}

// ---------------------------------------------------------------------------
// Files and manifests

/// One line of a dataset file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub text: String,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text2: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    Pretrain,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub dataset_id: String,
    pub partition: Partition,
    /// Pretraining data, or the training split from which support sets are drawn.
    pub path: PathBuf,
    /// Held-out evaluation split; test partition only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_path: Option<PathBuf>,
    pub labels: Vec<String>,
    #[serde(default)]
    pub pair: bool,
    /// Whether the label names occur in pretraining; test partition only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seen: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub examples: Option<usize>,
}

impl ManifestEntry {
    pub fn label_set(&self) -> Result<LabelSet> {
        LabelSet::new(self.dataset_id.clone(), self.labels.clone())
    }
}

#[derive(Debug, Default)]
pub struct AccessLog(Mutex<Vec<PathBuf>>);

impl AccessLog {
    fn record(&self, path: &Path) {
        self.0.lock().unwrap().push(path.to_path_buf());
    }

    pub fn paths(&self) -> Vec<PathBuf> {
        self.0.lock().unwrap().clone()
    }

    pub fn clear(&self) {
        self.0.lock().unwrap().clear();
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestFile {
    #[serde(rename = "dataset")]
    datasets: Vec<ManifestEntry>,
}

/// Pretrain/test partition of the dataset collection.
///
/// Paths inside the manifest are resolved relative to the manifest file.
/// Every dataset read goes through [`DatasetManifest::read_train`] or
/// [`DatasetManifest::read_test`] and is recorded in [`DatasetManifest::access`].
#[derive(Debug)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
    pub access: AccessLog,
}

impl DatasetManifest {
    pub fn new(root: impl Into<PathBuf>, entries: Vec<ManifestEntry>) -> Result<Self> {
        let manifest = Self {
            root: root.into(),
            entries,
            access: AccessLog::default(),
        };
        manifest.validate_structure()?;
        Ok(manifest)
    }

    /// Parses the manifest and checks that every referenced file parses.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: ManifestFile =
            toml::from_str(&raw).map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let manifest = Self::new(root, file.datasets)?;
        manifest.validate_files()?;
        manifest.access.clear();
        Ok(manifest)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let body = toml::to_string_pretty(&ManifestFile {
            datasets: self.entries.clone(),
        })
        .map_err(|e| Error::Manifest(e.to_string()))?;
        fs::write(path, body).map_err(|e| Error::io(path, e))
    }

    fn validate_structure(&self) -> Result<()> {
        let mut partitions: HashMap<&str, Partition> = HashMap::new();
        for entry in &self.entries {
            entry.label_set()?;
            match partitions.insert(&entry.dataset_id, entry.partition) {
                Some(p) if p != entry.partition => {
                    return Err(Error::PartitionOverlap(entry.dataset_id.clone()))
                }
                Some(_) => {
                    return Err(Error::Manifest(format!(
                        "dataset `{}` listed twice",
                        entry.dataset_id
                    )))
                }
                None => {}
            }
            if entry.partition == Partition::Test && entry.test_path.is_none() {
                return Err(Error::Manifest(format!(
                    "test dataset `{}` has no test_path",
                    entry.dataset_id
                )));
            }
        }
        Ok(())
    }

    fn validate_files(&self) -> Result<()> {
        for entry in &self.entries {
            let train = self.read_train(entry)?;
            if let Some(n) = entry.examples {
                if n != train.len() {
                    return Err(Error::Manifest(format!(
                        "`{}` declares {n} examples, file has {}",
                        entry.dataset_id,
                        train.len()
                    )));
                }
            }
            if entry.partition == Partition::Test {
                self.read_test(entry)?;
            }
        }
        Ok(())
    }

    pub fn partition(&self, partition: Partition) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.partition == partition)
    }

    pub fn get(&self, dataset_id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.dataset_id == dataset_id)
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.root.join(path)
        }
    }

    pub fn read_train(&self, entry: &ManifestEntry) -> Result<Vec<RawExample>> {
        let path = self.resolve(&entry.path);
        self.access.record(&path);
        read_dataset(&path, &entry.label_set()?, entry.pair)
    }

    pub fn read_test(&self, entry: &ManifestEntry) -> Result<Vec<RawExample>> {
        let rel = entry.test_path.as_ref().ok_or_else(|| {
            Error::Manifest(format!("`{}` has no test split", entry.dataset_id))
        })?;
        let path = self.resolve(rel);
        self.access.record(&path);
        read_dataset(&path, &entry.label_set()?, entry.pair)
    }
}

/// Reads a line-delimited JSON dataset file, validating labels and text.
pub fn read_dataset(path: &Path, labels: &LabelSet, pair: bool) -> Result<Vec<RawExample>> {
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut out = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: DatasetRecord =
            serde_json::from_str(line).map_err(|e| parse_err(i + 1, e.to_string()))?;
        if !labels.contains(&rec.label) {
            return Err(parse_err(
                i + 1,
                format!(
                    "label `{}` not declared for `{}`",
                    rec.label, labels.dataset_id
                ),
            ));
        }
        let ex = match (pair, rec.text2.as_deref()) {
            (true, Some(t2)) => RawExample::pair(&rec.text, t2, rec.label, &labels.dataset_id),
            (true, None) => return Err(parse_err(i + 1, "pair dataset record lacks text2".into())),
            (false, _) => RawExample::new(rec.text, rec.label, &labels.dataset_id),
        }
        .map_err(|e| parse_err(i + 1, e.to_string()))?;
        out.push(ex);
    }
    Ok(out)
}

pub fn write_dataset(path: &Path, records: &[DatasetRecord]) -> Result<()> {
    let mut body = String::new();
    for rec in records {
        body.push_str(&serde_json::to_string(rec)?);
        body.push('\n');
    }
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut body = String::new();
    for item in items {
        body.push_str(&serde_json::to_string(item)?);
        body.push('\n');
    }
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    raw.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg: e.to_string(),
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Meta-dataset construction

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetCounts {
    pub dataset_id: String,
    /// Selected examples per label, keyed by label name.
    pub counts: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedLabel {
    pub dataset_id: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildReport {
    pub seed: u64,
    pub per_label_cap: usize,
    pub label_key_scope: LabelKeyScope,
    pub total: usize,
    pub datasets: Vec<DatasetCounts>,
    pub skipped: Vec<SkippedLabel>,
    /// Test dataset id → whether every one of its labels occurs as a
    /// pretraining label key.
    pub suggested_seen: BTreeMap<String, bool>,
}

#[derive(Debug, Clone)]
pub struct MetaDataset {
    pub examples: Vec<MetaExample>,
    pub report: BuildReport,
}

/// Selects at most `per_label_cap` examples per label from every pretrain
/// dataset, uniformly at random under `seed`, and verbalizes them.
pub fn build_meta_dataset(
    manifest: &DatasetManifest,
    per_label_cap: usize,
    seed: u64,
    scope: LabelKeyScope,
) -> Result<MetaDataset> {
    if per_label_cap == 0 {
        return Err(Error::Config("per_label_cap must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut examples = Vec::new();
    let mut datasets = Vec::new();
    let mut skipped = Vec::new();
    let mut keys = BTreeSet::new();

    for entry in manifest.partition(Partition::Pretrain) {
        let labels = entry.label_set()?;
        let raw = manifest.read_train(entry)?;
        let mut counts = BTreeMap::new();
        for label in labels.labels() {
            let pool: Vec<&RawExample> = raw.iter().filter(|r| &r.label == label).collect();
            if pool.is_empty() {
                log::warn!("{}: label `{label}` has no examples, skipped", entry.dataset_id);
                skipped.push(SkippedLabel {
                    dataset_id: entry.dataset_id.clone(),
                    label: label.clone(),
                });
                continue;
            }
            let chosen: Vec<&RawExample> = pool
                .choose_multiple(&mut rng, per_label_cap.min(pool.len()))
                .copied()
                .collect();
            counts.insert(label.clone(), chosen.len());
            for ex in chosen {
                let meta = verbalize(ex, &labels, scope)?;
                keys.insert(meta.label_key.clone());
                examples.push(meta);
            }
        }
        datasets.push(DatasetCounts {
            dataset_id: entry.dataset_id.clone(),
            counts,
        });
    }

    let suggested_seen = manifest
        .partition(Partition::Test)
        .map(|e| {
            let seen = e
                .labels
                .iter()
                .all(|l| keys.contains(&scope.key(&e.dataset_id, l)));
            (e.dataset_id.clone(), seen)
        })
        .collect();

    Ok(MetaDataset {
        report: BuildReport {
            seed,
            per_label_cap,
            label_key_scope: scope,
            total: examples.len(),
            datasets,
            skipped,
            suggested_seen,
        },
        examples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(names: &[&str]) -> LabelSet {
        LabelSet::new("d", names.iter().map(|s| s.to_string()).collect()).unwrap()
    }

    fn raw(text: &str, label: &str) -> RawExample {
        RawExample::new(text, label, "d").unwrap()
    }

    #[test]
    fn query_matches_reference_form() {
        let ls = labels(&["happy", "sarcastic", "sad"]);
        let q = verbalize_query(&raw("I bought this for myself ...", "happy"), &ls).unwrap();
        assert_eq!(
            q,
            "(1) happy (2) sarcastic (3) sad, sentence: I bought this for myself ..."
        );
    }

    #[test]
    fn query_degenerate_and_order() {
        assert_eq!(
            verbalize_query(&raw("x", "a"), &labels(&["a"])).unwrap(),
            "(1) a, sentence: x"
        );
        assert_eq!(
            verbalize_query(&raw("s", "a"), &labels(&["b", "a"])).unwrap(),
            "(1) b (2) a, sentence: s"
        );
    }

    #[test]
    fn query_rejects_unknown_label() {
        let err = verbalize_query(&raw("x", "zzz"), &labels(&["a"])).unwrap_err();
        match err {
            Error::UnknownLabel { label, dataset_id } => {
                assert_eq!(label, "zzz");
                assert_eq!(dataset_id, "d");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn premise_forms() {
        assert_eq!(
            verbalize_premise(&raw("I bought this for myself ...", "a")).unwrap(),
            "sentence: I bought this for myself ..."
        );
        assert_eq!(verbalize_premise(&raw("x", "a")).unwrap(), "sentence: x");
        assert_eq!(verbalize_premise(&raw(" padded ", "a")).unwrap(), "sentence: padded");
    }

    #[test]
    fn hypothesis_forms() {
        let ls = labels(&["happy", "non-irony"]);
        assert_eq!(verbalize_hypothesis("happy", &ls).unwrap(), "happy");
        assert_eq!(verbalize_hypothesis("non-irony", &ls).unwrap(), "non-irony");
        assert!(matches!(verbalize_hypothesis("", &ls), Err(Error::EmptyLabel)));
        assert!(matches!(
            verbalize_hypothesis("sad", &ls),
            Err(Error::UnknownLabel { .. })
        ));
    }

    #[test]
    fn empty_text_rejected() {
        assert!(matches!(RawExample::new("   ", "a", "d"), Err(Error::EmptyText)));
    }

    #[test]
    fn label_set_rejects_duplicates_and_empty() {
        assert!(LabelSet::new("d", vec![]).is_err());
        assert!(matches!(
            LabelSet::new("d", vec!["a".into(), "a".into()]),
            Err(Error::DuplicateLabel { .. })
        ));
    }

    #[test]
    fn pair_joined_with_separator() {
        let ex = RawExample::pair(" a b ", "c ", "yes", "nli").unwrap();
        assert_eq!(ex.text, "a b [SEP] c");
    }

    #[test]
    fn label_key_scopes() {
        assert_eq!(LabelKeyScope::Global.key("d1", "positive"), "positive");
        assert_eq!(LabelKeyScope::PerDataset.key("d1", "positive"), "d1::positive");
    }

    #[test]
    fn nullify_extremes_and_bounds() {
        let ls = labels(&["a", "b"]);
        let batch: Vec<_> = (0..20)
            .map(|i| verbalize(&raw(&format!("t{i}"), if i % 2 == 0 { "a" } else { "b" }), &ls, LabelKeyScope::Global).unwrap())
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(nullify_premises(&batch, 0.0, &mut rng).unwrap(), batch);
        let all = nullify_premises(&batch, 1.0, &mut rng).unwrap();
        assert!(all.iter().all(MetaExample::is_null));
        for (a, b) in all.iter().zip(&batch) {
            assert_eq!(a.query, b.query);
            assert_eq!(a.hypothesis, b.hypothesis);
        }
        assert!(nullify_premises(&batch, 1.5, &mut rng).is_err());
        assert!(nullify_premises(&batch, -0.1, &mut rng).is_err());
    }

    #[test]
    fn nullify_reproducible_under_same_state() {
        let ls = labels(&["a"]);
        let batch: Vec<_> = (0..200)
            .map(|i| verbalize(&raw(&format!("t{i}"), "a"), &ls, LabelKeyScope::Global).unwrap())
            .collect();
        let a = nullify_premises(&batch, 0.3, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = nullify_premises(&batch, 0.3, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }
}
