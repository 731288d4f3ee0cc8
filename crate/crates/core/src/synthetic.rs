//! Keyword-separable synthetic corpora for end-to-end runs.
//!
//! Every label is backed by a concept with a small keyword vocabulary. A
//! sentence mixes several keywords of its concept with shared filler words
//! and, sometimes, one distractor keyword from another concept. Six
//! pretraining datasets and three held-out test datasets are produced; two
//! test datasets reuse pretraining label names (seen), one renames its labels
//! (unseen).

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::meta_task::{write_dataset, DatasetManifest, DatasetRecord, ManifestEntry, Partition};

pub struct Concept {
    pub name: &'static str,
    pub keywords: &'static [&'static str],
}

pub const CONCEPTS: &[Concept] = &[
    Concept { name: "sports", keywords: &["football", "goal", "team", "coach", "league", "match", "stadium", "player"] },
    Concept { name: "politics", keywords: &["election", "senate", "vote", "minister", "parliament", "policy", "campaign", "ballot"] },
    Concept { name: "technology", keywords: &["software", "computer", "chip", "laptop", "algorithm", "internet", "robot", "processor"] },
    Concept { name: "food", keywords: &["pizza", "recipe", "delicious", "kitchen", "pasta", "flavor", "dessert", "chef"] },
    Concept { name: "weather", keywords: &["rain", "storm", "sunny", "forecast", "snow", "wind", "humid", "cloudy"] },
    Concept { name: "health", keywords: &["doctor", "hospital", "vaccine", "medicine", "symptom", "patient", "clinic", "therapy"] },
    Concept { name: "finance", keywords: &["stock", "bank", "market", "investor", "profit", "loan", "dividend", "currency"] },
    Concept { name: "music", keywords: &["guitar", "concert", "song", "album", "band", "melody", "singer", "drum"] },
    Concept { name: "travel", keywords: &["flight", "hotel", "passport", "beach", "luggage", "airport", "tourist", "vacation"] },
    Concept { name: "happy", keywords: &["joy", "smile", "wonderful", "delighted", "cheerful", "glad", "fantastic", "love"] },
    Concept { name: "sad", keywords: &["tears", "lonely", "grief", "miserable", "heartbroken", "sorrow", "crying", "gloomy"] },
    Concept { name: "angry", keywords: &["furious", "rage", "outraged", "annoyed", "hate", "yelling", "livid", "irritated"] },
];

const FILLER: &[&str] = &[
    "the", "a", "this", "that", "was", "is", "really", "today", "about", "we", "they", "it",
    "some", "very", "just", "so", "our", "my", "new", "and", "with", "for", "on", "in", "after",
    "before", "people", "story", "news", "thing", "time", "again", "still", "here",
];

pub fn concept(name: &str) -> Option<&'static Concept> {
    CONCEPTS.iter().find(|c| c.name == name)
}

/// Layout of one synthetic dataset.
#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub dataset_id: &'static str,
    pub partition: Partition,
    /// `(label name, concept)`; the label name differs from the concept for
    /// renamed (unseen) datasets.
    pub labels: Vec<(&'static str, &'static str)>,
    pub pair: bool,
    pub train_per_label: usize,
    pub test_per_label: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SentenceStyle {
    pub keywords: (usize, usize),
    pub filler: (usize, usize),
    /// Probability of one off-concept keyword.
    pub distractor: f64,
}

impl Default for SentenceStyle {
    fn default() -> Self {
        Self {
            keywords: (2, 4),
            filler: (4, 8),
            distractor: 0.3,
        }
    }
}

pub fn default_suite() -> Vec<SyntheticDataset> {
    use Partition::{Pretrain, Test};
    let same = |names: &[&'static str]| names.iter().map(|n| (*n, *n)).collect::<Vec<_>>();
    let pretrain = |id, labels, pair| SyntheticDataset {
        dataset_id: id,
        partition: Pretrain,
        labels,
        pair,
        train_per_label: 300,
        test_per_label: 0,
    };
    let test = |id, labels| SyntheticDataset {
        dataset_id: id,
        partition: Test,
        labels,
        pair: false,
        train_per_label: 100,
        test_per_label: 100,
    };
    vec![
        pretrain("news_topics", same(&["sports", "politics", "technology", "finance"]), false),
        pretrain("lifestyle", same(&["food", "travel", "music"]), false),
        pretrain("emotions", same(&["happy", "sad", "angry"]), false),
        pretrain("health_weather", same(&["health", "weather"]), false),
        pretrain("paired_topics", same(&["sports", "technology", "food", "health"]), true),
        pretrain("mixed_reviews", same(&["happy", "angry", "music", "travel"]), false),
        test("heldout_topics", same(&["finance", "weather", "music", "sad"])),
        test("heldout_binary", same(&["technology", "food"])),
        test(
            "heldout_renamed",
            vec![("elation", "happy"), ("melancholy", "sad"), ("indignation", "angry")],
        ),
    ]
}

pub fn sentence<R: Rng + ?Sized>(concept: &Concept, style: &SentenceStyle, rng: &mut R) -> String {
    let n_kw = rng.gen_range(style.keywords.0..=style.keywords.1);
    let n_fill = rng.gen_range(style.filler.0..=style.filler.1);
    let mut words: Vec<&str> = (0..n_kw)
        .map(|_| *concept.keywords.choose(rng).unwrap())
        .collect();
    words.extend((0..n_fill).map(|_| *FILLER.choose(rng).unwrap()));
    if rng.gen::<f64>() < style.distractor {
        let other = loop {
            let c = CONCEPTS.choose(rng).unwrap();
            if c.name != concept.name {
                break c;
            }
        };
        words.push(other.keywords.choose(rng).unwrap());
    }
    words.shuffle(rng);
    words.join(" ")
}

fn records<R: Rng + ?Sized>(
    ds: &SyntheticDataset,
    per_label: usize,
    style: &SentenceStyle,
    rng: &mut R,
) -> Result<Vec<DatasetRecord>> {
    let mut out = Vec::new();
    for _ in 0..per_label {
        for (label, concept_name) in &ds.labels {
            let c = concept(concept_name)
                .ok_or_else(|| Error::Config(format!("unknown concept `{concept_name}`")))?;
            let rec = if ds.pair {
                // Keywords are split across the two halves.
                let first = sentence(c, &SentenceStyle { keywords: (1, 2), filler: (2, 4), ..*style }, rng);
                let second = sentence(c, &SentenceStyle { keywords: (1, 2), filler: (2, 4), distractor: 0.0 }, rng);
                DatasetRecord { text: first, label: label.to_string(), text2: Some(second) }
            } else {
                DatasetRecord { text: sentence(c, style, rng), label: label.to_string(), text2: None }
            };
            out.push(rec);
        }
    }
    Ok(out)
}

/// Writes every dataset of `suite` under `dir` plus `dir/manifest.toml`.
pub fn write_suite(dir: &Path, suite: &[SyntheticDataset], seed: u64) -> Result<DatasetManifest> {
    let style = SentenceStyle::default();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::new();
    for ds in suite {
        let train = records(ds, ds.train_per_label, &style, &mut rng)?;
        let train_name = format!("{}.train.jsonl", ds.dataset_id);
        write_dataset(&dir.join(&train_name), &train)?;
        let test_path = if ds.partition == Partition::Test {
            let test = records(ds, ds.test_per_label, &style, &mut rng)?;
            let name = format!("{}.test.jsonl", ds.dataset_id);
            write_dataset(&dir.join(&name), &test)?;
            Some(name.into())
        } else {
            None
        };
        entries.push(ManifestEntry {
            dataset_id: ds.dataset_id.to_string(),
            partition: ds.partition,
            path: train_name.into(),
            test_path,
            labels: ds.labels.iter().map(|(l, _)| l.to_string()).collect(),
            pair: ds.pair,
            seen: (ds.partition == Partition::Test)
                .then(|| ds.labels.iter().all(|(l, c)| l == c)),
            examples: Some(train.len()),
        });
    }
    let manifest = DatasetManifest::new(dir, entries)?;
    manifest.save(dir.join("manifest.toml"))?;
    Ok(manifest)
}
