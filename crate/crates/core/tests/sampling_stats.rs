mod common;

use std::collections::{BTreeMap, HashSet};

use common::{binomial_band, concept_examples};
use nested_entail::meta_task::{
    build_meta_dataset, null_mask, nullify_premises, verbalize, write_dataset, DatasetManifest, DatasetRecord,
    LabelKeyScope, ManifestEntry, MetaExample, Partition, NULL_PREMISE,
};
use nested_entail::sampler::{sample_support_set, BalancedSampler, BatchSpec};
use nested_entail::synthetic::{default_suite, write_suite, CONCEPTS};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn pool(per_label: usize) -> Vec<MetaExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let names: Vec<&str> = CONCEPTS.iter().map(|c| c.name).collect();
    let (ls, raw) = concept_examples(&mut rng, "pool", &names, per_label);
    raw.iter().map(|r| verbalize(r, &ls, LabelKeyScope::Global).unwrap()).collect()
}

#[test]
fn ten_thousand_batches_are_exactly_balanced() {
    let pool = pool(40);
    let spec = BatchSpec::default();
    let sampler = BalancedSampler::new(&pool, spec, false).unwrap();
    let mut appearances: BTreeMap<&str, usize> = BTreeMap::new();
    let n_batches = 10_000;
    for batch in sampler.stream(ChaCha8Rng::seed_from_u64(32)).take(n_batches) {
        assert_eq!(batch.len(), spec.labels_per_batch * spec.instances_per_label);
        let mut per_key: BTreeMap<&str, usize> = BTreeMap::new();
        for &i in &batch {
            *per_key.entry(pool[i].label_key.as_str()).or_default() += 1;
        }
        assert_eq!(per_key.len(), spec.labels_per_batch);
        assert!(per_key.values().all(|&c| c == spec.instances_per_label));
        assert_eq!(batch.iter().collect::<HashSet<_>>().len(), batch.len());
        for key in per_key.keys() {
            *appearances.entry(key).or_default() += 1;
        }
    }
    // Each batch includes a given label with probability L/K.
    let p = spec.labels_per_batch as f64 / CONCEPTS.len() as f64;
    let (lo, hi) = binomial_band(p, n_batches);
    for (key, count) in appearances {
        let f = count as f64 / n_batches as f64;
        assert!((lo..=hi).contains(&f), "{key}: {f} outside [{lo}, {hi}]");
    }
}

#[test]
fn same_dataset_batches_never_mix() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let mut pool = Vec::new();
    for (id, names) in [("a", ["sports", "food", "sad"]), ("b", ["music", "travel", "happy"])] {
        let (ls, raw) = concept_examples(&mut rng, id, &names, 10);
        pool.extend(raw.iter().map(|r| verbalize(r, &ls, LabelKeyScope::PerDataset).unwrap()));
    }
    let sampler = BalancedSampler::new(&pool, BatchSpec::new(2, 2).unwrap(), true).unwrap();
    for batch in sampler.stream(ChaCha8Rng::seed_from_u64(34)).take(500) {
        let ids: HashSet<&str> = batch.iter().map(|&i| pool[i].dataset_id.as_str()).collect();
        assert_eq!(ids.len(), 1);
    }
}

#[test]
fn null_fraction_within_band() {
    let mask = null_mask(10_000, 0.05, &mut ChaCha8Rng::seed_from_u64(35)).unwrap();
    let f = mask.iter().filter(|b| **b).count() as f64 / 10_000.0;
    let (lo, hi) = binomial_band(0.05, 10_000);
    assert!((lo - 0.0435).abs() < 1e-4 && (hi - 0.0565).abs() < 1e-4);
    assert!((0.0435..=0.0565).contains(&f), "{f}");
}

#[test]
fn nullify_only_touches_premises() {
    let pool = pool(5);
    let out = nullify_premises(&pool, 1.0, &mut ChaCha8Rng::seed_from_u64(36)).unwrap();
    for (a, b) in pool.iter().zip(&out) {
        assert_eq!(b.premise, NULL_PREMISE);
        assert_eq!((&a.query, &a.hypothesis, &a.label_key), (&b.query, &b.hypothesis, &b.label_key));
    }
    assert!(nullify_premises(&pool, 1.5, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
}

fn uneven_manifest(dir: &std::path::Path) -> (DatasetManifest, usize) {
    let sizes = [("one", vec![("sports", 10), ("food", 55)]), ("two", vec![("sad", 41), ("happy", 3), ("music", 80)])];
    let mut entries = Vec::new();
    let cap = 40;
    let mut expected = 0;
    for (id, labels) in &sizes {
        let mut records = Vec::new();
        for (label, count) in labels {
            expected += (*count).min(cap);
            for i in 0..*count {
                records.push(DatasetRecord { text: format!("{label} text {i}"), label: label.to_string(), text2: None });
            }
        }
        let name = format!("{id}.jsonl");
        write_dataset(&dir.join(&name), &records).unwrap();
        entries.push(ManifestEntry {
            dataset_id: id.to_string(),
            partition: Partition::Pretrain,
            path: name.into(),
            test_path: None,
            labels: labels.iter().map(|(l, _)| l.to_string()).collect(),
            pair: false,
            seen: None,
            examples: None,
        });
    }
    (DatasetManifest::new(dir, entries).unwrap(), expected)
}

#[test]
fn meta_dataset_size_is_sum_of_capped_counts() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, expected) = uneven_manifest(dir.path());
    let meta = build_meta_dataset(&manifest, 40, 1, LabelKeyScope::Global).unwrap();
    assert_eq!(meta.examples.len(), expected);
    assert_eq!(meta.report.total, expected);
    assert_eq!(meta.report.datasets[1].counts["happy"], 3);
    assert_eq!(meta.report.datasets[1].counts["music"], 40);
}

#[test]
fn meta_dataset_on_suite_with_cap_40() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_suite(dir.path(), &default_suite(), 3).unwrap();
    let labels: usize = manifest.partition(Partition::Pretrain).map(|e| e.labels.len()).sum();
    let a = build_meta_dataset(&manifest, 40, 9, LabelKeyScope::Global).unwrap();
    assert_eq!(a.examples.len(), 40 * labels);
    let b = build_meta_dataset(&manifest, 40, 9, LabelKeyScope::Global).unwrap();
    assert_eq!(a.examples, b.examples);
    let c = build_meta_dataset(&manifest, 40, 10, LabelKeyScope::Global).unwrap();
    assert_ne!(a.examples, c.examples);

    let test_ids: HashSet<String> = manifest.partition(Partition::Test).map(|e| e.dataset_id.clone()).collect();
    assert!(a.examples.iter().all(|m| !test_ids.contains(&m.dataset_id)));
    assert!(manifest
        .access
        .paths()
        .iter()
        .all(|p| !p.to_string_lossy().contains("heldout")));
}

#[test]
fn dataset_in_both_partitions_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, _) = uneven_manifest(dir.path());
    let mut entries = manifest.entries.clone();
    let mut dup = entries[0].clone();
    dup.partition = Partition::Test;
    dup.test_path = Some("one.jsonl".into());
    entries.push(dup);
    assert!(DatasetManifest::new(dir.path(), entries).is_err());
}

proptest! {
    #[test]
    fn support_sets_have_k_per_label(k in 0usize..15, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (ls, train) = concept_examples(&mut rng, "t", &["sports", "food", "sad"], 12);
        let support = sample_support_set(&train, &ls, k, seed).unwrap();
        for l in ls.labels() {
            prop_assert_eq!(support.count_for(l), k.min(12));
        }
        prop_assert_eq!(support.warnings.is_empty(), k <= 12);
        let again = sample_support_set(&train, &ls, k, seed).unwrap();
        prop_assert_eq!(support.entries, again.entries);
    }
}
