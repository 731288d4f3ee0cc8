//! Draws balanced contrastive batches (L labels × M instances) from the
//! bundled synthetic pretraining corpora.
//!
//! cargo run --example balanced_batches

use std::collections::BTreeMap;

use nested_entail::meta_task::{build_meta_dataset, LabelKeyScope};
use nested_entail::sampler::{BalancedSampler, BatchSpec};
use nested_entail::synthetic::{default_suite, write_suite};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> nested_entail::Result<()> {
    let dir = tempfile::tempdir().expect("temp dir");
    let manifest = write_suite(dir.path(), &default_suite(), 1)?;
    let meta = build_meta_dataset(&manifest, 64, 1, LabelKeyScope::Global)?;
    println!("{} meta examples over {} pretraining datasets", meta.examples.len(), meta.report.datasets.len());

    for same_dataset_only in [false, true] {
        let spec = if same_dataset_only { BatchSpec::new(2, 4)? } else { BatchSpec::default() };
        let sampler = BalancedSampler::new(&meta.examples, spec, same_dataset_only)?;
        let epoch = sampler.epoch(&mut ChaCha8Rng::seed_from_u64(2));
        println!(
            "\nsame_dataset_only = {same_dataset_only}: {} batches of {} per epoch",
            epoch.len(),
            spec.batch_size()
        );
        for batch in epoch.iter().take(2) {
            let mut keys: BTreeMap<(&str, &str), usize> = BTreeMap::new();
            for &i in batch {
                let m = &meta.examples[i];
                *keys.entry((m.dataset_id.as_str(), m.label_key.as_str())).or_default() += 1;
            }
            let shown: Vec<String> = keys.iter().map(|((d, k), n)| format!("{d}/{k}×{n}")).collect();
            println!("  {}", shown.join("  "));
        }
    }
    Ok(())
}
