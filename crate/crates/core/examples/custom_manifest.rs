//! Bringing your own data: JSONL files plus a TOML manifest declaring which
//! datasets are for pretraining and which are held out.
//!
//! cargo run --release --example custom_manifest

use nested_entail::meta_task::{write_dataset, DatasetManifest, DatasetRecord, ManifestEntry, Partition};
use nested_entail::pipeline::{self, ModelChoice, PipelineConfig, Workspace};
use nested_entail::synthetic::{concept, sentence, SentenceStyle};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn records(labels: &[&str], per_label: usize, rng: &mut ChaCha8Rng) -> Vec<DatasetRecord> {
    let style = SentenceStyle::default();
    (0..per_label)
        .flat_map(|_| labels.iter())
        .map(|l| DatasetRecord { text: sentence(concept(l).unwrap(), &style, rng), label: l.to_string(), text2: None })
        .collect()
}

fn entry(id: &str, partition: Partition, labels: &[&str]) -> ManifestEntry {
    let held_out = partition == Partition::Test;
    ManifestEntry {
        dataset_id: id.into(),
        partition,
        path: format!("{id}.train.jsonl").into(),
        test_path: held_out.then(|| format!("{id}.test.jsonl").into()),
        labels: labels.iter().map(|s| s.to_string()).collect(),
        pair: false,
        seen: held_out.then_some(true),
        examples: None,
    }
}

fn main() -> anyhow::Result<()> {
    let dir = tempfile::tempdir()?;
    let data = dir.path().join("data");
    std::fs::create_dir_all(&data)?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);

    let pretrain_sets: [(&str, &[&str]); 2] =
        [("topics", &["sports", "politics", "technology", "food"]), ("moods", &["happy", "sad", "angry", "music"])];
    let mut entries = Vec::new();
    for (id, labels) in pretrain_sets {
        write_dataset(&data.join(format!("{id}.train.jsonl")), &records(labels, 150, &mut rng))?;
        entries.push(entry(id, Partition::Pretrain, labels));
    }
    let target = ["food", "sports", "sad"];
    write_dataset(&data.join("target.train.jsonl"), &records(&target, 20, &mut rng))?;
    write_dataset(&data.join("target.test.jsonl"), &records(&target, 50, &mut rng))?;
    entries.push(entry("target", Partition::Test, &target));

    let manifest_path = data.join("manifest.toml");
    DatasetManifest::new(&data, entries)?.save(&manifest_path)?;
    println!("{}", std::fs::read_to_string(&manifest_path)?);

    let ws = Workspace::new(dir.path().join("run"));
    let cfg = PipelineConfig::default();
    let manifest = pipeline::prepare(&cfg, &ws, Some(&manifest_path))?;
    pipeline::pretrain(&cfg, &ws, &manifest, ModelChoice::Contrastive)?;
    let model = pipeline::load_model(&ws.checkpoint("contrastive"), &cfg)?;
    let report = pipeline::eval_zero(&cfg, &ws, &manifest, model.as_ref())?;
    println!("target zero-shot accuracy {:.1}%", 100.0 * report.average);
    Ok(())
}
