//! Ranks a fixed label inventory for a few sentences, showing the top
//! labels and the least likely one.
//!
//! cargo run --release --example case_study

use nested_entail::meta_task::LabelSet;
use nested_entail::pipeline::{self, ModelChoice, PipelineConfig, Workspace};

fn main() -> nested_entail::Result<()> {
    let dir = tempfile::tempdir().expect("temp dir");
    let ws = Workspace::new(dir.path());
    let cfg = PipelineConfig::default();
    let manifest = pipeline::prepare(&cfg, &ws, None)?;
    let ckpt = pipeline::pretrain(&cfg, &ws, &manifest, ModelChoice::Contrastive)?.checkpoint;

    let labels = LabelSet::new(
        "inventory",
        ["sports", "politics", "technology", "food", "weather", "health", "finance", "music", "travel", "happy", "sad", "angry"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
    )?;
    let texts: Vec<String> = [
        "the chef made a delicious pasta in the kitchen",
        "our flight landed and the hotel was near the beach",
        "i hate this, the delay made me furious",
        "the doctor said the vaccine is ready at the clinic",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    print!("{}", pipeline::case_study(&ckpt, &labels, &texts, 3)?);
    Ok(())
}
