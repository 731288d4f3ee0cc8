//! Fine-tunes a pretrained checkpoint on k examples per label for a task
//! whose label names the encoder has never seen.
//!
//! cargo run --release --example few_shot

use nested_entail::eval::{evaluate_few_shot, evaluate_zero_shot, ContrastiveModel};
use nested_entail::pipeline::{self, ModelChoice, PipelineConfig, Workspace};
use nested_entail::predictor::{Predictor, PredictorConfig};
use nested_entail::sampler::sample_support_set;
use nested_entail::training::finetune;

fn main() -> nested_entail::Result<()> {
    let dir = tempfile::tempdir().expect("temp dir");
    let ws = Workspace::new(dir.path());
    let cfg = PipelineConfig::default();
    let manifest = pipeline::prepare(&cfg, &ws, None)?;
    let ckpt = pipeline::pretrain(&cfg, &ws, &manifest, ModelChoice::Contrastive)?.checkpoint;

    let entry = manifest.get("heldout_renamed").expect("bundled dataset");
    let labels = entry.label_set()?;
    let train = manifest.read_train(entry)?;
    let support = sample_support_set(&train, &labels, 5, 42)?;
    let tuned = finetune(&ckpt, &support, &cfg.train)?.checkpoint;

    let predictor = Predictor::new(&tuned.encoder, &support, PredictorConfig::default())?;
    for text in ["what a wonderful day, pure joy", "tears and grief all week", "i am furious and livid"] {
        println!("{text:<34} -> {}", predictor.predict(text)?.label);
    }

    let model = ContrastiveModel::new("contrastive", ckpt);
    let ids = vec![entry.dataset_id.clone()];
    let zero = evaluate_zero_shot(&model, &manifest, &ids)?;
    println!("\n{:>3}-shot accuracy {:.1}%", 0, 100.0 * zero.average);
    for k in [1, 5, 10] {
        let r = evaluate_few_shot(&model, &manifest, &ids, k, &cfg.eval.seeds(), &cfg.train)?;
        let d = &r.datasets[0];
        println!("{k:>3}-shot accuracy {:.1}% ± {:.1}", 100.0 * d.mean, 100.0 * d.std);
    }
    Ok(())
}
