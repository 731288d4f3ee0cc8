//! Relative performance gain of supervised pretraining: the same few-shot
//! protocol run from a pretrained and from an untrained checkpoint.
//!
//! cargo run --release --example relative_gain

use nested_entail::eval::{evaluate_few_shot, evaluate_zero_shot, relative_performance_gain, ContrastiveModel};
use nested_entail::pipeline::{self, load_meta, ModelChoice, PipelineConfig, Workspace};
use nested_entail::training::init_checkpoint;

fn main() -> nested_entail::Result<()> {
    let dir = tempfile::tempdir().expect("temp dir");
    let ws = Workspace::new(dir.path());
    let cfg = PipelineConfig::default();
    let manifest = pipeline::prepare(&cfg, &ws, None)?;
    let with = ContrastiveModel::new("with", pipeline::pretrain(&cfg, &ws, &manifest, ModelChoice::Contrastive)?.checkpoint);
    let without = ContrastiveModel::new("without", init_checkpoint(&load_meta(&ws)?, &cfg.train));

    let seeds = cfg.eval.seeds();
    for k in [0, 1, 5] {
        let (a, b) = if k == 0 {
            (evaluate_zero_shot(&with, &manifest, &[])?, evaluate_zero_shot(&without, &manifest, &[])?)
        } else {
            (
                evaluate_few_shot(&with, &manifest, &[], k, &seeds, &cfg.train)?,
                evaluate_few_shot(&without, &manifest, &[], k, &seeds, &cfg.train)?,
            )
        };
        println!(
            "k = {k}: with {:.1}%, without {:.1}%, gain {:+.3}",
            100.0 * a.average,
            100.0 * b.average,
            relative_performance_gain(a.average, b.average)?
        );
    }
    Ok(())
}
