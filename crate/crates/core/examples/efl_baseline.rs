//! The binary-entailment baseline next to the contrastive model, evaluated
//! on the same test inputs and support seeds, rendered as a results table.
//!
//! cargo run --release --example efl_baseline

use nested_entail::pipeline::{self, ModelChoice, PipelineConfig, Workspace};
use nested_entail::report::render_table;

fn main() -> nested_entail::Result<()> {
    let dir = tempfile::tempdir().expect("temp dir");
    let ws = Workspace::new(dir.path());
    let cfg = PipelineConfig::default();
    let manifest = pipeline::prepare(&cfg, &ws, None)?;
    for model in [ModelChoice::Contrastive, ModelChoice::Efl] {
        let outcome = pipeline::pretrain(&cfg, &ws, &manifest, model)?;
        let last = outcome.epochs.last().expect("at least one epoch");
        println!("{:<11} final epoch loss {:.4}", model.file_stem(), last.mean_loss);
    }
    let reports = pipeline::comparison(&cfg, &ws, &manifest)?;
    println!("\n{}", render_table(&reports));
    Ok(())
}
