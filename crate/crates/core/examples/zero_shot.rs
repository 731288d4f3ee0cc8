//! Pretrains the toy encoder on the synthetic suite and classifies new
//! sentences from label names alone.
//!
//! cargo run --release --example zero_shot

use nested_entail::meta_task::LabelSet;
use nested_entail::pipeline::{self, ModelChoice, PipelineConfig, Workspace};
use nested_entail::predictor::rank_labels;

fn main() -> nested_entail::Result<()> {
    let dir = tempfile::tempdir().expect("temp dir");
    let ws = Workspace::new(dir.path());
    let cfg = PipelineConfig::default();

    let manifest = pipeline::prepare(&cfg, &ws, None)?;
    let outcome = pipeline::pretrain(&cfg, &ws, &manifest, ModelChoice::Contrastive)?;
    for e in outcome.epochs.iter().step_by(5) {
        println!("epoch {:>2}: mean loss {:.3}", e.epoch, e.mean_loss);
    }

    let labels = LabelSet::new("mine", vec!["finance".into(), "weather".into(), "music".into(), "sad".into()])?;
    for text in [
        "the investor watched the stock market all day",
        "heavy rain and wind in the forecast",
        "the band played a new song at the concert",
        "she was crying and felt lonely",
    ] {
        let ranked = rank_labels(text, &labels, &outcome.checkpoint.encoder)?;
        println!("{text:<48} -> {} ({:.2})", ranked[0].0, ranked[0].1);
    }

    let model = pipeline::load_model(&ws.checkpoint("contrastive"), &cfg)?;
    let report = pipeline::eval_zero(&cfg, &ws, &manifest, model.as_ref())?;
    for d in &report.datasets {
        println!("{:<16} zero-shot accuracy {:.1}%", d.dataset_id, 100.0 * d.mean);
    }
    Ok(())
}
