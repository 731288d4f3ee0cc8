use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use nested_entail::checkpoint::Checkpoint;
use nested_entail::eval::relative_performance_gain;
use nested_entail::meta_task::{DatasetManifest, LabelSet, Partition};
use nested_entail::pipeline::{self, ModelChoice, PipelineConfig, Workspace, OUT_DIR_ENV};

#[derive(Parser)]
#[command(name = "entail", version, about = "Nested-entailment few-shot text classification")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML config; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Dataset manifest (defaults to the synthetic suite under the output root).
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    /// Checkpoint to evaluate (defaults to the pretrained contrastive model)
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
    /// Shots per label for few-shot evaluation
    #[arg(long, global = true)]
    k: Option<usize>,
    /// Support-set repetitions per dataset
    #[arg(long, global = true)]
    reps: Option<usize>,
    /// Seed applied to data generation, training and evaluation.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output root.
    #[arg(long, global = true, env = OUT_DIR_ENV, default_value = "runs")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    Contrastive,
    Efl,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic suite (unless --manifest is given) and build the meta dataset.
    Prepare,
    /// Pretrain a model on the meta dataset.
    Pretrain {
        #[arg(long, value_enum, default_value = "contrastive")]
        model: Model,
    },
    /// Zero-shot evaluation on the test partition.
    EvalZero,
    /// k-shot evaluation with fine-tuning on sampled support sets.
    EvalFew,
    /// Accuracy over the configured k grid.
    Sweep,
    /// Relative performance gain of `with` over `without`.
    Rpg { with: f64, without: f64 },
    /// Rank every label of a test dataset for a few sentences.
    CaseStudy {
        /// Held-out dataset whose label inventory is ranked
        #[arg(long)]
        dataset: Option<String>,
        /// Number of top labels shown per sentence
        #[arg(long, default_value_t = 3)]
        top: usize,
        /// Sentences to rank; defaults to the first test sentences.
        texts: Vec<String>,
    },
    /// Paired comparison table of all models at 0-shot and k-shot.
    Report,
}

fn config(common: &Common) -> anyhow::Result<PipelineConfig> {
    let mut cfg = match &common.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg = cfg.with_seed(seed);
    }
    if let Some(k) = common.k {
        cfg.eval.k = k;
    }
    if let Some(reps) = common.reps {
        cfg.eval.repetitions = reps;
    }
    Ok(cfg)
}

fn manifest(common: &Common, ws: &Workspace) -> anyhow::Result<DatasetManifest> {
    let path = common.manifest.clone().unwrap_or_else(|| ws.default_manifest());
    DatasetManifest::load(&path).with_context(|| format!("loading {}; run `entail prepare` first", path.display()))
}

fn checkpoint_path(common: &Common, ws: &Workspace) -> PathBuf {
    common.checkpoint.clone().unwrap_or_else(|| ws.checkpoint("contrastive"))
}

fn ensure_prepared(cfg: &PipelineConfig, ws: &Workspace, common: &Common) -> anyhow::Result<()> {
    if !ws.meta().exists() {
        log::info!("no meta dataset under {}, preparing", ws.root.display());
        pipeline::prepare(cfg, ws, common.manifest.as_deref())?;
    }
    Ok(())
}

fn show(path: &Path) -> anyhow::Result<()> {
    print!("{}", std::fs::read_to_string(path)?);
    Ok(())
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let common = &cli.common;
    let cfg = config(common)?;
    let ws = Workspace::new(&common.out);

    match &cli.command {
        Command::Prepare => {
            pipeline::prepare(&cfg, &ws, common.manifest.as_deref())?;
            println!("{}", std::fs::read_to_string(ws.build_report())?);
        }
        Command::Pretrain { model } => {
            ensure_prepared(&cfg, &ws, common)?;
            let manifest = manifest(common, &ws)?;
            let choice = match model {
                Model::Contrastive => ModelChoice::Contrastive,
                Model::Efl => ModelChoice::Efl,
            };
            let outcome = pipeline::pretrain(&cfg, &ws, &manifest, choice)?;
            for e in &outcome.epochs {
                log::info!("epoch {:>3}  batches {:>4}  loss {:.4}", e.epoch, e.batches, e.mean_loss);
            }
            println!("{}", ws.checkpoint(choice.file_stem()).display());
        }
        Command::EvalZero => {
            let manifest = manifest(common, &ws)?;
            let model = pipeline::load_model(&checkpoint_path(common, &ws), &cfg)?;
            pipeline::eval_zero(&cfg, &ws, &manifest, model.as_ref())?;
            show(&ws.results_dir("eval-zero").join("results.md"))?;
        }
        Command::EvalFew => {
            if cfg.eval.k == 0 {
                bail!("eval-few needs --k >= 1");
            }
            let manifest = manifest(common, &ws)?;
            let model = pipeline::load_model(&checkpoint_path(common, &ws), &cfg)?;
            pipeline::eval_few(&cfg, &ws, &manifest, model.as_ref())?;
            show(&ws.results_dir("eval-few").join("results.md"))?;
        }
        Command::Sweep => {
            let manifest = manifest(common, &ws)?;
            let model = pipeline::load_model(&checkpoint_path(common, &ws), &cfg)?;
            pipeline::run_sweep(&cfg, &ws, &manifest, model.as_ref())?;
            show(&ws.results_dir("sweep").join("results.md"))?;
        }
        Command::Rpg { with, without } => {
            println!("{:.6}", relative_performance_gain(*with, *without)?);
        }
        Command::CaseStudy { dataset, top, texts } => {
            let manifest = manifest(common, &ws)?;
            let ckpt = Checkpoint::load(checkpoint_path(common, &ws))?;
            let entry = match dataset {
                Some(id) => manifest.get(id).with_context(|| format!("unknown dataset `{id}`"))?,
                None => manifest
                    .partition(Partition::Test)
                    .next()
                    .context("manifest has no test datasets")?,
            };
            let labels: LabelSet = entry.label_set()?;
            let texts = if texts.is_empty() {
                manifest.read_test(entry)?.into_iter().take(5).map(|r| r.text).collect()
            } else {
                texts.clone()
            };
            print!("{}", pipeline::case_study(&ckpt, &labels, &texts, *top)?);
        }
        Command::Report => {
            ensure_prepared(&cfg, &ws, common)?;
            let manifest = manifest(common, &ws)?;
            for model in [ModelChoice::Contrastive, ModelChoice::Efl] {
                if !ws.checkpoint(model.file_stem()).exists() {
                    log::info!("pretraining missing {} checkpoint", model.file_stem());
                    pipeline::pretrain(&cfg, &ws, &manifest, model)?;
                }
            }
            pipeline::comparison(&cfg, &ws, &manifest)?;
            show(&ws.results_dir("report").join("results.md"))?;
        }
    }
    Ok(())
}
