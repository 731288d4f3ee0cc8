//! Supervised contrastive pretraining and few-shot fine-tuning.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::checkpoint::{Checkpoint, ModelKind};
use crate::contrastive::{build_positive_mask, scl_loss_and_gradient, similarity_backward, similarity_matrix, SclParams};
use crate::encoder::{pair_sequence, Embedding, Mode, ToyEncoder, ToyEncoderConfig, TrainableEncoder};
use crate::error::{Error, Result};
use crate::meta_task::{null_mask, verbalize, LabelKeyScope, MetaExample, NULL_PREMISE};
use crate::optim::{clip_global_norm, lr_schedule, AdamWConfig, AdamWState};
use crate::sampler::{BalancedSampler, Batch, BatchSpec, SupportSet};
use crate::tokenizer::Tokenizer;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Peak rate for fine-tuning; `None` reuses `learning_rate`.
    pub finetune_learning_rate: Option<f64>,
    pub warmup_ratio: f64,
    pub epochs_pretrain: usize,
    pub epochs_finetune: usize,
    pub null_ratio: f64,
    pub batch_spec: BatchSpec,
    /// Restrict every batch to a single source dataset.
    pub same_dataset_only: bool,
    pub seed: u64,
    pub scl: SclParams,
    pub adamw: AdamWConfig,
    /// Global-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub encoder: ToyEncoderConfig,
    /// Tokens rarer than this in the pretraining text map to UNK.
    pub min_token_count: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-5,
            finetune_learning_rate: None,
            warmup_ratio: 0.06,
            epochs_pretrain: 20,
            epochs_finetune: 10,
            null_ratio: 0.05,
            batch_spec: BatchSpec::default(),
            same_dataset_only: false,
            seed: 0,
            scl: SclParams::default(),
            adamw: AdamWConfig::default(),
            clip_norm: Some(1.0),
            encoder: ToyEncoderConfig::default(),
            min_token_count: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!("learning_rate must be >= 0, got {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.warmup_ratio) {
            return Err(Error::Fraction { what: "warmup_ratio", value: self.warmup_ratio });
        }
        if !(0.0..=1.0).contains(&self.null_ratio) {
            return Err(Error::Fraction { what: "null_ratio", value: self.null_ratio });
        }
        if self.epochs_pretrain == 0 {
            return Err(Error::Config("epochs_pretrain must be positive".into()));
        }
        self.batch_spec.validate()?;
        self.scl.validate()
    }

    /// Short SHA-256 over the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(json))[..16].to_string()
    }

    fn finetune_lr(&self) -> f64 {
        self.finetune_learning_rate.unwrap_or(self.learning_rate)
    }
}

/// One optimizer step in the loss curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: u64,
    pub epoch: usize,
    pub loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub batches: usize,
    pub mean_loss: f64,
    /// Realized NULL fraction over every premise of the pool this epoch.
    pub null_fraction: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub curve: Vec<LossRecord>,
    pub epochs: Vec<EpochStats>,
}

/// Builds the tokenizer from every surface form the encoder will see.
pub fn fit_tokenizer(meta: &[MetaExample], min_count: usize) -> Tokenizer {
    Tokenizer::fit(
        meta.iter()
            .flat_map(|m| [m.query.as_str(), m.premise.as_str(), m.hypothesis.as_str()]),
        min_count,
    )
}

/// Contrastive loss and parameter gradient for one batch.
///
/// `premises[i]` overrides `batch[i].premise` (used for NULL injection).
pub fn contrastive_step<E: TrainableEncoder>(
    encoder: &E,
    batch: &[&MetaExample],
    premises: &[&str],
    scl: &SclParams,
) -> Result<(f64, Vec<f64>)> {
    let mut q_emb = Vec::with_capacity(batch.len());
    let mut q_trace = Vec::with_capacity(batch.len());
    let mut p_emb = Vec::with_capacity(batch.len());
    let mut p_trace = Vec::with_capacity(batch.len());
    for (ex, premise) in batch.iter().zip(premises) {
        let (e, t) = encoder.forward(&ex.query)?;
        q_emb.push(e);
        q_trace.push(t);
        let (e, t) = encoder.forward(&pair_sequence(premise, &ex.hypothesis)?)?;
        p_emb.push(e);
        p_trace.push(t);
    }
    let keys: Vec<&str> = batch.iter().map(|e| e.label_key.as_str()).collect();
    let s = similarity_matrix(&q_emb, &p_emb)?;
    let mask = build_positive_mask(&keys);
    let (loss, grad_s) = scl_loss_and_gradient(&s, &mask, scl)?;
    let (dq, dp) = similarity_backward(&q_emb, &p_emb, &grad_s);
    let mut grad = vec![0.0; encoder.params().len()];
    for (t, g) in q_trace.iter().zip(&dq) {
        encoder.backward(t, g, &mut grad);
    }
    for (t, g) in p_trace.iter().zip(&dp) {
        encoder.backward(t, g, &mut grad);
    }
    Ok((loss, grad))
}

/// Batches and NULL masks for every epoch, drawn up front so the schedule
/// knows the total step count.
struct Plan {
    epochs: Vec<(Vec<Batch>, Vec<bool>)>,
}

impl Plan {
    fn draw(sampler: &BalancedSampler, n: usize, epochs: usize, null_ratio: f64, rng: &mut ChaCha8Rng) -> Result<Self> {
        let mut out = Vec::with_capacity(epochs);
        for _ in 0..epochs {
            let mask = null_mask(n, null_ratio, rng)?;
            out.push((sampler.epoch(rng), mask));
        }
        Ok(Self { epochs: out })
    }

    fn total_steps(&self) -> usize {
        self.epochs.iter().map(|(b, _)| b.len()).sum()
    }
}

struct Loop<'a> {
    pool: &'a [MetaExample],
    excluded: &'a BTreeSet<String>,
    peak_lr: f64,
    epochs: usize,
    null_ratio: f64,
    seed: u64,
}

fn run_loop(ckpt: &mut Checkpoint, spec: BatchSpec, cfg: &TrainConfig, lp: Loop<'_>) -> Result<(Vec<LossRecord>, Vec<EpochStats>)> {
    let sampler = BalancedSampler::new(lp.pool, spec, cfg.same_dataset_only)?;
    let mut rng = ChaCha8Rng::seed_from_u64(lp.seed);
    let plan = Plan::draw(&sampler, lp.pool.len(), lp.epochs, lp.null_ratio, &mut rng)?;
    let total = plan.total_steps();
    let mut curve = Vec::with_capacity(total);
    let mut stats = Vec::with_capacity(lp.epochs);
    let mut local_step = 0usize;
    ckpt.encoder.set_mode(Mode::Train);

    for (epoch, (batches, mask)) in plan.epochs.iter().enumerate() {
        let mut sum = 0.0;
        for (b, batch) in batches.iter().enumerate() {
            let examples: Vec<&MetaExample> = batch.iter().map(|&i| &lp.pool[i]).collect();
            if let Some(ex) = examples.iter().find(|e| lp.excluded.contains(&e.dataset_id)) {
                return Err(Error::ExcludedDataset { batch: b, dataset_id: ex.dataset_id.clone() });
            }
            let premises: Vec<&str> = batch
                .iter()
                .map(|&i| if mask[i] { NULL_PREMISE } else { lp.pool[i].premise.as_str() })
                .collect();
            let (loss, mut grad) = contrastive_step(&ckpt.encoder, &examples, &premises, &cfg.scl)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            if let Some(max) = cfg.clip_norm {
                clip_global_norm(&mut grad, max);
            }
            let lr = lr_schedule(local_step, total, lp.peak_lr, cfg.warmup_ratio);
            ckpt.optimizer.step(&cfg.adamw, ckpt.encoder.params_mut(), &grad, lr);
            ckpt.step += 1;
            local_step += 1;
            sum += loss;
            curve.push(LossRecord { step: ckpt.step, epoch, loss, lr });
        }
        let nulls = mask.iter().filter(|m| **m).count();
        stats.push(EpochStats {
            epoch,
            batches: batches.len(),
            mean_loss: if batches.is_empty() { f64::NAN } else { sum / batches.len() as f64 },
            null_fraction: if mask.is_empty() { 0.0 } else { nulls as f64 / mask.len() as f64 },
        });
        log::debug!("epoch {epoch}: {} batches, mean loss {:.4}", batches.len(), stats[epoch].mean_loss);
    }
    ckpt.encoder.set_mode(Mode::Eval);
    Ok((curve, stats))
}

/// Fresh contrastive checkpoint with a tokenizer fitted on `meta`.
pub fn init_checkpoint(meta: &[MetaExample], cfg: &TrainConfig) -> Checkpoint {
    let tokenizer = fit_tokenizer(meta, cfg.min_token_count);
    let encoder = ToyEncoder::new(tokenizer, &cfg.encoder, cfg.seed);
    Checkpoint::new(ModelKind::Contrastive, encoder, Vec::new(), cfg.hash())
}

pub fn pretrain(meta: &[MetaExample], cfg: &TrainConfig) -> Result<TrainOutcome> {
    pretrain_excluding(meta, cfg, &BTreeSet::new())
}

/// Pretraining that fails if any batch touches a dataset in `excluded`.
pub fn pretrain_excluding(
    meta: &[MetaExample],
    cfg: &TrainConfig,
    excluded: &BTreeSet<String>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if meta.is_empty() {
        return Err(Error::Config("empty meta dataset".into()));
    }
    let mut ckpt = init_checkpoint(meta, cfg);
    let (curve, epochs) = run_loop(
        &mut ckpt,
        cfg.batch_spec,
        cfg,
        Loop {
            pool: meta,
            excluded,
            peak_lr: cfg.learning_rate,
            epochs: cfg.epochs_pretrain,
            null_ratio: cfg.null_ratio,
            seed: cfg.seed,
        },
    )?;
    Ok(TrainOutcome { checkpoint: ckpt, curve, epochs })
}

/// Meta examples built from a support set; every entry appears twice when a
/// label has a single example so each anchor keeps one positive.
pub fn support_pool(support: &SupportSet) -> Result<Vec<MetaExample>> {
    let scope = LabelKeyScope::Global;
    let mut pool = Vec::with_capacity(support.entries.len());
    for entry in &support.entries {
        pool.push(verbalize(&entry.example, &support.labels, scope)?);
    }
    let min_count = support
        .labels
        .labels()
        .iter()
        .map(|l| support.count_for(l))
        .filter(|&c| c > 0)
        .min()
        .unwrap_or(0);
    if min_count == 1 {
        let copy = pool.clone();
        pool.extend(copy);
    }
    Ok(pool)
}

/// Batch shape for fine-tuning: all target labels (up to `L`), and
/// `min(M, per-label count)` instances.
pub fn finetune_spec(support: &SupportSet, pool: &[MetaExample], spec: BatchSpec) -> Result<BatchSpec> {
    let labels_present = support.labels.labels().iter().filter(|l| support.count_for(l) > 0).count();
    let per_label = support
        .labels
        .labels()
        .iter()
        .map(|l| pool.iter().filter(|m| &m.hypothesis == l).count())
        .filter(|&c| c > 0)
        .min()
        .unwrap_or(0);
    BatchSpec::new(
        spec.labels_per_batch.min(labels_present),
        spec.instances_per_label.min(per_label),
    )
}

/// Continues contrastive training of a copy of `ckpt` on the support set.
///
/// The optimizer moments restart from zero and the schedule spans the
/// fine-tuning steps only; no premises are nullified.
pub fn finetune(ckpt: &Checkpoint, support: &SupportSet, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if support.shots == 0 {
        return Err(Error::Config("fine-tuning needs k >= 1".into()));
    }
    if support.entries.len() < 2 {
        return Err(Error::Config(format!(
            "fine-tuning needs at least 2 support examples, have {}",
            support.entries.len()
        )));
    }
    let pool = support_pool(support)?;
    let spec = finetune_spec(support, &pool, cfg.batch_spec)?;
    let mut out = ckpt.clone();
    out.optimizer = AdamWState::new(out.encoder.params().len());
    let (curve, epochs) = run_loop(
        &mut out,
        spec,
        cfg,
        Loop {
            pool: &pool,
            excluded: &BTreeSet::new(),
            peak_lr: cfg.finetune_lr(),
            epochs: cfg.epochs_finetune,
            null_ratio: 0.0,
            seed: cfg.seed ^ support.seed.rotate_left(17),
        },
    )?;
    Ok(TrainOutcome { checkpoint: out, curve, epochs })
}

/// Loss of the current encoder on a batch, without updating it.
pub fn batch_loss(encoder: &ToyEncoder, batch: &[MetaExample], scl: &SclParams) -> Result<f64> {
    let refs: Vec<&MetaExample> = batch.iter().collect();
    let premises: Vec<&str> = batch.iter().map(|m| m.premise.as_str()).collect();
    Ok(contrastive_step(encoder, &refs, &premises, scl)?.0)
}

/// Embeddings of a batch's queries and pair sequences.
pub fn embed_batch<E: TrainableEncoder>(encoder: &E, batch: &[MetaExample]) -> Result<(Vec<Embedding>, Vec<Embedding>)> {
    let mut q = Vec::new();
    let mut p = Vec::new();
    for ex in batch {
        q.push(encoder.encode(&ex.query)?);
        p.push(encoder.encode(&pair_sequence(&ex.premise, &ex.hypothesis)?)?);
    }
    Ok((q, p))
}
