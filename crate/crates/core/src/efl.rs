//! Entailment-as-few-shot-learner baseline: every `(sentence, label)` pair is
//! a binary entailment decision scored by a logistic head over the encoder
//! output of `sentence: x [SEP] label`. Inference picks the label with the
//! highest probability.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::{Checkpoint, ModelKind};
use crate::encoder::{pair_sequence, Mode, SentenceEncoder, ToyEncoder, TrainableEncoder};
use crate::error::{Error, Result};
use crate::meta_task::{premise_for_text, LabelSet, MetaExample};
use crate::optim::{clip_global_norm, lr_schedule, AdamWState};
use crate::predictor::{rank_scores, Prediction};
use crate::sampler::SupportSet;
use crate::training::{fit_tokenizer, EpochStats, LossRecord, TrainConfig, TrainOutcome};

/// One binary training pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntailmentPair {
    pub sequence: String,
    pub target: bool,
}

/// One positive and `|labels| - 1` negatives for a sentence with gold `label`.
pub fn binary_pairs(premise: &str, label: &str, labels: &LabelSet) -> Result<Vec<EntailmentPair>> {
    labels
        .labels()
        .iter()
        .map(|l| {
            Ok(EntailmentPair {
                sequence: pair_sequence(premise, l)?,
                target: l == label,
            })
        })
        .collect()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `P(entail)` for a pair sequence.
pub fn probability(ckpt: &Checkpoint, sequence: &str) -> Result<f64> {
    let z = ckpt.encoder.encode(sequence)?;
    Ok(sigmoid(logit(&ckpt.head, z.as_slice())))
}

fn logit(head: &[f64], z: &[f64]) -> f64 {
    let d = z.len();
    head[..d].iter().zip(z).map(|(w, x)| w * x).sum::<f64>() + head[d]
}

pub fn predict(ckpt: &Checkpoint, text: &str, labels: &LabelSet) -> Result<Prediction> {
    let premise = premise_for_text(text)?;
    let probs = labels
        .labels()
        .iter()
        .map(|l| probability(ckpt, &pair_sequence(&premise, l)?))
        .collect::<Result<Vec<_>>>()?;
    Ok(rank_scores(labels, &probs))
}

/// Mean binary cross-entropy over `pairs` and its gradient with respect to
/// `[encoder params; head]`.
pub fn bce_step(encoder: &ToyEncoder, head: &[f64], pairs: &[&EntailmentPair]) -> Result<(f64, Vec<f64>)> {
    let n_enc = encoder.params().len();
    let d = encoder.dim();
    let mut grad = vec![0.0; n_enc + head.len()];
    let mut loss = 0.0;
    let scale = 1.0 / pairs.len() as f64;
    for pair in pairs {
        let (z, trace) = encoder.forward(&pair.sequence)?;
        let s = logit(head, z.as_slice());
        let y = if pair.target { 1.0 } else { 0.0 };
        // log(1 + e^s) - y·s, computed stably.
        loss += (s.max(0.0) + (-s.abs()).exp().ln_1p() - y * s) * scale;
        let ds = (sigmoid(s) - y) * scale;
        let (genc, ghead) = grad.split_at_mut(n_enc);
        for k in 0..d {
            ghead[k] += ds * z.0[k];
        }
        ghead[d] += ds;
        let dz: Vec<f64> = head[..d].iter().map(|w| ds * w).collect();
        encoder.backward(&trace, &dz, genc);
    }
    Ok((loss, grad))
}

fn init_head(d: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let r = 1.0 / (d as f64).sqrt();
    let mut head: Vec<f64> = (0..d).map(|_| rng.gen_range(-r..=r)).collect();
    head.push(0.0);
    head
}

/// Untrained EFL checkpoint with a tokenizer fitted on `meta`.
pub fn init_efl(meta: &[MetaExample], cfg: &TrainConfig) -> Checkpoint {
    let encoder = ToyEncoder::new(fit_tokenizer(meta, cfg.min_token_count), &cfg.encoder, cfg.seed);
    let head = init_head(encoder.dim(), cfg.seed);
    Checkpoint::new(ModelKind::Efl, encoder, head, cfg.hash())
}

fn train_pairs(
    ckpt: &mut Checkpoint,
    groups: &[Vec<EntailmentPair>],
    batch_size: usize,
    epochs: usize,
    peak_lr: f64,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(Vec<LossRecord>, Vec<EpochStats>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut orders = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        let mut idx: Vec<usize> = (0..groups.len()).collect();
        idx.shuffle(&mut rng);
        orders.push(idx);
    }
    let per_epoch = groups.len().div_ceil(batch_size.max(1));
    let total = per_epoch * epochs;
    let n_enc = ckpt.encoder.params().len();
    let mut params: Vec<f64> = ckpt.encoder.params().iter().chain(&ckpt.head).copied().collect();
    let mut curve = Vec::new();
    let mut stats = Vec::new();
    let mut local = 0;
    ckpt.encoder.set_mode(Mode::Train);
    for (epoch, order) in orders.iter().enumerate() {
        let mut sum = 0.0;
        let mut batches = 0;
        for (b, chunk) in order.chunks(batch_size.max(1)).enumerate() {
            let pairs: Vec<&EntailmentPair> = chunk.iter().flat_map(|&i| groups[i].iter()).collect();
            let (loss, mut grad) = bce_step(&ckpt.encoder, &ckpt.head, &pairs)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            if let Some(max) = cfg.clip_norm {
                clip_global_norm(&mut grad, max);
            }
            let lr = lr_schedule(local, total, peak_lr, cfg.warmup_ratio);
            ckpt.optimizer.step(&cfg.adamw, &mut params, &grad, lr);
            ckpt.encoder.params_mut().copy_from_slice(&params[..n_enc]);
            ckpt.head.copy_from_slice(&params[n_enc..]);
            ckpt.step += 1;
            local += 1;
            sum += loss;
            batches += 1;
            curve.push(LossRecord { step: ckpt.step, epoch, loss, lr });
        }
        stats.push(EpochStats {
            epoch,
            batches,
            mean_loss: sum / batches.max(1) as f64,
            null_fraction: 0.0,
        });
    }
    ckpt.encoder.set_mode(Mode::Eval);
    Ok((curve, stats))
}

/// Supervised pretraining of the binary discriminator on every
/// `(sentence, label)` combination of the meta dataset.
pub fn train_efl_baseline(
    meta: &[MetaExample],
    label_sets: &BTreeMap<String, LabelSet>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if meta.is_empty() {
        return Err(Error::Config("empty meta dataset".into()));
    }
    let groups = meta
        .iter()
        .map(|m| {
            let labels = label_sets
                .get(&m.dataset_id)
                .ok_or_else(|| Error::EmptyLabelSet(m.dataset_id.clone()))?;
            binary_pairs(&m.premise, &m.hypothesis, labels)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut ckpt = init_efl(meta, cfg);
    let (curve, epochs) = train_pairs(
        &mut ckpt,
        &groups,
        cfg.batch_spec.batch_size(),
        cfg.epochs_pretrain,
        cfg.learning_rate,
        cfg,
        cfg.seed,
    )?;
    Ok(TrainOutcome { checkpoint: ckpt, curve, epochs })
}

/// Fine-tunes a copy of an EFL checkpoint on the support set's binary pairs.
pub fn finetune_efl(ckpt: &Checkpoint, support: &SupportSet, cfg: &TrainConfig) -> Result<TrainOutcome> {
    if ckpt.kind != ModelKind::Efl {
        return Err(Error::Checkpoint("not an EFL checkpoint".into()));
    }
    if support.entries.is_empty() {
        return Err(Error::Config("fine-tuning needs k >= 1".into()));
    }
    let groups = support
        .entries
        .iter()
        .map(|e| binary_pairs(&e.premise, &e.hypothesis, &support.labels))
        .collect::<Result<Vec<_>>>()?;
    let mut out = ckpt.clone();
    out.optimizer = AdamWState::new(out.encoder.params().len() + out.head.len());
    let (curve, epochs) = train_pairs(
        &mut out,
        &groups,
        cfg.batch_spec.batch_size(),
        cfg.epochs_finetune,
        cfg.finetune_learning_rate.unwrap_or(cfg.learning_rate),
        cfg,
        cfg.seed ^ support.seed.rotate_left(17),
    )?;
    Ok(TrainOutcome { checkpoint: out, curve, epochs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::ToyEncoderConfig;
    use crate::tokenizer::Tokenizer;

    #[test]
    fn three_labels_give_one_positive_two_negatives() {
        let ls = LabelSet::new("d", vec!["a".into(), "b".into(), "c".into()]).unwrap();
        let pairs = binary_pairs("sentence: x", "b", &ls).unwrap();
        assert_eq!(pairs.len(), 3);
        assert_eq!(pairs.iter().filter(|p| p.target).count(), 1);
        assert_eq!(pairs[1].sequence, "sentence: x [SEP] b");
        assert!(pairs[1].target);
    }

    #[test]
    fn probabilities_in_unit_interval() {
        let tok = Tokenizer::fit(["sentence : x a b"], 1);
        let enc = ToyEncoder::new(tok, &ToyEncoderConfig { embed_dim: 4, out_dim: 3, init_range: 1.0 }, 1);
        let ckpt = Checkpoint::new(ModelKind::Efl, enc, vec![30.0, -30.0, 5.0, 2.0], String::new());
        let p = probability(&ckpt, "sentence: x [SEP] a").unwrap();
        assert!((0.0..=1.0).contains(&p));
    }

    #[test]
    fn bce_gradient_matches_finite_differences() {
        let tok = Tokenizer::fit(["sentence : alpha beta gamma a b"], 1);
        let enc = ToyEncoder::new(tok, &ToyEncoderConfig { embed_dim: 4, out_dim: 3, init_range: 0.5 }, 2);
        let head = vec![0.4, -0.7, 0.2, 0.1];
        let ls = LabelSet::new("d", vec!["a".into(), "b".into()]).unwrap();
        let pairs = binary_pairs("sentence: alpha beta", "a", &ls).unwrap();
        let refs: Vec<&EntailmentPair> = pairs.iter().collect();
        let (_, grad) = bce_step(&enc, &head, &refs).unwrap();
        let n_enc = enc.params().len();
        let h = 1e-6;
        for i in [0, 5, n_enc - 1, n_enc, n_enc + 3] {
            let eval = |delta: f64| {
                let mut e = enc.clone();
                let mut hd = head.clone();
                if i < n_enc {
                    e.params_mut()[i] += delta;
                } else {
                    hd[i - n_enc] += delta;
                }
                bce_step(&e, &hd, &refs).unwrap().0
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            let rel = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-8);
            assert!(rel < 1e-4, "param {i}: fd {fd} analytic {}", grad[i]);
        }
    }
}
