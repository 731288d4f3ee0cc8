//! Sentence encoder contract and a small trainable encoder.
//!
//! The same encoder embeds queries and `premise [SEP] hypothesis` sequences
//! into one space. [`ToyEncoder`] is a mean-pooled embedding table followed by
//! a single `tanh` projection, with exact analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::meta_task::SEP_TOKEN;
use crate::tokenizer::{Tokenizer, UNK_ID};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding(pub Vec<f64>);

impl Embedding {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Train,
    #[default]
    Eval,
}

/// Strings in, fixed-dimension vectors out.
///
/// Implementors only provide [`SentenceEncoder::encode`]; query and
/// premise-hypothesis encodings share it, so both land in one space.
pub trait SentenceEncoder {
    fn dim(&self) -> usize;

    fn encode(&self, text: &str) -> Result<Embedding>;

    fn encode_query(&self, query: &str) -> Result<Embedding> {
        if query.trim().is_empty() {
            return Err(Error::EmptyText);
        }
        self.encode(query)
    }

    fn encode_premise_hypothesis(&self, premise: &str, hypothesis: &str) -> Result<Embedding> {
        self.encode(&pair_sequence(premise, hypothesis)?)
    }
}

/// `p [SEP] h`.
pub fn pair_sequence(premise: &str, hypothesis: &str) -> Result<String> {
    if hypothesis.trim().is_empty() {
        return Err(Error::EmptyLabel);
    }
    Ok(format!("{premise} {SEP_TOKEN} {hypothesis}"))
}

/// An encoder whose parameters are a flat vector and that can backpropagate
/// an upstream gradient on its output.
pub trait TrainableEncoder: SentenceEncoder + Clone {
    type Trace;

    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];
    fn set_mode(&mut self, mode: Mode);

    fn forward(&self, text: &str) -> Result<(Embedding, Self::Trace)>;

    /// Accumulates `∂L/∂params` into `grad` given `upstream = ∂L/∂output`.
    fn backward(&self, trace: &Self::Trace, upstream: &[f64], grad: &mut [f64]);
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyEncoderConfig {
    pub embed_dim: usize,
    pub out_dim: usize,
    /// Embedding table init range `[-r, r]`.
    pub init_range: f64,
}

impl Default for ToyEncoderConfig {
    fn default() -> Self {
        Self {
            embed_dim: 48,
            out_dim: 48,
            init_range: 0.1,
        }
    }
}

/// Mean-pooled token embeddings followed by `tanh(W·mean + b)`.
///
/// Parameter layout in the flat vector: embedding table (`vocab × embed_dim`,
/// row-major), projection `W` (`out_dim × embed_dim`, row-major), bias `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyEncoder {
    tokenizer: Tokenizer,
    embed_dim: usize,
    out_dim: usize,
    params: Vec<f64>,
    mode: Mode,
}

#[derive(Debug, Clone)]
pub struct ToyTrace {
    ids: Vec<u32>,
    pooled: Vec<f64>,
    out: Vec<f64>,
}

impl ToyEncoder {
    /// Embeddings uniform in `[-init_range, init_range]`; projection uniform
    /// in `[-1/sqrt(embed_dim), 1/sqrt(embed_dim)]`; zero bias.
    pub fn new(tokenizer: Tokenizer, config: &ToyEncoderConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (v, e, d) = (tokenizer.len(), config.embed_dim, config.out_dim);
        let mut params = Vec::with_capacity(v * e + d * e + d);
        let r = config.init_range;
        params.extend((0..v * e).map(|_| rng.gen_range(-r..=r)));
        let fan_in = 1.0 / (e as f64).sqrt();
        params.extend((0..d * e).map(|_| rng.gen_range(-fan_in..=fan_in)));
        params.extend(std::iter::repeat(0.0).take(d));
        Self {
            tokenizer,
            embed_dim: e,
            out_dim: d,
            params,
            mode: Mode::Eval,
        }
    }

    pub fn from_parts(
        tokenizer: Tokenizer,
        embed_dim: usize,
        out_dim: usize,
        params: Vec<f64>,
    ) -> Result<Self> {
        let expected = tokenizer.len() * embed_dim + out_dim * embed_dim + out_dim;
        if params.len() != expected {
            return Err(Error::Checkpoint(format!(
                "expected {expected} parameters, found {}",
                params.len()
            )));
        }
        Ok(Self {
            tokenizer,
            embed_dim,
            out_dim,
            params,
            mode: Mode::Eval,
        })
    }

    pub fn tokenizer(&self) -> &Tokenizer {
        &self.tokenizer
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    fn table_len(&self) -> usize {
        self.tokenizer.len() * self.embed_dim
    }

    /// Offsets of the embedding table, projection and bias groups.
    pub fn groups(&self) -> [std::ops::Range<usize>; 3] {
        let t = self.table_len();
        let w = t + self.out_dim * self.embed_dim;
        [0..t, t..w, w..w + self.out_dim]
    }

    fn row(&self, id: u32) -> &[f64] {
        let s = id as usize * self.embed_dim;
        &self.params[s..s + self.embed_dim]
    }

    pub fn forward_ids(&self, ids: &[u32]) -> (Embedding, ToyTrace) {
        let e = self.embed_dim;
        let mut pooled = vec![0.0; e];
        // An empty token list pools the UNK row.
        let fallback = [UNK_ID];
        let ids: &[u32] = if ids.is_empty() { &fallback } else { ids };
        for &id in ids {
            for (p, x) in pooled.iter_mut().zip(self.row(id)) {
                *p += x;
            }
        }
        let inv = 1.0 / ids.len() as f64;
        pooled.iter_mut().for_each(|p| *p *= inv);

        let [_, w, b] = self.groups();
        let weights = &self.params[w];
        let bias = &self.params[b];
        let out: Vec<f64> = (0..self.out_dim)
            .map(|j| {
                let row = &weights[j * e..(j + 1) * e];
                let pre: f64 = row.iter().zip(&pooled).map(|(a, b)| a * b).sum::<f64>() + bias[j];
                pre.tanh()
            })
            .collect();
        (
            Embedding(out.clone()),
            ToyTrace {
                ids: ids.to_vec(),
                pooled,
                out,
            },
        )
    }
}

impl SentenceEncoder for ToyEncoder {
    fn dim(&self) -> usize {
        self.out_dim
    }

    fn encode(&self, text: &str) -> Result<Embedding> {
        Ok(self.forward(text)?.0)
    }
}

impl TrainableEncoder for ToyEncoder {
    type Trace = ToyTrace;

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    fn forward(&self, text: &str) -> Result<(Embedding, ToyTrace)> {
        if text.trim().is_empty() {
            return Err(Error::EmptyText);
        }
        Ok(self.forward_ids(&self.tokenizer.encode(text)))
    }

    fn backward(&self, trace: &ToyTrace, upstream: &[f64], grad: &mut [f64]) {
        let e = self.embed_dim;
        let [_, w, b] = self.groups();
        // d tanh = 1 - tanh^2
        let dpre: Vec<f64> = trace
            .out
            .iter()
            .zip(upstream)
            .map(|(z, g)| g * (1.0 - z * z))
            .collect();
        let mut dpooled = vec![0.0; e];
        {
            let weights = &self.params[w.clone()];
            for (j, &dp) in dpre.iter().enumerate() {
                if dp == 0.0 {
                    continue;
                }
                let row = &weights[j * e..(j + 1) * e];
                let grow = &mut grad[w.start + j * e..w.start + (j + 1) * e];
                for k in 0..e {
                    grow[k] += dp * trace.pooled[k];
                    dpooled[k] += dp * row[k];
                }
            }
        }
        for (gb, dp) in grad[b].iter_mut().zip(&dpre) {
            *gb += dp;
        }
        let inv = 1.0 / trace.ids.len() as f64;
        for &id in &trace.ids {
            let s = id as usize * e;
            for (g, d) in grad[s..s + e].iter_mut().zip(&dpooled) {
                *g += d * inv;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn encoder() -> ToyEncoder {
        let tok = Tokenizer::fit(["the cat sat on the mat", "sentence : happy sad"], 1);
        ToyEncoder::new(
            tok,
            &ToyEncoderConfig {
                embed_dim: 6,
                out_dim: 5,
                init_range: 0.5,
            },
            42,
        )
    }

    #[test]
    fn eval_is_deterministic_and_finite() {
        let enc = encoder();
        let a = enc.encode_query("the cat sat").unwrap();
        let b = enc.encode_query("the cat sat").unwrap();
        assert_eq!(a, b);
        assert!(a.is_finite());
        assert_eq!(a.dim(), 5);
    }

    #[test]
    fn empty_inputs_rejected() {
        let enc = encoder();
        assert!(enc.encode_query("  ").is_err());
        assert!(enc.encode_premise_hypothesis("NULL", "").is_err());
        assert!(enc.encode_premise_hypothesis("NULL", "happy").is_ok());
    }

    #[test]
    fn pair_vs_distinct_premise() {
        let enc = encoder();
        let a = enc.encode_premise_hypothesis("sentence: the cat", "happy").unwrap();
        let b = enc.encode_premise_hypothesis("sentence: the mat", "happy").unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn all_unk_is_projection_of_unk_row() {
        let enc = encoder();
        let got = enc.encode("zebra quokka").unwrap();
        let (want, _) = enc.forward_ids(&[UNK_ID]);
        assert_eq!(got, want);
    }

    #[test]
    fn mean_pool_is_permutation_invariant() {
        let enc = encoder();
        let a = enc.encode("the cat sat on the mat").unwrap();
        let b = enc.encode("mat the on sat cat the").unwrap();
        for (x, y) in a.0.iter().zip(&b.0) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn dimension_matches_across_towers() {
        let enc = encoder();
        let q = enc.encode_query("(1) happy (2) sad, sentence: the cat").unwrap();
        let ph = enc.encode_premise_hypothesis("NULL", "happy").unwrap();
        assert_eq!(q.dim(), ph.dim());
    }

    fn loss(enc: &ToyEncoder, text: &str, weights: &[f64]) -> f64 {
        let e = enc.encode(text).unwrap();
        e.0.iter().zip(weights).map(|(a, b)| a * b).sum()
    }

    #[test]
    fn backward_matches_central_differences_per_group() {
        let mut enc = encoder();
        let text = "the cat sat on the mat zebra";
        let upstream = [0.3, -1.2, 0.7, 0.05, -0.4];
        let (_, trace) = enc.forward(text).unwrap();
        let mut grad = vec![0.0; enc.params().len()];
        enc.backward(&trace, &upstream, &mut grad);

        let h = 1e-5;
        let ids = enc.tokenizer().encode(text);
        let groups = enc.groups();
        let mut probes: Vec<usize> = ids.iter().map(|&id| id as usize * enc.embed_dim() + 2).collect();
        probes.extend([groups[1].start, groups[1].start + 7, groups[1].end - 1]);
        probes.extend(groups[2].clone());
        for i in probes {
            let orig = enc.params()[i];
            enc.params_mut()[i] = orig + h;
            let up = loss(&enc, text, &upstream);
            enc.params_mut()[i] = orig - h;
            let down = loss(&enc, text, &upstream);
            enc.params_mut()[i] = orig;
            let fd = (up - down) / (2.0 * h);
            let rel = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-8);
            assert!(rel < 1e-4, "param {i}: fd {fd} analytic {}", grad[i]);
        }
    }
}
