//! Independent reference implementations shared by the integration tests.
//! Nothing here calls into the library's loss, similarity or prediction code.

#![allow(dead_code)]

use nested_entail::contrastive::{build_positive_mask, Matrix, PositiveMask};
use nested_entail::encoder::{ToyEncoder, ToyEncoderConfig};
use nested_entail::meta_task::{LabelSet, RawExample};
use nested_entail::synthetic::{concept, sentence, SentenceStyle, CONCEPTS};
use nested_entail::tokenizer::Tokenizer;
use rand::seq::SliceRandom;
use rand::Rng;

/// Random similarity matrix in [-1, 1] and labels where every label occurs
/// at least twice.
pub struct SclInstance {
    pub s: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl SclInstance {
    pub fn random<R: Rng>(rng: &mut R, n: usize) -> Self {
        let n_labels = rng.gen_range(1..=n / 2);
        let mut labels: Vec<usize> = (0..n_labels).flat_map(|l| [l, l]).collect();
        while labels.len() < n {
            labels.push(rng.gen_range(0..n_labels));
        }
        labels.shuffle(rng);
        let s = (0..n)
            .map(|_| (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect())
            .collect();
        Self { s, labels }
    }

    pub fn matrix(&self) -> Matrix {
        Matrix::from_rows(self.s.clone())
    }

    pub fn mask(&self) -> PositiveMask {
        build_positive_mask(&self.labels)
    }
}

/// Literal transcription of the loss: a double loop over anchors and
/// positives with a plain (unstabilized) softmax denominator.
pub fn brute_scl(s: &[Vec<f64>], labels: &[usize], tau: f64, exclude_self: bool) -> f64 {
    (0..s.len()).map(|i| brute_scl_anchor(s, labels, tau, exclude_self, i)).sum()
}

/// Anchor `i`'s term of [`brute_scl`]; row `i` of `s` is the only row it reads.
pub fn brute_scl_anchor(s: &[Vec<f64>], labels: &[usize], tau: f64, exclude_self: bool, i: usize) -> f64 {
    let n = s.len();
    let p_count = (0..n).filter(|&p| labels[p] == labels[i]).count() as f64;
    let norm = if exclude_self { p_count - 1.0 } else { p_count };
    let mut denom = 0.0;
    for a in 0..n {
        if a != i {
            denom += (s[i][a] / tau).exp();
        }
    }
    let mut inner = 0.0;
    for p in 0..n {
        if labels[p] == labels[i] && p != i {
            inner += ((s[i][p] / tau).exp() / denom).ln();
        }
    }
    -inner / norm
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}

/// Balanced examples for `labels` drawn from the synthetic concepts.
pub fn concept_examples<R: Rng>(rng: &mut R, dataset_id: &str, labels: &[&str], per_label: usize) -> (LabelSet, Vec<RawExample>) {
    let ls = LabelSet::new(dataset_id, labels.iter().map(|s| s.to_string()).collect()).unwrap();
    let style = SentenceStyle::default();
    let mut out = Vec::new();
    for _ in 0..per_label {
        for l in labels {
            let c = concept(l).unwrap();
            out.push(RawExample::new(sentence(c, &style, rng), *l, dataset_id).unwrap());
        }
    }
    (ls, out)
}

/// Tokenizer covering every synthetic word, label and template token.
pub fn full_tokenizer() -> Tokenizer {
    let mut texts: Vec<String> = CONCEPTS
        .iter()
        .map(|c| format!("{} {}", c.name, c.keywords.join(" ")))
        .collect();
    texts.push(
        "sentence : ( 1 2 3 4 5 6 7 8 9 10 11 12 ) , the a this that was is really today about we they it some very just so our my new and \
         with for on in after before people story news thing time again still here"
            .into(),
    );
    Tokenizer::fit(texts.iter().map(String::as_str), 1)
}

pub fn small_encoder(seed: u64, dim: usize, init_range: f64) -> ToyEncoder {
    ToyEncoder::new(
        full_tokenizer(),
        &ToyEncoderConfig { embed_dim: dim, out_dim: dim, init_range },
        seed,
    )
}

/// Lower edge and upper edge of the 3σ binomial band around `p` for `n` trials.
pub fn binomial_band(p: f64, n: usize) -> (f64, f64) {
    let sigma = (p * (1.0 - p) / n as f64).sqrt();
    (p - 3.0 * sigma, p + 3.0 * sigma)
}
