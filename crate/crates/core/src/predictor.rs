//! Label prediction by ranking query-to-(premise, hypothesis) similarities.
//!
//! Zero-shot candidates are `("NULL", h)` for every label `h`; few-shot
//! candidates are the verbalized support entries. A label's score is the
//! maximum (or mean) cosine similarity over its candidates, and the
//! prediction is the top-scoring label, ties going to the lower label index.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::contrastive::cosine_similarity;
use crate::encoder::{Embedding, SentenceEncoder};
use crate::error::{Error, Result};
use crate::meta_task::{premise_for_text, query_for_text, LabelSet, NULL_PREMISE};
use crate::sampler::SupportSet;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidatePair {
    pub premise: String,
    pub hypothesis: String,
    /// Index into the target label set.
    pub label: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    Max,
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictorConfig {
    pub aggregation: Aggregation,
    /// Feed the query with its multiple-choice prefix; otherwise the
    /// `sentence:` form is used.
    pub query_prefix: bool,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            aggregation: Aggregation::Max,
            query_prefix: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: String,
    /// Every label with its score, best first.
    pub ranked: Vec<(String, f64)>,
}

pub fn candidates(support: &SupportSet) -> Vec<CandidatePair> {
    if support.is_zero_shot() {
        return support
            .labels
            .labels()
            .iter()
            .enumerate()
            .map(|(i, h)| CandidatePair {
                premise: NULL_PREMISE.to_string(),
                hypothesis: h.clone(),
                label: i,
            })
            .collect();
    }
    support
        .entries
        .iter()
        .filter_map(|e| {
            support.labels.index_of(&e.hypothesis).map(|label| CandidatePair {
                premise: e.premise.clone(),
                hypothesis: e.hypothesis.clone(),
                label,
            })
        })
        .collect()
}

/// Orders labels by descending score; equal scores keep label-set order.
pub fn rank_scores(labels: &LabelSet, scores: &[f64]) -> Prediction {
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let ranked: Vec<(String, f64)> = order
        .into_iter()
        .map(|i| (labels.labels()[i].clone(), scores[i]))
        .collect();
    Prediction {
        label: ranked[0].0.clone(),
        ranked,
    }
}

/// A predictor bound to one label set and support set, with every candidate
/// embedding computed once at construction.
pub struct Predictor<'e, E: ?Sized> {
    encoder: &'e E,
    labels: LabelSet,
    candidates: Vec<CandidatePair>,
    embeddings: Vec<Embedding>,
    config: PredictorConfig,
}

impl<'e, E: SentenceEncoder + ?Sized> Predictor<'e, E> {
    pub fn new(encoder: &'e E, support: &SupportSet, config: PredictorConfig) -> Result<Self> {
        let labels = support.labels.clone();
        if labels.is_empty() {
            return Err(Error::EmptyLabelSet(labels.dataset_id));
        }
        let candidates = candidates(support);
        for (i, l) in labels.labels().iter().enumerate() {
            if !candidates.iter().any(|c| c.label == i) {
                return Err(Error::NoCandidates(l.clone()));
            }
        }
        let mut cache: HashMap<(&str, &str), Embedding> = HashMap::new();
        let mut embeddings = Vec::with_capacity(candidates.len());
        for c in &candidates {
            let key = (c.premise.as_str(), c.hypothesis.as_str());
            let emb = match cache.get(&key) {
                Some(e) => e.clone(),
                None => {
                    let e = encoder.encode_premise_hypothesis(&c.premise, &c.hypothesis)?;
                    cache.insert(key, e.clone());
                    e
                }
            };
            embeddings.push(emb);
        }
        Ok(Self {
            encoder,
            labels,
            candidates,
            embeddings,
            config,
        })
    }

    pub fn labels(&self) -> &LabelSet {
        &self.labels
    }

    pub fn candidates(&self) -> &[CandidatePair] {
        &self.candidates
    }

    pub fn candidate_embeddings(&self) -> &[Embedding] {
        &self.embeddings
    }

    /// The encoder input for a raw test sentence.
    pub fn query_text(&self, text: &str) -> Result<String> {
        if self.config.query_prefix {
            query_for_text(text, &self.labels)
        } else {
            premise_for_text(text)
        }
    }

    /// Similarity of the query to every candidate, in candidate order.
    pub fn candidate_scores(&self, text: &str) -> Result<Vec<f64>> {
        let q = self.encoder.encode_query(&self.query_text(text)?)?;
        self.embeddings
            .iter()
            .map(|e| cosine_similarity(q.as_slice(), e.as_slice()))
            .collect()
    }

    /// Aggregated score per label, in label-set order.
    pub fn scores(&self, text: &str) -> Result<Vec<f64>> {
        let sims = self.candidate_scores(text)?;
        let n = self.labels.len();
        let mut agg = match self.config.aggregation {
            Aggregation::Max => vec![f64::NEG_INFINITY; n],
            Aggregation::Mean => vec![0.0; n],
        };
        let mut counts = vec![0usize; n];
        for (c, s) in self.candidates.iter().zip(sims) {
            counts[c.label] += 1;
            match self.config.aggregation {
                Aggregation::Max => agg[c.label] = agg[c.label].max(s),
                Aggregation::Mean => agg[c.label] += s,
            }
        }
        if self.config.aggregation == Aggregation::Mean {
            for (a, c) in agg.iter_mut().zip(&counts) {
                *a /= *c as f64;
            }
        }
        Ok(agg)
    }

    pub fn predict(&self, text: &str) -> Result<Prediction> {
        Ok(rank_scores(&self.labels, &self.scores(text)?))
    }
}

/// One-off prediction; builds the candidate cache for a single query.
pub fn predict<E: SentenceEncoder + ?Sized>(
    text: &str,
    support: &SupportSet,
    encoder: &E,
    config: PredictorConfig,
) -> Result<Prediction> {
    Predictor::new(encoder, support, config)?.predict(text)
}

/// Zero-shot ranking of every label for `text`.
pub fn rank_labels<E: SentenceEncoder + ?Sized>(
    text: &str,
    labels: &LabelSet,
    encoder: &E,
) -> Result<Vec<(String, f64)>> {
    let support = SupportSet::empty(labels.clone());
    Ok(predict(text, &support, encoder, PredictorConfig::default())?.ranked)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meta_task::RawExample;
    use crate::sampler::sample_support_set;

    /// Encoder with hand-picked outputs keyed by substring.
    struct Fixed(Vec<(&'static str, Vec<f64>)>);

    impl SentenceEncoder for Fixed {
        fn dim(&self) -> usize {
            2
        }
        fn encode(&self, text: &str) -> Result<Embedding> {
            for (k, v) in &self.0 {
                if text.contains(k) {
                    return Ok(Embedding(v.clone()));
                }
            }
            Ok(Embedding(vec![1.0, 1.0]))
        }
    }

    fn labels(names: &[&str]) -> LabelSet {
        LabelSet::new("t", names.iter().map(|s| s.to_string()).collect()).unwrap()
    }

    #[test]
    fn picks_most_similar_label() {
        let enc = Fixed(vec![
            ("[SEP] happy", vec![0.9, 0.1]),
            ("[SEP] sad", vec![-1.0, 0.3]),
            ("[SEP] angry", vec![0.0, 1.0]),
            ("breakfast", vec![1.0, 0.0]),
        ]);
        let ls = labels(&["sad", "happy", "angry"]);
        let p = predict("what a great breakfast", &SupportSet::empty(ls), &enc, PredictorConfig::default()).unwrap();
        assert_eq!(p.label, "happy");
        assert_eq!(p.ranked.len(), 3);
        assert!(p.ranked.windows(2).all(|w| w[0].1 >= w[1].1));
    }

    #[test]
    fn single_label_always_wins() {
        let enc = Fixed(vec![]);
        let p = predict("anything", &SupportSet::empty(labels(&["only"])), &enc, PredictorConfig::default()).unwrap();
        assert_eq!(p.label, "only");
    }

    #[test]
    fn ties_go_to_lower_index() {
        let enc = Fixed(vec![]);
        let ranked = rank_labels("x", &labels(&["b", "a", "c"]), &enc).unwrap();
        let names: Vec<&str> = ranked.iter().map(|(l, _)| l.as_str()).collect();
        assert_eq!(names, ["b", "a", "c"]);
    }

    #[test]
    fn missing_label_in_support_rejected() {
        let ls = labels(&["a", "b"]);
        let train = vec![RawExample::new("only a", "a", "t").unwrap()];
        let support = sample_support_set(&train, &ls, 1, 0).unwrap();
        let enc = Fixed(vec![]);
        assert!(matches!(
            Predictor::new(&enc, &support, PredictorConfig::default()),
            Err(Error::NoCandidates(l)) if l == "b"
        ));
    }

    #[test]
    fn mean_aggregation_averages() {
        let enc = Fixed(vec![
            ("good one", vec![1.0, 0.0]),
            ("good two", vec![0.0, 1.0]),
            ("bad", vec![0.6, 0.8]),
            ("query", vec![1.0, 0.0]),
        ]);
        let ls = labels(&["pos", "neg"]);
        let train = vec![
            RawExample::new("good one", "pos", "t").unwrap(),
            RawExample::new("good two", "pos", "t").unwrap(),
            RawExample::new("bad", "neg", "t").unwrap(),
            RawExample::new("bad", "neg", "t").unwrap(),
        ];
        let support = sample_support_set(&train, &ls, 2, 0).unwrap();
        let max = Predictor::new(&enc, &support, PredictorConfig { aggregation: Aggregation::Max, query_prefix: false }).unwrap();
        let mean = Predictor::new(&enc, &support, PredictorConfig { aggregation: Aggregation::Mean, query_prefix: false }).unwrap();
        assert_eq!(max.predict("query").unwrap().label, "pos");
        assert_eq!(mean.predict("query").unwrap().label, "neg");
        let s = mean.scores("query").unwrap();
        assert!((s[0] - 0.5).abs() < 1e-12 && (s[1] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn query_prefix_switch() {
        let enc = Fixed(vec![]);
        let ls = labels(&["a", "b"]);
        let with = Predictor::new(&enc, &SupportSet::empty(ls.clone()), PredictorConfig::default()).unwrap();
        assert_eq!(with.query_text("hi").unwrap(), "(1) a (2) b, sentence: hi");
        let without = Predictor::new(&enc, &SupportSet::empty(ls), PredictorConfig { query_prefix: false, ..Default::default() }).unwrap();
        assert_eq!(without.query_text("hi").unwrap(), "sentence: hi");
    }
}
