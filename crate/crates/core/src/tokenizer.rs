//! Whitespace tokenizer with a greedy wordpiece fallback.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::meta_task::{NULL_PREMISE, SEP_TOKEN};

pub const UNK_TOKEN: &str = "[UNK]";
pub const UNK_ID: u32 = 0;

const SPECIALS: [&str; 3] = [UNK_TOKEN, SEP_TOKEN, NULL_PREMISE];
const CONTINUATION: &str = "##";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Tokenizer {
    vocab: Vec<String>,
    index: HashMap<String, u32>,
}

impl From<Vec<String>> for Tokenizer {
    fn from(vocab: Vec<String>) -> Self {
        let index = vocab
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Self { vocab, index }
    }
}

impl From<Tokenizer> for Vec<String> {
    fn from(t: Tokenizer) -> Self {
        t.vocab
    }
}

/// Splits text into surface pieces: special tokens verbatim, otherwise
/// lowercased alphanumeric runs and single punctuation characters.
pub fn pre_tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        if SPECIALS.contains(&chunk) {
            out.push(chunk.to_string());
            continue;
        }
        let mut word = String::new();
        for c in chunk.chars() {
            if c.is_alphanumeric() || c == '\'' {
                word.extend(c.to_lowercase());
            } else {
                if !word.is_empty() {
                    out.push(std::mem::take(&mut word));
                }
                out.push(c.to_string());
            }
        }
        if !word.is_empty() {
            out.push(word);
        }
    }
    out
}

impl Tokenizer {
    /// Vocabulary of every piece occurring at least `min_count` times, in
    /// lexicographic order after the special tokens.
    pub fn fit<'a>(texts: impl IntoIterator<Item = &'a str>, min_count: usize) -> Self {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for text in texts {
            for piece in pre_tokenize(text) {
                *counts.entry(piece).or_default() += 1;
            }
        }
        let mut vocab: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        vocab.extend(
            counts
                .into_iter()
                .filter(|(t, c)| *c >= min_count && !SPECIALS.contains(&t.as_str()))
                .map(|(t, _)| t),
        );
        vocab.into()
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        let mut ids = Vec::new();
        for piece in pre_tokenize(text) {
            match self.index.get(&piece) {
                Some(&id) => ids.push(id),
                None => ids.extend(self.wordpiece(&piece)),
            }
        }
        ids
    }

    /// Greedy longest-match split of an out-of-vocabulary word; a word with
    /// any unmatched remainder becomes a single UNK.
    fn wordpiece(&self, word: &str) -> Vec<u32> {
        let chars: Vec<char> = word.chars().collect();
        let mut ids = Vec::new();
        let mut start = 0;
        while start < chars.len() {
            let mut end = chars.len();
            let mut found = None;
            while end > start {
                let mut piece: String = chars[start..end].iter().collect();
                if start > 0 {
                    piece.insert_str(0, CONTINUATION);
                }
                if let Some(&id) = self.index.get(&piece) {
                    found = Some(id);
                    break;
                }
                end -= 1;
            }
            match found {
                Some(id) => {
                    ids.push(id);
                    start = end;
                }
                None => return vec![UNK_ID],
            }
        }
        ids
    }
}
