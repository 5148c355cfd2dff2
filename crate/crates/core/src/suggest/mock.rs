//! Offline bigram provider over a small bundled corpus.

use std::collections::{BTreeMap, HashMap};
use std::time::Duration;

use super::{Provenance, ProviderError, SuggestionProvider, SuggestionSet, MAX_CANDIDATES};
use crate::composer::last_word;

pub const DEFAULT_CORPUS: &str = include_str!("corpus.txt");

const START: &str = "<S>";

/// Deterministic suggestions from bigram and unigram counts.
///
/// With an unfinished last word every candidate extends it: single words with
/// that prefix first, then, when the last word is itself a known word, short
/// phrases "LASTWORD NEXT" built from its successors. After a space the
/// candidates are successors of the previous word, padded with frequent words.
#[derive(Debug, Clone)]
pub struct MockProvider {
    unigrams: HashMap<String, u32>,
    bigrams: HashMap<String, BTreeMap<String, u32>>,
}

impl Default for MockProvider {
    fn default() -> Self {
        Self::from_corpus(DEFAULT_CORPUS)
    }
}

impl MockProvider {
    pub fn from_corpus(corpus: &str) -> Self {
        let mut unigrams = HashMap::new();
        let mut bigrams: HashMap<String, BTreeMap<String, u32>> = HashMap::new();
        for line in corpus.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let words: Vec<String> = line
                .split(|c: char| !c.is_ascii_alphabetic())
                .filter(|w| !w.is_empty())
                .map(str::to_uppercase)
                .collect();
            let mut prev = START.to_string();
            for w in words {
                *unigrams.entry(w.clone()).or_insert(0) += 1;
                *bigrams.entry(prev).or_default().entry(w.clone()).or_insert(0) += 1;
                prev = w;
            }
        }
        Self { unigrams, bigrams }
    }

    fn successors(&self, prev: &str) -> Vec<(&str, u32)> {
        let mut v: Vec<(&str, u32)> = self
            .bigrams
            .get(prev)
            .map(|m| m.iter().map(|(w, c)| (w.as_str(), *c)).collect())
            .unwrap_or_default();
        v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        v
    }

    fn by_frequency(&self) -> Vec<(&str, u32)> {
        let mut v: Vec<(&str, u32)> = self.unigrams.iter().map(|(w, c)| (w.as_str(), *c)).collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        v
    }

    pub fn suggest(&self, partial: &str) -> SuggestionSet {
        let text = partial.replace('-', " ").to_uppercase();
        let current = last_word(&text).to_string();
        let head = &text[..text.len() - current.len()];
        let prev = head.split_whitespace().last().unwrap_or(START).to_string();
        let mut out: Vec<String> = Vec::new();
        let push = |w: String, out: &mut Vec<String>| {
            if out.len() < MAX_CANDIDATES && !out.contains(&w) {
                out.push(w);
            }
        };

        if current.is_empty() {
            for (w, _) in self.successors(&prev) {
                push(w.to_string(), &mut out);
            }
            for (w, _) in self.by_frequency() {
                push(w.to_string(), &mut out);
            }
        } else {
            let bigram_rank: HashMap<&str, u32> = self.successors(&prev).into_iter().collect();
            let mut completions: Vec<(&str, u32, u32)> = self
                .unigrams
                .iter()
                .filter(|(w, _)| w.len() > current.len() && w.starts_with(current.as_str()))
                .map(|(w, c)| (w.as_str(), bigram_rank.get(w.as_str()).copied().unwrap_or(0), *c))
                .collect();
            completions.sort_by(|a, b| b.1.cmp(&a.1).then(b.2.cmp(&a.2)).then(a.0.cmp(b.0)));
            for (w, _, _) in completions {
                push(w.to_string(), &mut out);
            }
            if self.unigrams.contains_key(&current) {
                for (w, _) in self.successors(&current) {
                    push(format!("{current} {w}"), &mut out);
                }
            }
        }
        SuggestionSet::new(out, Provenance::Mock)
    }
}

impl SuggestionProvider for MockProvider {
    fn query(&self, partial: &str, _timeout: Duration) -> Result<SuggestionSet, ProviderError> {
        Ok(self.suggest(partial))
    }

    fn provenance(&self) -> Provenance {
        Provenance::Mock
    }
}
