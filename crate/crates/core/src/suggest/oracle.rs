use std::time::Duration;

use super::{Provenance, ProviderError, SuggestionProvider, SuggestionSet};
use crate::composer::last_word;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleMode {
    /// Offers the next target word only once its first letter is typed.
    Completion,
    /// Offers the next target word whenever the text is on track.
    Prediction,
}

/// Provider that knows the target sentence. Used for ideal-suggestion
/// experiments; produces nothing once the text diverges from the target.
#[derive(Debug, Clone)]
pub struct OracleProvider {
    words: Vec<String>,
    mode: OracleMode,
}

impl OracleProvider {
    pub fn new(target: &str, mode: OracleMode) -> Self {
        let words = target.replace('-', " ").to_uppercase().split_whitespace().map(str::to_string).collect();
        Self { words, mode }
    }

    pub fn suggest(&self, partial: &str) -> SuggestionSet {
        let text = partial.replace('-', " ").to_uppercase();
        let current = last_word(&text);
        let done: Vec<&str> = text[..text.len() - current.len()].split_whitespace().collect();
        let on_track = done.len() < self.words.len()
            && done.iter().zip(&self.words).all(|(a, b)| *a == b)
            && self.words[done.len()].starts_with(current);
        if !on_track {
            return SuggestionSet::new(vec![], Provenance::Mock);
        }
        let next = &self.words[done.len()];
        let offer = match self.mode {
            OracleMode::Completion => !current.is_empty(),
            OracleMode::Prediction => true,
        };
        let candidates = if offer { vec![next.clone()] } else { vec![] };
        SuggestionSet::new(candidates, Provenance::Mock)
    }
}

impl SuggestionProvider for OracleProvider {
    fn query(&self, partial: &str, _timeout: Duration) -> Result<SuggestionSet, ProviderError> {
        Ok(self.suggest(partial))
    }

    fn provenance(&self) -> Provenance {
        Provenance::Mock
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn completion_waits_for_first_letter() {
        let o = OracleProvider::new("I WOULD LIKE", OracleMode::Completion);
        assert!(o.suggest("I ").candidates.is_empty());
        assert_eq!(o.suggest("I W").candidates, ["WOULD"]);
        assert!(o.suggest("I X").candidates.is_empty());
    }

    #[test]
    fn prediction_offers_next_word() {
        let o = OracleProvider::new("I-WOULD-LIKE", OracleMode::Prediction);
        assert_eq!(o.suggest("").candidates, ["I"]);
        assert_eq!(o.suggest("I WOULD ").candidates, ["LIKE"]);
        assert!(o.suggest("I WOULD LIKE ").candidates.is_empty());
        assert!(o.suggest("I SHOULD ").candidates.is_empty());
    }
}
