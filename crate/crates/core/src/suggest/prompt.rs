//! Prompt construction and response parsing for chat-completion providers.

use serde::{Deserialize, Serialize};

use super::{Provenance, SuggestionSet, MAX_CANDIDATES};

pub const DELIMITER: char = ',';

/// System instruction sent with every query. The wording is ours; what matters
/// is that it fixes the task, the count, and a single-line comma-separated reply.
pub const SYSTEM_TEMPLATE: &str = "You are the word-suggestion engine of a spelling keyboard. \
The user message is the sentence typed so far, in uppercase, possibly empty. \
If it ends in the middle of a word, suggest 10 different ways to complete that last word. \
If it ends with a space, suggest 10 different likely next words; a suggestion may be a short phrase. \
If it is empty, suggest 10 common words to start a sentence. \
Reply with exactly 10 suggestions on one line, separated by commas, \
with no numbering, quotes, explanations, or other text.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

/// The two-message query: system instruction, then the partial text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptMessages {
    pub system: Message,
    pub user: Message,
}

impl PromptMessages {
    pub fn system_text(&self) -> &str {
        &self.system.content
    }

    pub fn user_text(&self) -> &str {
        &self.user.content
    }

    pub fn messages(&self) -> [&Message; 2] {
        [&self.system, &self.user]
    }
}

/// Fill the template with the partial text. Display dashes become spaces.
pub fn build_prompt(partial: &str) -> PromptMessages {
    PromptMessages {
        system: Message { role: Role::System, content: SYSTEM_TEMPLATE.to_string() },
        user: Message { role: Role::User, content: partial.replace('-', " ").to_uppercase() },
    }
}

/// Render candidates the way the template asks the provider to reply.
pub fn format_candidates(candidates: &[String]) -> String {
    candidates.join(&format!("{DELIMITER} "))
}

/// Split on the delimiter and keep fields that are plain words.
///
/// Each field is trimmed, unquoted, stripped of a leading list marker and a
/// trailing period, dashes become spaces, and the result is uppercased. Fields
/// with any other non-letter character are prose, not suggestions, and are
/// dropped, as are empties and duplicates. At most ten survive.
pub fn parse_response(raw: &str) -> SuggestionSet {
    let mut out: Vec<String> = Vec::new();
    for field in raw.split([DELIMITER, '\n']) {
        let Some(word) = clean_field(field) else { continue };
        if !out.contains(&word) {
            out.push(word);
        }
        if out.len() == MAX_CANDIDATES {
            break;
        }
    }
    let provenance = if out.is_empty() { Provenance::Empty } else { Provenance::Remote };
    SuggestionSet::new(out, provenance)
}

fn clean_field(field: &str) -> Option<String> {
    let mut s = field.trim().trim_matches(|c| matches!(c, '"' | '\'' | '`' | '“' | '”'));
    // "1. word", "2) word", "- word"
    let digits = s.len() - s.trim_start_matches(|c: char| c.is_ascii_digit()).len();
    if digits > 0 {
        let rest = &s[digits..];
        if let Some(r) = rest.strip_prefix(['.', ')']) {
            s = r;
        }
    } else if let Some(r) = s.strip_prefix("- ") {
        s = r;
    }
    let s = s.trim().trim_end_matches('.').trim();
    let s = s.trim_matches(|c| matches!(c, '"' | '\'' | '`' | '“' | '”'));
    if s.is_empty() || !s.chars().all(|c| c.is_ascii_alphabetic() || c.is_whitespace() || c == '-') {
        return None;
    }
    let words: Vec<String> =
        s.split(|c: char| c.is_whitespace() || c == '-').filter(|w| !w.is_empty()).map(str::to_uppercase).collect();
    if words.is_empty() {
        return None;
    }
    Some(words.join(" "))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn prompt_shape() {
        let p = build_prompt("I-WOULD");
        assert_eq!(p.user_text(), "I WOULD");
        assert_eq!(p.system.role, Role::System);
        assert_eq!(p.user.role, Role::User);
        assert_eq!(p.system_text(), build_prompt("ANYTHING ELSE").system_text());
        let empty = build_prompt("");
        assert_eq!(empty.user_text(), "");
        assert!(empty.system_text().contains("start a sentence"));
        assert!(p.system_text().contains("10"));
    }

    #[test]
    fn parses_plain_list() {
        let s = parse_response("like, want, love, need, prefer, hope, wish, plan, have, say");
        assert_eq!(
            s.candidates,
            ["LIKE", "WANT", "LOVE", "NEED", "PREFER", "HOPE", "WISH", "PLAN", "HAVE", "SAY"]
        );
        assert_eq!(s.provenance, Provenance::Remote);
    }

    #[test]
    fn drops_duplicates() {
        let s = parse_response("LIKE, LIKE, WANT");
        assert_eq!(s.candidates, ["LIKE", "WANT"]);
    }

    #[test]
    fn prose_yields_empty_set() {
        let s = parse_response("Sure! Here are some suggestions for you.");
        assert!(s.candidates.is_empty());
        assert_eq!(s.provenance, Provenance::Empty);
    }

    #[test]
    fn tolerates_numbering_quotes_and_dashes() {
        let s = parse_response("1. \"like\", 2) want to, - need, AND-LOYAL, done.");
        assert_eq!(s.candidates, ["LIKE", "WANT TO", "NEED", "AND LOYAL", "DONE"]);
    }

    #[test]
    fn truncates_to_ten() {
        let raw = (b'A'..=b'L').map(|c| (c as char).to_string().repeat(2)).collect::<Vec<_>>().join(",");
        assert_eq!(parse_response(&raw).candidates.len(), 10);
    }

    fn candidate_list() -> impl Strategy<Value = Vec<String>> {
        proptest::collection::vec("[A-Z]{1,9}( [A-Z]{1,9}){0,2}", 1..=10).prop_map(|mut v| {
            let mut seen = Vec::new();
            v.retain(|c| {
                let fresh = !seen.contains(c);
                seen.push(c.clone());
                fresh
            });
            v
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn parse_inverts_format(list in candidate_list()) {
            prop_assert_eq!(parse_response(&format_candidates(&list)).candidates, list);
        }
    }
}
