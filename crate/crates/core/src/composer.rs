//! Keyboard layout and sentence composition.
//!
//! Composed text is uppercase A-Z plus spaces. Spaces are shown as `-` when
//! displayed. Picking a suggestion replaces the last word and appends a space.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::paradigm::{StimulusCode, N_COLUMNS, N_ROWS};
use crate::suggest::SuggestionSet;

pub const N_SLOTS: u8 = 10;

#[derive(Debug, Error, PartialEq)]
pub enum ComposeError {
    #[error("composition already finished")]
    Finished,
    #[error("unknown key {0:?}")]
    UnknownKey(String),
    #[error("text contains characters outside A-Z and space: {0:?}")]
    BadText(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FunctionKey {
    DeleteWord,
    DeleteChar,
    Space,
    Enter,
}

impl FunctionKey {
    pub const ALL: [FunctionKey; 4] =
        [FunctionKey::DeleteWord, FunctionKey::DeleteChar, FunctionKey::Space, FunctionKey::Enter];

    pub fn label(self) -> &'static str {
        match self {
            FunctionKey::DeleteWord => "DW",
            FunctionKey::DeleteChar => "DC",
            FunctionKey::Space => "Sp",
            FunctionKey::Enter => "En",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Key {
    Letter(char),
    Function(FunctionKey),
    Suggestion(u8),
}

impl Key {
    pub const SPACE: Key = Key::Function(FunctionKey::Space);
    pub const ENTER: Key = Key::Function(FunctionKey::Enter);
    pub const DELETE_CHAR: Key = Key::Function(FunctionKey::DeleteChar);
    pub const DELETE_WORD: Key = Key::Function(FunctionKey::DeleteWord);

    pub fn is_suggestion(&self) -> bool {
        matches!(self, Key::Suggestion(_))
    }
}

impl fmt::Display for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Key::Letter(c) => write!(f, "{c}"),
            Key::Function(k) => f.write_str(k.label()),
            Key::Suggestion(s) => write!(f, "SLOT{s}"),
        }
    }
}

impl FromStr for Key {
    type Err = ComposeError;

    fn from_str(s: &str) -> Result<Self, ComposeError> {
        let bad = || ComposeError::UnknownKey(s.to_string());
        if let Some(fk) = FunctionKey::ALL.iter().find(|k| k.label() == s) {
            return Ok(Key::Function(*fk));
        }
        if let Some(n) = s.strip_prefix("SLOT") {
            let slot: u8 = n.parse().map_err(|_| bad())?;
            return if slot < N_SLOTS { Ok(Key::Suggestion(slot)) } else { Err(bad()) };
        }
        let mut chars = s.chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) if c.is_ascii_uppercase() => Ok(Key::Letter(c)),
            _ => Err(bad()),
        }
    }
}

impl TryFrom<String> for Key {
    type Error = ComposeError;
    fn try_from(s: String) -> Result<Self, ComposeError> {
        s.parse()
    }
}

impl From<Key> for String {
    fn from(k: Key) -> String {
        k.to_string()
    }
}

/// 5 rows x 8 columns. Columns 1 and 8 hold suggestion slots 0-4 and 5-9 top to
/// bottom; columns 2-7 hold A-Z row-major followed by DW, DC, Sp, En.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyboardLayout {
    grid: [[Key; N_COLUMNS as usize]; N_ROWS as usize],
}

impl Default for KeyboardLayout {
    fn default() -> Self {
        Self::standard()
    }
}

impl KeyboardLayout {
    pub fn standard() -> Self {
        let mut middle: Vec<Key> = ('A'..='Z').map(Key::Letter).collect();
        middle.extend(FunctionKey::ALL.iter().map(|&k| Key::Function(k)));
        let mut it = middle.into_iter();
        let grid = std::array::from_fn(|r| {
            std::array::from_fn(|c| match c {
                0 => Key::Suggestion(r as u8),
                7 => Key::Suggestion(5 + r as u8),
                _ => it.next().expect("30 middle keys"),
            })
        });
        Self { grid }
    }

    /// 1-based row and column.
    pub fn key_at(&self, row: u8, col: u8) -> Option<Key> {
        if !(1..=N_ROWS).contains(&row) || !(1..=N_COLUMNS).contains(&col) {
            return None;
        }
        Some(self.grid[row as usize - 1][col as usize - 1])
    }

    pub fn key_at_codes(&self, column: StimulusCode, row: StimulusCode) -> Key {
        debug_assert!(column.is_column() && !row.is_column());
        self.grid[row.get() as usize - N_COLUMNS as usize - 1][column.get() as usize - 1]
    }

    /// 1-based (row, column) of a key.
    pub fn position(&self, key: &Key) -> Option<(u8, u8)> {
        self.grid.iter().enumerate().find_map(|(r, cols)| {
            cols.iter().position(|k| k == key).map(|c| (r as u8 + 1, c as u8 + 1))
        })
    }

    /// Column code and row code that flash this key.
    pub fn codes_of(&self, key: &Key) -> Option<(StimulusCode, StimulusCode)> {
        let (r, c) = self.position(key)?;
        Some((StimulusCode::column(c).ok()?, StimulusCode::row(r).ok()?))
    }

    pub fn keys(&self) -> impl Iterator<Item = Key> + '_ {
        self.grid.iter().flatten().copied()
    }

    pub fn rows(&self) -> &[[Key; N_COLUMNS as usize]; N_ROWS as usize] {
        &self.grid
    }
}

/// Characters after the final space; the whole text when it has no space.
pub fn last_word(text: &str) -> &str {
    let text_end = text.len();
    match text.rfind([' ', '-']) {
        Some(i) => &text[i + 1..text_end],
        None => text,
    }
}

/// Spaces rendered as dashes, uppercased.
pub fn display_text(composed: &str) -> String {
    composed.replace(' ', "-").to_uppercase()
}

/// Inverse of [`display_text`].
pub fn from_display(text: &str) -> String {
    text.replace('-', " ").to_uppercase()
}

pub fn is_valid_text(text: &str) -> bool {
    text.chars().all(|c| c == ' ' || c.is_ascii_uppercase())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComposeWarning {
    EmptySlot(u8),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CompositionState {
    pub target: Option<String>,
    pub composed: String,
    pub suggestions: SuggestionSet,
    pub finished: bool,
}

impl CompositionState {
    pub fn new(target: Option<String>) -> Self {
        Self { target, ..Default::default() }
    }

    pub fn last_word(&self) -> &str {
        last_word(&self.composed)
    }

    pub fn display_text(&self) -> String {
        display_text(&self.composed)
    }

    pub fn apply_key(&self, key: Key) -> Result<(CompositionState, Option<ComposeWarning>), ComposeError> {
        if self.finished {
            return Err(ComposeError::Finished);
        }
        let mut next = self.clone();
        let mut warning = None;
        match key {
            Key::Letter(c) => next.composed.push(c.to_ascii_uppercase()),
            Key::Function(FunctionKey::Space) => next.composed.push(' '),
            Key::Function(FunctionKey::DeleteChar) => {
                next.composed.pop();
            }
            Key::Function(FunctionKey::DeleteWord) => delete_word(&mut next.composed),
            Key::Function(FunctionKey::Enter) => next.finished = true,
            Key::Suggestion(slot) => match self.suggestions.slot(slot) {
                Some(text) => {
                    replace_last_word(&mut next.composed, text);
                }
                None => warning = Some(ComposeWarning::EmptySlot(slot)),
            },
        }
        Ok((next, warning))
    }
}

/// Mid-word: drop the partial word only. After a space: drop the trailing
/// spaces and the word before them.
fn delete_word(text: &mut String) {
    if text.ends_with(' ') {
        let trimmed = text.trim_end_matches(' ').len();
        text.truncate(trimmed);
    }
    let keep = text.len() - last_word(text).len();
    text.truncate(keep);
}

pub(crate) fn replace_last_word(text: &mut String, replacement: &str) {
    let keep = text.len() - last_word(text).len();
    text.truncate(keep);
    let words: Vec<&str> = replacement.split_whitespace().collect();
    text.push_str(&words.join(" "));
    text.push(' ');
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::suggest::{Provenance, SuggestionSet};
    use proptest::prelude::*;

    fn with_suggestions(composed: &str, words: &[&str]) -> CompositionState {
        CompositionState {
            composed: composed.into(),
            suggestions: SuggestionSet::new(words.iter().map(|s| s.to_string()).collect(), Provenance::Mock),
            ..Default::default()
        }
    }

    #[test]
    fn last_word_examples() {
        assert_eq!(last_word("I-WANT-TO-B"), "B");
        assert_eq!(last_word("I-WOULD-"), "");
        assert_eq!(last_word("I"), "I");
        assert_eq!(last_word("I WOULD"), "WOULD");
        assert_eq!(last_word(""), "");
    }

    #[test]
    fn selecting_suggestions() {
        let s = with_suggestions(&from_display("I-WANT-TO-B"), &["BE", "BUY"]);
        let (s, w) = s.apply_key(Key::Suggestion(1)).unwrap();
        assert_eq!(w, None);
        assert_eq!(s.display_text(), "I-WANT-TO-BUY-");

        let s = with_suggestions(&from_display("I-WOULD-"), &["LIKE"]);
        let (s, _) = s.apply_key(Key::Suggestion(0)).unwrap();
        assert_eq!(s.display_text(), "I-WOULD-LIKE-");
    }

    #[test]
    fn multi_word_suggestion_is_inserted_verbatim() {
        let s = with_suggestions("HIS FRIENDS ", &["AND LOYAL"]);
        let (s, _) = s.apply_key(Key::Suggestion(0)).unwrap();
        assert_eq!(s.composed, "HIS FRIENDS AND LOYAL ");
    }

    #[test]
    fn empty_slot_warns_without_change() {
        let s = with_suggestions("I W", &["WANT"]);
        let (next, w) = s.apply_key(Key::Suggestion(4)).unwrap();
        assert_eq!(w, Some(ComposeWarning::EmptySlot(4)));
        assert_eq!(next, s);
    }

    #[test]
    fn delete_word_peels_words() {
        let s = CompositionState { composed: "I WANT".into(), ..Default::default() };
        let (s, _) = s.apply_key(Key::DELETE_WORD).unwrap();
        assert_eq!(s.composed, "I ");
        let (s, _) = s.apply_key(Key::DELETE_WORD).unwrap();
        assert_eq!(s.composed, "");
        let (s, _) = s.apply_key(Key::DELETE_WORD).unwrap();
        assert_eq!(s.composed, "");

        let s = CompositionState { composed: "I WANT ".into(), ..Default::default() };
        assert_eq!(s.apply_key(Key::DELETE_WORD).unwrap().0.composed, "I ");
    }

    #[test]
    fn delete_char_and_space() {
        let s = CompositionState { composed: "I ".into(), ..Default::default() };
        let (s, _) = s.apply_key(Key::DELETE_CHAR).unwrap();
        assert_eq!(s.composed, "I");
        let (s, _) = s.apply_key(Key::SPACE).unwrap();
        assert_eq!(s.composed, "I ");
        let empty = CompositionState::default();
        assert_eq!(empty.apply_key(Key::DELETE_CHAR).unwrap().0.composed, "");
    }

    #[test]
    fn enter_finishes() {
        let (s, _) = CompositionState::default().apply_key(Key::ENTER).unwrap();
        assert!(s.finished);
        assert_eq!(s.apply_key(Key::Letter('A')), Err(ComposeError::Finished));
    }

    #[test]
    fn display_examples() {
        assert_eq!(display_text("I WOULD"), "I-WOULD");
        assert_eq!(display_text(""), "");
        assert_eq!(display_text("I WOULD LIKE TO HAVE WATER"), "I-WOULD-LIKE-TO-HAVE-WATER");
    }

    #[test]
    fn layout_invariants() {
        let l = KeyboardLayout::standard();
        assert_eq!(l.key_at(3, 6), Some(Key::Letter('Q')));
        assert_eq!(l.key_at(1, 2), Some(Key::Letter('A')));
        assert_eq!(l.key_at(5, 7), Some(Key::ENTER));
        assert_eq!(l.key_at(5, 4), Some(Key::DELETE_WORD));
        assert_eq!(l.key_at(5, 8), Some(Key::Suggestion(9)));
        assert_eq!(l.key_at(6, 1), None);

        let mut middle: Vec<Key> = Vec::new();
        let mut edges: Vec<Key> = Vec::new();
        for r in 1..=5 {
            for c in 1..=8 {
                let k = l.key_at(r, c).unwrap();
                if c == 1 || c == 8 { edges.push(k) } else { middle.push(k) }
            }
        }
        let mut expected: Vec<Key> = ('A'..='Z').map(Key::Letter).collect();
        expected.extend(FunctionKey::ALL.iter().map(|&k| Key::Function(k)));
        middle.sort();
        expected.sort();
        assert_eq!(middle, expected);
        edges.sort();
        assert_eq!(edges, (0..10).map(Key::Suggestion).collect::<Vec<_>>());

        for k in l.keys() {
            let (c, r) = l.codes_of(&k).unwrap();
            assert_eq!(l.key_at_codes(c, r), k);
        }
    }

    #[test]
    fn key_labels_round_trip() {
        for k in KeyboardLayout::standard().keys() {
            assert_eq!(k.to_string().parse::<Key>().unwrap(), k);
        }
        assert!("SLOT10".parse::<Key>().is_err());
        assert!("q".parse::<Key>().is_err());
        assert_eq!(serde_json::to_string(&Key::Letter('Q')).unwrap(), "\"Q\"");
    }

    fn text() -> impl Strategy<Value = String> {
        "[A-Z ]{0,20}"
    }

    proptest! {
        #[test]
        fn letter_then_delete_char_is_identity(t in text(), c in proptest::char::range('A', 'Z')) {
            let s = CompositionState { composed: t.clone(), ..Default::default() };
            let (s, _) = s.apply_key(Key::Letter(c)).unwrap();
            let (s, _) = s.apply_key(Key::DELETE_CHAR).unwrap();
            prop_assert_eq!(s.composed, t);
        }

        #[test]
        fn suggestion_leaves_empty_last_word(t in text(), w in "[A-Z]{1,8}( [A-Z]{1,8})?") {
            let s = with_suggestions(&t, &[w.as_str()]);
            let (s, _) = s.apply_key(Key::Suggestion(0)).unwrap();
            prop_assert!(s.composed.ends_with(' '));
            prop_assert!(!s.composed.ends_with("  "));
            prop_assert_eq!(s.last_word(), "");
        }

        #[test]
        fn suggestion_ignores_partial_word(prefix in "([A-Z]{1,6} ){0,3}", a in "[A-Z]{0,4}", b in "[A-Z]{0,4}", w in "[A-Z]{1,8}") {
            let s1 = with_suggestions(&format!("{prefix}{a}"), &[w.as_str()]);
            let s2 = with_suggestions(&format!("{prefix}{b}"), &[w.as_str()]);
            let r1 = s1.apply_key(Key::Suggestion(0)).unwrap().0.composed;
            let r2 = s2.apply_key(Key::Suggestion(0)).unwrap().0.composed;
            prop_assert_eq!(r1, r2);
        }
    }
}
