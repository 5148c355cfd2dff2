//! Word suggestions for the ten edge slots of the keyboard.
//!
//! Providers turn the partial sentence into up to ten candidates. Failures
//! never propagate into the paradigm: [`get_suggestions`] falls back to the
//! previous candidates marked [`Provenance::Stale`].

mod mock;
mod oracle;
pub mod prompt;
mod remote;
mod worker;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use mock::{MockProvider, DEFAULT_CORPUS};
pub use oracle::{OracleMode, OracleProvider};
pub use prompt::{build_prompt, format_candidates, parse_response, PromptMessages};
pub use remote::{RemoteConfig, RemoteProvider, DEFAULT_API_KEY_ENV};
pub use worker::{SuggestionWorker, Ticket, WorkerResult};

pub const MAX_CANDIDATES: usize = 10;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(5);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Remote,
    Mock,
    Stale,
    #[default]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SuggestionSet {
    pub candidates: Vec<String>,
    pub provenance: Provenance,
}

impl SuggestionSet {
    /// Drops empties and duplicates and keeps the first ten.
    pub fn new(candidates: Vec<String>, provenance: Provenance) -> Self {
        let mut out: Vec<String> = Vec::with_capacity(MAX_CANDIDATES);
        for c in candidates {
            let c = c.split_whitespace().collect::<Vec<_>>().join(" ");
            if !c.is_empty() && !out.contains(&c) && out.len() < MAX_CANDIDATES {
                out.push(c);
            }
        }
        let provenance = if out.is_empty() && provenance != Provenance::Stale {
            Provenance::Empty
        } else {
            provenance
        };
        Self { candidates: out, provenance }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn slot(&self, slot: u8) -> Option<&str> {
        self.candidates.get(slot as usize).map(String::as_str)
    }

    /// Letters shown across all slots.
    pub fn displayed_chars(&self) -> usize {
        self.candidates.iter().map(|c| c.chars().filter(|ch| !ch.is_whitespace()).count()).sum()
    }

    pub fn stale(&self) -> Self {
        Self { candidates: self.candidates.clone(), provenance: Provenance::Stale }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ProviderError {
    #[error("provider timed out")]
    Timeout,
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("authentication rejected (HTTP {0})")]
    Auth(u16),
    #[error("provider returned HTTP {0}")]
    Status(u16),
    #[error("malformed provider response: {0}")]
    Malformed(String),
}

pub trait SuggestionProvider: Send + Sync {
    fn query(&self, partial: &str, timeout: Duration) -> Result<SuggestionSet, ProviderError>;

    fn provenance(&self) -> Provenance;

    /// Loggable description of the request for `partial`, credentials removed.
    fn describe_request(&self, _partial: &str) -> Option<serde_json::Value> {
        None
    }
}

/// Query the provider; on failure keep `previous` marked stale and report the error.
pub fn get_suggestions(
    provider: &dyn SuggestionProvider,
    partial: &str,
    timeout: Duration,
    previous: &SuggestionSet,
) -> (SuggestionSet, Option<ProviderError>) {
    match provider.query(partial, timeout) {
        Ok(set) => (set, None),
        Err(e) => (previous.stale(), Some(e)),
    }
}
