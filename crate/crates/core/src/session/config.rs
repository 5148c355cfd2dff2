//! Session configuration, loaded from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::SessionError;
use crate::paradigm::Timing;
use crate::subject::SubjectParams;
use crate::suggest::{OracleMode, RemoteConfig};
use crate::swlda::StepwiseParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Mode {
    Calibration,
    Validation,
    #[default]
    Task1Chat,
    Task1LetterOnly,
    Task2Improvise,
    Interactive,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Calibration => "calibration",
            Mode::Validation => "validation",
            Mode::Task1Chat => "task1_chat",
            Mode::Task1LetterOnly => "task1_letter_only",
            Mode::Task2Improvise => "task2_improvise",
            Mode::Interactive => "interactive",
        }
    }

    /// Letter-only sessions hide the slots and never query a provider.
    pub fn uses_suggestions(self) -> bool {
        !matches!(self, Mode::Task1LetterOnly | Mode::Calibration | Mode::Validation)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    #[default]
    Mock,
    Remote,
    /// Knows the target sentence; for ideal-suggestion experiments.
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub timeout_ms: u64,
    /// `completion` or `prediction`, for the oracle provider.
    pub oracle_mode: String,
    pub remote: RemoteConfig,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            kind: ProviderKind::Mock,
            timeout_ms: 5000,
            oracle_mode: "prediction".into(),
            remote: RemoteConfig::default(),
        }
    }
}

impl ProviderConfig {
    pub fn oracle_mode(&self) -> Result<OracleMode, SessionError> {
        match self.oracle_mode.as_str() {
            "completion" => Ok(OracleMode::Completion),
            "prediction" => Ok(OracleMode::Prediction),
            other => Err(SessionError::Config(format!("oracle_mode must be completion or prediction, got {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub p_in: f64,
    pub p_out: f64,
    pub max_features: usize,
    pub band_low_hz: f64,
    pub band_high_hz: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        let s = StepwiseParams::default();
        let (low, high) = crate::signal::DEFAULT_BAND_HZ;
        Self { p_in: s.p_in, p_out: s.p_out, max_features: s.max_features, band_low_hz: low, band_high_hz: high }
    }
}

impl ClassifierConfig {
    pub fn stepwise(&self) -> StepwiseParams {
        StepwiseParams { p_in: self.p_in, p_out: self.p_out, max_features: self.max_features, ..Default::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServerConfig {
    pub host: String,
    pub port: u16,
    /// How long a disconnected session waits for its client to come back.
    pub resume_timeout_ms: u64,
    /// Pace flashes in wall-clock time; off runs trials as fast as possible.
    pub realtime: bool,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self { host: "127.0.0.1".into(), port: 7878, resume_timeout_ms: 60_000, realtime: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    pub mode: Mode,
    pub seed: u64,
    /// Copy-spell target for task 1 modes.
    pub target: String,
    /// Improvised sentences start with this letter.
    pub improvise_first_letter: char,
    pub improvise_words: usize,
    /// Take suggestion slots whenever they save keystrokes.
    pub greedy: bool,
    pub max_selections: usize,
    /// Refuse to run online unless validation passed.
    pub require_validation: bool,
    /// Log decimated epochs so the session can be replayed.
    pub log_features: bool,
    pub log: Option<PathBuf>,
    pub timing: Timing,
    pub subject: SubjectParams,
    pub provider: ProviderConfig,
    pub classifier: ClassifierConfig,
    pub server: ServerConfig,
}

pub const DEFAULT_TARGET: &str = "I WOULD LIKE TO HAVE WATER";
pub const MAX_SELECTIONS: usize = 200;

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Task1Chat,
            seed: 1,
            target: DEFAULT_TARGET.into(),
            improvise_first_letter: 'H',
            improvise_words: 6,
            greedy: true,
            max_selections: MAX_SELECTIONS,
            require_validation: true,
            log_features: true,
            log: None,
            timing: Timing::default(),
            subject: SubjectParams { p300_amplitude: 5.0, noise_sigma: 2.5, ..Default::default() },
            provider: ProviderConfig::default(),
            classifier: ClassifierConfig::default(),
            server: ServerConfig::default(),
        }
    }
}

impl SessionConfig {
    pub fn from_toml(text: &str) -> Result<Self, SessionError> {
        let cfg: Self = toml::from_str(text).map_err(|e| SessionError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, SessionError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SessionError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<(), SessionError> {
        self.subject.validate().map_err(|e| SessionError::Config(e.to_string()))?;
        if matches!(self.mode, Mode::Task1Chat | Mode::Task1LetterOnly)
            && crate::subject::IntentionPolicy::copy_spell(&self.target, true).is_err()
        {
            return Err(SessionError::Config(format!("target must be letters and spaces: {:?}", self.target)));
        }
        if !self.improvise_first_letter.is_ascii_alphabetic() {
            return Err(SessionError::Config("improvise_first_letter must be A-Z".into()));
        }
        if self.max_selections == 0 || self.max_selections > MAX_SELECTIONS {
            return Err(SessionError::Config(format!("max_selections must be 1..={MAX_SELECTIONS}")));
        }
        if self.timing.repetitions == 0 {
            return Err(SessionError::Config("timing.repetitions must be > 0".into()));
        }
        if !(self.classifier.p_in < self.classifier.p_out) {
            return Err(SessionError::Config("classifier.p_in must be below p_out".into()));
        }
        self.provider.oracle_mode()?;
        Ok(())
    }

    /// Commented default configuration.
    pub fn default_toml() -> String {
        let body = Self::default().to_toml();
        format!(
            "# Speller session configuration.\n\
             # mode: calibration | validation | task1_chat | task1_letter_only | task2_improvise | interactive\n\
             # provider.kind: mock | remote | oracle. The remote key is read from the environment\n\
             # variable named by provider.remote.api_key_env, or provider.remote.api_key.\n\
             # Subject amplitudes and noise are in microvolts.\n\n{body}"
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_toml() {
        let text = SessionConfig::default_toml();
        let cfg = SessionConfig::from_toml(&text).unwrap();
        assert_eq!(cfg, SessionConfig::default());
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg = SessionConfig::from_toml("mode = \"task2_improvise\"\nseed = 9\n[subject]\np300_amplitude = 3.0\n").unwrap();
        assert_eq!(cfg.mode, Mode::Task2Improvise);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.subject.p300_amplitude, 3.0);
        assert_eq!(cfg.subject.p300_latency_ms, 300.0);
        assert_eq!(cfg.timing, Timing::default());
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(SessionConfig::from_toml("mode = \"bogus\"").is_err());
        assert!(SessionConfig::from_toml("[subject]\nnoise_sigma = 0.0").is_err());
        assert!(SessionConfig::from_toml("target = \"HI, THERE\"").is_err());
        assert!(SessionConfig::from_toml("max_selections = 500").is_err());
        assert!(SessionConfig::from_toml("[provider]\noracle_mode = \"psychic\"").is_err());
        assert!(SessionConfig::from_toml("unknown_field = 1").is_err());
    }

    #[test]
    fn letter_only_hides_suggestions() {
        assert!(!Mode::Task1LetterOnly.uses_suggestions());
        assert!(Mode::Task1Chat.uses_suggestions());
    }
}
