//! Calibration, validation, and online spelling sessions over a virtual clock.
//!
//! A session owns one subject, one flash-order generator, one composition
//! state, and one log. All three generators derive from the session seed, so a
//! configuration plus seed reproduces the log byte for byte.

pub mod config;
pub mod replay;
pub mod server;
pub mod wire;

use std::io::{self, Write};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::composer::{CompositionState, Key, KeyboardLayout};
use crate::eventlog::{EndReason, Event, LogError, LogWriter, LOG_FORMAT};
use crate::paradigm::{recognize, schedule_from_rng, SelectionTrial, Timing, N_CODES};
use crate::signal::{decimate_epoch, FeatureVector};
use crate::subject::{is_target_flash, IntentionPolicy, PolicyError, SimulatedSubject, SubjectParams};
use crate::suggest::{
    get_suggestions, MockProvider, OracleProvider, RemoteProvider, SuggestionProvider, SuggestionSet, SuggestionWorker,
};
use crate::swlda::{auc, fit_swlda, SwldaError, TrainedModel, TrainingSet};

pub use config::{Mode, ProviderKind, SessionConfig};

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("provider error: {0}")]
    Provider(String),
    #[error("classifier error: {0}")]
    Swlda(#[from] SwldaError),
    #[error("policy error: {0}")]
    Policy(#[from] PolicyError),
    #[error("log error: {0}")]
    Log(#[from] LogError),
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("validation failed after {trials} trials")]
    ValidationFailed { trials: usize },
    #[error("replay error: {0}")]
    Replay(String),
}

/// The keys cued during calibration, in order.
pub const CALIBRATION_KEYS: [&str; 20] =
    ["A", "En", "B", "Sp", "E", "Z", "F", "Y", "M", "R", "H", "W", "K", "T", "I", "V", "U", "J", "N", "Q"];
pub const CALIBRATION_SEQUENCES: usize = 5;
pub const CUE_MS: u64 = 2000;
pub const VALIDATION_TRIALS: usize = 10;
pub const VALIDATION_RUN: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationPlan {
    pub keys: Vec<Key>,
    pub sequences_per_key: usize,
}

impl Default for CalibrationPlan {
    fn default() -> Self {
        Self {
            keys: CALIBRATION_KEYS.iter().map(|k| k.parse().expect("calibration key")).collect(),
            sequences_per_key: CALIBRATION_SEQUENCES,
        }
    }
}

/// Independent seeds for the generators of one session phase.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream identifiers, one per phase, so phases draw independent noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Calibration = 1,
    Validation = 2,
    Online = 3,
    Interactive = 4,
}

/// Shared in-memory log sink.
#[derive(Debug, Clone, Default)]
pub struct MemorySink(pub Arc<Mutex<Vec<u8>>>);

impl MemorySink {
    pub fn contents(&self) -> Vec<u8> {
        self.0.lock().unwrap().clone()
    }
}

impl Write for MemorySink {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.0.lock().unwrap().extend_from_slice(buf);
        Ok(buf.len())
    }
    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

pub type SessionLog = LogWriter<Box<dyn Write + Send>>;

pub fn sink_log() -> SessionLog {
    LogWriter::new(Box::new(io::sink()))
}

pub fn memory_log() -> (SessionLog, MemorySink) {
    let sink = MemorySink::default();
    (LogWriter::new(Box::new(sink.clone())), sink)
}

pub fn file_log(path: &std::path::Path) -> io::Result<SessionLog> {
    let f = std::fs::File::create(path)?;
    Ok(LogWriter::new(Box::new(io::BufWriter::new(f))))
}

/// A flash as it happens, for live observers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlashNotice {
    pub trial: usize,
    pub seq: usize,
    pub code: u8,
    pub t_ms: u64,
}

pub struct TrialData {
    pub features: Vec<(usize, FeatureVector)>,
    pub trial: Option<SelectionTrial>,
    /// Clock when the last sequence ended.
    pub end_ms: u64,
}

/// Runs flash sequences against the simulated subject on a virtual clock.
pub struct Engine {
    pub timing: Timing,
    pub layout: KeyboardLayout,
    subject: SimulatedSubject,
    sched_rng: ChaCha8Rng,
    pub clock_ms: u64,
    pub log_features: bool,
}

impl Engine {
    pub fn new(params: &SubjectParams, timing: Timing, seed: u64, phase: Phase) -> Result<Self, SessionError> {
        let params = SubjectParams { seed: derive_seed(seed, phase as u64 * 2), ..params.clone() };
        let subject = SimulatedSubject::new(params).map_err(|e| SessionError::Config(e.to_string()))?;
        Ok(Self {
            timing,
            layout: KeyboardLayout::standard(),
            subject,
            sched_rng: ChaCha8Rng::seed_from_u64(derive_seed(seed, phase as u64 * 2 + 1)),
            clock_ms: 0,
            log_features: true,
        })
    }

    pub fn subject_params(&self) -> &SubjectParams {
        &self.subject.params
    }

    /// Present `sequences` randomized sequences. With a model, every flash is
    /// scored and the per-sequence scores accumulate into a selection trial.
    pub fn run_sequences(
        &mut self,
        trial_idx: usize,
        sequences: usize,
        attended: Option<&Key>,
        model: Option<&TrainedModel>,
        log: &mut SessionLog,
        on_flash: &mut dyn FnMut(FlashNotice),
    ) -> Result<TrialData, SessionError> {
        let timing = Timing { repetitions: sequences, ..self.timing };
        let schedule = schedule_from_rng(timing, &mut self.sched_rng);
        let start = self.clock_ms;
        let mut trial = model.map(|_| SelectionTrial::new(sequences));
        let mut features = Vec::with_capacity(sequences * N_CODES);
        let mut seq_scores = [0.0; N_CODES];
        for (i, (onset, seq, code)) in schedule.flashes().enumerate() {
            let t_on = start + onset;
            let t_off = t_on + timing.flash_ms;
            log.write(t_on, Event::Flash { trial: trial_idx, seq, code, on: true })?;
            on_flash(FlashNotice { trial: trial_idx, seq, code, t_ms: t_on });
            let epoch = self.subject.epoch(attended, code);
            let fv = decimate_epoch(&epoch);
            log.write(t_off, Event::Flash { trial: trial_idx, seq, code, on: false })?;
            if self.log_features {
                log.write(t_off, Event::Features { trial: trial_idx, seq, code, values: fv.values.clone() })?;
            }
            if let Some(m) = model {
                seq_scores[code as usize - 1] = m.score_values(&fv.values)?;
            }
            if (i + 1) % N_CODES == 0 {
                if let Some(t) = trial.as_mut() {
                    log.write(t_off, Event::Score { trial: trial_idx, seq, scores: seq_scores })?;
                    t.accumulate(seq_scores).expect("one accumulate per sequence");
                    seq_scores = [0.0; N_CODES];
                }
            }
            features.push((seq, fv));
        }
        self.clock_ms = start + timing.sequence_ms() * sequences as u64;
        Ok(TrialData { features, trial, end_ms: self.clock_ms })
    }

    /// Flash, score, and recognize one selection. The clock stops at the
    /// decision; call [`Engine::finish_selection`] after logging it.
    pub fn select(
        &mut self,
        trial_idx: usize,
        attended: Option<&Key>,
        model: &TrainedModel,
        log: &mut SessionLog,
        on_flash: &mut dyn FnMut(FlashNotice),
    ) -> Result<(Key, SelectionTrial), SessionError> {
        let reps = self.timing.repetitions;
        let data = self.run_sequences(trial_idx, reps, attended, Some(model), log, on_flash)?;
        let trial = data.trial.expect("model given");
        Ok((recognize(&trial, &self.layout), trial))
    }

    /// Post-selection feedback interval.
    pub fn finish_selection(&mut self) {
        self.clock_ms += self.timing.post_selection_ms;
    }
}

fn header(cfg: &SessionConfig, model: Option<&TrainedModel>, mode: Mode) -> Event {
    Event::Header {
        format: LOG_FORMAT.into(),
        mode: mode.as_str().into(),
        seed: cfg.seed,
        timing: cfg.timing,
        config: Some(redacted_config(cfg)),
        model: model.cloned(),
    }
}

/// Configuration as logged: any inline API key is masked.
pub fn redacted_config(cfg: &SessionConfig) -> serde_json::Value {
    let mut v = serde_json::to_value(cfg).expect("config serialises");
    if let Some(k) = v.pointer_mut("/provider/remote/api_key") {
        if !k.is_null() {
            *k = serde_json::Value::String("<redacted>".into());
        }
    }
    v
}

#[derive(Debug, Clone)]
pub struct CalibrationResult {
    pub training: TrainingSet,
    pub model: TrainedModel,
    pub stop: crate::swlda::StopReason,
}

/// Cue each calibration key, flash `sequences_per_key` sequences, and label
/// every epoch by whether the flash lit the cued key.
pub fn collect_calibration(
    cfg: &SessionConfig,
    plan: &CalibrationPlan,
    phase_seed: u64,
    log: &mut SessionLog,
) -> Result<TrainingSet, SessionError> {
    let mut engine = Engine::new(&cfg.subject, cfg.timing, phase_seed, Phase::Calibration)?;
    engine.log_features = cfg.log_features;
    let mut features = Vec::with_capacity(plan.keys.len() * plan.sequences_per_key * N_CODES);
    let mut labels = Vec::with_capacity(features.capacity());
    for (i, key) in plan.keys.iter().enumerate() {
        log.write(engine.clock_ms, Event::Cue { key: *key, duration_ms: CUE_MS })?;
        engine.clock_ms += CUE_MS;
        let data = engine.run_sequences(i, plan.sequences_per_key, Some(key), None, log, &mut |_| {})?;
        for (_, fv) in data.features {
            labels.push(is_target_flash(&engine.layout, Some(key), fv.source_code) as u8);
            features.push(fv);
        }
    }
    Ok(TrainingSet::from_features(&features, labels)?)
}

pub fn run_calibration(cfg: &SessionConfig, log: &mut SessionLog) -> Result<CalibrationResult, SessionError> {
    log.write(0, header(cfg, None, Mode::Calibration))?;
    let plan = CalibrationPlan::default();
    let training = collect_calibration(cfg, &plan, cfg.seed, log)?;
    let (model, sel) = fit_swlda(&training, &cfg.classifier.stepwise(), Some(cfg.seed))?;
    log::info!(
        "calibration: {} epochs, {} selected features, stop {:?}",
        training.n_rows(),
        model.selected.len(),
        sel.stop
    );
    log.flush()?;
    Ok(CalibrationResult { training, model, stop: sel.stop })
}

/// Held-out flash-level AUC of `model` on a fresh calibration run.
pub fn held_out_auc(model: &TrainedModel, cfg: &SessionConfig, seed: u64) -> Result<f64, SessionError> {
    let ts = collect_calibration(cfg, &CalibrationPlan::default(), seed, &mut sink_log())?;
    let scores: Vec<f64> = (0..ts.n_rows()).map(|i| model.score_values(&ts.row(i))).collect::<Result<_, _>>()?;
    Ok(auc(&scores, ts.labels()))
}

/// Trial (1-based) at which `run` consecutive successes first occur.
pub fn validation_outcome(results: &[bool], run: usize) -> Option<usize> {
    let mut streak = 0;
    for (i, &ok) in results.iter().enumerate() {
        streak = if ok { streak + 1 } else { 0 };
        if streak >= run {
            return Some(i + 1);
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationResult {
    pub passed: bool,
    pub passed_at: Option<usize>,
    pub trials: Vec<(Key, Key)>,
}

/// Up to ten trials over the first ten calibration keys; passes on three
/// consecutive correct selections.
pub fn run_validation(
    model: &TrainedModel,
    cfg: &SessionConfig,
    log: &mut SessionLog,
) -> Result<ValidationResult, SessionError> {
    log.write(0, header(cfg, Some(model), Mode::Validation))?;
    let mut engine = Engine::new(&cfg.subject, cfg.timing, cfg.seed, Phase::Validation)?;
    engine.log_features = cfg.log_features;
    let plan = CalibrationPlan::default();
    let mut trials = Vec::new();
    let mut results = Vec::new();
    for (i, key) in plan.keys.iter().take(VALIDATION_TRIALS).enumerate() {
        log.write(engine.clock_ms, Event::Cue { key: *key, duration_ms: CUE_MS })?;
        engine.clock_ms += CUE_MS;
        let (selected, _) = engine.select(i, Some(key), model, log, &mut |_| {})?;
        let correct = selected == *key;
        results.push(correct);
        trials.push((*key, selected));
        let passed_at = validation_outcome(&results, VALIDATION_RUN);
        let run = results.iter().rev().take_while(|&&c| c).count();
        log.write(
            engine.clock_ms,
            Event::Validation { trial: i, key: *key, selected, correct, run, passed: passed_at.is_some() },
        )?;
        engine.finish_selection();
        if passed_at.is_some() {
            log.flush()?;
            return Ok(ValidationResult { passed: true, passed_at, trials });
        }
    }
    log.flush()?;
    Ok(ValidationResult { passed: false, passed_at: None, trials })
}

/// Build the provider named in the configuration.
pub fn make_provider(cfg: &SessionConfig) -> Result<Arc<dyn SuggestionProvider>, SessionError> {
    Ok(match cfg.provider.kind {
        ProviderKind::Mock => Arc::new(MockProvider::default()),
        ProviderKind::Oracle => Arc::new(OracleProvider::new(&cfg.target, cfg.provider.oracle_mode()?)),
        ProviderKind::Remote => {
            let remote = RemoteProvider::new(cfg.provider.remote.clone());
            if cfg.provider.remote.resolve_key().is_none() {
                return Err(SessionError::Provider(format!(
                    "remote provider needs an API key in ${} or provider.remote.api_key",
                    cfg.provider.remote.api_key_env
                )));
            }
            Arc::new(remote)
        }
    })
}

/// Where suggestion sets come from during a session.
pub enum Suggester {
    /// Slots hidden, provider off.
    Off,
    /// Query on the session thread.
    Inline(Arc<dyn SuggestionProvider>),
    /// Query on a background worker; the session waits for it at the next trial boundary.
    Background { worker: SuggestionWorker, provider: Arc<dyn SuggestionProvider> },
}

impl Suggester {
    pub fn for_mode(mode: Mode, provider: Arc<dyn SuggestionProvider>, background: bool, timeout: Duration) -> Self {
        if !mode.uses_suggestions() {
            Suggester::Off
        } else if background {
            Suggester::Background { worker: SuggestionWorker::spawn(provider.clone(), timeout), provider }
        } else {
            Suggester::Inline(provider)
        }
    }

    fn fetch(
        &self,
        partial: &str,
        previous: &SuggestionSet,
        timeout: Duration,
    ) -> Option<(SuggestionSet, Option<String>, Option<serde_json::Value>)> {
        match self {
            Suggester::Off => None,
            Suggester::Inline(p) => {
                let (set, err) = get_suggestions(p.as_ref(), partial, timeout, previous);
                Some((set, err.map(|e| e.to_string()), p.describe_request(partial)))
            }
            Suggester::Background { worker, provider } => {
                let ticket = worker.request(partial, previous);
                // Margin over the provider's own timeout so its error, not ours, is reported.
                match worker.wait(ticket, timeout + Duration::from_millis(500)) {
                    Some(r) => Some((r.set, r.error.map(|e| e.to_string()), provider.describe_request(partial))),
                    None => Some((previous.stale(), Some("provider timed out".into()), provider.describe_request(partial))),
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub trial: usize,
    pub intended: Option<Key>,
    pub selected: Key,
    pub correct: Option<bool>,
    pub cumulative: [f64; N_CODES],
    pub warning: Option<String>,
    pub state: CompositionState,
}

/// One online spelling sentence: composition state plus engine and log.
pub struct OnlineSession {
    pub cfg: SessionConfig,
    pub model: TrainedModel,
    pub engine: Engine,
    pub state: CompositionState,
    pub log: SessionLog,
    suggester: Suggester,
    pub n_selections: usize,
    pub ended: Option<EndReason>,
}

impl OnlineSession {
    pub fn start(
        cfg: SessionConfig,
        model: TrainedModel,
        suggester: Suggester,
        mut log: SessionLog,
        phase: Phase,
    ) -> Result<Self, SessionError> {
        model.validate()?;
        let mut engine = Engine::new(&cfg.subject, cfg.timing, cfg.seed, phase)?;
        engine.log_features = cfg.log_features;
        let target = match cfg.mode {
            Mode::Task1Chat | Mode::Task1LetterOnly => Some(crate::subject::normalize(&cfg.target)),
            _ => None,
        };
        log.write(0, header(&cfg, Some(&model), cfg.mode))?;
        log.write(0, Event::SentenceStart { target: target.clone() })?;
        let mut s = Self {
            cfg,
            model,
            engine,
            state: CompositionState::new(target),
            log,
            suggester,
            n_selections: 0,
            ended: None,
        };
        s.refresh_suggestions()?;
        s.log_compose()?;
        Ok(s)
    }

    fn timeout(&self) -> Duration {
        Duration::from_millis(self.cfg.provider.timeout_ms)
    }

    fn refresh_suggestions(&mut self) -> Result<(), SessionError> {
        let partial = self.state.composed.clone();
        if let Some((set, error, request)) = self.suggester.fetch(&partial, &self.state.suggestions, self.timeout()) {
            if let Some(e) = &error {
                log::warn!("suggestions degraded to stale: {e}");
            }
            self.log.write(
                self.engine.clock_ms,
                Event::SuggestionSet {
                    partial,
                    candidates: set.candidates.clone(),
                    provenance: set.provenance,
                    error,
                    request,
                },
            )?;
            self.state.suggestions = set;
        }
        Ok(())
    }

    fn log_compose(&mut self) -> Result<(), SessionError> {
        let ev = Event::Compose {
            composed: self.state.composed.clone(),
            display: self.state.display_text(),
            slots: self.state.suggestions.candidates.clone(),
            finished: self.state.finished,
        };
        Ok(self.log.write(self.engine.clock_ms, ev)?)
    }

    pub fn is_over(&self) -> bool {
        self.ended.is_some()
    }

    /// Run one selection with `attended` as the subject's intent.
    pub fn step(
        &mut self,
        attended: Option<Key>,
        on_flash: &mut dyn FnMut(FlashNotice),
    ) -> Result<StepOutcome, SessionError> {
        let trial = self.n_selections;
        let shown = self.state.suggestions.candidates.clone();
        self.log.write(self.engine.clock_ms, Event::TrialStart { trial, intended: attended, slots: shown.clone() })?;
        let (selected, sel_trial) = self.engine.select(trial, attended.as_ref(), &self.model, &mut self.log, on_flash)?;
        let (next, warning) = self.state.apply_key(selected).map_err(|e| SessionError::Config(e.to_string()))?;
        let correct = attended.map(|a| a == selected);
        let warning = warning.map(|w| format!("{w:?}"));
        self.state = next;
        self.n_selections += 1;
        self.log.write(
            self.engine.clock_ms,
            Event::Selection {
                trial,
                key: selected,
                intended: attended,
                correct,
                cumulative: Some(sel_trial.cumulative),
                composed_after: self.state.composed.clone(),
                shown,
                warning: warning.clone(),
            },
        )?;
        self.engine.finish_selection();
        if self.state.finished {
            self.state.suggestions = SuggestionSet::empty();
            self.ended = Some(EndReason::Finished);
        } else {
            self.refresh_suggestions()?;
            if self.n_selections >= self.cfg.max_selections {
                self.ended = Some(EndReason::StepCap);
            }
        }
        self.log_compose()?;
        if let Some(reason) = self.ended {
            self.end(reason)?;
        }
        Ok(StepOutcome {
            trial,
            intended: attended,
            selected,
            correct,
            cumulative: sel_trial.cumulative,
            warning,
            state: self.state.clone(),
        })
    }

    pub fn end(&mut self, reason: EndReason) -> Result<(), SessionError> {
        self.ended = Some(reason);
        self.log.write(self.engine.clock_ms, Event::SessionEnd { reason, n_selections: self.n_selections })?;
        self.log.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OnlineResult {
    pub final_composed: String,
    pub n_selections: usize,
    pub end: EndReason,
    pub duration_ms: u64,
}

/// The policy a simulated subject follows in `cfg.mode`.
pub fn policy_for(cfg: &SessionConfig) -> Result<IntentionPolicy, SessionError> {
    Ok(match cfg.mode {
        Mode::Task1Chat => IntentionPolicy::copy_spell(&cfg.target, cfg.greedy)?,
        Mode::Task1LetterOnly => IntentionPolicy::copy_spell(&cfg.target, false)?,
        Mode::Task2Improvise => IntentionPolicy::improvise(cfg.improvise_first_letter, cfg.improvise_words),
        other => return Err(SessionError::Config(format!("mode {} is not an online spelling mode", other.as_str()))),
    })
}

/// Simulated online session: the policy picks the intended key, the subject
/// attends it, and the recognized key drives the composer until En or the cap.
pub fn run_online(
    model: &TrainedModel,
    cfg: &SessionConfig,
    provider: Arc<dyn SuggestionProvider>,
    log: SessionLog,
) -> Result<OnlineResult, SessionError> {
    let mut policy = policy_for(cfg)?;
    let suggester = Suggester::for_mode(cfg.mode, provider, false, Duration::from_millis(cfg.provider.timeout_ms));
    let mut session = OnlineSession::start(cfg.clone(), model.clone(), suggester, log, Phase::Online)?;
    while !session.is_over() {
        let intended = match policy.next_intended_key(&session.state) {
            Ok(k) => k,
            Err(PolicyError::Exhausted) => {
                session.end(EndReason::PolicyExhausted)?;
                break;
            }
            Err(e) => return Err(e.into()),
        };
        session.step(Some(intended), &mut |_| {})?;
    }
    Ok(OnlineResult {
        final_composed: session.state.composed.clone(),
        n_selections: session.n_selections,
        end: session.ended.expect("loop exits only when ended"),
        duration_ms: session.engine.clock_ms,
    })
}

/// Selection accuracy of `model` over `n` simulated selections of random keys.
pub fn simulate_accuracy(
    model: &TrainedModel,
    params: &SubjectParams,
    timing: Timing,
    n: usize,
    seed: u64,
) -> Result<f64, SessionError> {
    use rand::seq::SliceRandom;
    let mut engine = Engine::new(params, timing, seed, Phase::Online)?;
    engine.log_features = false;
    let keys: Vec<Key> = engine.layout.keys().collect();
    let mut pick = ChaCha8Rng::seed_from_u64(derive_seed(seed, 99));
    let mut log = sink_log();
    let mut correct = 0;
    for i in 0..n {
        let key = *keys.choose(&mut pick).expect("layout has keys");
        let (got, _) = engine.select(i, Some(&key), model, &mut log, &mut |_| {})?;
        engine.finish_selection();
        correct += (got == key) as usize;
    }
    Ok(correct as f64 / n as f64)
}
