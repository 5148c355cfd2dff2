//! Synthetic EEG subject and the intention policies that drive it.
//!
//! Epochs are white (or optionally pink) Gaussian noise plus, on flashes of the
//! attended key's row or column, a Gaussian bump peaking at the P300 latency and
//! scaled by a centro-parietal topography.

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::composer::{CompositionState, Key, KeyboardLayout};
use crate::paradigm::FlashSchedule;
use crate::signal::{EegEpoch, EpochLabel, FlashMarker, RawRecording, CHANNELS, EPOCH_SAMPLES, N_CHANNELS, SAMPLE_RATE_HZ};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseColor {
    #[default]
    White,
    Pink,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SubjectParams {
    /// Peak of the bump on Pz, µV.
    pub p300_amplitude: f64,
    pub p300_latency_ms: f64,
    /// Standard deviation of the Gaussian bump, ms.
    pub p300_width_ms: f64,
    /// Per-sample noise standard deviation, µV.
    pub noise_sigma: f64,
    pub noise_color: NoiseColor,
    /// Probability that a target flash evokes nothing.
    pub lapse_prob: f64,
    pub seed: u64,
}

impl Default for SubjectParams {
    fn default() -> Self {
        Self {
            p300_amplitude: 5.0,
            p300_latency_ms: 300.0,
            p300_width_ms: 80.0,
            noise_sigma: 5.0,
            noise_color: NoiseColor::White,
            lapse_prob: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SubjectError {
    #[error("invalid subject parameter: {0}")]
    Invalid(String),
}

impl SubjectParams {
    /// Amplitude-to-noise ratio `snr` at unit noise.
    pub fn with_snr(snr: f64, seed: u64) -> Self {
        Self { p300_amplitude: snr, noise_sigma: 1.0, seed, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), SubjectError> {
        if !(self.p300_amplitude >= 0.0) {
            return Err(SubjectError::Invalid(format!("p300_amplitude {} < 0", self.p300_amplitude)));
        }
        if !(self.noise_sigma > 0.0) {
            return Err(SubjectError::Invalid(format!("noise_sigma {} must be > 0", self.noise_sigma)));
        }
        if !(0.0..=1.0).contains(&self.lapse_prob) {
            return Err(SubjectError::Invalid(format!("lapse_prob {} outside [0, 1]", self.lapse_prob)));
        }
        if !(self.p300_width_ms > 0.0) {
            return Err(SubjectError::Invalid(format!("p300_width_ms {} must be > 0", self.p300_width_ms)));
        }
        Ok(())
    }
}

/// Relative P300 amplitude per channel, in montage order.
pub fn topography() -> [f64; N_CHANNELS] {
    std::array::from_fn(|i| match CHANNELS[i] {
        "Pz" => 1.0,
        "Cz" | "CP1" | "CP2" => 0.8,
        _ => 0.3,
    })
}

/// Unit-amplitude bump sampled over one epoch window.
pub fn template(params: &SubjectParams) -> [f64; EPOCH_SAMPLES] {
    let dt = 1000.0 / SAMPLE_RATE_HZ;
    std::array::from_fn(|i| {
        let z = (i as f64 * dt - params.p300_latency_ms) / params.p300_width_ms;
        (-0.5 * z * z).exp()
    })
}

/// True when `flash_code` lights the attended key.
pub fn is_target_flash(layout: &KeyboardLayout, attended: Option<&Key>, flash_code: u8) -> bool {
    attended
        .and_then(|k| layout.codes_of(k))
        .is_some_and(|(c, r)| c.get() == flash_code || r.get() == flash_code)
}

fn noise_row<R: Rng + ?Sized>(color: NoiseColor, sigma: f64, n: usize, rng: &mut R) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).unwrap();
    match color {
        NoiseColor::White => (0..n).map(|_| sigma * normal.sample(rng)).collect(),
        NoiseColor::Pink => {
            // Kellet's economy filter; output rescaled to roughly unit variance.
            let (mut b0, mut b1, mut b2) = (0.0, 0.0, 0.0);
            (0..n)
                .map(|_| {
                    let w = normal.sample(rng);
                    b0 = 0.99765 * b0 + w * 0.0990460;
                    b1 = 0.96300 * b1 + w * 0.2965164;
                    b2 = 0.57000 * b2 + w * 1.0526913;
                    sigma * (b0 + b1 + b2 + w * 0.1848) / 3.0
                })
                .collect()
        }
    }
}

/// One synthetic post-flash epoch.
pub fn generate_epoch<R: Rng + ?Sized>(
    params: &SubjectParams,
    layout: &KeyboardLayout,
    attended: Option<&Key>,
    flash_code: u8,
    rng: &mut R,
) -> EegEpoch {
    let target = is_target_flash(layout, attended, flash_code);
    let evoked = target && params.p300_amplitude > 0.0 && !(rng.gen::<f64>() < params.lapse_prob);
    let topo = topography();
    let tpl = template(params);
    let mut data = Vec::with_capacity(N_CHANNELS * EPOCH_SAMPLES);
    for &w in &topo {
        let mut row = noise_row(params.noise_color, params.noise_sigma, EPOCH_SAMPLES, rng);
        if evoked {
            for (x, t) in row.iter_mut().zip(&tpl) {
                *x += params.p300_amplitude * w * t;
            }
        }
        data.extend(row);
    }
    let label = attended.map(|_| if target { EpochLabel::Target } else { EpochLabel::Nontarget });
    EegEpoch::from_flat(data, flash_code, label)
}

/// Seeded subject owning its generator.
#[derive(Debug, Clone)]
pub struct SimulatedSubject {
    pub params: SubjectParams,
    layout: KeyboardLayout,
    rng: ChaCha8Rng,
}

impl SimulatedSubject {
    pub fn new(params: SubjectParams) -> Result<Self, SubjectError> {
        params.validate()?;
        let rng = ChaCha8Rng::seed_from_u64(params.seed);
        Ok(Self { params, layout: KeyboardLayout::standard(), rng })
    }

    pub fn epoch(&mut self, attended: Option<&Key>, flash_code: u8) -> EegEpoch {
        generate_epoch(&self.params, &self.layout, attended, flash_code, &mut self.rng)
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

/// Continuous recording of one selection trial: noise, a slow drift and DC
/// offset per channel, and evoked responses at every target flash onset.
/// Markers sit at each flash onset.
pub fn synthesize_recording<R: Rng + ?Sized>(
    params: &SubjectParams,
    layout: &KeyboardLayout,
    attended: Option<&Key>,
    schedule: &FlashSchedule,
    rng: &mut R,
) -> RawRecording {
    let ms_to_sample = |ms: u64| (ms as f64 * SAMPLE_RATE_HZ / 1000.0).round() as usize;
    let flashes: Vec<(usize, u8)> = schedule.flashes().map(|(at, _, code)| (ms_to_sample(at), code)).collect();
    let lead = ms_to_sample(1000);
    let n = lead + flashes.last().map_or(0, |f| f.0) + EPOCH_SAMPLES + ms_to_sample(1000);
    let topo = topography();
    let tpl = template(params);
    let mut samples: Vec<Vec<f64>> = (0..N_CHANNELS)
        .map(|ch| {
            let offset = 20.0 * (ch as f64 - 7.5);
            let phase = ch as f64 * 0.4;
            let mut row = noise_row(params.noise_color, params.noise_sigma, n, rng);
            for (i, x) in row.iter_mut().enumerate() {
                let t = i as f64 / SAMPLE_RATE_HZ;
                *x += offset + 15.0 * (2.0 * std::f64::consts::PI * 0.05 * t + phase).sin();
            }
            row
        })
        .collect();
    let mut markers = Vec::with_capacity(flashes.len());
    for &(at, code) in &flashes {
        let onset = lead + at;
        markers.push(FlashMarker { sample: onset, code });
        let evoked = is_target_flash(layout, attended, code)
            && params.p300_amplitude > 0.0
            && !(rng.gen::<f64>() < params.lapse_prob);
        if evoked {
            for (ch, row) in samples.iter_mut().enumerate() {
                for (j, t) in tpl.iter().enumerate() {
                    row[onset + j] += params.p300_amplitude * topo[ch] * t;
                }
            }
        }
    }
    RawRecording::standard(samples, markers).expect("synthesised recording has the standard montage")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyMode {
    CopySpell { target: String },
    Scripted { keys: VecDeque<Key> },
    /// Free composition: type `first_letter`, then take slot 0 until `words` words exist.
    Improvise { first_letter: char, words: usize },
    Interactive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentionPolicy {
    pub mode: PolicyMode,
    /// Use suggestion slots whenever they save keystrokes.
    pub greedy: bool,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum PolicyError {
    #[error("scripted key list exhausted")]
    Exhausted,
    #[error("interactive policy: the operator chooses the key")]
    Interactive,
    #[error("copy-spell target must be A-Z and spaces: {0:?}")]
    BadTarget(String),
}

/// Deepest corrective search, in keys.
pub const MAX_RECOVERY_KEYS: usize = 3;

impl IntentionPolicy {
    pub fn copy_spell(target: &str, greedy: bool) -> Result<Self, PolicyError> {
        let norm = normalize(target);
        if norm.is_empty() || !crate::composer::is_valid_text(&norm) {
            return Err(PolicyError::BadTarget(target.to_string()));
        }
        Ok(Self { mode: PolicyMode::CopySpell { target: norm }, greedy })
    }

    pub fn scripted(keys: impl IntoIterator<Item = Key>) -> Self {
        Self { mode: PolicyMode::Scripted { keys: keys.into_iter().collect() }, greedy: false }
    }

    pub fn improvise(first_letter: char, words: usize) -> Self {
        Self { mode: PolicyMode::Improvise { first_letter: first_letter.to_ascii_uppercase(), words }, greedy: true }
    }

    pub fn target(&self) -> Option<&str> {
        match &self.mode {
            PolicyMode::CopySpell { target } => Some(target),
            _ => None,
        }
    }

    pub fn next_intended_key(&mut self, state: &CompositionState) -> Result<Key, PolicyError> {
        match &mut self.mode {
            PolicyMode::CopySpell { target } => Ok(copy_spell_key(target, state, self.greedy)),
            PolicyMode::Scripted { keys } => keys.pop_front().ok_or(PolicyError::Exhausted),
            PolicyMode::Improvise { first_letter, words } => {
                let done = state.composed.split_whitespace().count();
                if state.composed.is_empty() {
                    Ok(Key::Letter(*first_letter))
                } else if done >= *words && state.composed.ends_with(' ') {
                    Ok(Key::ENTER)
                } else if self.greedy && state.suggestions.slot(0).is_some() {
                    Ok(Key::Suggestion(0))
                } else if !state.composed.ends_with(' ') {
                    Ok(Key::SPACE)
                } else {
                    Ok(Key::ENTER)
                }
            }
            PolicyMode::Interactive => Err(PolicyError::Interactive),
        }
    }
}

/// Uppercase, single spaces, trimmed.
pub fn normalize(text: &str) -> String {
    text.replace('-', " ").to_uppercase().split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Length of the common prefix, in characters.
pub fn common_prefix(a: &str, b: &str) -> usize {
    a.chars().zip(b.chars()).take_while(|(x, y)| x == y).count()
}

fn copy_spell_key(target: &str, state: &CompositionState, greedy: bool) -> Key {
    let composed = &state.composed;
    if composed.trim_end() == target && composed.len() <= target.len() + 1 {
        return Key::ENTER;
    }
    let with_space = format!("{target} ");
    if !with_space.starts_with(composed.as_str()) {
        return recovery_key(&with_space, composed);
    }
    if greedy {
        let typed = composed.len();
        let mut best: Option<(usize, u8)> = None;
        for slot in 0..state.suggestions.candidates.len() as u8 {
            let Ok((next, None)) = state.apply_key(Key::Suggestion(slot)) else { continue };
            if !with_space.starts_with(next.composed.as_str()) {
                continue;
            }
            let gain = next.composed.len().saturating_sub(typed);
            if gain > 1 && best.is_none_or(|(g, _)| gain > g) {
                best = Some((gain, slot));
            }
        }
        if let Some((_, slot)) = best {
            return Key::Suggestion(slot);
        }
    }
    match with_space[composed.len()..].chars().next() {
        Some(' ') | None => Key::SPACE,
        Some(c) => Key::Letter(c),
    }
}

/// First key of the cheapest DC/DW sequence (at most [`MAX_RECOVERY_KEYS`])
/// that leaves a prefix of `goal`. Cost is keys pressed plus characters that
/// then need retyping to get back to the original match. Ties prefer fewer
/// keys, then DC.
fn recovery_key(goal: &str, composed: &str) -> Key {
    let matched = common_prefix(goal, composed);
    let mut best: Option<(usize, usize, Key)> = None;
    let mut frontier: VecDeque<(String, usize, Key)> = VecDeque::new();
    for first in [Key::DELETE_CHAR, Key::DELETE_WORD] {
        frontier.push_back((apply_edit(composed, first), 1, first));
    }
    while let Some((text, depth, first)) = frontier.pop_front() {
        if goal.starts_with(text.as_str()) {
            let cost = depth + matched.saturating_sub(text.len());
            if best.is_none_or(|(c, d, _)| (cost, depth) < (c, d)) {
                best = Some((cost, depth, first));
            }
            continue;
        }
        if depth < MAX_RECOVERY_KEYS {
            for k in [Key::DELETE_CHAR, Key::DELETE_WORD] {
                frontier.push_back((apply_edit(&text, k), depth + 1, first));
            }
        }
    }
    best.map_or(Key::DELETE_WORD, |(_, _, k)| k)
}

fn apply_edit(text: &str, key: Key) -> String {
    let state = CompositionState { composed: text.to_string(), ..Default::default() };
    state.apply_key(key).map(|(s, _)| s.composed).unwrap_or_default()
}
