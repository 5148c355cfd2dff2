//! Row/column flash paradigm over the 5x8 keyboard.
//!
//! Codes 1-8 flash the columns left to right, codes 9-13 the rows top to
//! bottom. A selection trial runs a number of sequences, each a random
//! permutation of all 13 codes, and picks the key at the intersection of the
//! best-scoring column and row.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::composer::{Key, KeyboardLayout};

pub const N_CODES: usize = 13;
pub const N_COLUMNS: u8 = 8;
pub const N_ROWS: u8 = 5;
pub const DEFAULT_REPETITIONS: usize = 8;

#[derive(Debug, Error, PartialEq)]
pub enum ParadigmError {
    #[error("stimulus code {0} outside 1..=13")]
    InvalidCode(u8),
    #[error("trial already holds {0} repetitions")]
    Overflow(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct StimulusCode(u8);

impl StimulusCode {
    pub fn new(code: u8) -> Result<Self, ParadigmError> {
        if (1..=N_CODES as u8).contains(&code) {
            Ok(Self(code))
        } else {
            Err(ParadigmError::InvalidCode(code))
        }
    }

    pub fn column(col: u8) -> Result<Self, ParadigmError> {
        if (1..=N_COLUMNS).contains(&col) {
            Ok(Self(col))
        } else {
            Err(ParadigmError::InvalidCode(col))
        }
    }

    pub fn row(row: u8) -> Result<Self, ParadigmError> {
        if (1..=N_ROWS).contains(&row) {
            Ok(Self(N_COLUMNS + row))
        } else {
            Err(ParadigmError::InvalidCode(N_COLUMNS + row))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }

    pub fn is_column(self) -> bool {
        self.0 <= N_COLUMNS
    }

    pub fn index(self) -> usize {
        self.0 as usize - 1
    }
}

impl TryFrom<u8> for StimulusCode {
    type Error = ParadigmError;
    fn try_from(v: u8) -> Result<Self, ParadigmError> {
        Self::new(v)
    }
}

impl From<StimulusCode> for u8 {
    fn from(c: StimulusCode) -> u8 {
        c.0
    }
}

/// Stimulus timing in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Timing {
    pub flash_ms: u64,
    pub isi_ms: u64,
    pub inter_sequence_ms: u64,
    pub post_selection_ms: u64,
    pub repetitions: usize,
}

impl Default for Timing {
    fn default() -> Self {
        Self {
            flash_ms: 40,
            isi_ms: 100,
            inter_sequence_ms: 1000,
            post_selection_ms: 2000,
            repetitions: DEFAULT_REPETITIONS,
        }
    }
}

impl Timing {
    pub fn flash_period_ms(&self) -> u64 {
        self.flash_ms + self.isi_ms
    }

    pub fn sequence_ms(&self) -> u64 {
        self.flash_period_ms() * N_CODES as u64 + self.inter_sequence_ms
    }

    pub fn selection_ms(&self, sequences: usize) -> u64 {
        self.post_selection_ms + self.sequence_ms() * sequences as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlashEvent {
    /// Offset from the first flash of the trial.
    pub offset_ms: u64,
    pub code: u8,
    pub on: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlashSchedule {
    pub sequences: Vec<[u8; N_CODES]>,
    pub timing: Timing,
}

impl FlashSchedule {
    /// Onset of each flash, in presentation order.
    pub fn flashes(&self) -> impl Iterator<Item = (u64, usize, u8)> + '_ {
        let t = self.timing;
        self.sequences.iter().enumerate().flat_map(move |(s, seq)| {
            seq.iter().enumerate().map(move |(i, &code)| {
                (s as u64 * t.sequence_ms() + i as u64 * t.flash_period_ms(), s, code)
            })
        })
    }

    /// On/off events for the whole trial.
    pub fn events(&self) -> Vec<FlashEvent> {
        let flash_ms = self.timing.flash_ms;
        self.flashes()
            .flat_map(|(at, _, code)| {
                [
                    FlashEvent { offset_ms: at, code, on: true },
                    FlashEvent { offset_ms: at + flash_ms, code, on: false },
                ]
            })
            .collect()
    }
}

pub fn make_schedule(rng_seed: u64) -> FlashSchedule {
    make_schedule_with(Timing::default(), rng_seed)
}

pub fn make_schedule_with(timing: Timing, rng_seed: u64) -> FlashSchedule {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    schedule_from_rng(timing, &mut rng)
}

pub(crate) fn schedule_from_rng<R: rand::Rng>(timing: Timing, rng: &mut R) -> FlashSchedule {
    let sequences = (0..timing.repetitions)
        .map(|_| {
            let mut seq: [u8; N_CODES] = std::array::from_fn(|i| i as u8 + 1);
            seq.shuffle(rng);
            seq
        })
        .collect();
    FlashSchedule { sequences, timing }
}

/// Seconds needed for one selection with this schedule, post-selection pause included.
pub fn schedule_duration(fs: &FlashSchedule) -> f64 {
    fs.timing.selection_ms(fs.sequences.len()) as f64 / 1000.0
}

/// Per-repetition scores and their running sum per code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionTrial {
    pub scores: Vec<[f64; N_CODES]>,
    pub cumulative: [f64; N_CODES],
    pub max_repetitions: usize,
}

impl Default for SelectionTrial {
    fn default() -> Self {
        Self::new(DEFAULT_REPETITIONS)
    }
}

impl SelectionTrial {
    pub fn new(max_repetitions: usize) -> Self {
        Self { scores: Vec::new(), cumulative: [0.0; N_CODES], max_repetitions }
    }

    pub fn accumulate(&mut self, repetition: [f64; N_CODES]) -> Result<(), ParadigmError> {
        if self.scores.len() >= self.max_repetitions {
            return Err(ParadigmError::Overflow(self.scores.len()));
        }
        for (c, s) in self.cumulative.iter_mut().zip(repetition) {
            *c += s;
        }
        self.scores.push(repetition);
        Ok(())
    }

    pub fn is_complete(&self) -> bool {
        self.scores.len() == self.max_repetitions
    }

    /// Best column code and best row code; ties go to the lower code.
    pub fn winning_codes(&self) -> (StimulusCode, StimulusCode) {
        let argmax = |range: std::ops::Range<usize>| {
            let mut best = range.start;
            for i in range {
                if self.cumulative[i] > self.cumulative[best] {
                    best = i;
                }
            }
            StimulusCode(best as u8 + 1)
        };
        (argmax(0..N_COLUMNS as usize), argmax(N_COLUMNS as usize..N_CODES))
    }
}

pub fn recognize(trial: &SelectionTrial, layout: &KeyboardLayout) -> Key {
    let (col, row) = trial.winning_codes();
    layout.key_at_codes(col, row)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn default_duration() {
        assert_eq!(Timing::default().selection_ms(8), 24_560);
        assert_eq!(schedule_duration(&make_schedule(0)), 24.56);
    }

    #[test]
    fn single_sequence_and_empty_schedule() {
        let one = Timing { repetitions: 1, post_selection_ms: 0, ..Timing::default() };
        assert_eq!(schedule_duration(&make_schedule_with(one, 3)), 2.82);
        let none = Timing { repetitions: 0, ..Timing::default() };
        assert_eq!(schedule_duration(&make_schedule_with(none, 3)), 2.0);
    }

    #[test]
    fn duration_is_linear_in_sequences() {
        for n in 0..12 {
            let t = Timing { repetitions: n, ..Timing::default() };
            let d = schedule_duration(&make_schedule_with(t, 1));
            assert!((d - (2.0 + 2.82 * n as f64)).abs() < 1e-9);
        }
    }

    #[test]
    fn flash_timeline() {
        let s = make_schedule(5);
        let ev = s.events();
        assert_eq!(ev.len(), 8 * 13 * 2);
        assert_eq!(ev[0].offset_ms, 0);
        assert_eq!(ev[1], FlashEvent { offset_ms: 40, code: ev[0].code, on: false });
        assert_eq!(ev[2].offset_ms, 140);
        // First flash of the second sequence follows the 1 s gap.
        assert_eq!(ev[26].offset_ms, 2820);
        let last_off = ev.last().unwrap().offset_ms;
        assert_eq!(last_off, 7 * 2820 + 12 * 140 + 40);
    }

    #[test]
    fn same_seed_same_schedule() {
        assert_eq!(make_schedule(42), make_schedule(42));
        assert_ne!(make_schedule(42), make_schedule(43));
    }

    proptest! {
        #[test]
        fn sequences_are_permutations(seed in any::<u64>()) {
            let s = make_schedule(seed);
            prop_assert_eq!(s.sequences.len(), 8);
            for seq in &s.sequences {
                let mut sorted = *seq;
                sorted.sort();
                prop_assert_eq!(sorted, std::array::from_fn::<u8, 13, _>(|i| i as u8 + 1));
            }
        }

        #[test]
        fn every_key_flashes_twice_per_sequence(seed in any::<u64>(), row in 1u8..=5, col in 1u8..=8) {
            let layout = KeyboardLayout::standard();
            let key = layout.key_at(row, col).unwrap();
            let (c, r) = layout.codes_of(&key).unwrap();
            let s = make_schedule(seed);
            let mut target_flashes = 0;
            for seq in &s.sequences {
                let hits = seq.iter().filter(|&&x| x == c.get() || x == r.get()).count();
                prop_assert_eq!(hits, 2);
                target_flashes += hits;
            }
            prop_assert_eq!(target_flashes, 16);
        }

        #[test]
        fn recognition_survives_positive_affine_maps(
            reps in proptest::collection::vec(proptest::array::uniform13(-5.0f64..5.0), 8),
            a in 0.01f64..50.0,
            b in -100.0f64..100.0,
        ) {
            let layout = KeyboardLayout::standard();
            let mut t1 = SelectionTrial::default();
            let mut t2 = SelectionTrial::default();
            for r in &reps {
                t1.accumulate(*r).unwrap();
                t2.accumulate(r.map(|s| a * s + b)).unwrap();
            }
            prop_assert_eq!(recognize(&t1, &layout), recognize(&t2, &layout));
        }
    }

    #[test]
    fn accumulation() {
        let mut t = SelectionTrial::default();
        t.accumulate([0.0; 13]).unwrap();
        assert_eq!(t.cumulative, [0.0; 13]);

        let mut single = SelectionTrial::default();
        let rep: [f64; 13] = std::array::from_fn(|i| i as f64 * 0.5 - 2.0);
        single.accumulate(rep).unwrap();
        assert_eq!(single.cumulative, rep);

        let mut t = SelectionTrial::default();
        let mut rep = [0.0; 13];
        rep[5] = 1.0;
        rep[10] = 1.0;
        for _ in 0..8 {
            t.accumulate(rep).unwrap();
        }
        assert!(t.is_complete());
        assert_eq!(t.cumulative[5], 8.0);
        assert_eq!(t.winning_codes(), (StimulusCode(6), StimulusCode(11)));
        assert_eq!(t.accumulate(rep), Err(ParadigmError::Overflow(8)));
    }

    #[test]
    fn codes_6_and_11_select_q() {
        let layout = KeyboardLayout::standard();
        let mut t = SelectionTrial::default();
        let mut rep = [0.0; 13];
        rep[5] = 3.0;
        rep[10] = 2.0;
        t.accumulate(rep).unwrap();
        assert_eq!(recognize(&t, &layout), Key::Letter('Q'));
    }

    #[test]
    fn codes_1_and_9_select_top_left_slot() {
        let layout = KeyboardLayout::standard();
        let mut t = SelectionTrial::default();
        let mut rep = [-1.0; 13];
        rep[0] = 1.0;
        rep[8] = 1.0;
        t.accumulate(rep).unwrap();
        assert_eq!(recognize(&t, &layout), Key::Suggestion(0));
    }

    #[test]
    fn ties_go_to_lowest_code() {
        let t = SelectionTrial::default();
        assert_eq!(t.winning_codes(), (StimulusCode(1), StimulusCode(9)));
    }

    #[test]
    fn code_constructors() {
        assert!(StimulusCode::new(0).is_err());
        assert!(StimulusCode::new(14).is_err());
        assert_eq!(StimulusCode::row(3).unwrap().get(), 11);
        assert!(StimulusCode::column(8).unwrap().is_column());
        assert!(!StimulusCode::row(1).unwrap().is_column());
    }
}
