//! Row/column P300 speller pipeline.
//!
//! The crate is organised the way a spelling session flows:
//!
//! ```text
//! subject ──epochs──▶ signal ──features──▶ swlda ──scores──▶ paradigm ──key──▶ composer
//!                                                                              │
//!                      metrics ◀──session log── session ◀──suggestions── suggest
//! ```
//!
//! Everything below `session` is a pure function of its inputs. `session` owns the
//! virtual clock, the log, and the wire protocol used by interactive clients.

pub mod cli;
pub mod composer;
pub mod eventlog;
pub mod metrics;
pub mod paradigm;
pub mod session;
pub mod signal;
pub mod subject;
pub mod suggest;
pub mod swlda;

pub use composer::{CompositionState, FunctionKey, Key, KeyboardLayout};
pub use paradigm::{FlashSchedule, SelectionTrial, StimulusCode, Timing};
pub use signal::{EegEpoch, FeatureVector, RawRecording};
pub use swlda::{TrainedModel, TrainingSet};
