//! Re-derive every selection in a log from its logged features and model.

use std::collections::BTreeMap;

use super::SessionError;
use crate::composer::{Key, KeyboardLayout};
use crate::eventlog::{Event, Record};
use crate::paradigm::{recognize, SelectionTrial, N_CODES};
use crate::swlda::TrainedModel;

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayMismatch {
    pub trial: usize,
    pub logged: Key,
    pub replayed: Key,
    /// Cumulative scores differ in at least one bit.
    pub scores_differ: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReplayReport {
    pub selections: usize,
    pub mismatches: Vec<ReplayMismatch>,
}

impl ReplayReport {
    pub fn is_exact(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Score the logged features with the logged model, accumulate per
/// sequence, recognize, and compare keys and cumulative scores bit for bit.
pub fn replay(records: &[Record]) -> Result<ReplayReport, SessionError> {
    let model: TrainedModel = records
        .iter()
        .find_map(|r| match &r.event {
            Event::Header { model: Some(m), .. } => Some(m.clone()),
            _ => None,
        })
        .ok_or_else(|| SessionError::Replay("log has no model in its header".into()))?;
    let layout = KeyboardLayout::standard();
    let mut per_trial: BTreeMap<usize, BTreeMap<usize, [Option<f64>; N_CODES]>> = BTreeMap::new();
    let mut report = ReplayReport::default();
    for rec in records {
        match &rec.event {
            Event::Features { trial, seq, code, values } => {
                let slot = per_trial.entry(*trial).or_default().entry(*seq).or_insert([None; N_CODES]);
                slot[*code as usize - 1] = Some(model.score_values(values)?);
            }
            Event::Selection { trial, key, cumulative, .. } => {
                let seqs = per_trial.remove(trial).ok_or_else(|| {
                    SessionError::Replay(format!("selection {trial} has no logged features"))
                })?;
                let mut st = SelectionTrial::new(seqs.len());
                for (seq, scores) in seqs {
                    let mut row = [0.0; N_CODES];
                    for (i, s) in scores.iter().enumerate() {
                        row[i] = s.ok_or_else(|| {
                            SessionError::Replay(format!("trial {trial} sequence {seq} misses code {}", i + 1))
                        })?;
                    }
                    st.accumulate(row).map_err(|e| SessionError::Replay(e.to_string()))?;
                }
                let replayed = recognize(&st, &layout);
                let scores_differ = cumulative.is_some_and(|c| {
                    c.iter().zip(&st.cumulative).any(|(a, b)| a.to_bits() != b.to_bits())
                });
                report.selections += 1;
                if replayed != *key || scores_differ {
                    report.mismatches.push(ReplayMismatch { trial: *trial, logged: *key, replayed, scores_differ });
                }
            }
            _ => {}
        }
    }
    Ok(report)
}
