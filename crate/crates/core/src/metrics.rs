//! Evaluation metrics: information transfer rate with predictive output,
//! keystroke savings and its bounds, speed, accuracy, and success rate.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::composer::{FunctionKey, Key};
use crate::eventlog::{Event, Record};
use crate::paradigm::Timing;
use crate::subject::{common_prefix, normalize};

/// 26 letters plus space and enter.
pub const BASE_SYMBOLS: f64 = 28.0;
pub const DEFAULT_SELECTION_S: f64 = 24.56;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum MetricsError {
    #[error("bit rate undefined for P = {0}")]
    UndefinedRate(f64),
    #[error("need at least two symbols, got N = {0}")]
    TooFewSymbols(f64),
    #[error("no selections")]
    ZeroSelections,
    #[error("selection time must be positive, got {0}")]
    BadTime(f64),
    #[error("empty sentence")]
    EmptySentence,
    #[error("no records")]
    NoRecords,
}

/// Bits per selection for `n` equiprobable symbols chosen correctly with
/// probability `p`, errors spread evenly. `p = 1` gives `log2 n`.
pub fn itr_bits_per_selection(p: f64, n: f64) -> Result<f64, MetricsError> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(MetricsError::UndefinedRate(p));
    }
    if !(n >= 2.0) {
        return Err(MetricsError::TooFewSymbols(n));
    }
    let miss = if p < 1.0 { (1.0 - p) * ((1.0 - p) / (n - 1.0)).log2() } else { 0.0 };
    Ok(miss + p * p.log2() + n.log2())
}

/// Bits per minute scaled by characters produced per selection.
pub fn itr_star(bits: f64, t_s: f64, alpha: f64) -> Result<f64, MetricsError> {
    if !(t_s > 0.0) {
        return Err(MetricsError::BadTime(t_s));
    }
    Ok(bits / (t_s / 60.0) * alpha)
}

pub fn alpha(n_char: usize, n_selections: usize) -> Result<f64, MetricsError> {
    if n_selections == 0 {
        return Err(MetricsError::ZeroSelections);
    }
    Ok(n_char as f64 / n_selections as f64)
}

/// Symbol count when displayed suggestion characters are counted as choices.
pub fn itr_star_2_n(m: f64) -> f64 {
    BASE_SYMBOLS + m
}

/// Characters of the sentence as displayed, spaces included, trailing space ignored.
pub fn count_chars(sentence: &str) -> usize {
    normalize(sentence).chars().count()
}

pub fn count_words(sentence: &str) -> usize {
    normalize(sentence).split(' ').filter(|w| !w.is_empty()).count()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeystrokeMetrics {
    pub ks: f64,
    pub ks_wc_max: f64,
    pub ks_wp_max: f64,
    pub ks_dr: f64,
}

pub fn keystroke_metrics_from_counts(
    chars: usize,
    words: usize,
    keystrokes: usize,
) -> Result<KeystrokeMetrics, MetricsError> {
    if chars == 0 {
        return Err(MetricsError::EmptySentence);
    }
    let c = chars as f64;
    let ks = (c - keystrokes as f64) / c * 100.0;
    let ks_wc_max = (c - 2.0 * words as f64) / c * 100.0;
    let ks_wp_max = (c - words as f64) / c * 100.0;
    Ok(KeystrokeMetrics { ks, ks_wc_max, ks_wp_max, ks_dr: (1.0 - ks / ks_wp_max) * 100.0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    #[default]
    CopySpell,
    Improvise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub key: Key,
    pub correct: Option<bool>,
    pub composed_after: String,
    pub shown: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceRecord {
    pub id: String,
    pub task: TaskKind,
    pub target: Option<String>,
    pub final_composed: String,
    pub selections: Vec<SelectionRecord>,
    pub t_per_selection_s: f64,
    /// Wall-clock duration when the session was not simulated.
    pub elapsed_s: Option<f64>,
}

impl SentenceRecord {
    /// The reference text: the target, or the final text for improvised sentences.
    pub fn reference(&self) -> String {
        normalize(self.target.as_deref().unwrap_or(&self.final_composed))
    }
}

/// Selections, other than En, that lengthen the longest prefix shared with
/// the reference beyond anything reached before.
pub fn effective_keystrokes(rec: &SentenceRecord) -> usize {
    let reference = rec.reference();
    let mut best = 0;
    let mut count = 0;
    for s in &rec.selections {
        if s.key == Key::Function(FunctionKey::Enter) {
            continue;
        }
        let text = s.composed_after.replace('-', " ").to_uppercase();
        let m = common_prefix(&text, &reference);
        if m > best {
            best = m;
            count += 1;
        }
    }
    count
}

pub fn keystroke_metrics(rec: &SentenceRecord) -> Result<KeystrokeMetrics, MetricsError> {
    let reference = rec.reference();
    keystroke_metrics_from_counts(count_chars(&reference), count_words(&reference), effective_keystrokes(rec))
}

/// Mean over selections of the letters shown across all suggestion slots.
pub fn mean_displayed_chars(rec: &SentenceRecord) -> f64 {
    if rec.selections.is_empty() {
        return 0.0;
    }
    let total: usize =
        rec.selections.iter().map(|s| s.shown.iter().map(|c| c.chars().filter(|ch| !ch.is_whitespace()).count()).sum::<usize>()).sum();
    total as f64 / rec.selections.len() as f64
}

/// Percentage of reference characters reproduced at the same position,
/// over the longer of the two texts.
pub fn success_rate(final_composed: &str, target: &str) -> f64 {
    let a: Vec<char> = normalize(final_composed).chars().collect();
    let b: Vec<char> = normalize(target).chars().collect();
    let denom = a.len().max(b.len());
    if denom == 0 {
        return 100.0;
    }
    let same = a.iter().zip(&b).filter(|(x, y)| x == y).count();
    same as f64 / denom as f64 * 100.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasicMetrics {
    pub time_to_complete_min: f64,
    pub typing_speed_cpm: f64,
    pub selection_accuracy_pct: Option<f64>,
    pub sr_pct: Option<f64>,
}

pub fn basic_metrics(rec: &SentenceRecord) -> BasicMetrics {
    let minutes = rec.elapsed_s.unwrap_or(rec.selections.len() as f64 * rec.t_per_selection_s) / 60.0;
    let chars = count_chars(&rec.final_composed);
    let judged: Vec<bool> = rec.selections.iter().filter_map(|s| s.correct).collect();
    let accuracy = (!judged.is_empty())
        .then(|| judged.iter().filter(|&&c| c).count() as f64 / judged.len() as f64 * 100.0);
    BasicMetrics {
        time_to_complete_min: minutes,
        typing_speed_cpm: if minutes > 0.0 { chars as f64 / minutes } else { 0.0 },
        selection_accuracy_pct: accuracy,
        sr_pct: rec.target.as_deref().map(|t| success_rate(&rec.final_composed, t)),
    }
}

/// Which probability enters the bit rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum PConvention {
    /// Success rate for copy-spelling, 1 for improvised sentences.
    #[default]
    ByTask,
    SuccessRate,
    One,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub id: String,
    pub n_char: usize,
    pub n_selections: usize,
    pub time_to_complete_min: f64,
    pub typing_speed_cpm: f64,
    pub selection_accuracy_pct: Option<f64>,
    pub sr_pct: Option<f64>,
    pub p: f64,
    pub alpha: f64,
    #[serde(rename = "M")]
    pub m: f64,
    pub itr_star_1: f64,
    pub itr_star_2: f64,
    pub n_keystrokes: usize,
    pub n_words: usize,
    pub ks_pct: f64,
    pub ks_wc_max_pct: f64,
    pub ks_wp_max_pct: f64,
    pub ks_dr_pct: f64,
}

pub fn report_for(rec: &SentenceRecord, convention: PConvention) -> Result<MetricsReport, MetricsError> {
    let basic = basic_metrics(rec);
    let reference = rec.reference();
    let n_char = count_chars(&rec.final_composed);
    let n_selections = rec.selections.len();
    let a = alpha(n_char, n_selections)?;
    let p = match (convention, rec.task) {
        (PConvention::One, _) | (PConvention::ByTask, TaskKind::Improvise) => 1.0,
        _ => basic.sr_pct.unwrap_or(100.0) / 100.0,
    };
    let m = mean_displayed_chars(rec);
    let itr1 = itr_star(itr_bits_per_selection(p, BASE_SYMBOLS)?, rec.t_per_selection_s, a)?;
    let itr2 = itr_star(itr_bits_per_selection(p, itr_star_2_n(m))?, rec.t_per_selection_s, a)?;
    let ks = keystroke_metrics(rec)?;
    Ok(MetricsReport {
        id: rec.id.clone(),
        n_char,
        n_selections,
        time_to_complete_min: basic.time_to_complete_min,
        typing_speed_cpm: basic.typing_speed_cpm,
        selection_accuracy_pct: basic.selection_accuracy_pct,
        sr_pct: basic.sr_pct,
        p,
        alpha: a,
        m,
        itr_star_1: itr1,
        itr_star_2: itr2,
        n_keystrokes: effective_keystrokes(rec),
        n_words: count_words(&reference),
        ks_pct: ks.ks,
        ks_wc_max_pct: ks.ks_wc_max,
        ks_wp_max_pct: ks.ks_wp_max,
        ks_dr_pct: ks.ks_dr,
    })
}

/// Column means of the numeric report fields. Optional fields average over
/// the records that have them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportAverages {
    pub n_char: f64,
    pub n_selections: f64,
    pub time_to_complete_min: f64,
    pub typing_speed_cpm: f64,
    pub selection_accuracy_pct: Option<f64>,
    pub sr_pct: Option<f64>,
    pub alpha: f64,
    #[serde(rename = "M")]
    pub m: f64,
    pub itr_star_1: f64,
    pub itr_star_2: f64,
    pub n_keystrokes: f64,
    pub n_words: f64,
    pub ks_pct: f64,
    pub ks_wc_max_pct: f64,
    pub ks_wp_max_pct: f64,
    pub ks_dr_pct: f64,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

fn mean_opt(xs: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = xs.flatten().collect();
    (!v.is_empty()).then(|| mean(v.into_iter()))
}

pub fn averages(reports: &[MetricsReport]) -> Result<ReportAverages, MetricsError> {
    if reports.is_empty() {
        return Err(MetricsError::NoRecords);
    }
    let r = reports;
    Ok(ReportAverages {
        n_char: mean(r.iter().map(|x| x.n_char as f64)),
        n_selections: mean(r.iter().map(|x| x.n_selections as f64)),
        time_to_complete_min: mean(r.iter().map(|x| x.time_to_complete_min)),
        typing_speed_cpm: mean(r.iter().map(|x| x.typing_speed_cpm)),
        selection_accuracy_pct: mean_opt(r.iter().map(|x| x.selection_accuracy_pct)),
        sr_pct: mean_opt(r.iter().map(|x| x.sr_pct)),
        alpha: mean(r.iter().map(|x| x.alpha)),
        m: mean(r.iter().map(|x| x.m)),
        itr_star_1: mean(r.iter().map(|x| x.itr_star_1)),
        itr_star_2: mean(r.iter().map(|x| x.itr_star_2)),
        n_keystrokes: mean(r.iter().map(|x| x.n_keystrokes as f64)),
        n_words: mean(r.iter().map(|x| x.n_words as f64)),
        ks_pct: mean(r.iter().map(|x| x.ks_pct)),
        ks_wc_max_pct: mean(r.iter().map(|x| x.ks_wc_max_pct)),
        ks_wp_max_pct: mean(r.iter().map(|x| x.ks_wp_max_pct)),
        ks_dr_pct: mean(r.iter().map(|x| x.ks_dr_pct)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Text,
    Csv,
    Json,
}

const COLUMNS: [&str; 17] = [
    "id", "chars", "selections", "time_min", "cpm", "acc_pct", "sr_pct", "alpha", "M", "itr1", "itr2",
    "keystrokes", "words", "ks_pct", "ks_wc_max", "ks_wp_max", "ks_dr",
];

fn opt(x: Option<f64>) -> String {
    x.map_or("NA".into(), |v| format!("{v:.2}"))
}

fn row_cells(r: &MetricsReport) -> Vec<String> {
    vec![
        r.id.clone(),
        r.n_char.to_string(),
        r.n_selections.to_string(),
        format!("{:.2}", r.time_to_complete_min),
        format!("{:.2}", r.typing_speed_cpm),
        opt(r.selection_accuracy_pct),
        opt(r.sr_pct),
        format!("{:.2}", r.alpha),
        format!("{:.2}", r.m),
        format!("{:.2}", r.itr_star_1),
        format!("{:.2}", r.itr_star_2),
        r.n_keystrokes.to_string(),
        r.n_words.to_string(),
        format!("{:.2}", r.ks_pct),
        format!("{:.2}", r.ks_wc_max_pct),
        format!("{:.2}", r.ks_wp_max_pct),
        format!("{:.2}", r.ks_dr_pct),
    ]
}

fn average_cells(a: &ReportAverages) -> Vec<String> {
    let f = |x: f64| format!("{x:.2}");
    vec![
        "average".into(),
        f(a.n_char),
        f(a.n_selections),
        f(a.time_to_complete_min),
        f(a.typing_speed_cpm),
        opt(a.selection_accuracy_pct),
        opt(a.sr_pct),
        f(a.alpha),
        f(a.m),
        f(a.itr_star_1),
        f(a.itr_star_2),
        f(a.n_keystrokes),
        f(a.n_words),
        f(a.ks_pct),
        f(a.ks_wc_max_pct),
        f(a.ks_wp_max_pct),
        f(a.ks_dr_pct),
    ]
}

/// Per-sentence rows plus an average row.
pub fn emit_report(reports: &[MetricsReport], format: ReportFormat) -> Result<String, MetricsError> {
    let avg = averages(reports)?;
    let mut rows: Vec<Vec<String>> = reports.iter().map(row_cells).collect();
    rows.push(average_cells(&avg));
    let out = match format {
        ReportFormat::Json => {
            let doc = serde_json::json!({ "records": reports, "average": avg });
            serde_json::to_string_pretty(&doc).expect("report serialises") + "\n"
        }
        ReportFormat::Csv => {
            let mut s = COLUMNS.join(",") + "\n";
            for r in &rows {
                s += &r.join(",");
                s.push('\n');
            }
            s
        }
        ReportFormat::Text => {
            let widths: Vec<usize> = (0..COLUMNS.len())
                .map(|i| rows.iter().map(|r| r[i].len()).chain([COLUMNS[i].len()]).max().unwrap_or(0))
                .collect();
            let mut s = String::new();
            let line = |cells: &[String], s: &mut String| {
                let parts: Vec<String> = cells
                    .iter()
                    .zip(&widths)
                    .enumerate()
                    .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
                    .collect();
                let _ = writeln!(s, "{}", parts.join("  ").trim_end());
            };
            line(&COLUMNS.map(String::from), &mut s);
            for r in &rows {
                line(r, &mut s);
            }
            s
        }
    };
    Ok(out)
}

/// One record per sentence in a session log. Sentences start at
/// `sentence_start` (or implicitly at the first selection) and end at
/// `session_end` or the next `sentence_start`.
pub fn records_from_log(records: &[Record]) -> Vec<SentenceRecord> {
    let mut out = Vec::new();
    let mut t_sel = DEFAULT_SELECTION_S;
    let mut task = TaskKind::CopySpell;
    let mut current: Option<SentenceRecord> = None;
    let new_record = |n: usize, target: Option<String>, task: TaskKind, t: f64| SentenceRecord {
        id: format!("S{:02}", n + 1),
        task: if target.is_some() { task } else { TaskKind::Improvise },
        target,
        final_composed: String::new(),
        selections: Vec::new(),
        t_per_selection_s: t,
        elapsed_s: None,
    };
    for rec in records {
        match &rec.event {
            Event::Header { mode, timing, .. } => {
                t_sel = selection_seconds(timing);
                task = if mode.contains("improvise") { TaskKind::Improvise } else { TaskKind::CopySpell };
            }
            Event::SentenceStart { target } => {
                out.extend(current.take());
                current = Some(new_record(out.len(), target.as_deref().map(normalize), task, t_sel));
            }
            Event::Selection { key, correct, composed_after, shown, .. } => {
                let r = current.get_or_insert_with(|| new_record(out.len(), None, task, t_sel));
                r.selections.push(SelectionRecord {
                    key: *key,
                    correct: *correct,
                    composed_after: composed_after.clone(),
                    shown: shown.clone(),
                });
                r.final_composed = composed_after.clone();
            }
            Event::SessionEnd { .. } => out.extend(current.take()),
            _ => {}
        }
    }
    out.extend(current.take());
    out.retain(|r| !r.selections.is_empty());
    out
}

fn selection_seconds(t: &Timing) -> f64 {
    t.selection_ms(t.repetitions) as f64 / 1000.0
}
