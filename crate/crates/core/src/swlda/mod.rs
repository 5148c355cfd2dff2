//! Stepwise linear discriminant analysis.
//!
//! [`stepwise_select`] picks features by OLS significance, [`train`] fits a
//! two-class LDA on those columns, and [`score`] evaluates the resulting affine
//! discriminant on a feature vector.

mod lda;
mod ols;
mod stepwise;

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use lda::train;
pub use ols::{ols_fit, two_sided_p, OlsFit};
pub use stepwise::{
    entry_p_values, stepwise_select, StepEvent, StepwiseParams, StepwiseResult, StopReason,
    DEFAULT_MAX_FEATURES, DEFAULT_P_IN, DEFAULT_P_OUT,
};

use crate::signal::{FeatureVector, CHANNELS, DECIMATION, EPOCH_SAMPLES};

pub const MODEL_FORMAT: &str = "swlda-model.v1";
/// Rows required in each class before a model is fitted.
pub const MIN_ROWS_PER_CLASS: usize = 10;

#[derive(Debug, Error)]
pub enum SwldaError {
    #[error("column {column} is linearly dependent on the intercept and earlier columns")]
    RankDeficient { column: usize },
    #[error("{rows} rows cannot support a fit that needs at least {needed}")]
    TooFewRows { rows: usize, needed: usize },
    #[error("expected length {expected}, found {found}")]
    Shape { expected: usize, found: usize },
    #[error("no features selected: {reason}")]
    EmptySelection { reason: String },
    #[error("p_in ({p_in}) must be below p_out ({p_out})")]
    Thresholds { p_in: f64, p_out: f64 },
    #[error("class {class} has {rows} rows; at least {needed} required")]
    DegenerateClass { class: u8, rows: usize, needed: usize },
    #[error("labels must be 0 or 1, found {0}")]
    BadLabel(u8),
    #[error("selected feature {0} is out of range")]
    BadFeature(usize),
    #[error("model document: {0}")]
    Format(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Labelled feature rows, stored column-major for the regressions.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    columns: Vec<Vec<f64>>,
    labels: Vec<u8>,
}

impl TrainingSet {
    pub fn new(rows: Vec<Vec<f64>>, labels: Vec<u8>) -> Result<Self, SwldaError> {
        if rows.len() != labels.len() {
            return Err(SwldaError::Shape { expected: rows.len(), found: labels.len() });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l > 1) {
            return Err(SwldaError::BadLabel(bad));
        }
        let width = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != width) {
            return Err(SwldaError::Shape { expected: width, found: bad.len() });
        }
        let mut columns = vec![Vec::with_capacity(rows.len()); width];
        for row in &rows {
            for (c, v) in columns.iter_mut().zip(row) {
                c.push(*v);
            }
        }
        Ok(Self { columns, labels })
    }

    pub fn from_features(features: &[FeatureVector], labels: Vec<u8>) -> Result<Self, SwldaError> {
        Self::new(features.iter().map(|f| f.values.clone()).collect(), labels)
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }

    pub fn class_count(&self, class: u8) -> usize {
        self.labels.iter().filter(|&&l| l == class).count()
    }

    pub(crate) fn response(&self) -> Vec<f64> {
        self.labels.iter().map(|&l| f64::from(l)).collect()
    }

    /// Rows at the given indices, in that order.
    pub fn subset(&self, idx: &[usize]) -> TrainingSet {
        TrainingSet {
            columns: self.columns.iter().map(|c| idx.iter().map(|&i| c[i]).collect()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub p_in: f64,
    pub p_out: f64,
    pub seed: Option<u64>,
    pub feature_layout_hash: String,
    pub n_rows: usize,
    pub n_target: usize,
    pub stop: Option<StopReason>,
}

/// Affine discriminant over a subset of features. Larger scores mean a P300 is
/// more likely.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format: String,
    pub n_features: usize,
    pub selected: Vec<usize>,
    pub weights: Vec<f64>,
    pub offset: f64,
    pub metadata: Option<TrainingMetadata>,
}

impl TrainedModel {
    pub fn validate(&self) -> Result<(), SwldaError> {
        if self.format != MODEL_FORMAT {
            return Err(SwldaError::Format(format!("unknown format {:?}", self.format)));
        }
        if self.selected.is_empty() {
            return Err(SwldaError::Format("no selected features".into()));
        }
        if self.selected.len() != self.weights.len() {
            return Err(SwldaError::Format(format!(
                "{} selected features but {} weights",
                self.selected.len(),
                self.weights.len()
            )));
        }
        if let Some(&bad) = self.selected.iter().find(|&&f| f >= self.n_features) {
            return Err(SwldaError::BadFeature(bad));
        }
        Ok(())
    }

    pub fn to_writer<W: Write>(&self, w: W) -> Result<(), SwldaError> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }

    pub fn from_reader<R: Read>(r: R) -> Result<Self, SwldaError> {
        let model: Self = serde_json::from_reader(r)?;
        model.validate()?;
        Ok(model)
    }

    pub fn score_values(&self, values: &[f64]) -> Result<f64, SwldaError> {
        if values.len() != self.n_features {
            return Err(SwldaError::Shape { expected: self.n_features, found: values.len() });
        }
        Ok(self.selected.iter().zip(&self.weights).map(|(&i, w)| w * values[i]).sum::<f64>()
            + self.offset)
    }
}

pub fn score(model: &TrainedModel, fv: &FeatureVector) -> Result<f64, SwldaError> {
    model.score_values(&fv.values)
}

/// Hash identifying the montage, window, and decimation a model was trained on.
pub fn feature_layout_hash() -> String {
    let mut h = Sha256::new();
    h.update(CHANNELS.join(",").as_bytes());
    h.update(format!("|{EPOCH_SAMPLES}|{DECIMATION}").as_bytes());
    h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Stepwise selection followed by LDA, with training metadata attached.
pub fn fit_swlda(
    ts: &TrainingSet,
    params: &StepwiseParams,
    seed: Option<u64>,
) -> Result<(TrainedModel, StepwiseResult), SwldaError> {
    for class in [0u8, 1] {
        let rows = ts.class_count(class);
        if rows < MIN_ROWS_PER_CLASS {
            return Err(SwldaError::DegenerateClass { class, rows, needed: MIN_ROWS_PER_CLASS });
        }
    }
    let selection = stepwise_select(ts, params)?;
    let mut model = train(ts, &selection.selected)?;
    model.metadata = Some(TrainingMetadata {
        p_in: params.p_in,
        p_out: params.p_out,
        seed,
        feature_layout_hash: feature_layout_hash(),
        n_rows: ts.n_rows(),
        n_target: ts.class_count(1),
        stop: Some(selection.stop),
    });
    Ok((model, selection))
}

/// Area under the ROC curve of `scores` against binary `labels`
/// (Mann-Whitney form, ties counted half).
pub fn auc(scores: &[f64], labels: &[u8]) -> f64 {
    let pos: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| l == 1).map(|(s, _)| *s).collect();
    let neg: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| l == 0).map(|(s, _)| *s).collect();
    let mut wins = 0.0;
    for p in &pos {
        for n in &neg {
            wins += if p > n {
                1.0
            } else if p == n {
                0.5
            } else {
                0.0
            };
        }
    }
    wins / (pos.len() * neg.len()) as f64
}
