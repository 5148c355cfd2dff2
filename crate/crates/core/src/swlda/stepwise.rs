//! Forward-inclusion / backward-elimination feature selection.
//!
//! Each pass tries to add the excluded feature with the smallest entry p-value
//! (if below `p_in`), then refits the included set and drops the feature with
//! the largest p-value (if above `p_out`). Passes repeat until one changes
//! nothing.
//!
//! Entry p-values for all candidates are computed together: with the current
//! design orthonormalised into `Q`, the t statistic of a candidate `x` added to
//! the model depends only on `z = x - QQ'x` and the current residual, so one
//! projection per candidate replaces a full refit.

use serde::{Deserialize, Serialize};

use super::ols::{axpy, dot, ols_fit, two_sided_p, RANK_TOLERANCE};
use super::{SwldaError, TrainingSet};

pub const DEFAULT_P_IN: f64 = 0.1;
pub const DEFAULT_P_OUT: f64 = 0.25;
pub const DEFAULT_MAX_FEATURES: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepwiseParams {
    pub p_in: f64,
    pub p_out: f64,
    pub max_features: usize,
    /// Upper bound on forward/backward passes.
    pub max_passes: usize,
}

impl Default for StepwiseParams {
    fn default() -> Self {
        Self {
            p_in: DEFAULT_P_IN,
            p_out: DEFAULT_P_OUT,
            max_features: DEFAULT_MAX_FEATURES,
            max_passes: 2 * crate::signal::FEATURE_LEN,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "snake_case")]
pub enum StepEvent {
    Added { feature: usize, p: f64 },
    Removed { feature: usize, p: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxFeatures,
    PassLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepwiseResult {
    /// In order of inclusion.
    pub selected: Vec<usize>,
    pub trace: Vec<StepEvent>,
    pub stop: StopReason,
    pub passes: usize,
}

/// Working state: orthonormal basis of `[1, included]`, candidate columns
/// residualised against it, and the current response residual.
struct Projection<'a> {
    columns: &'a [Vec<f64>],
    centered_norms: Vec<f64>,
    basis: Vec<Vec<f64>>,
    residualised: Vec<Vec<f64>>,
    residual: Vec<f64>,
}

impl<'a> Projection<'a> {
    fn new(columns: &'a [Vec<f64>], y: &[f64]) -> Self {
        let n = y.len();
        let mut p = Self {
            columns,
            centered_norms: columns
                .iter()
                .map(|c| {
                    let m = c.iter().sum::<f64>() / n as f64;
                    c.iter().map(|v| (v - m).powi(2)).sum::<f64>().sqrt()
                })
                .collect(),
            basis: Vec::new(),
            residualised: columns.to_vec(),
            residual: y.to_vec(),
        };
        p.push_direction(vec![1.0 / (n as f64).sqrt(); n]);
        p
    }

    fn push_direction(&mut self, q: Vec<f64>) {
        for z in &mut self.residualised {
            let c = dot(&q, z);
            axpy(-c, &q, z);
        }
        let c = dot(&q, &self.residual);
        axpy(-c, &q, &mut self.residual);
        self.basis.push(q);
    }

    /// Adds a feature to the basis; false if it is (numerically) dependent.
    fn include(&mut self, feature: usize) -> bool {
        let mut z = self.columns[feature].clone();
        for _ in 0..2 {
            for q in &self.basis {
                let c = dot(q, &z);
                axpy(-c, q, &mut z);
            }
        }
        let norm = dot(&z, &z).sqrt();
        if norm <= RANK_TOLERANCE * self.centered_norms[feature].max(f64::MIN_POSITIVE) {
            return false;
        }
        z.iter_mut().for_each(|v| *v /= norm);
        self.push_direction(z);
        true
    }

    fn rebuild(columns: &'a [Vec<f64>], y: &[f64], included: &[usize]) -> Self {
        let mut p = Self::new(columns, y);
        for &f in included {
            p.include(f);
        }
        p
    }

    /// Entry p-value for `feature` given the current basis, or `None` when the
    /// feature is collinear with it.
    fn entry_p(&self, feature: usize) -> Option<f64> {
        let z = &self.residualised[feature];
        let zz = dot(z, z);
        let scale = self.centered_norms[feature];
        if scale == 0.0 || zz.sqrt() <= RANK_TOLERANCE * scale {
            return None;
        }
        let n = self.residual.len();
        // Basis holds the intercept plus the included features.
        let k_new = self.basis.len();
        if n <= k_new + 1 {
            return None;
        }
        let df = n - k_new - 1;
        let zr = dot(z, &self.residual);
        let sse = (dot(&self.residual, &self.residual) - zr * zr / zz).max(0.0);
        let beta = zr / zz;
        let se = (sse / df as f64 / zz).sqrt();
        Some(two_sided_p(beta / se, df))
    }
}

/// Entry p-value of every excluded feature given `included`, computed by
/// refitting OLS per candidate. Used to audit a finished selection.
pub fn entry_p_values(ts: &TrainingSet, included: &[usize]) -> Vec<(usize, Option<f64>)> {
    let columns = ts.columns();
    let y = ts.response();
    (0..ts.n_features())
        .filter(|f| !included.contains(f))
        .map(|f| {
            let mut cols: Vec<&[f64]> = included.iter().map(|&i| columns[i].as_slice()).collect();
            cols.push(&columns[f]);
            let p = ols_fit(&cols, &y).ok().map(|fit| *fit.p_values.last().unwrap());
            (f, p)
        })
        .collect()
}

pub fn stepwise_select(ts: &TrainingSet, params: &StepwiseParams) -> Result<StepwiseResult, SwldaError> {
    if !(params.p_in < params.p_out) {
        return Err(SwldaError::Thresholds { p_in: params.p_in, p_out: params.p_out });
    }
    let y = ts.response();
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    if y.iter().all(|v| *v == mean) {
        return Err(SwldaError::EmptySelection {
            reason: "labels are constant; there is no variance to explain".into(),
        });
    }
    let columns = ts.columns();
    let mut included: Vec<usize> = Vec::new();
    let mut trace = Vec::new();
    let mut proj = Projection::new(columns, &y);
    let mut best_first_p = f64::INFINITY;
    let mut passes = 0;

    let stop = loop {
        if passes == params.max_passes {
            break StopReason::PassLimit;
        }
        passes += 1;
        let mut updated = false;

        // Forward: minimal entry p among excluded features, lowest index on ties.
        let mut best: Option<(usize, f64)> = None;
        for f in 0..columns.len() {
            if included.contains(&f) {
                continue;
            }
            if let Some(p) = proj.entry_p(f) {
                if best.is_none_or(|(_, bp)| p < bp) {
                    best = Some((f, p));
                }
            }
        }
        if let Some((f, p)) = best {
            if included.is_empty() {
                best_first_p = best_first_p.min(p);
            }
            if p < params.p_in && proj.include(f) {
                included.push(f);
                trace.push(StepEvent::Added { feature: f, p });
                updated = true;
            }
        }

        // Backward: maximal p among included features.
        if !included.is_empty() {
            let cols: Vec<&[f64]> = included.iter().map(|&i| columns[i].as_slice()).collect();
            let fit = ols_fit(&cols, &y)?;
            let mut worst = 0;
            for (i, &p) in fit.p_values.iter().enumerate() {
                let (wp, wf) = (fit.p_values[worst], included[worst]);
                if p > wp || (p == wp && included[i] < wf) {
                    worst = i;
                }
            }
            let p = fit.p_values[worst];
            if p > params.p_out {
                let f = included.remove(worst);
                trace.push(StepEvent::Removed { feature: f, p });
                proj = Projection::rebuild(columns, &y, &included);
                updated = true;
            }
        }

        if !updated {
            break StopReason::Converged;
        }
        if included.len() >= params.max_features {
            break StopReason::MaxFeatures;
        }
    };

    if included.is_empty() {
        return Err(SwldaError::EmptySelection {
            reason: format!(
                "no feature reached entry p < {} (best entry p {:.3})",
                params.p_in, best_first_p
            ),
        });
    }
    Ok(StepwiseResult { selected: included, trace, stop, passes })
}
