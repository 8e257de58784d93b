//! Wrapper-based sequential forward selection.
//!
//! Starting from the empty set, each step trains one model per remaining
//! candidate feature on the training rows (the standardizer is refit on the
//! selected columns every time) and adds the candidate with the best
//! validation accuracy, ties to the lowest feature index. Accuracy is not
//! monotone in the cardinality; only the per-step argmax is guaranteed.
//!
//! Candidate evaluations within a step run in parallel; results are reduced
//! in feature order, so the trace is identical to serial execution.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Label;
use crate::features::Standardizer;
use crate::learners::{LearnError, LearnerKind, LearnerSpec};

#[derive(Debug, Error)]
pub enum SelectionError {
    #[error("cannot select {requested} features from {available}")]
    InsufficientFeatures { requested: usize, available: usize },
    #[error("cardinality {k} outside 1..={len}")]
    CardinalityOutOfRange { k: usize, len: usize },
    #[error("training and validation rows disagree on feature count")]
    ColumnMismatch,
    #[error("split is empty: {0}")]
    EmptySplit(&'static str),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error("feature processing failed: {0}")]
    Feature(#[from] crate::features::FeatureError),
    #[error("trace file {path}: {message}")]
    TraceFile {
        path: std::path::PathBuf,
        message: String,
    },
}

/// One accepted step of the greedy search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionStep {
    /// Cardinality after this step (1-based, consecutive).
    pub k: usize,
    /// Feature index added at this step.
    pub feature: usize,
    /// Validation accuracy of the model trained on the first `k` features.
    pub accuracy: f64,
}

/// The full record of a forward-selection run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionTrace {
    pub learner_kind: LearnerKind,
    pub config_digest: String,
    pub max_features: usize,
    pub steps: Vec<SelectionStep>,
    /// Smallest cardinality attaining the best accuracy.
    pub best_k: usize,
    pub best_accuracy: f64,
}

impl SelectionTrace {
    /// Selected feature indices in selection order, first `k` of them.
    pub fn selected(&self, k: usize) -> Result<Vec<usize>, SelectionError> {
        if k == 0 || k > self.steps.len() {
            return Err(SelectionError::CardinalityOutOfRange {
                k,
                len: self.steps.len(),
            });
        }
        Ok(self.steps[..k].iter().map(|s| s.feature).collect())
    }
}

fn accuracy_of(
    spec: &LearnerSpec,
    seed: u64,
    train_cols: &[Vec<f64>],
    train_y: &[Label],
    val_cols: &[Vec<f64>],
    val_y: &[Label],
) -> Result<f64, SelectionError> {
    let standardizer = Standardizer::fit(train_cols)?;
    let train_std = standardizer.apply(train_cols)?;
    let val_std = standardizer.apply(val_cols)?;
    let payload = spec.train(&train_std, train_y, seed)?;
    let mut correct = 0usize;
    for (row, truth) in val_std.iter().zip(val_y) {
        if payload.predict(row)?.label == *truth {
            correct += 1;
        }
    }
    Ok(correct as f64 / val_y.len() as f64)
}

fn take_columns(rows: &[Vec<f64>], cols: &[usize]) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|r| cols.iter().map(|&c| r[c]).collect())
        .collect()
}

/// Greedy forward selection driven by validation accuracy.
#[allow(clippy::too_many_arguments)]
pub fn sfs(
    train_x: &[Vec<f64>],
    train_y: &[Label],
    val_x: &[Vec<f64>],
    val_y: &[Label],
    spec: &LearnerSpec,
    max_features: usize,
    seed: u64,
    config_digest: &str,
) -> Result<SelectionTrace, SelectionError> {
    if train_x.is_empty() {
        return Err(SelectionError::EmptySplit("train"));
    }
    if val_x.is_empty() {
        return Err(SelectionError::EmptySplit("validation"));
    }
    let total = train_x[0].len();
    if val_x[0].len() != total {
        return Err(SelectionError::ColumnMismatch);
    }
    if max_features == 0 || max_features > total {
        return Err(SelectionError::InsufficientFeatures {
            requested: max_features,
            available: total,
        });
    }

    let mut selected: Vec<usize> = Vec::new();
    let mut remaining: Vec<usize> = (0..total).collect();
    let mut steps = Vec::with_capacity(max_features);

    while selected.len() < max_features {
        let evaluations: Vec<(usize, Result<f64, SelectionError>)> = remaining
            .par_iter()
            .map(|&candidate| {
                let mut cols = selected.clone();
                cols.push(candidate);
                let train_cols = take_columns(train_x, &cols);
                let val_cols = take_columns(val_x, &cols);
                (
                    candidate,
                    accuracy_of(spec, seed, &train_cols, train_y, &val_cols, val_y),
                )
            })
            .collect();

        // Argmax accuracy; `remaining` is ascending, so strict improvement
        // keeps the lowest feature index on ties.
        let mut best: Option<(usize, f64)> = None;
        for (candidate, result) in evaluations {
            let accuracy = result?;
            if best.is_none_or(|(_, a)| accuracy > a) {
                best = Some((candidate, accuracy));
            }
        }
        let (feature, accuracy) = best.expect("remaining is non-empty");
        selected.push(feature);
        remaining.retain(|&f| f != feature);
        steps.push(SelectionStep {
            k: selected.len(),
            feature,
            accuracy,
        });
    }

    let (best_k, best_accuracy) = steps
        .iter()
        .fold((0usize, f64::NEG_INFINITY), |(bk, ba), s| {
            if s.accuracy > ba {
                (s.k, s.accuracy)
            } else {
                (bk, ba)
            }
        });

    Ok(SelectionTrace {
        learner_kind: spec.kind(),
        config_digest: config_digest.to_string(),
        max_features,
        steps,
        best_k,
        best_accuracy,
    })
}

/// Restrict rows to the first `k` selected features, in selection order.
pub fn apply_selection(
    trace: &SelectionTrace,
    k: usize,
    rows: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>, SelectionError> {
    let cols = trace.selected(k)?;
    Ok(take_columns(rows, &cols))
}

/// Write a trace as JSON.
pub fn save_trace(trace: &SelectionTrace, path: &Path) -> Result<(), SelectionError> {
    let json = serde_json::to_string_pretty(trace).map_err(|e| SelectionError::TraceFile {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    std::fs::write(path, json).map_err(|e| SelectionError::TraceFile {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Read a trace written by [`save_trace`].
pub fn load_trace(path: &Path) -> Result<SelectionTrace, SelectionError> {
    let text = std::fs::read_to_string(path).map_err(|e| SelectionError::TraceFile {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    serde_json::from_str(&text).map_err(|e| SelectionError::TraceFile {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}
