//! Self-contained trained models and their JSON files.
//!
//! A model file carries everything needed to classify a raw feature vector:
//! the extraction configuration (and its digest), the selected feature
//! indices, the standardizer fitted on the training split, the learner
//! parameters, and the trained payload. Files are versioned through
//! `schema_version`; reals survive the round trip bit-exactly.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ensemble::predict_ensemble;
use super::svm::predict_svm;
use super::tree::TreeNode;
use super::{EnsembleModel, LearnError, LearnerKind, LearnerSpec, Prediction, SvmModel, TreeModel};
use crate::corpus::Label;
use crate::features::Standardizer;
use crate::mfcc::MfccConfig;

pub const MODEL_SCHEMA_VERSION: u64 = 1;

/// The trained classifier itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelPayload {
    Svm(SvmModel),
    Tree(TreeModel),
    Ensemble(EnsembleModel),
}

impl ModelPayload {
    /// Classify an already selected-and-standardized row.
    pub fn predict(&self, x: &[f64]) -> Result<Prediction, LearnError> {
        Ok(match self {
            ModelPayload::Svm(m) => {
                let p = predict_svm(m, x)?;
                Prediction {
                    label: p.label,
                    score: p.decision_value,
                }
            }
            ModelPayload::Tree(m) => {
                if x.len() != m.num_features {
                    return Err(LearnError::DimensionMismatch {
                        expected: m.num_features,
                        got: x.len(),
                    });
                }
                match m.descend(x) {
                    TreeNode::Leaf { label, probability } => Prediction {
                        label: *label,
                        score: *probability,
                    },
                    TreeNode::Branch { .. } => unreachable!("descend stops at a leaf"),
                }
            }
            ModelPayload::Ensemble(m) => {
                let p = predict_ensemble(m, x)?;
                Prediction {
                    label: p.label,
                    score: p.vote_margin,
                }
            }
        })
    }

    pub fn kind(&self) -> LearnerKind {
        match self {
            ModelPayload::Svm(_) => LearnerKind::Svm,
            ModelPayload::Tree(_) => LearnerKind::Tree,
            ModelPayload::Ensemble(m) => match m.kind {
                super::EnsembleKind::Bagging => LearnerKind::Bagging,
                super::EnsembleKind::AdaBoostM1 => LearnerKind::AdaBoostM1,
            },
        }
    }
}

/// A classifier with its complete preprocessing state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub kind: LearnerKind,
    pub mel_config: MfccConfig,
    pub sample_rate: u32,
    pub config_digest: String,
    /// Indices into the canonical feature order, in selection order.
    pub selected_features: Vec<usize>,
    pub standardizer: Standardizer,
    pub params: LearnerSpec,
    pub payload: ModelPayload,
}

impl TrainedModel {
    /// Project + standardize + train on raw (unstandardized) training rows.
    #[allow(clippy::too_many_arguments)]
    pub fn fit(
        x_raw: &[Vec<f64>],
        y: &[Label],
        selected_features: &[usize],
        spec: &LearnerSpec,
        mel_config: &MfccConfig,
        sample_rate: u32,
        seed: u64,
    ) -> Result<TrainedModel, LearnError> {
        let projected = project_columns(x_raw, selected_features)?;
        let standardizer = Standardizer::fit(&projected)?;
        let standardized = standardizer.apply(&projected)?;
        let payload = spec.train(&standardized, y, seed)?;
        Ok(TrainedModel {
            kind: spec.kind(),
            mel_config: mel_config.clone(),
            sample_rate,
            config_digest: mel_config.digest(sample_rate),
            selected_features: selected_features.to_vec(),
            standardizer,
            params: spec.clone(),
            payload,
        })
    }

    /// Classify a raw full-length feature vector: the model applies its own
    /// feature selection and standardization.
    pub fn predict_features(&self, raw: &[f64]) -> Result<Prediction, LearnError> {
        let mut selected = Vec::with_capacity(self.selected_features.len());
        for &idx in &self.selected_features {
            let v = raw.get(idx).ok_or(LearnError::DimensionMismatch {
                expected: idx + 1,
                got: raw.len(),
            })?;
            selected.push(*v);
        }
        let standardized = self.standardizer.apply_row(&selected)?;
        self.payload.predict(&standardized)
    }
}

/// Column projection in index order; errors on out-of-range indices.
pub(crate) fn project_columns(
    rows: &[Vec<f64>],
    indices: &[usize],
) -> Result<Vec<Vec<f64>>, LearnError> {
    rows.iter()
        .map(|row| {
            indices
                .iter()
                .map(|&i| {
                    row.get(i).copied().ok_or(LearnError::DimensionMismatch {
                        expected: i + 1,
                        got: row.len(),
                    })
                })
                .collect()
        })
        .collect()
}

#[derive(Serialize)]
struct ModelFileOut<'a> {
    schema_version: u64,
    #[serde(flatten)]
    model: &'a TrainedModel,
}

#[derive(Deserialize)]
struct ModelFileIn {
    schema_version: u64,
    #[serde(flatten)]
    model: serde_json::Value,
}

/// Write a model file at `path`.
pub fn save_model(model: &TrainedModel, path: &Path) -> Result<(), LearnError> {
    let file = ModelFileOut {
        schema_version: MODEL_SCHEMA_VERSION,
        model,
    };
    let json =
        serde_json::to_string_pretty(&file).map_err(|e| LearnError::CorruptModel(e.to_string()))?;
    std::fs::write(path, json).map_err(|e| LearnError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Read a model file, checking the schema version and payload consistency.
pub fn load_model(path: &Path) -> Result<TrainedModel, LearnError> {
    let text = std::fs::read_to_string(path).map_err(|e| LearnError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let file: ModelFileIn =
        serde_json::from_str(&text).map_err(|e| LearnError::CorruptModel(e.to_string()))?;
    if file.schema_version != MODEL_SCHEMA_VERSION {
        return Err(LearnError::SchemaVersionMismatch {
            found: file.schema_version,
            expected: MODEL_SCHEMA_VERSION,
        });
    }
    let model: TrainedModel =
        serde_json::from_value(file.model).map_err(|e| LearnError::CorruptModel(e.to_string()))?;
    if model.payload.kind() != model.kind || model.params.kind() != model.kind {
        return Err(LearnError::CorruptModel(format!(
            "kind {} does not match payload {} / params {}",
            model.kind,
            model.payload.kind(),
            model.params.kind()
        )));
    }
    Ok(model)
}
