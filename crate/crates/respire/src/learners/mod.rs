//! The four classifiers: SVM with an RBF kernel, a Gini decision tree, and
//! the bagging and AdaBoost.M1 tree ensembles, plus model persistence.
//!
//! Every trainer is a pure function of `(rows, config, seed)`: bagging draws
//! its bootstraps from per-member streams derived from the master seed, and
//! the other trainers use no randomness at all.

mod ensemble;
mod persist;
mod svm;
mod tree;

pub use ensemble::{
    bootstrap_indices, predict_ensemble, stage_weight, train_adaboost_m1, train_adaboost_m1_traced,
    train_bagging, AdaBoostConfig, AdaBoostRound, BaggingConfig, EnsembleKind, EnsembleModel,
    EnsemblePrediction,
};
pub use persist::{load_model, save_model, ModelPayload, TrainedModel, MODEL_SCHEMA_VERSION};
pub use svm::{
    predict_svm, rbf_kernel, train_svm, train_svm_traced, SvmConfig, SvmModel, SvmPrediction,
    SvmTrainReport,
};
pub use tree::{gini_impurity, predict_tree, train_tree, TreeConfig, TreeModel, TreeNode};

use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::PathBuf;
use thiserror::Error;

use crate::corpus::Label;

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("training data is empty")]
    EmptyData,
    #[error("training data contains a single class")]
    SingleClassData,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("node has no samples")]
    EmptyNode,
    #[error("sigma must be positive, got {0}")]
    InvalidSigma(f64),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("sample weights must be positive and aligned with rows")]
    BadSampleWeights,
    #[error("no weak learner reached weighted error below 0.5")]
    BoostingStalled,
    #[error("model file has schema_version {found}, expected {expected}")]
    SchemaVersionMismatch { found: u64, expected: u64 },
    #[error("corrupt model: {0}")]
    CorruptModel(String),
    #[error("feature processing failed: {0}")]
    Feature(#[from] crate::features::FeatureError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// Which classifier a model or spec refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    Svm,
    Tree,
    Bagging,
    AdaBoostM1,
}

impl LearnerKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            LearnerKind::Svm => "svm",
            LearnerKind::Tree => "tree",
            LearnerKind::Bagging => "bagging",
            LearnerKind::AdaBoostM1 => "adaboost_m1",
        }
    }

    pub fn parse(s: &str) -> Option<LearnerKind> {
        match s.trim().to_ascii_lowercase().as_str() {
            "svm" => Some(LearnerKind::Svm),
            "tree" => Some(LearnerKind::Tree),
            "bagging" => Some(LearnerKind::Bagging),
            "adaboost_m1" | "adaboost" => Some(LearnerKind::AdaBoostM1),
            _ => None,
        }
    }
}

impl fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A classifier choice together with its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "learner", rename_all = "snake_case")]
pub enum LearnerSpec {
    Svm(SvmConfig),
    Tree(TreeConfig),
    Bagging(BaggingConfig),
    AdaBoostM1(AdaBoostConfig),
}

impl LearnerSpec {
    pub fn kind(&self) -> LearnerKind {
        match self {
            LearnerSpec::Svm(_) => LearnerKind::Svm,
            LearnerSpec::Tree(_) => LearnerKind::Tree,
            LearnerSpec::Bagging(_) => LearnerKind::Bagging,
            LearnerSpec::AdaBoostM1(_) => LearnerKind::AdaBoostM1,
        }
    }

    /// Train on already standardized rows.
    pub fn train(
        &self,
        x: &[Vec<f64>],
        y: &[Label],
        seed: u64,
    ) -> Result<ModelPayload, LearnError> {
        Ok(match self {
            LearnerSpec::Svm(cfg) => ModelPayload::Svm(train_svm(x, y, cfg)?.0),
            LearnerSpec::Tree(cfg) => ModelPayload::Tree(train_tree(x, y, cfg, None)?),
            LearnerSpec::Bagging(cfg) => ModelPayload::Ensemble(train_bagging(x, y, cfg, seed)?),
            LearnerSpec::AdaBoostM1(cfg) => ModelPayload::Ensemble(train_adaboost_m1(x, y, cfg)?),
        })
    }
}

/// A classification outcome: the label plus a kind-specific score (SVM
/// decision value, tree leaf probability, or ensemble vote margin).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub label: Label,
    pub score: f64,
}

pub(crate) fn label_sign(label: Label) -> f64 {
    match label {
        Label::Patient => 1.0,
        Label::NonPatient => -1.0,
    }
}

pub(crate) fn check_xy(x: &[Vec<f64>], y: &[Label]) -> Result<usize, LearnError> {
    if x.is_empty() || y.is_empty() {
        return Err(LearnError::EmptyData);
    }
    if x.len() != y.len() {
        return Err(LearnError::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    let dim = x[0].len();
    for row in x {
        if row.len() != dim {
            return Err(LearnError::DimensionMismatch {
                expected: dim,
                got: row.len(),
            });
        }
    }
    Ok(dim)
}
