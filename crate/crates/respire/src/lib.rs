//! Respiratory-sound classification pipeline.
//!
//! The crate decodes labeled audio clips, extracts MFCC-derived statistical
//! features, selects features by sequential forward selection, and trains and
//! evaluates four classical classifiers (SVM with an RBF kernel, a decision
//! tree, bagging, and AdaBoost.M1). Every stage is deterministic: given the
//! same inputs, configuration, and seed, any two runs produce bit-identical
//! artifacts.
//!
//! Modules follow the pipeline order:
//!
//! * [`corpus`] — dataset manifests, WAV decoding, clip validation, and
//!   feature-table files.
//! * [`mfcc`] — pre-emphasis, framing and windowing, power spectra, the Mel
//!   filter bank, and the cepstral transform.
//! * [`features`] — per-coefficient statistical summaries and z-score
//!   standardization.
//! * [`learners`] — the four classifiers plus model persistence.
//! * [`selection`] — wrapper-based sequential forward selection.
//! * [`evaluation`] — metrics, parameter sweeps, and the split-isolated
//!   experiment runner.

pub mod corpus;
pub mod evaluation;
pub mod features;
pub mod learners;
pub mod mfcc;
pub mod selection;
