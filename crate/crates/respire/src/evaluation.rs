//! Metrics, parameter sweeps, and the split-isolated experiment runner.
//!
//! Reports follow the accuracy / per-class-sensitivity schema. Sweeps emit
//! plot-ready CSV in `axis,learner,accuracy` long format. The [`Experiment`]
//! runner keeps the three splits behind an audit log and refuses to hand
//! test rows to any trainer, so test isolation is enforced rather than
//! assumed.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{
    decode_wav, read_feature_table, validate_clip, write_feature_table, CorpusError, FeatureRow,
    FeatureTable, Label, Manifest, Split,
};
use crate::features::{feature_names, feature_vector, FeatureError, STATS_PER_COEFF};
use crate::learners::{LearnError, LearnerKind, LearnerSpec, TrainedModel};
use crate::mfcc::{MfccConfig, MfccError, MfccExtractor};
use crate::selection::{sfs, SelectionError, SelectionTrace};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no rows to evaluate")]
    EmptyData,
    #[error("no selection traces supplied")]
    MissingTrace,
    #[error("selection traces have different lengths ({expected} vs {got})")]
    InconsistentTraces { expected: usize, got: usize },
    #[error("split leak: trainer invoked with test rows ({operation})")]
    SplitLeak { operation: String },
    #[error("config digest mismatch: expected {expected}, found {found}")]
    DigestMismatch { expected: String, found: String },
    #[error("{count} clips failed feature extraction (first: {first})")]
    ClipsFailed { count: usize, first: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Mfcc(#[from] MfccError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// 2x2 confusion counts, true class by predicted class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub patient_as_patient: usize,
    pub patient_as_nonpatient: usize,
    pub nonpatient_as_patient: usize,
    pub nonpatient_as_nonpatient: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.patient_as_patient
            + self.patient_as_nonpatient
            + self.nonpatient_as_patient
            + self.nonpatient_as_nonpatient
    }
}

/// Accuracy and per-class sensitivity over one split.
///
/// A sensitivity is `None` when its class has no true members; it is
/// reported as absent rather than 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub confusion: Confusion,
    pub n: usize,
    pub accuracy: f64,
    pub sensitivity_patient: Option<f64>,
    pub sensitivity_nonpatient: Option<f64>,
}

impl EvalReport {
    /// Build a report from `(truth, predicted)` pairs.
    pub fn from_pairs(pairs: &[(Label, Label)]) -> Result<EvalReport, EvalError> {
        if pairs.is_empty() {
            return Err(EvalError::EmptyData);
        }
        let mut c = Confusion {
            patient_as_patient: 0,
            patient_as_nonpatient: 0,
            nonpatient_as_patient: 0,
            nonpatient_as_nonpatient: 0,
        };
        for &(truth, predicted) in pairs {
            match (truth, predicted) {
                (Label::Patient, Label::Patient) => c.patient_as_patient += 1,
                (Label::Patient, Label::NonPatient) => c.patient_as_nonpatient += 1,
                (Label::NonPatient, Label::Patient) => c.nonpatient_as_patient += 1,
                (Label::NonPatient, Label::NonPatient) => c.nonpatient_as_nonpatient += 1,
            }
        }
        Ok(EvalReport::from_confusion(c))
    }

    pub fn from_confusion(confusion: Confusion) -> EvalReport {
        let n = confusion.total();
        let patients = confusion.patient_as_patient + confusion.patient_as_nonpatient;
        let nonpatients = confusion.nonpatient_as_patient + confusion.nonpatient_as_nonpatient;
        EvalReport {
            accuracy: (confusion.patient_as_patient + confusion.nonpatient_as_nonpatient) as f64
                / n as f64,
            sensitivity_patient: (patients > 0)
                .then(|| confusion.patient_as_patient as f64 / patients as f64),
            sensitivity_nonpatient: (nonpatients > 0)
                .then(|| confusion.nonpatient_as_nonpatient as f64 / nonpatients as f64),
            confusion,
            n,
        }
    }

    /// Machine-readable `metric,value` CSV.
    pub fn to_csv_string(&self) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), fmt_seventeen);
        format!(
            "metric,value\nn,{}\ntrue_patient_pred_patient,{}\ntrue_patient_pred_nonpatient,{}\n\
             true_nonpatient_pred_patient,{}\ntrue_nonpatient_pred_nonpatient,{}\n\
             accuracy,{}\nsensitivity_patient,{}\nsensitivity_nonpatient,{}\n",
            self.n,
            self.confusion.patient_as_patient,
            self.confusion.patient_as_nonpatient,
            self.confusion.nonpatient_as_patient,
            self.confusion.nonpatient_as_nonpatient,
            fmt_seventeen(self.accuracy),
            opt(self.sensitivity_patient),
            opt(self.sensitivity_nonpatient),
        )
    }

    /// Human-readable table.
    pub fn to_text_table(&self) -> String {
        let opt = |v: Option<f64>| v.map_or("absent".to_string(), |x| format!("{x:.4}"));
        format!(
            "n                       {:>8}\n\
             accuracy                {:>8.4}\n\
             sensitivity patient     {:>8}\n\
             sensitivity non-patient {:>8}\n\
             confusion (true x predicted)\n\
             \x20             patient  non_patient\n\
             \x20 patient     {:>7}  {:>11}\n\
             \x20 non_patient {:>7}  {:>11}\n",
            self.n,
            self.accuracy,
            opt(self.sensitivity_patient),
            opt(self.sensitivity_nonpatient),
            self.confusion.patient_as_patient,
            self.confusion.patient_as_nonpatient,
            self.confusion.nonpatient_as_patient,
            self.confusion.nonpatient_as_nonpatient,
        )
    }
}

fn fmt_seventeen(v: f64) -> String {
    format!("{v:.16e}")
}

/// Classify labeled rows with a trained model and report the metrics.
pub fn evaluate(model: &TrainedModel, rows: &[FeatureRow]) -> Result<EvalReport, EvalError> {
    if rows.is_empty() {
        return Err(EvalError::EmptyData);
    }
    let mut pairs = Vec::with_capacity(rows.len());
    for row in rows {
        let prediction = model.predict_features(&row.features)?;
        pairs.push((row.label, prediction.label));
    }
    EvalReport::from_pairs(&pairs)
}

/// One learner's accuracy series over a sweep axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerSeries {
    pub learner: LearnerKind,
    pub accuracies: Vec<f64>,
    /// Axis value attaining the best accuracy (smallest on ties).
    pub chosen_axis: usize,
    pub chosen_accuracy: f64,
}

/// Accuracy-versus-axis series for several learners.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub axis: Vec<usize>,
    pub series: Vec<LearnerSeries>,
}

impl SweepReport {
    /// Plot-ready long-format CSV with the chosen points annotated as
    /// comments.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        for s in &self.series {
            out.push_str(&format!(
                "# chosen learner={} axis={} accuracy={}\n",
                s.learner,
                s.chosen_axis,
                fmt_seventeen(s.chosen_accuracy)
            ));
        }
        out.push_str("axis,learner,accuracy\n");
        for s in &self.series {
            for (&axis, &accuracy) in self.axis.iter().zip(&s.accuracies) {
                out.push_str(&format!(
                    "{axis},{},{}\n",
                    s.learner,
                    fmt_seventeen(accuracy)
                ));
            }
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), EvalError> {
        std::fs::write(path, self.to_csv_string()).map_err(|e| EvalError::Io {
            path: path.to_path_buf(),
            source: e,
        })
    }
}

/// A clip that failed feature extraction, with the reason.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedClip {
    pub path: PathBuf,
    pub reason: String,
}

/// Result of corpus-wide feature extraction.
#[derive(Debug, Clone)]
pub struct ExtractOutcome {
    pub table: FeatureTable,
    pub skipped: Vec<SkippedClip>,
}

/// Decode, validate, and summarize every manifest entry into a feature
/// table. Clips run in parallel; row order follows the manifest. Clip ids
/// are the paths as written in the manifest, so tables are
/// location-independent; relative paths are resolved against `audio_root`.
pub fn extract_feature_table(
    manifest: &Manifest,
    audio_root: &Path,
    config: &MfccConfig,
    expected_rate: u32,
) -> Result<ExtractOutcome, EvalError> {
    config.validate()?;
    let extractor = MfccExtractor::new(config.clone(), expected_rate)?;
    let results: Vec<Result<FeatureRow, SkippedClip>> = manifest
        .entries
        .par_iter()
        .map(|entry| {
            let full_path = if entry.path.is_relative() {
                audio_root.join(&entry.path)
            } else {
                entry.path.clone()
            };
            let skip = |reason: String| SkippedClip {
                path: entry.path.clone(),
                reason,
            };
            let signal = decode_wav(&full_path).map_err(|e| skip(e.to_string()))?;
            let validated =
                validate_clip(signal, expected_rate).map_err(|e| skip(e.to_string()))?;
            let matrix = extractor
                .extract(&validated.signal)
                .map_err(|e| skip(e.to_string()))?;
            let features = feature_vector(&matrix).map_err(|e| skip(e.to_string()))?;
            Ok(FeatureRow {
                clip_id: entry.path.display().to_string(),
                label: entry.label,
                split: entry.split,
                features,
            })
        })
        .collect();

    let mut rows = Vec::with_capacity(manifest.entries.len());
    let mut skipped = Vec::new();
    for result in results {
        match result {
            Ok(row) => rows.push(row),
            Err(skip) => skipped.push(skip),
        }
    }

    let table = FeatureTable {
        rows,
        feature_names: feature_names(config.num_coeffs),
        mel_coeff_count: config.num_coeffs,
        config_digest: Some(config.digest(expected_rate)),
    };
    table.validate()?;
    Ok(ExtractOutcome { table, skipped })
}

/// Cut the first `m` coefficients' features out of a table extracted with
/// more coefficients. The cepstral transform is truncation-stable, so this
/// equals extracting at `m` directly.
pub fn slice_table_to_mel(
    table: &FeatureTable,
    m: usize,
    digest: String,
) -> Result<FeatureTable, EvalError> {
    if m == 0 || m > table.mel_coeff_count {
        return Err(EvalError::Feature(FeatureError::DimensionMismatch {
            expected: table.mel_coeff_count,
            got: m,
        }));
    }
    let width = m * STATS_PER_COEFF;
    let rows = table
        .rows
        .iter()
        .map(|r| FeatureRow {
            clip_id: r.clip_id.clone(),
            label: r.label,
            split: r.split,
            features: r.features[..width].to_vec(),
        })
        .collect();
    Ok(FeatureTable {
        rows,
        feature_names: feature_names(m),
        mel_coeff_count: m,
        config_digest: Some(digest),
    })
}

/// Split a table into `(features, labels)` for one split.
pub fn split_xy(table: &FeatureTable, split: Split) -> (Vec<Vec<f64>>, Vec<Label>) {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for row in &table.rows {
        if row.split == split {
            x.push(row.features.clone());
            y.push(row.label);
        }
    }
    (x, y)
}

/// Parameters of the Mel-coefficient sweep.
pub struct MelSweep<'a> {
    pub base_config: &'a MfccConfig,
    pub sample_rate: u32,
    /// Inclusive coefficient range, conventionally 2..=39.
    pub mel_range: (usize, usize),
    pub specs: &'a [LearnerSpec],
    pub seed: u64,
    /// Per-M feature tables are cached here as `features_mNNN.csv`.
    pub cache_dir: Option<&'a Path>,
}

/// For every coefficient count in range: extract features (served from the
/// cache when present), train each learner on the training split, and score
/// it on the validation split.
pub fn sweep_mel(
    manifest: &Manifest,
    audio_root: &Path,
    sweep: &MelSweep,
) -> Result<SweepReport, EvalError> {
    let (lo, hi) = sweep.mel_range;
    if lo < 2 || hi < lo {
        return Err(EvalError::Mfcc(MfccError::InvalidConfig(format!(
            "mel range {lo}..={hi} is invalid (need 2 <= lo <= hi)"
        ))));
    }
    let mels: Vec<usize> = (lo..=hi).collect();
    let cfg_at = |m: usize| sweep.base_config.clone().with_num_coeffs(m);

    // Serve from cache where possible.
    let mut tables: BTreeMap<usize, FeatureTable> = BTreeMap::new();
    let mut missing = Vec::new();
    for &m in &mels {
        let digest = cfg_at(m).digest(sweep.sample_rate);
        match sweep.cache_dir {
            Some(dir) => {
                let path = dir.join(format!("features_m{m:03}.csv"));
                if path.exists() {
                    let table = read_feature_table(&path)?;
                    match table.config_digest.as_deref() {
                        Some(found) if found == digest => {
                            tables.insert(m, table);
                        }
                        found => {
                            return Err(EvalError::DigestMismatch {
                                expected: digest,
                                found: found.unwrap_or("<none>").to_string(),
                            })
                        }
                    }
                } else {
                    missing.push(m);
                }
            }
            None => missing.push(m),
        }
    }

    if !missing.is_empty() {
        let max_m = *missing.iter().max().expect("missing is non-empty");
        let outcome =
            extract_feature_table(manifest, audio_root, &cfg_at(max_m), sweep.sample_rate)?;
        if !outcome.skipped.is_empty() {
            return Err(EvalError::ClipsFailed {
                count: outcome.skipped.len(),
                first: format!(
                    "{}: {}",
                    outcome.skipped[0].path.display(),
                    outcome.skipped[0].reason
                ),
            });
        }
        for &m in &missing {
            let digest = cfg_at(m).digest(sweep.sample_rate);
            let table = slice_table_to_mel(&outcome.table, m, digest)?;
            if let Some(dir) = sweep.cache_dir {
                write_feature_table(&table, &dir.join(format!("features_m{m:03}.csv")))?;
            }
            tables.insert(m, table);
        }
    }

    // Accuracy per (M, learner) cell; cells are independent.
    let cells: Vec<Result<Vec<f64>, EvalError>> = mels
        .par_iter()
        .map(|&m| {
            let table = &tables[&m];
            let (train_x, train_y) = split_xy(table, Split::Train);
            let (val_x, val_y) = split_xy(table, Split::Validation);
            if train_x.is_empty() || val_x.is_empty() {
                return Err(EvalError::EmptyData);
            }
            let all_features: Vec<usize> = (0..m * STATS_PER_COEFF).collect();
            let cfg = cfg_at(m);
            let mut accuracies = Vec::with_capacity(sweep.specs.len());
            for spec in sweep.specs {
                let model = TrainedModel::fit(
                    &train_x,
                    &train_y,
                    &all_features,
                    spec,
                    &cfg,
                    sweep.sample_rate,
                    sweep.seed,
                )?;
                let mut correct = 0usize;
                for (row, truth) in val_x.iter().zip(&val_y) {
                    if model.predict_features(row)?.label == *truth {
                        correct += 1;
                    }
                }
                accuracies.push(correct as f64 / val_y.len() as f64);
            }
            Ok(accuracies)
        })
        .collect();

    let mut per_learner: Vec<Vec<f64>> = vec![Vec::with_capacity(mels.len()); sweep.specs.len()];
    for cell in cells {
        let accuracies = cell?;
        for (series, accuracy) in per_learner.iter_mut().zip(accuracies) {
            series.push(accuracy);
        }
    }

    let series = sweep
        .specs
        .iter()
        .zip(per_learner)
        .map(|(spec, accuracies)| {
            let (chosen_axis, chosen_accuracy) = argmax_axis(&mels, &accuracies);
            LearnerSeries {
                learner: spec.kind(),
                accuracies,
                chosen_axis,
                chosen_accuracy,
            }
        })
        .collect();

    Ok(SweepReport { axis: mels, series })
}

fn argmax_axis(axis: &[usize], accuracies: &[f64]) -> (usize, f64) {
    let mut best = (axis[0], f64::NEG_INFINITY);
    for (&a, &acc) in axis.iter().zip(accuracies) {
        if acc > best.1 {
            best = (a, acc);
        }
    }
    best
}

/// Reshape per-learner selection traces into accuracy-versus-cardinality
/// series with the best point annotated.
pub fn sweep_sfs(traces: &[SelectionTrace]) -> Result<SweepReport, EvalError> {
    if traces.is_empty() {
        return Err(EvalError::MissingTrace);
    }
    let len = traces[0].steps.len();
    for t in traces {
        if t.steps.len() != len {
            return Err(EvalError::InconsistentTraces {
                expected: len,
                got: t.steps.len(),
            });
        }
    }
    let axis: Vec<usize> = (1..=len).collect();
    let series = traces
        .iter()
        .map(|t| LearnerSeries {
            learner: t.learner_kind,
            accuracies: t.steps.iter().map(|s| s.accuracy).collect(),
            chosen_axis: t.best_k,
            chosen_accuracy: t.best_accuracy,
        })
        .collect();
    Ok(SweepReport { axis, series })
}

/// One split access recorded by the experiment runner.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditEntry {
    pub timestamp_ms: u128,
    pub split: Split,
    pub rows_read: usize,
    pub operation: String,
}

/// Append-only access log.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AuditLog {
    entries: Vec<AuditEntry>,
}

impl AuditLog {
    pub fn entries(&self) -> &[AuditEntry] {
        &self.entries
    }

    fn record(&mut self, split: Split, rows_read: usize, operation: &str) {
        let timestamp_ms = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_millis());
        self.entries.push(AuditEntry {
            timestamp_ms,
            split,
            rows_read,
            operation: operation.to_string(),
        });
    }

    pub fn to_lines(&self) -> String {
        self.entries
            .iter()
            .map(|e| {
                format!(
                    "{} split={} rows_read={} operation={}\n",
                    e.timestamp_ms, e.split, e.rows_read, e.operation
                )
            })
            .collect()
    }

    /// Append the log's lines to a file, creating it if needed.
    pub fn append_to(&self, path: &Path) -> Result<(), EvalError> {
        use std::io::Write;
        let mut file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| EvalError::Io {
                path: path.to_path_buf(),
                source: e,
            })?;
        file.write_all(self.to_lines().as_bytes())
            .map_err(|e| EvalError::Io {
                path: path.to_path_buf(),
                source: e,
            })
    }
}

/// The split-isolated experiment runner.
///
/// Trainers can only see the train split (selection also reads validation);
/// handing them test rows is a [`EvalError::SplitLeak`]. Every access lands
/// in the audit log.
pub struct Experiment {
    mel_config: MfccConfig,
    sample_rate: u32,
    digest: String,
    splits: BTreeMap<Split, Vec<FeatureRow>>,
    audit: AuditLog,
}

impl Experiment {
    /// Wrap a feature table. When the table carries a digest it must match
    /// `(mel_config, sample_rate)`.
    pub fn new(
        table: &FeatureTable,
        mel_config: MfccConfig,
        sample_rate: u32,
    ) -> Result<Experiment, EvalError> {
        let digest = mel_config.digest(sample_rate);
        if let Some(found) = &table.config_digest {
            if *found != digest {
                return Err(EvalError::DigestMismatch {
                    expected: digest,
                    found: found.clone(),
                });
            }
        }
        let mut splits: BTreeMap<Split, Vec<FeatureRow>> = BTreeMap::new();
        for split in [Split::Train, Split::Validation, Split::Test] {
            splits.insert(split, Vec::new());
        }
        for row in &table.rows {
            splits
                .get_mut(&row.split)
                .expect("all splits present")
                .push(row.clone());
        }
        Ok(Experiment {
            mel_config,
            sample_rate,
            digest,
            splits,
            audit: AuditLog::default(),
        })
    }

    pub fn config_digest(&self) -> &str {
        &self.digest
    }

    pub fn audit_log(&self) -> &AuditLog {
        &self.audit
    }

    pub fn split_len(&self, split: Split) -> usize {
        self.splits[&split].len()
    }

    fn xy(&self, split: Split) -> (Vec<Vec<f64>>, Vec<Label>) {
        let rows = &self.splits[&split];
        (
            rows.iter().map(|r| r.features.clone()).collect(),
            rows.iter().map(|r| r.label).collect(),
        )
    }

    /// Train a learner on one split. The test split is off limits.
    pub fn fit_on(
        &mut self,
        split: Split,
        spec: &LearnerSpec,
        selected_features: &[usize],
        seed: u64,
    ) -> Result<TrainedModel, EvalError> {
        let operation = format!("train {}", spec.kind());
        if split == Split::Test {
            return Err(EvalError::SplitLeak { operation });
        }
        let (x, y) = self.xy(split);
        if x.is_empty() {
            return Err(EvalError::EmptyData);
        }
        self.audit.record(split, x.len(), &operation);
        Ok(TrainedModel::fit(
            &x,
            &y,
            selected_features,
            spec,
            &self.mel_config,
            self.sample_rate,
            seed,
        )?)
    }

    /// Run forward selection on train + validation.
    pub fn select_on(
        &mut self,
        spec: &LearnerSpec,
        max_features: usize,
        seed: u64,
    ) -> Result<SelectionTrace, EvalError> {
        let operation = format!("select {}", spec.kind());
        let (train_x, train_y) = self.xy(Split::Train);
        let (val_x, val_y) = self.xy(Split::Validation);
        self.audit.record(Split::Train, train_x.len(), &operation);
        self.audit
            .record(Split::Validation, val_x.len(), &operation);
        Ok(sfs(
            &train_x,
            &train_y,
            &val_x,
            &val_y,
            spec,
            max_features,
            seed,
            &self.digest,
        )?)
    }

    /// Score a model on one split.
    pub fn evaluate_on(
        &mut self,
        split: Split,
        model: &TrainedModel,
    ) -> Result<EvalReport, EvalError> {
        if model.config_digest != self.digest {
            return Err(EvalError::DigestMismatch {
                expected: self.digest.clone(),
                found: model.config_digest.clone(),
            });
        }
        let operation = format!("evaluate {}", model.kind);
        self.audit
            .record(split, self.splits[&split].len(), &operation);
        let rows = &self.splits[&split];
        evaluate(model, rows)
    }

    /// Score the chosen operating points on the test split, one report per
    /// model. This is the only path that reads test rows.
    pub fn final_test(&mut self, models: &[&TrainedModel]) -> Result<Vec<EvalReport>, EvalError> {
        let mut reports = Vec::with_capacity(models.len());
        for model in models {
            if model.config_digest != self.digest {
                return Err(EvalError::DigestMismatch {
                    expected: self.digest.clone(),
                    found: model.config_digest.clone(),
                });
            }
            let operation = format!("final_test {}", model.kind);
            self.audit
                .record(Split::Test, self.splits[&Split::Test].len(), &operation);
            reports.push(evaluate(model, &self.splits[&Split::Test])?);
        }
        Ok(reports)
    }
}
