//! Dataset manifest handling, WAV decoding, clip validation, and
//! feature-table files.
//!
//! A dataset is described by a CSV manifest with header `path,label,split`;
//! `#`-prefixed lines are comments. Labels are `patient` / `non_patient`,
//! splits are `train` / `validation` / `test`, both parsed
//! case-insensitively.

mod table;
mod wav;

pub use table::{read_feature_table, write_feature_table, FeatureRow, FeatureTable};
pub use wav::{decode_wav, decode_wav_bytes, encode_wav, write_wav, WavEncoding};

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Binary class label of a clip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Patient,
    NonPatient,
}

impl Label {
    /// Case-insensitive parse from `patient` / `non_patient`.
    pub fn parse(s: &str) -> Option<Label> {
        match s.trim().to_ascii_lowercase().as_str() {
            "patient" => Some(Label::Patient),
            "non_patient" => Some(Label::NonPatient),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Label::Patient => "patient",
            Label::NonPatient => "non_patient",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which of the three dataset parts a clip belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    /// Case-insensitive parse from `train` / `validation` / `test`.
    pub fn parse(s: &str) -> Option<Split> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Some(Split::Train),
            "validation" => Some(Split::Validation),
            "test" => Some(Split::Test),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Errors from manifest parsing, audio decoding, and feature-table IO.
#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("manifest {path}: missing required column `{column}`")]
    MissingColumn { path: PathBuf, column: String },
    #[error(
        "manifest {path} line {line}: unknown label `{value}` (expected patient or non_patient)"
    )]
    UnknownLabel {
        path: PathBuf,
        line: u64,
        value: String,
    },
    #[error(
        "manifest {path} line {line}: unknown split `{value}` (expected train, validation or test)"
    )]
    UnknownSplit {
        path: PathBuf,
        line: u64,
        value: String,
    },
    #[error("manifest {path} line {line}: duplicate path `{value}`")]
    DuplicatePath {
        path: PathBuf,
        line: u64,
        value: String,
    },
    #[error("manifest {path} line {line}: {message}")]
    MalformedRow {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("{path}: not a RIFF/WAVE file")]
    NotRiff { path: PathBuf },
    #[error("{path}: unsupported encoding: {detail}")]
    UnsupportedEncoding { path: PathBuf, detail: String },
    #[error("{path}: truncated data: {detail}")]
    TruncatedData { path: PathBuf, detail: String },
    #[error("signal is empty")]
    EmptySignal,
    #[error("signal contains a non-finite sample at index {index}")]
    NonFiniteSample { index: usize },
    #[error("sample rate must be positive")]
    ZeroSampleRate,
    #[error(
        "feature table {path}: header has {header_features} feature columns but \
         mel_coeff_count {mel_coeff_count} requires {expected}"
    )]
    SchemaMismatch {
        path: PathBuf,
        header_features: usize,
        mel_coeff_count: usize,
        expected: usize,
    },
    #[error("feature table {path} line {line}: {message}")]
    MalformedTableRow {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CorpusError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CorpusError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// A decoded mono audio clip.
///
/// Samples are dimensionless amplitudes in `[-1, 1]`; the invariants
/// (non-empty, all finite, positive rate) are enforced at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Signal {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Signal, CorpusError> {
        if samples.is_empty() {
            return Err(CorpusError::EmptySignal);
        }
        if sample_rate == 0 {
            return Err(CorpusError::ZeroSampleRate);
        }
        if let Some(index) = samples.iter().position(|s| !s.is_finite()) {
            return Err(CorpusError::NonFiniteSample { index });
        }
        Ok(Signal {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// One manifest row: an audio file with its label and split assignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub label: Label,
    pub split: Split,
}

/// Parsed dataset manifest. Paths are unique and every entry is labeled.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    /// Number of entries per split as `(train, validation, test)`.
    pub fn split_counts(&self) -> (usize, usize, usize) {
        let mut counts = (0, 0, 0);
        for e in &self.entries {
            match e.split {
                Split::Train => counts.0 += 1,
                Split::Validation => counts.1 += 1,
                Split::Test => counts.2 += 1,
            }
        }
        counts
    }

    /// Resolve relative entry paths against `base` (typically the manifest's
    /// own directory). Absolute paths are kept as-is.
    pub fn resolve_paths(&mut self, base: &Path) {
        for e in &mut self.entries {
            if e.path.is_relative() {
                e.path = base.join(&e.path);
            }
        }
    }
}

/// Parse a manifest CSV with header `path,label,split`.
///
/// `#`-prefixed lines are ignored; extra columns are tolerated. Errors name
/// the offending line.
pub fn load_manifest(path: &Path) -> Result<Manifest, CorpusError> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(false)
        .from_path(path)
        .map_err(|e| map_csv_error(path, e))?;

    let headers = reader.headers().map_err(|e| map_csv_error(path, e))?;
    let column = |name: &str| -> Result<usize, CorpusError> {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| CorpusError::MissingColumn {
                path: path.to_path_buf(),
                column: name.to_string(),
            })
    };
    let path_col = column("path")?;
    let label_col = column("label")?;
    let split_col = column("split")?;

    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    for record in reader.records() {
        let record = record.map_err(|e| map_csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |col: usize| record.get(col).unwrap_or("");

        let clip_path = field(path_col);
        if clip_path.is_empty() {
            return Err(CorpusError::MalformedRow {
                path: path.to_path_buf(),
                line,
                message: "empty path".to_string(),
            });
        }
        if !seen.insert(clip_path.to_string()) {
            return Err(CorpusError::DuplicatePath {
                path: path.to_path_buf(),
                line,
                value: clip_path.to_string(),
            });
        }
        let label = Label::parse(field(label_col)).ok_or_else(|| CorpusError::UnknownLabel {
            path: path.to_path_buf(),
            line,
            value: field(label_col).to_string(),
        })?;
        let split = Split::parse(field(split_col)).ok_or_else(|| CorpusError::UnknownSplit {
            path: path.to_path_buf(),
            line,
            value: field(split_col).to_string(),
        })?;
        entries.push(ManifestEntry {
            path: PathBuf::from(clip_path),
            label,
            split,
        });
    }

    Ok(Manifest { entries })
}

fn map_csv_error(path: &Path, e: csv::Error) -> CorpusError {
    match e.kind() {
        csv::ErrorKind::Io(_) => {
            if let csv::ErrorKind::Io(io) = e.into_kind() {
                CorpusError::io(path, io)
            } else {
                unreachable!()
            }
        }
        _ => CorpusError::MalformedRow {
            path: path.to_path_buf(),
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        },
    }
}

/// Result of [`validate_clip`]: the clip at the expected rate, plus whether
/// resampling was needed to get there.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedClip {
    pub signal: Signal,
    pub resampled: bool,
}

/// Ensure a clip is at `expected_rate`, resampling by linear interpolation
/// when it is not.
///
/// The resampled length is `round(len * expected_rate / source_rate)` and the
/// interpolation is endpoint-aligned, so a constant signal stays constant.
pub fn validate_clip(signal: Signal, expected_rate: u32) -> Result<ValidatedClip, CorpusError> {
    if expected_rate == 0 {
        return Err(CorpusError::ZeroSampleRate);
    }
    if signal.is_empty() {
        return Err(CorpusError::EmptySignal);
    }
    if signal.sample_rate == expected_rate {
        return Ok(ValidatedClip {
            signal,
            resampled: false,
        });
    }

    let src = signal.samples();
    let src_len = src.len();
    let ratio = expected_rate as f64 / signal.sample_rate as f64;
    let dst_len = ((src_len as f64 * ratio).round() as usize).max(1);

    let mut out = Vec::with_capacity(dst_len);
    if dst_len == 1 || src_len == 1 {
        out.push(src[0]);
        out.resize(dst_len, src[0]);
    } else {
        let step = (src_len - 1) as f64 / (dst_len - 1) as f64;
        for i in 0..dst_len {
            let pos = i as f64 * step;
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(src_len - 1);
            let frac = pos - lo as f64;
            out.push(src[lo] * (1.0 - frac) + src[hi] * frac);
        }
    }

    Ok(ValidatedClip {
        signal: Signal::new(out, expected_rate)?,
        resampled: true,
    })
}
