//! Feature-table files.
//!
//! Tables are CSV with header `clip_id,label,split,f001..fNNN` preceded by
//! `#`-prefixed metadata comments (`# mel_coeffs=N`, and `# config_digest=…`
//! when the producing configuration is known). Values are serialized with 17
//! significant digits, so the round trip is bit-exact for finite values.

use std::path::Path;

use super::{CorpusError, Label, Split};

/// One clip's feature vector plus its identity, label, and split.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub clip_id: String,
    pub label: Label,
    pub split: Split,
    pub features: Vec<f64>,
}

/// A feature matrix over a corpus, one row per clip.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub rows: Vec<FeatureRow>,
    pub feature_names: Vec<String>,
    pub mel_coeff_count: usize,
    pub config_digest: Option<String>,
}

impl FeatureTable {
    /// Check the structural invariants: every row matches the header and the
    /// header length is `mel_coeff_count * 7`.
    pub fn validate(&self) -> Result<(), CorpusError> {
        let expected = self.mel_coeff_count * 7;
        if self.feature_names.len() != expected {
            return Err(CorpusError::SchemaMismatch {
                path: "<in-memory>".into(),
                header_features: self.feature_names.len(),
                mel_coeff_count: self.mel_coeff_count,
                expected,
            });
        }
        for (i, row) in self.rows.iter().enumerate() {
            if row.features.len() != self.feature_names.len() {
                return Err(CorpusError::MalformedTableRow {
                    path: "<in-memory>".into(),
                    line: i as u64 + 1,
                    message: format!(
                        "row has {} features, header has {}",
                        row.features.len(),
                        self.feature_names.len()
                    ),
                });
            }
        }
        Ok(())
    }

    /// Rows belonging to one split, in table order.
    pub fn rows_for(&self, split: Split) -> Vec<&FeatureRow> {
        self.rows.iter().filter(|r| r.split == split).collect()
    }
}

/// Format with 17 significant digits; round-trips any finite `f64` exactly.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Serialize a feature table to CSV at `path`.
pub fn write_feature_table(table: &FeatureTable, path: &Path) -> Result<(), CorpusError> {
    table.validate()?;
    let mut out = String::new();
    out.push_str(&format!("# mel_coeffs={}\n", table.mel_coeff_count));
    if let Some(digest) = &table.config_digest {
        out.push_str(&format!("# config_digest={digest}\n"));
    }
    out.push_str("clip_id,label,split");
    for name in &table.feature_names {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for row in &table.rows {
        out.push_str(&escape_field(&row.clip_id));
        out.push(',');
        out.push_str(row.label.as_str());
        out.push(',');
        out.push_str(row.split.as_str());
        for &v in &row.features {
            out.push(',');
            out.push_str(&fmt_f64(v));
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| CorpusError::io(path, e))
}

fn escape_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Read a feature table written by [`write_feature_table`].
pub fn read_feature_table(path: &Path) -> Result<FeatureTable, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;

    let mut mel_coeff_count: Option<usize> = None;
    let mut config_digest: Option<String> = None;
    let mut body = String::with_capacity(text.len());
    for line in text.lines() {
        if let Some(comment) = line.strip_prefix('#') {
            let comment = comment.trim();
            if let Some(v) = comment.strip_prefix("mel_coeffs=") {
                mel_coeff_count = v.trim().parse().ok();
            } else if let Some(v) = comment.strip_prefix("config_digest=") {
                config_digest = Some(v.trim().to_string());
            }
            continue;
        }
        body.push_str(line);
        body.push('\n');
    }

    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(body.as_bytes());

    let headers = reader
        .headers()
        .map_err(|e| CorpusError::MalformedTableRow {
            path: path.to_path_buf(),
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let cols: Vec<&str> = headers.iter().collect();
    if cols.len() < 3 || cols[0] != "clip_id" || cols[1] != "label" || cols[2] != "split" {
        return Err(CorpusError::MalformedTableRow {
            path: path.to_path_buf(),
            line: 1,
            message: "header must start with clip_id,label,split".to_string(),
        });
    }
    let feature_names: Vec<String> = cols[3..].iter().map(|s| s.to_string()).collect();

    let mel_coeff_count = match mel_coeff_count {
        Some(m) => m,
        None if feature_names.len().is_multiple_of(7) && !feature_names.is_empty() => {
            feature_names.len() / 7
        }
        None => {
            return Err(CorpusError::SchemaMismatch {
                path: path.to_path_buf(),
                header_features: feature_names.len(),
                mel_coeff_count: 0,
                expected: 0,
            })
        }
    };
    if feature_names.len() != mel_coeff_count * 7 {
        return Err(CorpusError::SchemaMismatch {
            path: path.to_path_buf(),
            header_features: feature_names.len(),
            mel_coeff_count,
            expected: mel_coeff_count * 7,
        });
    }

    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i as u64 + 2;
        let record = record.map_err(|e| CorpusError::MalformedTableRow {
            path: path.to_path_buf(),
            line,
            message: e.to_string(),
        })?;
        let bad_row = |message: String| CorpusError::MalformedTableRow {
            path: path.to_path_buf(),
            line,
            message,
        };
        if record.len() != 3 + feature_names.len() {
            return Err(bad_row(format!(
                "expected {} fields, found {}",
                3 + feature_names.len(),
                record.len()
            )));
        }
        let label = Label::parse(&record[1])
            .ok_or_else(|| bad_row(format!("unknown label `{}`", &record[1])))?;
        let split = Split::parse(&record[2])
            .ok_or_else(|| bad_row(format!("unknown split `{}`", &record[2])))?;
        let mut features = Vec::with_capacity(feature_names.len());
        for field in record.iter().skip(3) {
            let v: f64 = field
                .parse()
                .map_err(|_| bad_row(format!("invalid number `{field}`")))?;
            features.push(v);
        }
        rows.push(FeatureRow {
            clip_id: record[0].to_string(),
            label,
            split,
            features,
        });
    }

    let table = FeatureTable {
        rows,
        feature_names,
        mel_coeff_count,
        config_digest,
    };
    table.validate().map_err(|e| match e {
        CorpusError::SchemaMismatch {
            header_features,
            mel_coeff_count,
            expected,
            ..
        } => CorpusError::SchemaMismatch {
            path: path.to_path_buf(),
            header_features,
            mel_coeff_count,
            expected,
        },
        other => other,
    })?;
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::feature_names;

    fn sample_table(mel: usize, n_rows: usize) -> FeatureTable {
        let names = feature_names(mel);
        let rows = (0..n_rows)
            .map(|i| FeatureRow {
                clip_id: format!("clip{i:02}"),
                label: if i % 2 == 0 {
                    Label::Patient
                } else {
                    Label::NonPatient
                },
                split: match i % 3 {
                    0 => Split::Train,
                    1 => Split::Validation,
                    _ => Split::Test,
                },
                features: (0..names.len())
                    .map(|j| ((i * 31 + j * 7) as f64).sin() * 1e3 + 1.0 / (j + 1) as f64)
                    .collect(),
            })
            .collect();
        FeatureTable {
            rows,
            feature_names: names,
            mel_coeff_count: mel,
            config_digest: Some("deadbeef".to_string()),
        }
    }

    #[test]
    fn header_has_161_feature_columns_for_m23() {
        let table = sample_table(23, 1);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        write_feature_table(&table, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let header = text.lines().find(|l| !l.starts_with('#')).unwrap();
        assert_eq!(header.split(',').count(), 3 + 161);
        assert!(header.starts_with("clip_id,label,split,f001,"));
        assert!(header.ends_with(",f161"));
    }

    #[test]
    fn round_trip_is_lossless() {
        let table = sample_table(2, 5);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        write_feature_table(&table, &path).unwrap();
        let back = read_feature_table(&path).unwrap();
        assert_eq!(table, back);
    }

    #[test]
    fn schema_mismatch_detected() {
        let mut table = sample_table(23, 1);
        // Drop one feature column: 160 names against mel_coeff_count=23.
        table.feature_names.pop();
        for row in &mut table.rows {
            row.features.pop();
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        assert!(matches!(
            write_feature_table(&table, &path),
            Err(CorpusError::SchemaMismatch { .. })
        ));

        // Same mismatch on the read side.
        let good = sample_table(23, 1);
        write_feature_table(&good, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mangled = text.replacen("# mel_coeffs=23", "# mel_coeffs=24", 1);
        std::fs::write(&path, mangled).unwrap();
        match read_feature_table(&path) {
            Err(CorpusError::SchemaMismatch {
                header_features,
                mel_coeff_count,
                expected,
                ..
            }) => {
                assert_eq!(header_features, 161);
                assert_eq!(mel_coeff_count, 24);
                assert_eq!(expected, 168);
            }
            other => panic!("expected SchemaMismatch, got {other:?}"),
        }
    }

    #[test]
    fn digest_round_trips() {
        let table = sample_table(2, 2);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        write_feature_table(&table, &path).unwrap();
        let back = read_feature_table(&path).unwrap();
        assert_eq!(back.config_digest.as_deref(), Some("deadbeef"));
    }
}
