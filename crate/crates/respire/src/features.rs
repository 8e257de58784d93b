//! Statistical feature vectors over cepstral coefficient rows.
//!
//! Each coefficient row collapses to seven statistics, in this fixed order:
//! mean, standard deviation, RMS, entropy, kurtosis, skewness, variance.
//! Moments are population moments (divide by n) and kurtosis is non-excess
//! (a Gaussian scores 3). Entropy is the Shannon entropy of the
//! energy-normalized series: `p_j = x_j^2 / sum(x^2)`, in bits, with
//! `0 * log 0 = 0`.
//!
//! Feature `f{(c-1)*7 + s}` (1-based, zero-padded to three digits) is
//! statistic `s` of coefficient `c`, so `M = 23` yields `f001..f161`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mfcc::MfccMatrix;

/// Number of statistics per coefficient row.
pub const STATS_PER_COEFF: usize = 7;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("series of {len} values is too short (need at least 2)")]
    SeriesTooShort { len: usize },
    #[error("need at least 2 rows to fit a standardizer, got {rows}")]
    TooFewRows { rows: usize },
    #[error("expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Seven statistics of one coefficient row.
///
/// `degenerate` is set when every value is identical; skewness and kurtosis
/// are then undefined and reported as 0 and 3.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatSummary {
    pub mean: f64,
    pub sd: f64,
    pub rms: f64,
    pub entropy: f64,
    pub kurtosis: f64,
    pub skewness: f64,
    pub variance: f64,
    pub degenerate: bool,
}

impl StatSummary {
    /// The statistics in canonical feature order.
    pub fn to_array(self) -> [f64; STATS_PER_COEFF] {
        [
            self.mean,
            self.sd,
            self.rms,
            self.entropy,
            self.kurtosis,
            self.skewness,
            self.variance,
        ]
    }
}

/// Population-moment summary of a series.
pub fn summarize_row(series: &[f64]) -> Result<StatSummary, FeatureError> {
    let n = series.len();
    if n < 2 {
        return Err(FeatureError::SeriesTooShort { len: n });
    }
    let nf = n as f64;
    let mean = series.iter().sum::<f64>() / nf;
    let mut m2 = 0.0;
    let mut m3 = 0.0;
    let mut m4 = 0.0;
    for &x in series {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= nf;
    m3 /= nf;
    m4 /= nf;

    let variance = m2;
    let sd = m2.sqrt();
    let sum_sq: f64 = series.iter().map(|x| x * x).sum();
    let rms = (sum_sq / nf).sqrt();

    let degenerate = m2 == 0.0 || series.iter().all(|&x| x == series[0]);
    let (skewness, kurtosis) = if degenerate {
        (0.0, 3.0)
    } else {
        (m3 / m2.powf(1.5), m4 / (m2 * m2))
    };

    let entropy = if sum_sq == 0.0 {
        0.0
    } else {
        -series
            .iter()
            .map(|&x| {
                let p = x * x / sum_sq;
                if p > 0.0 {
                    p * p.log2()
                } else {
                    0.0
                }
            })
            .sum::<f64>()
    };

    Ok(StatSummary {
        mean,
        sd,
        rms,
        entropy,
        kurtosis,
        skewness,
        variance,
        degenerate,
    })
}

/// Canonical feature names `f001..fNNN` for `mel_coeff_count` coefficients.
pub fn feature_names(mel_coeff_count: usize) -> Vec<String> {
    (1..=mel_coeff_count * STATS_PER_COEFF)
        .map(|i| format!("f{i:03}"))
        .collect()
}

/// Collapse a cepstral matrix to its statistical feature vector.
pub fn feature_vector(matrix: &MfccMatrix) -> Result<Vec<f64>, FeatureError> {
    let mut out = Vec::with_capacity(matrix.num_coeffs() * STATS_PER_COEFF);
    for c in 0..matrix.num_coeffs() {
        let summary = summarize_row(matrix.row(c))?;
        out.extend_from_slice(&summary.to_array());
    }
    Ok(out)
}

/// Per-feature z-score parameters fitted on training rows.
///
/// Zero-variance features keep `sd = 1`, so they pass through after
/// centering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl Standardizer {
    /// Fit on training rows (population standard deviation).
    pub fn fit(rows: &[Vec<f64>]) -> Result<Standardizer, FeatureError> {
        if rows.len() < 2 {
            return Err(FeatureError::TooFewRows { rows: rows.len() });
        }
        let dim = rows[0].len();
        for row in rows {
            if row.len() != dim {
                return Err(FeatureError::DimensionMismatch {
                    expected: dim,
                    got: row.len(),
                });
            }
        }
        let n = rows.len() as f64;
        let mut means = vec![0.0; dim];
        for row in rows {
            for (m, &x) in means.iter_mut().zip(row) {
                *m += x;
            }
        }
        for m in &mut means {
            *m /= n;
        }
        let mut sds = vec![0.0; dim];
        for row in rows {
            for ((s, &m), &x) in sds.iter_mut().zip(&means).zip(row) {
                *s += (x - m) * (x - m);
            }
        }
        for (s, &m) in sds.iter_mut().zip(&means) {
            let sd = (*s / n).sqrt();
            // Near-zero spread counts as constant: center only.
            *s = if sd <= 1e-12 * (1.0 + m.abs()) {
                1.0
            } else {
                sd
            };
        }
        Ok(Standardizer { means, sds })
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    /// Map one row to z-scores.
    pub fn apply_row(&self, row: &[f64]) -> Result<Vec<f64>, FeatureError> {
        if row.len() != self.means.len() {
            return Err(FeatureError::DimensionMismatch {
                expected: self.means.len(),
                got: row.len(),
            });
        }
        Ok(row
            .iter()
            .zip(self.means.iter().zip(&self.sds))
            .map(|(&x, (&m, &s))| (x - m) / s)
            .collect())
    }

    /// Map many rows to z-scores.
    pub fn apply(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, FeatureError> {
        rows.iter().map(|r| self.apply_row(r)).collect()
    }
}
