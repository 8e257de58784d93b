//! Mel-frequency cepstral coefficients.
//!
//! The chain has five stages: pre-emphasis, framing plus Hamming windowing,
//! a radix-2 FFT to the one-sided power spectrum, log energies through a
//! Mel-spaced triangular filter bank, and an orthonormal DCT-II. Coefficient
//! 0 is excluded; coefficients `1..=M` form the rows of the output matrix.
//!
//! All operations are pure functions of `(Signal, MfccConfig)`; an
//! [`MfccExtractor`] precomputes the window, filter bank, and FFT plan so
//! many clips can be processed (in parallel) against one configuration.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::Signal;

/// Whether the filter bank consumes the power spectrum or its square root.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumMode {
    Power,
    Magnitude,
}

/// Configuration of the cepstral chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MfccConfig {
    /// Frame length in samples; also the FFT size.
    pub frame_length: usize,
    /// Hop between frame starts, in samples (overlap = frame_length - hop).
    pub hop: usize,
    /// First-order pre-emphasis coefficient, in `[0, 1)`.
    pub pre_emphasis_alpha: f64,
    /// Number of triangular Mel filters.
    pub num_filters: usize,
    /// Number of cepstral coefficients kept (indices `1..=M`).
    pub num_coeffs: usize,
    /// FFT size; must equal `frame_length` and be a power of two.
    pub fft_size: usize,
    /// Floor applied to filter energies before the log.
    pub log_floor: f64,
    /// Spectrum fed to the filter bank.
    pub spectrum_mode: SpectrumMode,
}

impl Default for MfccConfig {
    fn default() -> Self {
        MfccConfig {
            frame_length: 2048,
            hop: 512,
            pre_emphasis_alpha: 0.97,
            num_filters: 40,
            num_coeffs: 23,
            fft_size: 2048,
            log_floor: 1e-10,
            spectrum_mode: SpectrumMode::Power,
        }
    }
}

impl MfccConfig {
    pub fn with_num_coeffs(mut self, m: usize) -> Self {
        self.num_coeffs = m;
        self
    }

    pub fn validate(&self) -> Result<(), MfccError> {
        if self.hop == 0 || self.hop > self.frame_length {
            return Err(MfccError::InvalidConfig(format!(
                "hop {} must satisfy 0 < hop <= frame_length {}",
                self.hop, self.frame_length
            )));
        }
        if self.fft_size != self.frame_length {
            return Err(MfccError::InvalidConfig(format!(
                "fft_size {} must equal frame_length {}",
                self.fft_size, self.frame_length
            )));
        }
        if !self.fft_size.is_power_of_two() {
            return Err(MfccError::InvalidConfig(format!(
                "fft_size {} must be a power of two",
                self.fft_size
            )));
        }
        if self.num_coeffs < 2 || self.num_coeffs > self.num_filters.saturating_sub(1) {
            return Err(MfccError::InvalidConfig(format!(
                "num_coeffs {} must satisfy 2 <= M <= num_filters - 1 = {}",
                self.num_coeffs,
                self.num_filters.saturating_sub(1)
            )));
        }
        if !(0.0..1.0).contains(&self.pre_emphasis_alpha) {
            return Err(MfccError::InvalidConfig(format!(
                "pre_emphasis_alpha {} must lie in [0, 1)",
                self.pre_emphasis_alpha
            )));
        }
        if !(self.log_floor > 0.0 && self.log_floor.is_finite()) {
            return Err(MfccError::InvalidConfig(
                "log_floor must be a small positive real".to_string(),
            ));
        }
        Ok(())
    }

    /// Hex SHA-256 over the canonical serialization of `(config, rate)`.
    ///
    /// Artifacts embed this digest so downstream commands can refuse inputs
    /// extracted under a different configuration.
    pub fn digest(&self, sample_rate: u32) -> String {
        let mut hasher = Sha256::new();
        let canonical = serde_json::to_string(&(self, sample_rate)).expect("config serialization");
        hasher.update(canonical.as_bytes());
        let out = hasher.finalize();
        out.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Error)]
pub enum MfccError {
    #[error("signal is empty")]
    EmptySignal,
    #[error("window length {n} is too short (need at least 2 samples)")]
    WindowTooShort { n: usize },
    #[error("signal of {len} samples is shorter than one frame of {frame_length}")]
    SignalTooShort { len: usize, frame_length: usize },
    #[error("negative frequency {value}")]
    NegativeFrequency { value: f64 },
    #[error("{num_filters} filters cannot be placed on {num_bins} FFT bins")]
    TooManyFilters { num_filters: usize, num_bins: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("extractor built for {expected} Hz, signal is {got} Hz")]
    SampleRateMismatch { expected: u32, got: u32 },
}

/// Hamming window weights for an `n`-sample frame.
///
/// `weights[k] = 0.54 - 0.46 * cos(2*pi*k / (n-1))`; endpoints are 0.08 and
/// the window is symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowVector {
    pub weights: Vec<f64>,
}

impl WindowVector {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

pub fn hamming_window(n: usize) -> Result<WindowVector, MfccError> {
    if n < 2 {
        return Err(MfccError::WindowTooShort { n });
    }
    let denom = (n - 1) as f64;
    let weights = (0..n)
        .map(|k| 0.54 - 0.46 * (2.0 * PI * k as f64 / denom).cos())
        .collect();
    Ok(WindowVector { weights })
}

/// First-order pre-emphasis: `y[0] = x[0]`, `y[n] = x[n] - alpha * x[n-1]`.
pub fn pre_emphasize(signal: &Signal, alpha: f64) -> Result<Signal, MfccError> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(MfccError::InvalidConfig(format!(
            "pre-emphasis alpha {alpha} must lie in [0, 1)"
        )));
    }
    let x = signal.samples();
    if x.is_empty() {
        return Err(MfccError::EmptySignal);
    }
    let mut y = Vec::with_capacity(x.len());
    y.push(x[0]);
    for n in 1..x.len() {
        y.push(x[n] - alpha * x[n - 1]);
    }
    Ok(Signal::new(y, signal.sample_rate()).expect("pre-emphasis preserves signal invariants"))
}

/// Number of full frames in a signal of `len` samples.
pub fn num_frames(len: usize, frame_length: usize, hop: usize) -> usize {
    if len < frame_length || hop == 0 {
        0
    } else {
        (len - frame_length) / hop + 1
    }
}

/// Cut the signal into overlapping frames and apply the Hamming window.
///
/// Frame `k` covers samples `[k*hop, k*hop + frame_length)`; a trailing
/// remainder shorter than a frame is dropped.
pub fn frame_signal(signal: &Signal, cfg: &MfccConfig) -> Result<Vec<Vec<f64>>, MfccError> {
    cfg.validate()?;
    let x = signal.samples();
    if x.len() < cfg.frame_length {
        return Err(MfccError::SignalTooShort {
            len: x.len(),
            frame_length: cfg.frame_length,
        });
    }
    let window = hamming_window(cfg.frame_length)?;
    let n = num_frames(x.len(), cfg.frame_length, cfg.hop);
    let mut frames = Vec::with_capacity(n);
    for k in 0..n {
        let start = k * cfg.hop;
        let frame = x[start..start + cfg.frame_length]
            .iter()
            .zip(&window.weights)
            .map(|(s, w)| s * w)
            .collect();
        frames.push(frame);
    }
    Ok(frames)
}

/// Perceived frequency in Mel for a physical frequency in Hz.
pub fn hz_to_mel(f: f64) -> Result<f64, MfccError> {
    if f < 0.0 {
        return Err(MfccError::NegativeFrequency { value: f });
    }
    Ok(2595.0 * (1.0 + f / 700.0).log10())
}

/// Inverse of [`hz_to_mel`].
pub fn mel_to_hz(m: f64) -> Result<f64, MfccError> {
    if m < 0.0 {
        return Err(MfccError::NegativeFrequency { value: m });
    }
    Ok(700.0 * (10f64.powf(m / 2595.0) - 1.0))
}

/// Triangular Mel filter bank over the one-sided spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    filters: Vec<Vec<f64>>,
    edge_frequencies: Vec<f64>,
    edge_bins: Vec<usize>,
}

impl FilterBank {
    pub fn num_filters(&self) -> usize {
        self.filters.len()
    }

    pub fn num_bins(&self) -> usize {
        self.filters.first().map_or(0, Vec::len)
    }

    /// Weight row of filter `i` over the spectrum bins.
    pub fn filter(&self, i: usize) -> &[f64] {
        &self.filters[i]
    }

    /// Edge frequencies in Hz before bin snapping (`num_filters + 2` values).
    pub fn edge_frequencies(&self) -> &[f64] {
        &self.edge_frequencies
    }

    /// Edge bin indices after snapping.
    pub fn edge_bins(&self) -> &[usize] {
        &self.edge_bins
    }

    /// Filter energies for one spectrum.
    pub fn apply(&self, spectrum: &[f64]) -> Vec<f64> {
        self.filters
            .iter()
            .map(|row| {
                // Filters are zero outside their edge bins, but a plain dense
                // dot product keeps the arithmetic order fixed.
                row.iter().zip(spectrum).map(|(w, s)| w * s).sum()
            })
            .collect()
    }
}

/// Place `num_filters` triangular filters with edges equally spaced on the
/// Mel axis between 0 and Nyquist, snapped to FFT bins, peak weight 1.
pub fn build_filterbank(cfg: &MfccConfig, sample_rate: u32) -> Result<FilterBank, MfccError> {
    if cfg.num_filters < 2 {
        return Err(MfccError::InvalidConfig(format!(
            "num_filters {} must be at least 2",
            cfg.num_filters
        )));
    }
    let num_bins = cfg.fft_size / 2 + 1;
    if cfg.num_filters > num_bins {
        return Err(MfccError::TooManyFilters {
            num_filters: cfg.num_filters,
            num_bins,
        });
    }
    let nyquist = sample_rate as f64 / 2.0;
    let mel_max = hz_to_mel(nyquist)?;
    let n_edges = cfg.num_filters + 2;

    let mut edge_frequencies = Vec::with_capacity(n_edges);
    let mut edge_bins = Vec::with_capacity(n_edges);
    for e in 0..n_edges {
        let mel = mel_max * e as f64 / (n_edges - 1) as f64;
        let hz = mel_to_hz(mel)?;
        edge_frequencies.push(hz);
        let bin = (hz / sample_rate as f64 * cfg.fft_size as f64).round() as usize;
        edge_bins.push(bin.min(num_bins - 1));
    }

    let mut filters = Vec::with_capacity(cfg.num_filters);
    for i in 0..cfg.num_filters {
        let (lo, center, hi) = (edge_bins[i], edge_bins[i + 1], edge_bins[i + 2]);
        if center <= lo || hi <= center {
            // Snapping collapsed a triangle: the FFT grid cannot resolve
            // this many filters.
            return Err(MfccError::TooManyFilters {
                num_filters: cfg.num_filters,
                num_bins,
            });
        }
        let mut row = vec![0.0; num_bins];
        for (k, w) in row.iter_mut().enumerate().take(center).skip(lo + 1) {
            *w = (k - lo) as f64 / (center - lo) as f64;
        }
        for (k, w) in row.iter_mut().enumerate().take(hi).skip(center) {
            *w = (hi - k) as f64 / (hi - center) as f64;
        }
        filters.push(row);
    }

    Ok(FilterBank {
        filters,
        edge_frequencies,
        edge_bins,
    })
}

/// Cepstral coefficients of a clip: `num_coeffs` rows by `num_frames` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct MfccMatrix {
    coeffs: Vec<f64>,
    num_coeffs: usize,
    num_frames: usize,
}

impl MfccMatrix {
    pub fn num_coeffs(&self) -> usize {
        self.num_coeffs
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    /// Frame series of coefficient `c` (0-based row; row 0 holds cepstral
    /// index 1).
    pub fn row(&self, c: usize) -> &[f64] {
        &self.coeffs[c * self.num_frames..(c + 1) * self.num_frames]
    }

    pub fn get(&self, c: usize, frame: usize) -> f64 {
        self.coeffs[c * self.num_frames + frame]
    }
}

/// Orthonormal DCT-II of `input`.
pub fn dct_ii_orthonormal(input: &[f64]) -> Vec<f64> {
    let b = input.len();
    let mut out = Vec::with_capacity(b);
    for k in 0..b {
        let sum: f64 = input
            .iter()
            .enumerate()
            .map(|(n, &x)| x * (PI * k as f64 * (2 * n + 1) as f64 / (2 * b) as f64).cos())
            .sum();
        let scale = if k == 0 {
            (1.0 / b as f64).sqrt()
        } else {
            (2.0 / b as f64).sqrt()
        };
        out.push(scale * sum);
    }
    out
}

/// Inverse of [`dct_ii_orthonormal`] (orthonormal DCT-III).
pub fn dct_iii_orthonormal(coeffs: &[f64]) -> Vec<f64> {
    let b = coeffs.len();
    let mut out = Vec::with_capacity(b);
    for n in 0..b {
        let mut acc = coeffs[0] * (1.0 / b as f64).sqrt();
        for (k, &c) in coeffs.iter().enumerate().skip(1) {
            acc += c
                * (2.0 / b as f64).sqrt()
                * (PI * k as f64 * (2 * n + 1) as f64 / (2 * b) as f64).cos();
        }
        out.push(acc);
    }
    out
}

/// Reusable extractor for one `(config, sample_rate)` pair.
pub struct MfccExtractor {
    cfg: MfccConfig,
    sample_rate: u32,
    window: WindowVector,
    filterbank: FilterBank,
    fft: Arc<dyn Fft<f64>>,
}

impl MfccExtractor {
    pub fn new(cfg: MfccConfig, sample_rate: u32) -> Result<MfccExtractor, MfccError> {
        cfg.validate()?;
        if sample_rate == 0 {
            return Err(MfccError::InvalidConfig(
                "sample rate must be positive".to_string(),
            ));
        }
        let window = hamming_window(cfg.frame_length)?;
        let filterbank = build_filterbank(&cfg, sample_rate)?;
        let fft = FftPlanner::new().plan_fft_forward(cfg.fft_size);
        Ok(MfccExtractor {
            cfg,
            sample_rate,
            window,
            filterbank,
            fft,
        })
    }

    pub fn config(&self) -> &MfccConfig {
        &self.cfg
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn filterbank(&self) -> &FilterBank {
        &self.filterbank
    }

    /// One-sided spectrum of an already windowed frame: `|X[k]|^2 / fft_size`
    /// on bins `0..=fft_size/2`, or its square root in magnitude mode.
    pub fn frame_spectrum(&self, frame: &[f64]) -> Vec<f64> {
        let fft_size = self.cfg.fft_size;
        let mut buf: Vec<Complex<f64>> = frame.iter().map(|&s| Complex::new(s, 0.0)).collect();
        buf.resize(fft_size, Complex::new(0.0, 0.0));
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        self.fft.process_with_scratch(&mut buf, &mut scratch);
        buf.iter()
            .take(fft_size / 2 + 1)
            .map(|c| {
                let power = c.norm_sqr() / fft_size as f64;
                match self.cfg.spectrum_mode {
                    SpectrumMode::Power => power,
                    SpectrumMode::Magnitude => power.sqrt(),
                }
            })
            .collect()
    }

    /// Run the full chain on one clip.
    pub fn extract(&self, signal: &Signal) -> Result<MfccMatrix, MfccError> {
        if signal.sample_rate() != self.sample_rate {
            return Err(MfccError::SampleRateMismatch {
                expected: self.sample_rate,
                got: signal.sample_rate(),
            });
        }
        let emphasized = pre_emphasize(signal, self.cfg.pre_emphasis_alpha)?;
        let x = emphasized.samples();
        if x.len() < self.cfg.frame_length {
            return Err(MfccError::SignalTooShort {
                len: x.len(),
                frame_length: self.cfg.frame_length,
            });
        }

        let n_frames = num_frames(x.len(), self.cfg.frame_length, self.cfg.hop);
        let m = self.cfg.num_coeffs;
        let mut coeffs = vec![0.0; m * n_frames];
        let mut frame = vec![0.0; self.cfg.frame_length];
        for f in 0..n_frames {
            let start = f * self.cfg.hop;
            for (dst, (s, w)) in frame.iter_mut().zip(
                x[start..start + self.cfg.frame_length]
                    .iter()
                    .zip(&self.window.weights),
            ) {
                *dst = s * w;
            }
            let spectrum = self.frame_spectrum(&frame);
            let energies = self.filterbank.apply(&spectrum);
            let log_energies: Vec<f64> = energies
                .iter()
                .map(|&e| e.max(self.cfg.log_floor).ln())
                .collect();
            let cepstrum = dct_ii_orthonormal(&log_energies);
            for c in 0..m {
                coeffs[c * n_frames + f] = cepstrum[c + 1];
            }
        }

        Ok(MfccMatrix {
            coeffs,
            num_coeffs: m,
            num_frames: n_frames,
        })
    }
}

/// One-shot extraction; builds an [`MfccExtractor`] internally.
pub fn mfcc(signal: &Signal, cfg: &MfccConfig) -> Result<MfccMatrix, MfccError> {
    MfccExtractor::new(cfg.clone(), signal.sample_rate())?.extract(signal)
}
