//! RIFF/WAVE decoding and encoding.
//!
//! The decoder accepts little-endian RIFF files with `fmt ` and `data`
//! chunks; every other chunk is skipped. Integer PCM at 8, 16 and 24 bits is
//! scaled to `[-1, 1]` by dividing by `2^(bits-1)`; 32-bit IEEE float is
//! taken as-is (clamped to `[-1, 1]`). Multi-channel audio is mean-downmixed
//! to mono.

use std::path::Path;

use super::{CorpusError, Signal};

const FORMAT_PCM: u16 = 1;
const FORMAT_IEEE_FLOAT: u16 = 3;

/// Sample encodings the writer can produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavEncoding {
    Pcm8,
    Pcm16,
    Pcm24,
    Float32,
}

enum Fault {
    NotRiff,
    Unsupported(String),
    Truncated(String),
}

impl Fault {
    fn at(self, path: &Path) -> CorpusError {
        let path = path.to_path_buf();
        match self {
            Fault::NotRiff => CorpusError::NotRiff { path },
            Fault::Unsupported(detail) => CorpusError::UnsupportedEncoding { path, detail },
            Fault::Truncated(detail) => CorpusError::TruncatedData { path, detail },
        }
    }
}

/// Decode a WAV file from disk into a mono [`Signal`].
pub fn decode_wav(path: &Path) -> Result<Signal, CorpusError> {
    let bytes = std::fs::read(path).map_err(|e| CorpusError::io(path, e))?;
    decode(&bytes).map_err(|f| f.at(path))
}

/// Decode a WAV file already held in memory.
pub fn decode_wav_bytes(bytes: &[u8]) -> Result<Signal, CorpusError> {
    decode(bytes).map_err(|f| f.at(Path::new("<bytes>")))
}

struct FmtChunk {
    format: u16,
    channels: u16,
    sample_rate: u32,
    bits_per_sample: u16,
}

fn decode(bytes: &[u8]) -> Result<Signal, Fault> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Fault::NotRiff);
    }

    let mut fmt: Option<FmtChunk> = None;
    let mut data: Option<&[u8]> = None;
    let mut offset = 12usize;
    while offset + 8 <= bytes.len() {
        let id = &bytes[offset..offset + 4];
        let size = u32::from_le_bytes(bytes[offset + 4..offset + 8].try_into().unwrap()) as usize;
        let body_start = offset + 8;
        let body_end = body_start
            .checked_add(size)
            .ok_or_else(|| Fault::Truncated("chunk size overflows".into()))?;
        if body_end > bytes.len() {
            return Err(Fault::Truncated(format!(
                "chunk `{}` declares {} bytes but only {} remain",
                String::from_utf8_lossy(id),
                size,
                bytes.len() - body_start
            )));
        }
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err(Fault::Truncated("fmt chunk shorter than 16 bytes".into()));
                }
                fmt = Some(FmtChunk {
                    format: u16::from_le_bytes(body[0..2].try_into().unwrap()),
                    channels: u16::from_le_bytes(body[2..4].try_into().unwrap()),
                    sample_rate: u32::from_le_bytes(body[4..8].try_into().unwrap()),
                    bits_per_sample: u16::from_le_bytes(body[14..16].try_into().unwrap()),
                });
            }
            b"data" => {
                data = Some(body);
            }
            _ => {} // skip unknown chunks
        }
        // RIFF chunks are word-aligned: odd sizes carry one pad byte.
        offset = body_end + (size & 1);
    }

    let fmt = fmt.ok_or_else(|| Fault::Truncated("no `fmt ` chunk found".into()))?;
    let data = data.ok_or_else(|| Fault::Truncated("no `data` chunk found".into()))?;

    if fmt.channels == 0 {
        return Err(Fault::Unsupported("zero channels".into()));
    }
    if fmt.sample_rate == 0 {
        return Err(Fault::Unsupported("zero sample rate".into()));
    }
    let bytes_per_sample = match (fmt.format, fmt.bits_per_sample) {
        (FORMAT_PCM, 8) => 1,
        (FORMAT_PCM, 16) => 2,
        (FORMAT_PCM, 24) => 3,
        (FORMAT_IEEE_FLOAT, 32) => 4,
        (format, bits) => {
            return Err(Fault::Unsupported(format!(
                "format tag {format} with {bits} bits per sample"
            )))
        }
    };

    let frame_size = bytes_per_sample * fmt.channels as usize;
    if data.len() % frame_size != 0 {
        return Err(Fault::Truncated(format!(
            "data length {} is not a multiple of the {}-byte frame",
            data.len(),
            frame_size
        )));
    }
    let n_frames = data.len() / frame_size;
    if n_frames == 0 {
        return Err(Fault::Truncated("data chunk holds no samples".into()));
    }

    let mut samples = Vec::with_capacity(n_frames);
    let channels = fmt.channels as usize;
    for frame in 0..n_frames {
        let mut acc = 0.0f64;
        for ch in 0..channels {
            let at = frame * frame_size + ch * bytes_per_sample;
            let v = match (fmt.format, fmt.bits_per_sample) {
                (FORMAT_PCM, 8) => (data[at] as f64 - 128.0) / 128.0,
                (FORMAT_PCM, 16) => {
                    i16::from_le_bytes(data[at..at + 2].try_into().unwrap()) as f64 / 32768.0
                }
                (FORMAT_PCM, 24) => {
                    let raw = (data[at] as i32)
                        | ((data[at + 1] as i32) << 8)
                        | ((data[at + 2] as i32) << 16);
                    // sign-extend from 24 bits
                    let signed = (raw << 8) >> 8;
                    signed as f64 / 8_388_608.0
                }
                (FORMAT_IEEE_FLOAT, 32) => {
                    let v = f32::from_le_bytes(data[at..at + 4].try_into().unwrap()) as f64;
                    v.clamp(-1.0, 1.0)
                }
                _ => unreachable!(),
            };
            acc += v;
        }
        samples.push(acc / channels as f64);
    }

    Signal::new(samples, fmt.sample_rate).map_err(|e| Fault::Truncated(e.to_string()))
}

/// Encode a mono [`Signal`] as WAV bytes.
pub fn encode_wav(signal: &Signal, encoding: WavEncoding) -> Vec<u8> {
    let (format, bits): (u16, u16) = match encoding {
        WavEncoding::Pcm8 => (FORMAT_PCM, 8),
        WavEncoding::Pcm16 => (FORMAT_PCM, 16),
        WavEncoding::Pcm24 => (FORMAT_PCM, 24),
        WavEncoding::Float32 => (FORMAT_IEEE_FLOAT, 32),
    };
    let bytes_per_sample = (bits / 8) as usize;
    let n = signal.len();
    let data_len = n * bytes_per_sample;

    let mut out = Vec::with_capacity(44 + data_len + (data_len & 1));
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len + (data_len & 1)) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&format.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&signal.sample_rate().to_le_bytes());
    let byte_rate = signal.sample_rate() * bytes_per_sample as u32;
    out.extend_from_slice(&byte_rate.to_le_bytes());
    out.extend_from_slice(&(bytes_per_sample as u16).to_le_bytes());
    out.extend_from_slice(&bits.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());

    for &s in signal.samples() {
        match encoding {
            WavEncoding::Pcm8 => {
                let q = (s * 128.0).round().clamp(-128.0, 127.0) as i32;
                out.push((q + 128) as u8);
            }
            WavEncoding::Pcm16 => {
                let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                out.extend_from_slice(&q.to_le_bytes());
            }
            WavEncoding::Pcm24 => {
                let q = (s * 8_388_608.0).round().clamp(-8_388_608.0, 8_388_607.0) as i32;
                let b = q.to_le_bytes();
                out.extend_from_slice(&b[0..3]);
            }
            WavEncoding::Float32 => {
                out.extend_from_slice(&(s as f32).to_le_bytes());
            }
        }
    }
    if data_len & 1 == 1 {
        out.push(0);
    }
    out
}

/// Write a mono [`Signal`] to disk as WAV.
pub fn write_wav(path: &Path, signal: &Signal, encoding: WavEncoding) -> Result<(), CorpusError> {
    std::fs::write(path, encode_wav(signal, encoding)).map_err(|e| CorpusError::io(path, e))
}
