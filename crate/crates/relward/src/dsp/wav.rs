//! RIFF/WAVE reader and writer for the one format the pipeline consumes:
//! PCM (format tag 1), 16-bit little-endian, mono, 16 kHz.

use std::path::Path;

use crate::dsp::{SampleBuffer, SAMPLE_RATE};
use crate::error::{Error, Result};

fn format_err(path: &Path, detail: impl Into<String>) -> Error {
    Error::Format { path: path.to_path_buf(), detail: detail.into() }
}

fn u16_at(bytes: &[u8], off: usize) -> u16 {
    u16::from_le_bytes([bytes[off], bytes[off + 1]])
}

fn u32_at(bytes: &[u8], off: usize) -> u32 {
    u32::from_le_bytes([bytes[off], bytes[off + 1], bytes[off + 2], bytes[off + 3]])
}

/// Reads a PCM16 mono 16 kHz WAV file. Samples are scaled by 1/32768 into
/// [-1, 1); length is preserved.
pub fn read_wav(path: &Path) -> Result<SampleBuffer> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(format_err(path, "missing RIFF/WAVE header"));
    }

    let mut fmt: Option<(u16, u16, u32, u16)> = None; // (tag, channels, rate, bits)
    let mut data: Option<&[u8]> = None;
    let mut off = 12;
    while off + 8 <= bytes.len() {
        let id = &bytes[off..off + 4];
        let size = u32_at(&bytes, off + 4) as usize;
        let body_start = off + 8;
        if body_start + size > bytes.len() {
            return Err(format_err(path, format!("chunk {:?} overruns file", String::from_utf8_lossy(id))));
        }
        let body = &bytes[body_start..body_start + size];
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(format_err(path, "fmt chunk shorter than 16 bytes"));
                }
                fmt = Some((u16_at(body, 0), u16_at(body, 2), u32_at(body, 4), u16_at(body, 14)));
            }
            b"data" => data = Some(body),
            _ => {} // skip LIST, fact, etc.
        }
        // chunk bodies are word-aligned
        off = body_start + size + (size & 1);
    }

    let (tag, channels, rate, bits) = fmt.ok_or_else(|| format_err(path, "no fmt chunk"))?;
    let unsupported = |field, value: String, expected| Error::UnsupportedFormat {
        path: path.to_path_buf(),
        field,
        value,
        expected,
    };
    if tag != 1 {
        return Err(unsupported("audio_format", tag.to_string(), "1 (PCM)"));
    }
    if channels != 1 {
        return Err(unsupported("channels", channels.to_string(), "1 (mono)"));
    }
    if rate != SAMPLE_RATE {
        return Err(unsupported("sample_rate", rate.to_string(), "16000"));
    }
    if bits != 16 {
        return Err(unsupported("bits_per_sample", bits.to_string(), "16"));
    }

    let data = data.ok_or_else(|| format_err(path, "no data chunk"))?;
    if data.len() % 2 != 0 {
        return Err(format_err(path, "data chunk has odd byte length"));
    }
    let samples: Vec<f64> = data
        .chunks_exact(2)
        .map(|b| i16::from_le_bytes([b[0], b[1]]) as f64 / 32768.0)
        .collect();
    SampleBuffer::new(samples)
}

/// Writes a buffer as PCM16 mono 16 kHz. Samples are clamped to [-1, 1)
/// before quantization.
pub fn write_wav(path: &Path, buf: &SampleBuffer) -> Result<()> {
    let n = buf.samples.len();
    let data_len = n * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&SAMPLE_RATE.to_le_bytes());
    out.extend_from_slice(&(SAMPLE_RATE * 2).to_le_bytes()); // byte rate
    out.extend_from_slice(&2u16.to_le_bytes()); // block align
    out.extend_from_slice(&16u16.to_le_bytes()); // bits per sample
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in &buf.samples {
        let q = (s * 32768.0).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    crate::util::write_atomic(path, &out)
}
