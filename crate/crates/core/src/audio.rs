//! Mono PCM audio buffers and 16-bit WAV file I/O.
//!
//! [`AudioBuffer`] is the currency between synthesis, slicing, and
//! fingerprinting: finite samples in [-1, 1] at a fixed sample rate.

use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum WavError {
    #[error("not a RIFF/WAVE file: {0}")]
    NotWave(String),
    #[error("unsupported WAV encoding: {0}")]
    Unsupported(String),
    #[error("truncated WAV data: {0}")]
    Truncated(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Mono audio signal.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> AudioBuffer {
        AudioBuffer {
            samples,
            sample_rate,
        }
    }

    /// All-zero buffer of `len` samples.
    pub fn silence(len: usize, sample_rate: u32) -> AudioBuffer {
        AudioBuffer {
            samples: vec![0.0; len],
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Largest absolute sample value (0 for an empty buffer).
    pub fn peak(&self) -> f32 {
        self.samples.iter().fold(0.0f32, |acc, s| acc.max(s.abs()))
    }

    /// Root mean square over the whole buffer.
    pub fn rms(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        let sum: f64 = self.samples.iter().map(|s| (*s as f64) * (*s as f64)).sum();
        (sum / self.samples.len() as f64).sqrt()
    }

    /// Copy of the sample range `[start, start + len)`, clamped to the
    /// buffer end.
    pub fn slice(&self, start: usize, len: usize) -> AudioBuffer {
        let end = (start + len).min(self.samples.len());
        let start = start.min(end);
        AudioBuffer {
            samples: self.samples[start..end].to_vec(),
            sample_rate: self.sample_rate,
        }
    }
}

/// Encode as 16-bit PCM mono WAV bytes (little-endian RIFF).
pub fn encode_wav(audio: &AudioBuffer) -> Vec<u8> {
    let data_len = audio.samples.len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&audio.sample_rate.to_le_bytes());
    out.extend_from_slice(&(audio.sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes()); // block align
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for sample in &audio.samples {
        let q = (sample.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    out
}

/// Decode 16-bit PCM WAV bytes. Stereo input is downmixed to mono by
/// averaging the two channels.
pub fn decode_wav(bytes: &[u8]) -> Result<AudioBuffer, WavError> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(WavError::NotWave(
            "missing RIFF/WAVE signature".to_string(),
        ));
    }
    let mut pos = 12;
    let mut format: Option<(u16, u16, u32, u16)> = None; // (codec, channels, rate, bits)
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body_end = pos + 8 + size;
        if body_end > bytes.len() {
            return Err(WavError::Truncated(format!(
                "chunk {} claims {} bytes past end of file",
                String::from_utf8_lossy(id),
                body_end - bytes.len()
            )));
        }
        let body = &bytes[pos + 8..body_end];
        match id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err(WavError::Truncated("fmt chunk shorter than 16 bytes".into()));
                }
                format = Some((
                    u16::from_le_bytes([body[0], body[1]]),
                    u16::from_le_bytes([body[2], body[3]]),
                    u32::from_le_bytes([body[4], body[5], body[6], body[7]]),
                    u16::from_le_bytes([body[14], body[15]]),
                ));
            }
            b"data" => data = Some(body),
            _ => {}
        }
        // Chunks are word-aligned.
        pos = body_end + (size & 1);
    }

    let (codec, channels, sample_rate, bits) =
        format.ok_or_else(|| WavError::NotWave("no fmt chunk".into()))?;
    if codec != 1 {
        return Err(WavError::Unsupported(format!("codec {codec} (want PCM)")));
    }
    if bits != 16 {
        return Err(WavError::Unsupported(format!("{bits}-bit samples (want 16)")));
    }
    if channels == 0 || channels > 2 {
        return Err(WavError::Unsupported(format!("{channels} channels")));
    }
    let data = data.ok_or_else(|| WavError::NotWave("no data chunk".into()))?;

    let frame_bytes = 2 * channels as usize;
    let frames = data.len() / frame_bytes;
    let mut samples = Vec::with_capacity(frames);
    for frame in 0..frames {
        let base = frame * frame_bytes;
        let mut acc = 0.0f32;
        for ch in 0..channels as usize {
            let raw = i16::from_le_bytes([data[base + 2 * ch], data[base + 2 * ch + 1]]);
            acc += raw as f32 / 32767.0;
        }
        samples.push((acc / channels as f32).clamp(-1.0, 1.0));
    }
    Ok(AudioBuffer {
        samples,
        sample_rate,
    })
}

pub fn write_wav(audio: &AudioBuffer, path: impl AsRef<Path>) -> Result<(), WavError> {
    let path = path.as_ref();
    let io_err = |source| WavError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut file = std::fs::File::create(path).map_err(io_err)?;
    file.write_all(&encode_wav(audio)).map_err(|source| WavError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioBuffer, WavError> {
    let path = path.as_ref();
    let io_err = |source| WavError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .map_err(io_err)?
        .read_to_end(&mut bytes)
        .map_err(|source| WavError::Io {
            path: path.display().to_string(),
            source,
        })?;
    decode_wav(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, seconds: f64, sample_rate: u32) -> AudioBuffer {
        let n = (seconds * sample_rate as f64).round() as usize;
        let samples = (0..n)
            .map(|i| {
                (0.8 * (2.0 * std::f64::consts::PI * freq * i as f64 / sample_rate as f64).sin())
                    as f32
            })
            .collect();
        AudioBuffer::new(samples, sample_rate)
    }

    #[test]
    fn roundtrip_error_bounded_by_quantization_step() {
        let original = sine(440.0, 0.1, 44100);
        let decoded = decode_wav(&encode_wav(&original)).unwrap();
        assert_eq!(decoded.sample_rate, 44100);
        assert_eq!(decoded.len(), original.len());
        let max_err = original
            .samples
            .iter()
            .zip(&decoded.samples)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert!(max_err <= 1.0 / 32768.0, "max error {max_err}");
    }

    #[test]
    fn stereo_input_downmixes_by_averaging() {
        // Hand-build a stereo file: left 0.5, right -0.25 on every frame.
        let left = (0.5f32 * 32767.0) as i16;
        let right = (-0.25f32 * 32767.0).round() as i16;
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"RIFF");
        bytes.extend_from_slice(&(36u32 + 16).to_le_bytes());
        bytes.extend_from_slice(b"WAVE");
        bytes.extend_from_slice(b"fmt ");
        bytes.extend_from_slice(&16u32.to_le_bytes());
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.extend_from_slice(&2u16.to_le_bytes());
        bytes.extend_from_slice(&8000u32.to_le_bytes());
        bytes.extend_from_slice(&32000u32.to_le_bytes());
        bytes.extend_from_slice(&4u16.to_le_bytes());
        bytes.extend_from_slice(&16u16.to_le_bytes());
        bytes.extend_from_slice(b"data");
        bytes.extend_from_slice(&16u32.to_le_bytes());
        for _ in 0..4 {
            bytes.extend_from_slice(&left.to_le_bytes());
            bytes.extend_from_slice(&right.to_le_bytes());
        }
        let audio = decode_wav(&bytes).unwrap();
        assert_eq!(audio.len(), 4);
        for s in &audio.samples {
            let expected = (left as f32 / 32767.0 + right as f32 / 32767.0) / 2.0;
            assert!((s - expected).abs() < 1e-6);
        }
    }

    #[test]
    fn non_riff_input_is_a_format_error() {
        let err = decode_wav(b"MThd not audio at all").unwrap_err();
        assert!(matches!(err, WavError::NotWave(_)), "got {err:?}");
    }

    #[test]
    fn float_wav_is_unsupported() {
        let mut bytes = encode_wav(&sine(440.0, 0.01, 8000));
        bytes[20] = 3; // IEEE float codec tag
        let err = decode_wav(&bytes).unwrap_err();
        assert!(matches!(err, WavError::Unsupported(_)), "got {err:?}");
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tone.wav");
        let original = sine(1000.0, 0.05, 22050);
        write_wav(&original, &path).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back.sample_rate, 22050);
        assert_eq!(back.len(), original.len());
    }
}
