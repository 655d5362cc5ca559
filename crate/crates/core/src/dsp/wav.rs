//! Minimal RIFF/WAVE reader and writer (16-bit PCM and 32-bit float).

use crate::error::{OvError, Result};

const TAG_PCM: u16 = 0x0001;
const TAG_FLOAT: u16 = 0x0003;
const TAG_EXTENSIBLE: u16 = 0xfffe;

/// Interleaved samples as read from a WAV file.
#[derive(Debug, Clone)]
pub struct WavData {
    pub sample_rate_hz: u32,
    pub channels: u16,
    /// Interleaved, scaled to nominal `[-1, 1]`.
    pub samples: Vec<f32>,
}

impl WavData {
    pub fn frames(&self) -> usize {
        self.samples.len() / self.channels.max(1) as usize
    }

    /// Averages channels into one.
    pub fn to_mono(&self) -> Vec<f32> {
        let ch = self.channels as usize;
        if ch == 1 {
            return self.samples.clone();
        }
        self.samples
            .chunks_exact(ch)
            .map(|f| f.iter().sum::<f32>() / ch as f32)
            .collect()
    }
}

fn le_u16(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn le_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

pub fn read_wav(bytes: &[u8]) -> Result<WavData> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(OvError::Wav("missing RIFF/WAVE header".into()));
    }
    let mut pos = 12;
    let mut fmt: Option<(u16, u16, u32, u16)> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let len = le_u32(bytes, pos + 4) as usize;
        let body = pos + 8;
        let avail = bytes.len() - body;
        match id {
            b"fmt " => {
                if len < 16 || avail < 16 {
                    return Err(OvError::Wav("short fmt chunk".into()));
                }
                let mut tag = le_u16(bytes, body);
                let channels = le_u16(bytes, body + 2);
                let rate = le_u32(bytes, body + 4);
                let bits = le_u16(bytes, body + 14);
                if tag == TAG_EXTENSIBLE {
                    if len < 40 || avail < 40 {
                        return Err(OvError::Wav("short WAVE_FORMAT_EXTENSIBLE chunk".into()));
                    }
                    tag = le_u16(bytes, body + 24);
                }
                if tag != TAG_PCM && tag != TAG_FLOAT {
                    return Err(OvError::UnsupportedFormat(tag));
                }
                if channels == 0 || rate == 0 {
                    return Err(OvError::Wav("zero channels or sample rate".into()));
                }
                fmt = Some((tag, channels, rate, bits));
            }
            b"data" => {
                let (tag, channels, rate, bits) =
                    fmt.ok_or_else(|| OvError::Wav("data chunk before fmt chunk".into()))?;
                // Streams written without a final size may report 0 or more than is present.
                let n = if len == 0 || len > avail { avail } else { len };
                let data = &bytes[body..body + n];
                let samples = match (tag, bits) {
                    (TAG_PCM, 16) => data
                        .chunks_exact(2)
                        .map(|c| f32::from(i16::from_le_bytes([c[0], c[1]])) / 32768.0)
                        .collect(),
                    (TAG_FLOAT, 32) => data
                        .chunks_exact(4)
                        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                        .collect(),
                    _ => {
                        return Err(OvError::Wav(format!(
                            "unsupported sample layout: tag {tag}, {bits} bits"
                        )))
                    }
                };
                let w = WavData {
                    sample_rate_hz: rate,
                    channels,
                    samples,
                };
                if w.samples.iter().any(|s| !s.is_finite()) {
                    return Err(OvError::Wav("non-finite samples".into()));
                }
                return Ok(w);
            }
            _ => {}
        }
        pos = body + len + (len & 1);
    }
    Err(OvError::Wav("no data chunk".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleFormat {
    Pcm16,
    Float32,
}

/// Encodes interleaved samples as a WAV file.
pub fn write_wav(samples: &[f32], sample_rate_hz: u32, channels: u16, format: SampleFormat) -> Vec<u8> {
    let (tag, bits) = match format {
        SampleFormat::Pcm16 => (TAG_PCM, 16u16),
        SampleFormat::Float32 => (TAG_FLOAT, 32u16),
    };
    let block = channels * bits / 8;
    let data_len = samples.len() * (bits as usize / 8);
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&tag.to_le_bytes());
    out.extend_from_slice(&channels.to_le_bytes());
    out.extend_from_slice(&sample_rate_hz.to_le_bytes());
    out.extend_from_slice(&(sample_rate_hz * u32::from(block)).to_le_bytes());
    out.extend_from_slice(&block.to_le_bytes());
    out.extend_from_slice(&bits.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in samples {
        match format {
            SampleFormat::Pcm16 => {
                let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                out.extend_from_slice(&v.to_le_bytes());
            }
            SampleFormat::Float32 => out.extend_from_slice(&s.to_le_bytes()),
        }
    }
    out
}
