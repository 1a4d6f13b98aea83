use std::fs;
use std::io::Write;
use std::path::Path;

use super::{AudioBuffer, AudioError};

const FORMAT_PCM: u16 = 0x0001;
const FORMAT_IEEE_FLOAT: u16 = 0x0003;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

#[derive(Debug, Clone, Copy)]
enum SampleEncoding {
    Pcm16,
    Float32,
}

struct FmtChunk {
    encoding: SampleEncoding,
    channels: u16,
    sample_rate: u32,
    block_align: u16,
}

/// Reads a RIFF/WAVE file (16-bit PCM or 32-bit float, mono or stereo) and
/// downmixes it to mono.
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioBuffer, AudioError> {
    let bytes = fs::read(path)?;
    parse_wav(&bytes)
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

pub fn parse_wav(bytes: &[u8]) -> Result<AudioBuffer, AudioError> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(AudioError::Format("missing RIFF/WAVE header".into()));
    }

    let mut fmt: Option<FmtChunk> = None;
    let mut data: Option<&[u8]> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let body_start = pos + 8;
        let available = bytes.len() - body_start;
        match id {
            b"fmt " => {
                if size > available {
                    return Err(AudioError::Format("truncated fmt chunk".into()));
                }
                fmt = Some(parse_fmt(&bytes[body_start..body_start + size])?);
            }
            b"data" => {
                // Streaming writers leave the size field as 0 or u32::MAX.
                let size = if size == 0 || size == u32::MAX as usize {
                    available
                } else if size > available {
                    return Err(AudioError::Format(format!(
                        "data chunk declares {size} bytes but only {available} remain"
                    )));
                } else {
                    size
                };
                data = Some(&bytes[body_start..body_start + size]);
            }
            _ => {}
        }
        if data.is_some() && fmt.is_some() {
            break;
        }
        pos = body_start + size + (size & 1);
    }

    let fmt = fmt.ok_or_else(|| AudioError::Format("missing fmt chunk".into()))?;
    let data = data.ok_or_else(|| AudioError::Format("missing data chunk".into()))?;
    decode_samples(&fmt, data)
}

fn parse_fmt(body: &[u8]) -> Result<FmtChunk, AudioError> {
    if body.len() < 16 {
        return Err(AudioError::Format("fmt chunk shorter than 16 bytes".into()));
    }
    let mut format_tag = u16_at(body, 0);
    let channels = u16_at(body, 2);
    let sample_rate = u32_at(body, 4);
    let block_align = u16_at(body, 12);
    let bits = u16_at(body, 14);

    if format_tag == FORMAT_EXTENSIBLE {
        if body.len() < 40 {
            return Err(AudioError::Format("truncated WAVE_FORMAT_EXTENSIBLE header".into()));
        }
        // The sub-format GUID starts with the plain format code.
        format_tag = u16_at(body, 24);
    }

    let encoding = match (format_tag, bits) {
        (FORMAT_PCM, 16) => SampleEncoding::Pcm16,
        (FORMAT_IEEE_FLOAT, 32) => SampleEncoding::Float32,
        (tag, bits) => {
            return Err(AudioError::Unsupported(format!(
                "format tag {tag:#06x} with {bits} bits per sample"
            )))
        }
    };
    if !(1..=2).contains(&channels) {
        return Err(AudioError::Unsupported(format!("{channels} channels")));
    }
    if sample_rate == 0 {
        return Err(AudioError::Format("sample rate is zero".into()));
    }
    let bytes_per_sample = match encoding {
        SampleEncoding::Pcm16 => 2,
        SampleEncoding::Float32 => 4,
    };
    if block_align as usize != bytes_per_sample * channels as usize {
        return Err(AudioError::Format(format!(
            "block align {block_align} inconsistent with {channels} channels of {bits} bits"
        )));
    }
    Ok(FmtChunk {
        encoding,
        channels,
        sample_rate,
        block_align,
    })
}

fn decode_samples(fmt: &FmtChunk, data: &[u8]) -> Result<AudioBuffer, AudioError> {
    let block = fmt.block_align as usize;
    let channels = fmt.channels as usize;
    let frames = data.len() / block;
    let mut samples = Vec::with_capacity(frames);
    for frame in data.chunks_exact(block) {
        let mut acc = 0.0f32;
        for ch in 0..channels {
            let v = match fmt.encoding {
                SampleEncoding::Pcm16 => {
                    let raw = i16::from_le_bytes([frame[ch * 2], frame[ch * 2 + 1]]);
                    raw as f32 / 32768.0
                }
                SampleEncoding::Float32 => {
                    let o = ch * 4;
                    let raw =
                        f32::from_le_bytes([frame[o], frame[o + 1], frame[o + 2], frame[o + 3]]);
                    if !raw.is_finite() {
                        return Err(AudioError::Format("non-finite float sample".into()));
                    }
                    raw.clamp(-1.0, 1.0)
                }
            };
            acc += v;
        }
        samples.push(acc / channels as f32);
    }
    AudioBuffer::new(samples, fmt.sample_rate)
}

fn wav_header(channels: u16, sample_rate: u32, format: u16, bits: u16, data_len: usize) -> Vec<u8> {
    let block_align = channels * bits / 8;
    let mut h = Vec::with_capacity(44);
    h.extend_from_slice(b"RIFF");
    h.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    h.extend_from_slice(b"WAVE");
    h.extend_from_slice(b"fmt ");
    h.extend_from_slice(&16u32.to_le_bytes());
    h.extend_from_slice(&format.to_le_bytes());
    h.extend_from_slice(&channels.to_le_bytes());
    h.extend_from_slice(&sample_rate.to_le_bytes());
    h.extend_from_slice(&(sample_rate * block_align as u32).to_le_bytes());
    h.extend_from_slice(&block_align.to_le_bytes());
    h.extend_from_slice(&bits.to_le_bytes());
    h.extend_from_slice(b"data");
    h.extend_from_slice(&(data_len as u32).to_le_bytes());
    h
}

/// Writes mono 16-bit PCM, the inverse of the reader's scaling by 32768.
/// Out-of-range samples saturate.
pub fn write_wav_pcm16(path: impl AsRef<Path>, audio: &AudioBuffer) -> Result<(), AudioError> {
    let mut out = wav_header(1, audio.sample_rate(), FORMAT_PCM, 16, audio.len() * 2);
    for &s in audio.samples() {
        let v = (s as f64 * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&v.to_le_bytes());
    }
    fs::File::create(path)?.write_all(&out)?;
    Ok(())
}

/// Writes mono 32-bit float samples.
pub fn write_wav_f32(path: impl AsRef<Path>, audio: &AudioBuffer) -> Result<(), AudioError> {
    let mut out = wav_header(1, audio.sample_rate(), FORMAT_IEEE_FLOAT, 32, audio.len() * 4);
    for &s in audio.samples() {
        out.extend_from_slice(&s.to_le_bytes());
    }
    fs::File::create(path)?.write_all(&out)?;
    Ok(())
}
