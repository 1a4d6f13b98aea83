//! Audio frontend: WAV ingestion, resampling, log-Mel features and additive
//! noise injection.
//!
//! Everything downstream of this module assumes mono audio at
//! [`SAMPLE_RATE`]. A 30-second chunk is [`N_SAMPLES`] samples and maps to
//! [`N_FRAMES`] spectrogram frames (10 ms hop).

mod mel;
mod noise;
mod resample;
mod wav;

pub use mel::{
    log_mel_spectrogram, mel_energies, read_golden, write_golden, MelEnergies, MelFilterBank,
    MelSpectrogram, SILENCE_VALUE,
};
pub use noise::{add_noise, measure_snr_db, mix_at_snr, noise_gain, white_noise, NoiseKind, NoiseSpec};
pub use resample::resample;
pub use wav::{load_wav, parse_wav, write_wav_f32, write_wav_pcm16};

use thiserror::Error;

/// Model input sample rate in Hz.
pub const SAMPLE_RATE: u32 = 16_000;
/// STFT window length: 25 ms at 16 kHz.
pub const N_FFT: usize = 400;
/// STFT hop: 10 ms at 16 kHz.
pub const HOP_LENGTH: usize = 160;
/// Number of Mel channels.
pub const N_MELS: usize = 80;
/// Length of one model window in seconds.
pub const CHUNK_LENGTH: usize = 30;
/// Samples in one model window.
pub const N_SAMPLES: usize = CHUNK_LENGTH * SAMPLE_RATE as usize;
/// Spectrogram frames in one model window.
pub const N_FRAMES: usize = N_SAMPLES / HOP_LENGTH;
/// Spectrogram frames per second of audio.
pub const FRAMES_PER_SECOND: usize = SAMPLE_RATE as usize / HOP_LENGTH;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed wav: {0}")]
    Format(String),
    #[error("unsupported wav encoding: {0}")]
    Unsupported(String),
    #[error("invalid sample rate {0}")]
    InvalidSampleRate(u32),
    #[error("expected {expected} Hz audio, got {actual} Hz")]
    SampleRateMismatch { expected: u32, actual: u32 },
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
    #[error("empty audio input")]
    Empty,
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("invalid snr: {0}")]
    InvalidSnr(f64),
}

/// Reads a WAV file and resamples it to [`SAMPLE_RATE`].
pub fn load_audio(path: impl AsRef<std::path::Path>) -> Result<AudioBuffer, AudioError> {
    let audio = load_wav(path)?;
    if audio.sample_rate() == SAMPLE_RATE {
        Ok(audio)
    } else {
        resample(&audio, SAMPLE_RATE)
    }
}

/// Mono PCM samples at a known sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    samples: Vec<f32>,
    sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self, AudioError> {
        if sample_rate == 0 {
            return Err(AudioError::InvalidSampleRate(sample_rate));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(AudioError::NonFinite(i));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f32> {
        self.samples
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

    /// Duration in seconds.
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Mean squared amplitude over the whole buffer.
    pub fn power(&self) -> f64 {
        mean_power(&self.samples)
    }
}

pub(crate) fn mean_power(samples: &[f32]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().map(|&s| (s as f64) * (s as f64)).sum::<f64>() / samples.len() as f64
}
