use std::f64::consts::PI;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::{Arc, OnceLock};

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::{AudioBuffer, AudioError, HOP_LENGTH, N_FFT, N_MELS, SAMPLE_RATE};

const N_FREQS: usize = N_FFT / 2 + 1;
const LOG_FLOOR: f64 = 1e-10;
/// Dynamic range kept below the spectrogram maximum, in decades.
const DYNAMIC_RANGE: f64 = 8.0;
const GOLDEN_MAGIC: &[u8; 8] = b"MELSPEC1";

/// Normalised value of a silent frame. The top of the normalisation range
/// is never allowed below `log10(floor) + 8`, so the floor always maps here.
pub const SILENCE_VALUE: f32 = -1.0;

/// Triangular Mel filters on the Slaney scale, area-normalised, covering
/// 0–8000 Hz over the 201 one-sided FFT bins.
#[derive(Debug, Clone)]
pub struct MelFilterBank {
    /// Row-major [N_MELS x N_FREQS].
    weights: Vec<f64>,
}

fn hz_to_mel(hz: f64) -> f64 {
    const F_SP: f64 = 200.0 / 3.0;
    const MIN_LOG_HZ: f64 = 1000.0;
    let min_log_mel = MIN_LOG_HZ / F_SP;
    let logstep = (6.4f64).ln() / 27.0;
    if hz >= MIN_LOG_HZ {
        min_log_mel + (hz / MIN_LOG_HZ).ln() / logstep
    } else {
        hz / F_SP
    }
}

fn mel_to_hz(mel: f64) -> f64 {
    const F_SP: f64 = 200.0 / 3.0;
    const MIN_LOG_HZ: f64 = 1000.0;
    let min_log_mel = MIN_LOG_HZ / F_SP;
    let logstep = (6.4f64).ln() / 27.0;
    if mel >= min_log_mel {
        MIN_LOG_HZ * (logstep * (mel - min_log_mel)).exp()
    } else {
        F_SP * mel
    }
}

impl MelFilterBank {
    pub fn new() -> Self {
        let f_max = SAMPLE_RATE as f64 / 2.0;
        let mel_max = hz_to_mel(f_max);
        let edges: Vec<f64> = (0..N_MELS + 2)
            .map(|i| mel_to_hz(mel_max * i as f64 / (N_MELS + 1) as f64))
            .collect();
        let fft_freqs: Vec<f64> = (0..N_FREQS)
            .map(|k| k as f64 * SAMPLE_RATE as f64 / N_FFT as f64)
            .collect();

        let mut weights = vec![0.0; N_MELS * N_FREQS];
        for m in 0..N_MELS {
            let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            let enorm = 2.0 / (hi - lo);
            for (k, &f) in fft_freqs.iter().enumerate() {
                let rising = (f - lo) / (center - lo);
                let falling = (hi - f) / (hi - center);
                weights[m * N_FREQS + k] = rising.min(falling).max(0.0) * enorm;
            }
        }
        Self { weights }
    }

    pub fn filter(&self, mel: usize) -> &[f64] {
        &self.weights[mel * N_FREQS..(mel + 1) * N_FREQS]
    }

    fn apply(&self, power: &[f64], out: &mut [f64]) {
        for (m, o) in out.iter_mut().enumerate() {
            *o = self
                .filter(m)
                .iter()
                .zip(power)
                .map(|(w, p)| w * p)
                .sum();
        }
    }
}

impl Default for MelFilterBank {
    fn default() -> Self {
        Self::new()
    }
}

fn filter_bank() -> &'static MelFilterBank {
    static BANK: OnceLock<MelFilterBank> = OnceLock::new();
    BANK.get_or_init(MelFilterBank::new)
}

fn fft_plan() -> Arc<dyn Fft<f64>> {
    static PLAN: OnceLock<Arc<dyn Fft<f64>>> = OnceLock::new();
    PLAN.get_or_init(|| FftPlanner::new().plan_fft_forward(N_FFT))
        .clone()
}

/// Pre-log Mel energies, row-major [n_frames x 80].
#[derive(Debug, Clone, PartialEq)]
pub struct MelEnergies {
    pub data: Vec<f64>,
    pub n_frames: usize,
}

impl MelEnergies {
    pub fn frame(&self, i: usize) -> &[f64] {
        &self.data[i * N_MELS..(i + 1) * N_MELS]
    }
}

/// Index into `len` samples after reflecting `i` (which may lie outside)
/// about the edges, numpy "reflect" style, repeated for short inputs.
fn reflect_index(i: i64, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as i64 - 1);
    let mut r = i.rem_euclid(period);
    if r >= len as i64 {
        r = period - r;
    }
    r as usize
}

fn check_input(audio: &AudioBuffer) -> Result<(), AudioError> {
    if audio.sample_rate() != SAMPLE_RATE {
        return Err(AudioError::SampleRateMismatch {
            expected: SAMPLE_RATE,
            actual: audio.sample_rate(),
        });
    }
    if audio.is_empty() {
        return Err(AudioError::Empty);
    }
    Ok(())
}

/// Power spectrum through the Mel bank, before any log compression.
///
/// Frames are centred on multiples of the hop with reflective padding of
/// half a window, giving `ceil(len / 160)` frames.
pub fn mel_energies(audio: &AudioBuffer) -> Result<MelEnergies, AudioError> {
    check_input(audio)?;
    let samples = audio.samples();
    let n_frames = samples.len().div_ceil(HOP_LENGTH);
    let pad = (N_FFT / 2) as i64;
    let window: Vec<f64> = (0..N_FFT)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / N_FFT as f64).cos())
        .collect();
    let fft = fft_plan();
    let bank = filter_bank();

    let mut data = vec![0.0; n_frames * N_MELS];
    let mut buf = vec![Complex::new(0.0, 0.0); N_FFT];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut power = vec![0.0; N_FREQS];
    for (t, out) in data.chunks_exact_mut(N_MELS).enumerate() {
        let start = (t * HOP_LENGTH) as i64 - pad;
        for (n, slot) in buf.iter_mut().enumerate() {
            let idx = reflect_index(start + n as i64, samples.len());
            *slot = Complex::new(samples[idx] as f64 * window[n], 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for (p, c) in power.iter_mut().zip(&buf[..N_FREQS]) {
            *p = c.norm_sqr();
        }
        bank.apply(&power, out);
    }
    Ok(MelEnergies { data, n_frames })
}

/// Log compression and global scaling of pre-log Mel energies into [-1, 1].
pub(crate) fn normalize_energies(energies: &MelEnergies) -> MelSpectrogram {
    let logs: Vec<f64> = energies
        .data
        .iter()
        .map(|&e| e.max(LOG_FLOOR).log10())
        .collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let top = max.max(LOG_FLOOR.log10() + DYNAMIC_RANGE);
    let bottom = top - DYNAMIC_RANGE;
    let data = logs
        .iter()
        .map(|&l| ((l.max(bottom) - bottom) * 2.0 / DYNAMIC_RANGE - 1.0) as f32)
        .collect();
    MelSpectrogram {
        data,
        n_frames: energies.n_frames,
    }
}

/// 80-channel log-Mel spectrogram (25 ms Hann windows, 10 ms hop), clamped
/// to an 8-decade range below its maximum and scaled into [-1, 1].
pub fn log_mel_spectrogram(audio: &AudioBuffer) -> Result<MelSpectrogram, AudioError> {
    Ok(normalize_energies(&mel_energies(audio)?))
}

/// Row-major [n_frames x 80] normalised log-Mel features.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    data: Vec<f32>,
    n_frames: usize,
}

impl MelSpectrogram {
    pub fn from_data(data: Vec<f32>, n_frames: usize) -> Result<Self, AudioError> {
        if data.len() != n_frames * N_MELS {
            return Err(AudioError::Format(format!(
                "{} values do not form {n_frames} frames of {N_MELS} channels",
                data.len()
            )));
        }
        Ok(Self { data, n_frames })
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn n_mels(&self) -> usize {
        N_MELS
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn frame(&self, i: usize) -> &[f32] {
        &self.data[i * N_MELS..(i + 1) * N_MELS]
    }

    /// Frames `start..start + len`, clipped to the available range.
    pub fn slice(&self, start: usize, len: usize) -> MelSpectrogram {
        let start = start.min(self.n_frames);
        let end = (start + len).min(self.n_frames);
        MelSpectrogram {
            data: self.data[start * N_MELS..end * N_MELS].to_vec(),
            n_frames: end - start,
        }
    }

    /// Truncates to `target` frames or right-pads with [`SILENCE_VALUE`].
    pub fn pad_or_trim(&self, target: usize) -> MelSpectrogram {
        let mut data = self.data[..self.n_frames.min(target) * N_MELS].to_vec();
        data.resize(target * N_MELS, SILENCE_VALUE);
        MelSpectrogram {
            data,
            n_frames: target,
        }
    }
}

/// Writes the regression format: `MELSPEC1`, n_frames and n_mels as u32 LE,
/// then row-major f32 LE values.
pub fn write_golden(path: impl AsRef<Path>, mel: &MelSpectrogram) -> Result<(), AudioError> {
    let mut out = Vec::with_capacity(16 + mel.data.len() * 4);
    out.extend_from_slice(GOLDEN_MAGIC);
    out.extend_from_slice(&(mel.n_frames as u32).to_le_bytes());
    out.extend_from_slice(&(N_MELS as u32).to_le_bytes());
    for v in &mel.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    fs::File::create(path)?.write_all(&out)?;
    Ok(())
}

pub fn read_golden(path: impl AsRef<Path>) -> Result<MelSpectrogram, AudioError> {
    let bytes = fs::read(path)?;
    if bytes.len() < 16 || &bytes[..8] != GOLDEN_MAGIC {
        return Err(AudioError::Format("missing MELSPEC1 header".into()));
    }
    let n_frames = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let n_mels = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    if n_mels != N_MELS {
        return Err(AudioError::Format(format!("expected {N_MELS} mels, file has {n_mels}")));
    }
    let body = &bytes[16..];
    if body.len() != n_frames * n_mels * 4 {
        return Err(AudioError::Format("golden body length mismatch".into()));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    MelSpectrogram::from_data(data, n_frames)
}
