use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{mean_power, AudioBuffer, AudioError};

#[derive(Debug, Clone, PartialEq)]
pub enum NoiseKind {
    /// Seeded Gaussian white noise.
    White,
    /// An external noise recording, tiled or truncated to the signal length.
    Sample(AudioBuffer),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub snr_db: f64,
}

/// Gain `g` such that `10 log10(p_signal / (g^2 p_noise)) = snr_db`.
pub fn noise_gain(p_signal: f64, p_noise: f64, snr_db: f64) -> f64 {
    (p_signal / (p_noise * 10f64.powf(snr_db / 10.0))).sqrt()
}

/// Empirical SNR in dB between a signal and the noise added to it.
pub fn measure_snr_db(signal: &[f32], noise: &[f64]) -> f64 {
    let ps = mean_power(signal);
    let pn = noise.iter().map(|n| n * n).sum::<f64>() / noise.len() as f64;
    10.0 * (ps / pn).log10()
}

pub fn white_noise(len: usize, seed: u64) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len)
        .map(|_| {
            let v: f64 = StandardNormal.sample(&mut rng);
            v as f32
        })
        .collect()
}

/// Adds `noise` (tiled or truncated to the signal length) scaled so that the
/// per-example SNR equals `snr_db`. Powers are mean squared amplitudes over
/// the full example. Returns the mixture and the applied gain.
pub fn mix_at_snr(
    signal: &AudioBuffer,
    noise: &[f32],
    snr_db: f64,
) -> Result<(AudioBuffer, f64), AudioError> {
    if !snr_db.is_finite() {
        return Err(AudioError::InvalidSnr(snr_db));
    }
    let p_signal = signal.power();
    if p_signal == 0.0 {
        return Err(AudioError::Degenerate("signal is silent".into()));
    }
    if noise.is_empty() {
        return Err(AudioError::Degenerate("noise is empty".into()));
    }
    let tiled: Vec<f32> = noise.iter().copied().cycle().take(signal.len()).collect();
    let p_noise = mean_power(&tiled);
    if p_noise == 0.0 {
        return Err(AudioError::Degenerate("noise is silent".into()));
    }
    let gain = noise_gain(p_signal, p_noise, snr_db);
    let mixed = signal
        .samples()
        .iter()
        .zip(&tiled)
        .map(|(&s, &n)| (s as f64 + gain * n as f64) as f32)
        .collect();
    Ok((AudioBuffer::new(mixed, signal.sample_rate())?, gain))
}

/// Injects noise at the requested SNR. White noise is drawn from `seed`, so
/// the output is bit-identical for a fixed seed.
pub fn add_noise(audio: &AudioBuffer, spec: &NoiseSpec, seed: u64) -> Result<AudioBuffer, AudioError> {
    let noise = match &spec.kind {
        NoiseKind::White => white_noise(audio.len(), seed),
        NoiseKind::Sample(n) => {
            if n.sample_rate() != audio.sample_rate() {
                return Err(AudioError::SampleRateMismatch {
                    expected: audio.sample_rate(),
                    actual: n.sample_rate(),
                });
            }
            n.samples().to_vec()
        }
    };
    mix_at_snr(audio, &noise, spec.snr_db).map(|(a, _)| a)
}
