use std::f64::consts::PI;

use super::{AudioBuffer, AudioError};

const HALF_TAPS: i64 = 32;
const KAISER_BETA: f64 = 8.0;
/// Rational ratios with at most this many output phases use a precomputed
/// polyphase table; anything else evaluates the kernel per sample.
const MAX_TABLE_PHASES: u64 = 4096;

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..64 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

struct Kernel {
    cutoff: f64,
    i0_beta: f64,
}

impl Kernel {
    fn new(cutoff: f64) -> Self {
        Self {
            cutoff,
            i0_beta: bessel_i0(KAISER_BETA),
        }
    }

    fn kaiser(&self, x: f64) -> f64 {
        let r = x / HALF_TAPS as f64;
        if r.abs() > 1.0 {
            return 0.0;
        }
        bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / self.i0_beta
    }

    /// Normalised 64-tap weights for an output sample whose position in the
    /// input lies `frac` samples after input index `base`.
    fn weights(&self, frac: f64) -> [f64; (2 * HALF_TAPS) as usize] {
        let mut w = [0.0; (2 * HALF_TAPS) as usize];
        let mut sum = 0.0;
        for (j, slot) in w.iter_mut().enumerate() {
            let offset = j as i64 - (HALF_TAPS - 1);
            let x = frac - offset as f64;
            let v = self.cutoff * sinc(self.cutoff * x) * self.kaiser(x);
            *slot = v;
            sum += v;
        }
        if sum != 0.0 {
            for v in w.iter_mut() {
                *v /= sum;
            }
        }
        w
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Band-limited resampling with a Kaiser-windowed sinc (beta 8, 64 taps).
///
/// Output length is `round(len * target / source)`, so duration is kept to
/// within one output sample. Equal rates return the input unchanged.
pub fn resample(audio: &AudioBuffer, target_rate: u32) -> Result<AudioBuffer, AudioError> {
    if target_rate == 0 {
        return Err(AudioError::InvalidSampleRate(target_rate));
    }
    let source_rate = audio.sample_rate();
    if source_rate == target_rate {
        return Ok(audio.clone());
    }

    let input = audio.samples();
    let g = gcd(source_rate as u64, target_rate as u64);
    let up = target_rate as u64 / g;
    let down = source_rate as u64 / g;
    let out_len = ((input.len() as u64 * up + down / 2) / down) as usize;

    let kernel = Kernel::new((target_rate as f64 / source_rate as f64).min(1.0));
    let table: Option<Vec<_>> = (up <= MAX_TABLE_PHASES)
        .then(|| (0..up).map(|p| kernel.weights(p as f64 / up as f64)).collect());

    let n_in = input.len() as i64;
    let mut out = Vec::with_capacity(out_len);
    for n in 0..out_len as u64 {
        // Exact rational position n * down / up.
        let num = n * down;
        let base = (num / up) as i64;
        let phase = num % up;
        let owned;
        let w = match &table {
            Some(t) => &t[phase as usize],
            None => {
                owned = kernel.weights(phase as f64 / up as f64);
                &owned
            }
        };
        let mut acc = 0.0f64;
        for (j, &wj) in w.iter().enumerate() {
            let idx = base + j as i64 - (HALF_TAPS - 1);
            if idx >= 0 && idx < n_in {
                acc += wj * input[idx as usize] as f64;
            }
        }
        out.push(acc as f32);
    }
    AudioBuffer::new(out, target_rate)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, rate: u32, len: usize) -> AudioBuffer {
        let s = (0..len)
            .map(|i| (0.5 * (2.0 * PI * freq * i as f64 / rate as f64).sin()) as f32)
            .collect();
        AudioBuffer::new(s, rate).unwrap()
    }

    /// Frequency (Hz) of the largest-magnitude DFT bin, computed naively.
    fn dft_peak_hz(x: &[f32], rate: u32) -> f64 {
        let n = x.len();
        let mut best = (0usize, -1.0f64);
        for k in 1..n / 2 {
            let (mut re, mut im) = (0.0, 0.0);
            for (i, &v) in x.iter().enumerate() {
                let a = -2.0 * PI * (k * i) as f64 / n as f64;
                re += v as f64 * a.cos();
                im += v as f64 * a.sin();
            }
            let m = re * re + im * im;
            if m > best.1 {
                best = (k, m);
            }
        }
        best.0 as f64 * rate as f64 / n as f64
    }

    #[test]
    fn identity_rate() {
        let a = sine(440.0, 16_000, 1000);
        assert_eq!(resample(&a, 16_000).unwrap(), a);
    }

    #[test]
    fn three_to_one() {
        let a = sine(440.0, 48_000, 48_000);
        let b = resample(&a, 16_000).unwrap();
        assert_eq!(b.len(), 16_000);
        assert_eq!(b.sample_rate(), 16_000);
    }

    #[test]
    fn upsampling_keeps_peak_frequency() {
        let a = sine(1000.0, 8_000, 800);
        let b = resample(&a, 16_000).unwrap();
        assert_eq!(b.len(), 1600);
        assert_eq!(dft_peak_hz(&b.samples()[..1600], 16_000), 1000.0);
    }

    #[test]
    fn downsampling_keeps_peak_frequency() {
        let a = sine(1500.0, 44_100, 4410);
        let b = resample(&a, 16_000).unwrap();
        assert_eq!(b.len(), 1600);
        assert_eq!(dft_peak_hz(b.samples(), 16_000), 1500.0);
    }

    #[test]
    fn dc_gain_is_unity_in_the_interior() {
        let a = AudioBuffer::new(vec![0.5; 4000], 22_050).unwrap();
        let b = resample(&a, 16_000).unwrap();
        for &v in &b.samples()[100..b.len() - 100] {
            assert!((v - 0.5).abs() < 1e-5, "{v}");
        }
    }

    #[test]
    fn repeated_resample_to_same_rate_is_idempotent() {
        let a = sine(300.0, 44_100, 4410);
        let once = resample(&a, 16_000).unwrap();
        let twice = resample(&once, 16_000).unwrap();
        let rms = (once
            .samples()
            .iter()
            .zip(twice.samples())
            .map(|(x, y)| ((x - y) as f64).powi(2))
            .sum::<f64>()
            / once.len() as f64)
            .sqrt();
        assert!(rms < 1e-6);
    }

    #[test]
    fn zero_target_rejected() {
        let a = sine(300.0, 8_000, 10);
        assert!(matches!(resample(&a, 0), Err(AudioError::InvalidSampleRate(0))));
    }

    #[test]
    fn bessel_matches_known_value() {
        // I0(1) = 1.2660658777520082
        assert!((bessel_i0(1.0) - 1.2660658777520082).abs() < 1e-14);
    }
}
