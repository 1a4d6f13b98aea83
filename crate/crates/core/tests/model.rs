mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wisp_core::audio::MelSpectrogram;
use wisp_core::model::{tensor_shapes, AudioFeatures, ModelConfig, ModelWeights, Whisper, PRESETS};
use wisp_core::vocab::{Vocabulary, LANGUAGES};

const VOCAB: usize = 1863;

fn toy(width: usize, heads: usize) -> ModelConfig {
    ModelConfig {
        name: "toy".into(),
        n_layers: 2,
        width,
        heads,
        vocab_size: VOCAB,
        n_text_ctx: 64,
        n_mels: 80,
        n_audio_ctx: 1500,
    }
}

fn features(width: usize, n: usize, seed: u64) -> AudioFeatures {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    AudioFeatures::new((0..n * width).map(|_| rng.gen_range(-1.0..1.0)).collect(), n, width).unwrap()
}

fn random_mel(frames: usize, seed: u64) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..frames * 80).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn max_diff(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f32::max)
}

#[test]
fn preset_shapes() {
    for (name, layers, width, heads) in PRESETS {
        let cfg = ModelConfig::preset(name, 51_865).unwrap();
        assert_eq!((cfg.n_layers, cfg.width, cfg.heads), (layers, width, heads));
        let shapes = tensor_shapes(&cfg);
        let get = |n: &str| shapes.iter().find(|(k, _)| k == n).map(|(_, s)| s.clone());
        assert_eq!(get("decoder.token_embedding.weight"), Some(vec![51_865, width]));
        assert_eq!(get("decoder.positional_embedding"), Some(vec![448, width]));
        assert_eq!(get("encoder.conv2.weight"), Some(vec![width, width, 3]));
        // Output logits reuse the token embedding.
        assert!(shapes.iter().all(|(n, _)| !n.contains("proj") && !n.contains("head")));
        let blocks = shapes.iter().filter(|(n, _)| n.ends_with("attn_ln.weight") && !n.contains("cross")).count();
        assert_eq!(blocks, 2 * layers);
    }
}

#[test]
fn encoder_halves_frames() {
    let m = Whisper::random(&toy(32, 4), 1).unwrap();
    for frames in [2, 10, 64, 400] {
        let f = m.encode_frames(&random_mel(frames, 3), frames).unwrap();
        assert_eq!(f.n_ctx(), frames / 2);
    }
    let mel = MelSpectrogram::from_data(random_mel(3000, 4), 3000).unwrap();
    let f = m.encode(&mel).unwrap();
    assert_eq!((f.n_ctx(), f.width()), (1500, 32));
    assert!(f.data().iter().all(|v| v.is_finite()));
    assert_eq!(m.encode(&mel).unwrap().data(), f.data());
}

#[test]
fn cache_matches_recompute() {
    let m = Whisper::random(&toy(64, 4), 2).unwrap();
    let audio = features(64, 40, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..10 {
        let len = rng.gen_range(1..40);
        let tokens: Vec<u32> = (0..len).map(|_| rng.gen_range(0..VOCAB as u32)).collect();
        let full = m.decode_all(&tokens, &audio).unwrap();
        let mut cache = m.new_cache(&audio).unwrap();
        let mut pos = 0;
        while pos < len {
            let chunk = rng.gen_range(1..=(len - pos).min(5));
            let logits = m.decode_step(&tokens[pos..pos + chunk], &mut cache).unwrap();
            pos += chunk;
            let row = &full[(pos - 1) * VOCAB..pos * VOCAB];
            assert!(max_diff(&logits, row) < 1e-4);
        }
        assert_eq!(cache.len(), len);
    }
}

#[test]
fn later_tokens_do_not_leak_backwards() {
    let m = Whisper::random(&toy(64, 4), 3).unwrap();
    let audio = features(64, 20, 7);
    let a = [5u32, 900, 17, 42, 1000];
    let mut b = a;
    b[4] = 77;
    let (la, lb) = (m.decode_all(&a, &audio).unwrap(), m.decode_all(&b, &audio).unwrap());
    assert_eq!(&la[..4 * VOCAB], &lb[..4 * VOCAB]);
    assert_ne!(&la[4 * VOCAB..], &lb[4 * VOCAB..]);
}

#[test]
fn positions_are_applied() {
    let m = Whisper::random(&toy(64, 4), 4).unwrap();
    let audio = features(64, 20, 8);
    let l = m.decode_all(&[300, 300], &audio).unwrap();
    assert!(max_diff(&l[..VOCAB], &l[VOCAB..]) > 1e-3);
}

#[test]
fn embedding_is_tied_to_logits() {
    let cfg = toy(32, 4);
    let base = ModelWeights::random(&cfg, 5).unwrap();
    let mut bumped = base.clone();
    let row = 123;
    bumped.data_mut("decoder.token_embedding.weight").unwrap()[row * 32..(row + 1) * 32]
        .iter_mut()
        .for_each(|v| *v += 0.5);
    let (m0, m1) = (Whisper::new(base), Whisper::new(bumped));
    let audio = features(32, 10, 9);

    // Inputs that avoid the row: only that logit column moves.
    let (l0, l1) = (m0.decode_all(&[7, 8], &audio).unwrap(), m1.decode_all(&[7, 8], &audio).unwrap());
    for (i, (a, b)) in l0.iter().zip(&l1).enumerate() {
        if i % VOCAB == row {
            assert_ne!(a, b);
        } else {
            assert_eq!(a, b);
        }
    }
    // Feeding the row changes the hidden state too.
    let (l0, l1) = (m0.decode_all(&[row as u32], &audio).unwrap(), m1.decode_all(&[row as u32], &audio).unwrap());
    assert!((0..VOCAB).filter(|&i| i != row).any(|i| l0[i] != l1[i]));
}

#[test]
fn language_distribution_of_random_models_is_flat() {
    let mut mean = vec![0.0; LANGUAGES.len()];
    for seed in 0..10 {
        let m = Whisper::random(&toy(64, 4), 100 + seed).unwrap();
        let p = m.detect_language(&features(64, 30, seed)).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        for (acc, q) in mean.iter_mut().zip(&p) {
            *acc += q / 10.0;
        }
    }
    let uniform = 1.0 / LANGUAGES.len() as f64;
    for q in mean {
        assert!((q - uniform).abs() < 0.05, "{q}");
    }
}

#[test]
fn no_speech_probability_matches_manual_step() {
    let m = Whisper::random(&toy(32, 4), 6).unwrap();
    let v = Vocabulary::byte_level();
    let sp = v.specials();
    let audio = features(32, 10, 10);
    let prompt = [sp.prev, 65, 66, sp.sot, sp.language("en").unwrap(), sp.transcribe];
    let p = m.no_speech_probability(&audio, &prompt).unwrap();
    let logits = m.decode_all(&prompt[..4], &audio).unwrap();
    let last = &logits[3 * VOCAB..];
    let max = last.iter().cloned().fold(f32::NEG_INFINITY, f32::max) as f64;
    let z: f64 = last.iter().map(|&l| (l as f64 - max).exp()).sum();
    let manual = (last[sp.no_speech as usize] as f64 - max).exp() / z;
    assert!((p - manual).abs() < 1e-6);
    assert!((0.0..=1.0).contains(&p));
}

#[test]
fn weight_file_round_trip_and_truncation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy(32, 4);
    let w = ModelWeights::random(&cfg, 7).unwrap();
    let path = dir.path().join("w.bin");
    w.save(&path).unwrap();
    let back = ModelWeights::load(&path, &cfg).unwrap();
    assert_eq!(back.to_bytes(), w.to_bytes());
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
    let err = ModelWeights::load(&path, &cfg).unwrap_err().to_string();
    assert!(err.contains("decoder") || err.contains("encoder"), "{err}");
}

#[test]
fn base_preset_stays_finite() {
    let cfg = ModelConfig::preset("base", VOCAB).unwrap();
    let m = Whisper::random(&cfg, 8).unwrap();
    let mel = MelSpectrogram::from_data(random_mel(3000, 11), 3000).unwrap();
    let f = m.encode(&mel).unwrap();
    assert_eq!(f.n_ctx(), 1500);
    let v = Vocabulary::byte_level();
    let logits = m
        .decode_all(&[v.specials().sot, v.specials().language("en").unwrap()], &f)
        .unwrap();
    assert!(logits.iter().all(|x| x.is_finite()));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn softmax_rows_normalised(tokens in prop::collection::vec(0u32..VOCAB as u32, 1..20), seed in 0u64..4) {
        let m = Whisper::random(&toy(32, 4), seed).unwrap();
        let logits = m.decode_all(&tokens, &features(32, 12, seed)).unwrap();
        for row in logits.chunks(VOCAB) {
            let p = wisp_core::model::softmax_f64(row);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-5);
        }
    }
}
