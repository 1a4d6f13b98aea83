#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FRAGMENTS: &[&str] = &[
    "one", "two", "twenty", "first", "second", "hundred", "hundredth", "thousand", "million",
    "point", "five", "zero", "and", "dollars", "dollar", "cents", "pence", "pounds", "euros",
    "percent", "per", "cent", "um", "uh", "hmm", "colour", "theatre", "you're", "won't",
    "can't", "he's", "john's", "y'all", "i'd've", "mr", "dr.", "$", "¢", "£", "€", "%", ".",
    ",", "'", "’", "-", "—", "!", "?", "[", "]", "(", ")", "<", ">", "\"", ";", ":", "/", "#",
    "0", "5", "12", "3.5", "1,000", "007", "21st", "$68", "¢50", "5%", " ", "  ", "\t", "\n",
    "A", "Z", "é", "ü", "ß", "æ", "ø", "ﬁ", "ｆ", "Σ", "İ", "ñ", "\u{301}", "\u{300}", "你",
    "好", "の", "ส", "\u{E31}", "ສ", "မ", "안", "😀", "∑", "½", "²", "ⅷ", "①", "_",
];

/// Random strings built from a mix of number words, contractions,
/// punctuation, scripts and combining marks.
pub fn fuzz_strings(n: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let len = rng.gen_range(0..14);
            let mut s = String::new();
            for _ in 0..len {
                if rng.gen_bool(0.15) {
                    s.push(char::from_u32(rng.gen_range(0x20..0x30000)).unwrap_or('?'));
                } else {
                    s.push_str(FRAGMENTS[rng.gen_range(0..FRAGMENTS.len())]);
                }
                if rng.gen_bool(0.6) {
                    s.push(' ');
                }
            }
            s
        })
        .collect()
}

pub struct GoldenCase {
    pub mode: String,
    pub raw: String,
    pub expected: String,
}

pub fn golden_corpus() -> Vec<GoldenCase> {
    let text = include_str!("../data/normalizer_golden.tsv");
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.is_empty())
        .map(|l| {
            let mut parts = l.splitn(3, '\t');
            let mut next = || parts.next().expect("three columns").to_string();
            GoldenCase {
                mode: next(),
                raw: next(),
                expected: next(),
            }
        })
        .collect()
}

pub fn normalize_case(mode: &str, raw: &str) -> String {
    use wisp_core::normalize::{normalize_basic, normalize_english};
    match mode {
        "en" => normalize_english(raw),
        "basic" => normalize_basic(raw, None),
        lang => normalize_basic(raw, Some(lang)),
    }
}

/// Brute-force word edit distance: explores every alignment path without
/// memoisation. Only for short inputs.
pub fn brute_edit_distance(a: &[&str], b: &[&str]) -> usize {
    match (a.split_first(), b.split_first()) {
        (None, _) => b.len(),
        (_, None) => a.len(),
        (Some((x, ra)), Some((y, rb))) => {
            let sub = brute_edit_distance(ra, rb) + usize::from(x != y);
            let del = brute_edit_distance(ra, b) + 1;
            let ins = brute_edit_distance(a, rb) + 1;
            sub.min(del).min(ins)
        }
    }
}

/// Published English results: (dataset, baseline WER, new WER, printed RER).
pub const PUBLISHED_RER_ROWS: [(&str, f64, f64, f64); 14] = [
    ("LibriSpeech Clean", 2.7, 2.7, 0.0),
    ("Artie", 24.5, 6.2, 74.7),
    ("Common Voice", 29.9, 9.0, 69.9),
    ("Fleurs En", 14.6, 4.4, 69.9),
    ("Tedlium", 10.5, 4.0, 61.9),
    ("CHiME6", 65.8, 25.5, 61.2),
    ("VoxPopuli En", 17.9, 7.3, 59.2),
    ("CORAAL", 35.6, 16.2, 54.5),
    ("AMI IHM", 37.0, 16.9, 54.3),
    ("Switchboard", 28.3, 13.8, 51.2),
    ("CallHome", 34.8, 17.6, 49.4),
    ("WSJ", 7.7, 3.9, 49.4),
    ("AMI SDM1", 67.6, 36.4, 46.2),
    ("LibriSpeech Other", 6.2, 5.2, 16.1),
];
/// Printed average RER over the rows after LibriSpeech Clean.
pub const PUBLISHED_AVERAGE_RER: f64 = 55.2;

pub fn random_words(rng: &mut ChaCha8Rng, max_len: usize, alphabet: &[&'static str]) -> Vec<&'static str> {
    let n = rng.gen_range(0..=max_len);
    (0..n).map(|_| alphabet[rng.gen_range(0..alphabet.len())]).collect()
}

/// Small random model over the byte-level vocabulary (256 + 1607 tokens).
pub fn toy_asr(seed: u64) -> wisp_core::longform::Asr {
    use wisp_core::model::{ModelConfig, Whisper};
    use wisp_core::vocab::Vocabulary;
    let vocab = Vocabulary::byte_level();
    let cfg = ModelConfig {
        name: "toy".into(),
        n_layers: 2,
        width: 64,
        heads: 4,
        vocab_size: vocab.len(),
        n_text_ctx: 448,
        n_mels: 80,
        n_audio_ctx: 1500,
    };
    wisp_core::longform::Asr::new(Whisper::random(&cfg, seed).unwrap(), vocab).unwrap()
}

pub fn chirp(seconds: f64, seed: u64) -> wisp_core::audio::AudioBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f0: f64 = rng.gen_range(200.0..800.0);
    let n = (seconds * 16_000.0) as usize;
    let s = (0..n)
        .map(|i| {
            let t = i as f64 / 16_000.0;
            (0.3 * (2.0 * std::f64::consts::PI * (f0 + 300.0 * t) * t).sin()) as f32
        })
        .collect();
    wisp_core::audio::AudioBuffer::new(s, 16_000).unwrap()
}

/// Log-Mel reference built from first principles: O(n^2) DFT, explicit
/// Slaney-scale triangles, log10 with a 1e-10 floor, 8-decade clamp below
/// the maximum, affine map into [-1, 1]. Returns row-major [frames x 80].
pub fn naive_log_mel(samples: &[f32]) -> Vec<f64> {
    use std::f64::consts::PI;
    const N: usize = 400;
    const HOP: usize = 160;
    const BINS: usize = N / 2 + 1;

    fn to_mel(f: f64) -> f64 {
        if f < 1000.0 {
            3.0 * f / 200.0
        } else {
            15.0 + 27.0 * (f / 1000.0).ln() / 6.4f64.ln()
        }
    }
    fn from_mel(m: f64) -> f64 {
        if m < 15.0 {
            200.0 * m / 3.0
        } else {
            1000.0 * (6.4f64.ln() * (m - 15.0) / 27.0).exp()
        }
    }
    let top = to_mel(8000.0);
    let edges: Vec<f64> = (0..82).map(|i| from_mel(top * i as f64 / 81.0)).collect();
    let filters: Vec<Vec<f64>> = (0..80)
        .map(|m| {
            (0..BINS)
                .map(|k| {
                    let f = k as f64 * 40.0;
                    let (a, b, c) = (edges[m], edges[m + 1], edges[m + 2]);
                    let tri = if f <= a || f >= c {
                        0.0
                    } else if f <= b {
                        (f - a) / (b - a)
                    } else {
                        (c - f) / (c - b)
                    };
                    tri * 2.0 / (c - a)
                })
                .collect()
        })
        .collect();

    let len = samples.len() as i64;
    let reflect = |mut i: i64| {
        while i < 0 || i >= len {
            if i < 0 {
                i = -i;
            }
            if i >= len {
                i = 2 * (len - 1) - i;
            }
        }
        i as usize
    };
    let hann: Vec<f64> = (0..N).map(|n| (PI * n as f64 / N as f64).sin().powi(2)).collect();
    let cos: Vec<f64> = (0..N).map(|j| (2.0 * PI * j as f64 / N as f64).cos()).collect();
    let sin: Vec<f64> = (0..N).map(|j| (2.0 * PI * j as f64 / N as f64).sin()).collect();
    let frames = samples.len().div_ceil(HOP);
    let mut logs = Vec::with_capacity(frames * 80);
    for t in 0..frames {
        let x: Vec<f64> = (0..N)
            .map(|n| samples[reflect((t * HOP) as i64 + n as i64 - 200)] as f64 * hann[n])
            .collect();
        let power: Vec<f64> = (0..BINS)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (n, v) in x.iter().enumerate() {
                    let j = (k * n) % N;
                    re += v * cos[j];
                    im -= v * sin[j];
                }
                re * re + im * im
            })
            .collect();
        for f in &filters {
            let e: f64 = f.iter().zip(&power).map(|(w, p)| w * p).sum();
            logs.push(e.max(1e-10).log10());
        }
    }
    let max = logs.iter().cloned().fold(-10.0 + 8.0, f64::max);
    logs.iter().map(|&l| (l.max(max - 8.0) - max) / 4.0 + 1.0).collect()
}

/// A decoder whose logits are pseudo-random functions of the whole token
/// history. End-of-transcript gets a boost so decodes finish.
pub fn hashed_decoder(
    vocab: &wisp_core::vocab::Vocabulary,
    seed: u64,
    n_text_ctx: usize,
) -> wisp_core::decode::FnDecoder<impl Fn(&[u32]) -> Vec<f32>> {
    use std::hash::{Hash, Hasher};
    let n = vocab.len();
    let eot = vocab.specials().eot as usize;
    wisp_core::decode::FnDecoder::new(n, n_text_ctx, move |history: &[u32]| {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        (seed, history).hash(&mut h);
        let mut rng = ChaCha8Rng::seed_from_u64(h.finish());
        let mut logits: Vec<f32> = (0..n).map(|_| rng.gen_range(-4.0f32..4.0)).collect();
        logits[eot] += 3.0;
        logits
    })
}

/// Checks content tokens (everything after the prompt, end-of-transcript
/// stripped) against the transcript grammar. Returns the first violation.
pub fn grammar_violation(
    sp: &wisp_core::vocab::SpecialTokens,
    content: &[u32],
    timestamps: bool,
    initial_max_index: Option<u32>,
) -> Option<String> {
    let ts_base = sp.timestamp_base;
    let ts_end = ts_base + 1501;
    if let Some(t) = content.iter().find(|&&t| t >= sp.eot && t < ts_base) {
        return Some(format!("control token {t} in content"));
    }
    if let Some(t) = content.iter().find(|&&t| t >= ts_end) {
        return Some(format!("token {t} out of range"));
    }
    let is_ts = |t: u32| (ts_base..ts_end).contains(&t);
    if !timestamps {
        return content.iter().any(|&t| is_ts(t)).then(|| "timestamp without timestamps".into());
    }
    // 0: expect opening time, 1: just opened, 2: inside text, 3: just closed
    let mut state = 0;
    let mut last_time: Option<u32> = None;
    for (i, &t) in content.iter().enumerate() {
        if is_ts(t) {
            let idx = t - ts_base;
            if i == 0 && initial_max_index.is_some_and(|m| idx > m) {
                return Some(format!("initial timestamp {idx} too late"));
            }
            match state {
                0 | 3 => {
                    if let Some(prev) = last_time {
                        if idx < prev {
                            return Some(format!("time goes back at {i}"));
                        }
                    }
                    state = 1;
                }
                2 => {
                    if last_time.is_some_and(|p| idx <= p) {
                        return Some(format!("segment ends before it starts at {i}"));
                    }
                    state = 3;
                }
                _ => return Some(format!("two opening timestamps at {i}")),
            }
            last_time = Some(idx);
        } else {
            match state {
                1 | 2 => state = 2,
                _ => return Some(format!("text outside a segment at {i}")),
            }
        }
    }
    None
}

/// A byte-level BPE vocabulary with merges learned from a small mixed-script
/// corpus by plain pair counting.
pub fn trained_vocab(n_merges: usize) -> wisp_core::vocab::Vocabulary {
    const CORPUS: &str = "the quick brown fox jumps over the lazy dog. the other thing \
        is that there are three of them in the theatre, and they're singing and ringing. \
        naïve café résumé über straße. 你好世界，你好。こんにちは世界。 привет мир привет. \
        1234 1234 5678 the the the ing ing tion tion";
    let mut words: Vec<Vec<Vec<u8>>> = wisp_core::vocab::pretokenize(CORPUS)
        .into_iter()
        .map(|p| p.bytes().map(|b| vec![b]).collect())
        .collect();
    let mut tokens: Vec<Vec<u8>> = (0..=255u8).map(|b| vec![b]).collect();
    for _ in 0..n_merges {
        let mut counts: std::collections::BTreeMap<(Vec<u8>, Vec<u8>), usize> = Default::default();
        for w in &words {
            for pair in w.windows(2) {
                *counts.entry((pair[0].clone(), pair[1].clone())).or_default() += 1;
            }
        }
        let Some(((a, b), _)) = counts.into_iter().max_by(|x, y| x.1.cmp(&y.1).then(y.0.cmp(&x.0))) else {
            break;
        };
        let merged: Vec<u8> = [a.clone(), b.clone()].concat();
        for w in &mut words {
            let mut i = 0;
            while i + 1 < w.len() {
                if w[i] == a && w[i + 1] == b {
                    w[i] = merged.clone();
                    w.remove(i + 1);
                }
                i += 1;
            }
        }
        if !tokens.contains(&merged) {
            tokens.push(merged);
        }
    }
    wisp_core::vocab::Vocabulary::from_tokens(tokens).unwrap()
}
