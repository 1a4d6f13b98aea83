mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wisp_core::decode::{
    beam_decode, compression_ratio, decode_with_fallback, greedy_decode, log_softmax, needs_fallback,
    run_with_fallback, DecodeOptions, DecodeResult, FnDecoder,
};
use wisp_core::vocab::{Task, TaskSpec, Vocabulary};

fn prompt(v: &Vocabulary, timestamps: bool) -> Vec<u32> {
    v.build_prompt(&TaskSpec::new(Some("en"), Task::Transcribe, timestamps), 0).unwrap()
}

fn options(beam: usize, timestamps: bool, max_tokens: usize) -> DecodeOptions {
    let mut o = DecodeOptions {
        beam_size: beam,
        max_tokens: Some(max_tokens),
        ..Default::default()
    };
    o.task.timestamps = timestamps;
    o
}

#[test]
fn beam_of_one_is_greedy() {
    let v = Vocabulary::byte_level();
    for seed in 0..20 {
        let ts = seed % 2 == 0;
        let m = common::hashed_decoder(&v, seed, 448);
        let p = prompt(&v, ts);
        let g = greedy_decode(&m, &v, &p, &options(1, ts, 30)).unwrap();
        let b = beam_decode(&m, &v, &p, &options(1, ts, 30)).unwrap();
        assert_eq!(g.tokens, b.tokens, "seed {seed}");
        assert_eq!(g.finished, b.finished);
    }
}

#[test]
fn wider_beam_never_scores_below_greedy() {
    let v = Vocabulary::byte_level();
    for seed in 0..20 {
        let m = common::hashed_decoder(&v, 1_000 + seed, 448);
        let p = prompt(&v, true);
        let g = greedy_decode(&m, &v, &p, &options(1, true, 12)).unwrap();
        let b = beam_decode(&m, &v, &p, &options(5, true, 12)).unwrap();
        assert!(b.sum_logprob >= g.sum_logprob - 1e-9, "seed {seed}: {} < {}", b.sum_logprob, g.sum_logprob);
    }
}

/// Three content steps over tokens {a, b, c} and end-of-transcript. Greedy
/// commits to `a` first, but the best sequence starts with `b`.
#[test]
fn beam_finds_the_best_short_sequence() {
    let v = Vocabulary::byte_level();
    let eot = v.specials().eot;
    let (a, b, c) = (b'a' as u32, b'b' as u32, b'c' as u32);
    let n = v.len();
    let p = prompt(&v, false);
    let prompt_len = p.len();
    let table = move |content: &[u32]| -> Vec<(u32, f32)> {
        match content {
            [] => vec![(a, 0.0), (b, -0.3), (c, -3.0), (eot, -5.0)],
            [x] if *x == a => vec![(a, -1.5), (b, -1.5), (c, -1.5), (eot, -1.5)],
            [x] if *x == b => vec![(a, -4.0), (b, 0.0), (c, -4.0), (eot, -4.0)],
            [_] => vec![(a, 0.0), (b, 0.0), (c, 0.0), (eot, 0.0)],
            [_, y] if *y == b => vec![(a, -3.0), (b, -3.0), (c, -3.0), (eot, 0.0)],
            _ => vec![(a, 0.0), (b, -1.0), (c, -2.0), (eot, -0.5)],
        }
    };
    let model = FnDecoder::new(n, 448, move |history: &[u32]| {
        let mut logits = vec![f32::NEG_INFINITY; n];
        for (t, l) in table(&history[prompt_len.min(history.len())..]) {
            logits[t as usize] = l;
        }
        logits
    });

    // Enumerate every sequence of at most three content tokens.
    let lp = |content: &[u32], next: u32| -> f64 {
        let mut logits = vec![f32::NEG_INFINITY; n];
        for (t, l) in table(content) {
            logits[t as usize] = l;
        }
        log_softmax(&logits)[next as usize]
    };
    let mut best: (f64, Vec<u32>) = (f64::NEG_INFINITY, vec![]);
    let mut stack = vec![(vec![], 0.0)];
    while let Some((seq, score)) = stack.pop() {
        for t in [a, b, c, eot] {
            let s = score + lp(&seq, t);
            if t == eot || seq.len() + 1 == 3 {
                let mut done = seq.clone();
                if t != eot {
                    done.push(t);
                }
                if s > best.0 {
                    best = (s, done);
                }
            } else {
                let mut next = seq.clone();
                next.push(t);
                stack.push((next, s));
            }
        }
    }
    assert_eq!(best.1, vec![b, b]);

    let opts = DecodeOptions {
        initial_timestamp_max: None,
        ..options(5, false, 3)
    };
    let beam = beam_decode(&model, &v, &p, &opts).unwrap();
    assert_eq!(beam.tokens, best.1);
    assert!((beam.sum_logprob - best.0).abs() < 1e-9);
    let greedy = greedy_decode(&model, &v, &p, &options(1, false, 3)).unwrap();
    assert_eq!(greedy.tokens[0], a);
    assert!(greedy.sum_logprob < beam.sum_logprob);
}

fn canned(avg: f64, ratio: f64) -> DecodeResult {
    DecodeResult {
        tokens: vec![],
        text: String::new(),
        sum_logprob: avg,
        avg_logprob: avg,
        no_speech_prob: 0.0,
        temperature: 0.0,
        compression_ratio: ratio,
        finished: true,
        truncated: false,
        low_quality: false,
    }
}

#[test]
fn fallback_quadrants() {
    let o = DecodeOptions::default();
    for (avg, ratio, fires) in [
        (-0.5, 1.5, false),
        (-1.5, 1.5, true),
        (-0.5, 3.0, true),
        (-1.5, 3.0, true),
        (-1.0, 2.4, false),
        (-1.0 - 1e-12, 2.4, true),
        (-1.0, 2.4 + 1e-12, true),
    ] {
        assert_eq!(needs_fallback(&canned(avg, ratio), &o), fires, "{avg} {ratio}");
        let mut temps = Vec::new();
        let r = run_with_fallback(&o, |opts| {
            temps.push(opts.temperature);
            Ok(canned(avg, ratio))
        })
        .unwrap();
        assert_eq!(r.low_quality, fires);
        assert_eq!(temps.len(), if fires { 6 } else { 1 });
    }
}

#[test]
fn grammar_fuzz() {
    let v = Vocabulary::byte_level();
    let sp = v.specials().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut decodes = 0;
    while decodes < 1000 {
        let ts = rng.gen_bool(0.8);
        let m = common::hashed_decoder(&v, rng.gen(), 448);
        let mut o = options(rng.gen_range(1..4), ts, rng.gen_range(1..24));
        o.temperature = [0.0, 0.0, 0.5, 1.0, 2.0][rng.gen_range(0..5)];
        o.initial_timestamp_max = [None, Some(1.0), Some(0.1)][rng.gen_range(0..3)];
        o.seed = rng.gen();
        let p = prompt(&v, ts);
        let r = if o.temperature == 0.0 {
            beam_decode(&m, &v, &p, &o)
        } else {
            greedy_decode(&m, &v, &p, &o)
        }
        .unwrap();
        let initial = o.initial_timestamp_max.map(|s| (s * 50.0).round() as u32);
        if let Some(msg) = common::grammar_violation(&sp, &r.tokens, ts, initial) {
            panic!("{msg}: {:?}", r.tokens);
        }
        let mut full = p.clone();
        full.extend(&r.tokens);
        full.push(sp.eot);
        v.parse_transcript(&full).unwrap();
        decodes += 1;
    }
}

#[test]
fn fallback_decoding_is_seeded() {
    let v = Vocabulary::byte_level();
    let m = common::hashed_decoder(&v, 4, 448);
    let p = prompt(&v, true);
    let o = DecodeOptions {
        seed: 21,
        logprob_threshold: Some(0.0),
        ..options(2, true, 10)
    };
    let a = decode_with_fallback(&m, &v, &p, &o).unwrap();
    assert!(a.low_quality);
    assert_eq!(a.temperature, 1.0);
    assert_eq!(a, decode_with_fallback(&m, &v, &p, &o).unwrap());
}

#[test]
fn repetition_raises_compression_ratio() {
    let mut last = 0.0;
    for n in [1, 2, 4, 8, 16, 32, 64] {
        let r = compression_ratio(&"the cat sat on the mat. ".repeat(n));
        assert!(r >= last, "{n}: {r} < {last}");
        last = r;
    }
    assert!(last > 2.4);
    assert!(compression_ratio("a quick brown fox") < 2.4);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sampling_never_picks_masked_tokens(seed in any::<u64>(), t in 0.1f64..3.0, allowed in prop::collection::btree_set(0u32..256, 1..6)) {
        let v = Vocabulary::byte_level();
        let n = v.len();
        let eot = v.specials().eot;
        let allowed2 = allowed.clone();
        let m = FnDecoder::new(n, 448, move |h: &[u32]| {
            let mut l = vec![f32::NEG_INFINITY; n];
            for &a in &allowed2 {
                l[a as usize] = (h.len() as u32 * 7 + a) as f32 % 3.0;
            }
            l[eot as usize] = -2.0;
            l
        });
        let o = DecodeOptions { temperature: t, seed, ..options(1, false, 20) };
        let r = greedy_decode(&m, &v, &prompt(&v, false), &o).unwrap();
        prop_assert!(r.tokens.iter().all(|x| allowed.contains(x)));
    }
}
