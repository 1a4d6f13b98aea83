mod common;

use std::path::Path;

use proptest::prelude::*;
use wisp_core::audio::{write_wav_f32, MelSpectrogram};
use wisp_core::eval::{evaluate, EvalManifest, EvalOptions, ManifestEntry};
use wisp_core::longform::{
    ablation_matrix, ablation_stages, transcribe, transcribe_mel, ScriptedModel, TranscribeOptions, WindowScript,
};
use wisp_core::vocab::Vocabulary;

fn base_options() -> TranscribeOptions {
    let mut o = TranscribeOptions::default();
    o.decode.max_tokens = Some(12);
    o.decode.seed = 5;
    o
}

fn write_manifest(dir: &Path) -> EvalManifest {
    let rows = [("a.wav", "hello there", "alpha", 1.5, 1), ("b.wav", "good morning", "beta", 2.0, 2)];
    let mut text = String::new();
    for (name, reference, tag, secs, seed) in rows {
        write_wav_f32(dir.join(name), &common::chirp(secs, seed)).unwrap();
        text.push_str(&format!("{name}\t{reference}\t{tag}\ten\n"));
    }
    std::fs::write(dir.join("m.tsv"), text).unwrap();
    EvalManifest::load(dir.join("m.tsv")).unwrap()
}

#[test]
fn ablation_on_random_model() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_manifest(dir.path());
    let asr = common::toy_asr(3);
    let base = base_options();
    let eval = EvalOptions {
        jobs: Some(1),
        ..Default::default()
    };
    let table = ablation_matrix(&manifest, &asr, &base, &eval).unwrap();

    assert_eq!(table.rows.len(), 6);
    assert_eq!(table.tags, vec!["alpha".to_string(), "beta".to_string()]);
    for row in &table.rows {
        assert_eq!(row.by_tag.keys().cloned().collect::<Vec<_>>(), table.tags);
        assert_eq!(row.overall.items, 2);
        assert_eq!(row.overall.failed, 0);
    }
    let tsv = table.to_tsv();
    assert_eq!(tsv.lines().count(), 7);
    assert!(tsv.starts_with("stage\talpha\tbeta\toverall\n"));

    // The first row is plain greedy decoding.
    let greedy = ablation_stages(&base)[0].options.clone();
    let direct = |e: &ManifestEntry, a: &wisp_core::audio::AudioBuffer| {
        let mut o = greedy.clone();
        o.decode.task.language = e.language.clone();
        transcribe(a, &asr, &o).map(|t| t.text()).map_err(|e| e.to_string())
    };
    let report = evaluate(&manifest, &direct, &eval).unwrap();
    assert_eq!(report.overall, table.rows[0].overall);

    let again = ablation_matrix(&manifest, &asr, &base, &eval).unwrap();
    assert_eq!(again, table);
}

#[test]
fn last_stage_is_default_pipeline() {
    let base = TranscribeOptions::default();
    let stages = ablation_stages(&base);
    assert_eq!(stages.last().unwrap().options, base);
    assert_eq!(stages[0].options.decode.beam_size, 1);
    assert_eq!(stages[0].options.decode.temperatures, vec![0.0]);
}

#[derive(Debug, Clone)]
struct Window {
    /// Strictly increasing timestamp steps (20 ms each), paired into segments.
    steps: Vec<u32>,
    partial: bool,
    temperature: f64,
}

fn window() -> impl Strategy<Value = Window> {
    (0usize..4, any::<bool>(), prop::sample::select(vec![0.0, 0.2, 0.8]), any::<u64>()).prop_map(
        |(pairs, partial, temperature, seed)| {
            let n = pairs * 2 + partial as usize;
            let mut set = std::collections::BTreeSet::new();
            let mut x = seed;
            while set.len() < n {
                x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                set.insert(((x >> 33) % 1501) as u32);
            }
            Window {
                steps: set.into_iter().collect(),
                partial,
                temperature,
            }
        },
    )
}

fn script(v: &Vocabulary, w: &Window) -> WindowScript {
    let ts = |s: u32| v.timestamp_to_token(s as f64 * 0.02).unwrap();
    let mut tokens = Vec::new();
    for (i, s) in w.steps.iter().enumerate() {
        tokens.push(ts(*s));
        if i % 2 == 0 {
            tokens.push((b'a' + (i as u8 % 26)) as u32);
        }
    }
    if !w.partial {
        tokens.push(v.specials().eot);
    }
    WindowScript {
        tokens,
        avg_logprob: -0.3,
        no_speech_prob: 0.1,
        temperature: w.temperature,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn window_loop_invariants(windows in prop::collection::vec(window(), 1..5), seconds in 0.5f64..75.0) {
        let v = Vocabulary::byte_level();
        let scripts = windows.iter().map(|w| script(&v, w)).collect();
        let model = ScriptedModel::new(v, scripts);
        let frames = (seconds * 100.0).ceil() as usize;
        let mel = MelSpectrogram::from_data(vec![-1.0; frames * 80], frames).unwrap();
        let t = transcribe_mel(&mel, seconds, &model, &TranscribeOptions::default()).unwrap();

        // Windows start at zero, always move forward, and cover the audio.
        prop_assert_eq!(t.windows[0].offset_frames, 0);
        for pair in t.windows.windows(2) {
            let step = pair[1].offset_frames - pair[0].offset_frames;
            prop_assert!((2..=3000).contains(&step), "step {}", step);
        }
        prop_assert!(t.windows.last().unwrap().offset_frames + 3000 >= frames);
        prop_assert!(t.windows.last().unwrap().offset_frames < frames);

        // Segments are ordered, non-overlapping and inside the audio.
        for s in &t.segments {
            prop_assert!(0.0 <= s.start && s.start <= s.end && s.end <= seconds + 1e-9, "{:?}", s);
        }
        for pair in t.segments.windows(2) {
            prop_assert!(pair[0].end <= pair[1].start + 1e-9, "{:?}", pair);
        }
    }
}
