//! Buffered transcription of arbitrarily long audio: a 30 s window slides
//! along the recording guided by the predicted timestamps.

mod ablation;

pub use ablation::{ablation_matrix, ablation_stages, AblationRow, AblationStage, AblationTable};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{log_mel_spectrogram, AudioBuffer, AudioError, MelSpectrogram, N_FRAMES, SAMPLE_RATE};
use crate::decode::{derive_seed, decode_with_fallback, AudioConditioned, DecodeError, DecodeOptions, DecodeResult};
use crate::model::{AudioFeatures, ModelError, Whisper};
use crate::vocab::{TaskSpec, VocabError, Vocabulary, LANGUAGES};

/// Frames per timestamp step (20 ms at 10 ms per frame).
const FRAMES_PER_TIMESTAMP: usize = 2;
const FRAME_RATE: f64 = 100.0;

#[derive(Debug, Error)]
pub enum LongformError {
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Vocab(#[from] VocabError),
    #[error("{0}")]
    Input(String),
}

/// A model that can encode a window, guess its language and decode it.
pub trait WindowModel {
    type Features;

    fn vocab(&self) -> &Vocabulary;
    fn n_text_ctx(&self) -> usize;
    fn encode(&self, mel: &MelSpectrogram) -> Result<Self::Features, LongformError>;
    /// Probabilities indexed like [`LANGUAGES`].
    fn detect_language(&self, features: &Self::Features) -> Result<Vec<f64>, LongformError>;
    fn decode(
        &self,
        features: &Self::Features,
        prompt: &[u32],
        options: &DecodeOptions,
    ) -> Result<DecodeResult, LongformError>;
}

/// The transformer paired with its vocabulary.
#[derive(Debug, Clone)]
pub struct Asr {
    model: Whisper,
    vocab: Vocabulary,
}

impl Asr {
    pub fn new(model: Whisper, vocab: Vocabulary) -> Result<Self, LongformError> {
        if model.config().vocab_size != vocab.len() {
            return Err(LongformError::Input(format!(
                "model expects {} tokens but the vocabulary has {}",
                model.config().vocab_size,
                vocab.len()
            )));
        }
        Ok(Self { model, vocab })
    }

    pub fn model(&self) -> &Whisper {
        &self.model
    }
}

impl WindowModel for Asr {
    type Features = AudioFeatures;

    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn n_text_ctx(&self) -> usize {
        self.model.config().n_text_ctx
    }

    fn encode(&self, mel: &MelSpectrogram) -> Result<AudioFeatures, LongformError> {
        Ok(self.model.encode(mel)?)
    }

    fn detect_language(&self, features: &AudioFeatures) -> Result<Vec<f64>, LongformError> {
        Ok(self.model.detect_language(features)?)
    }

    fn decode(
        &self,
        features: &AudioFeatures,
        prompt: &[u32],
        options: &DecodeOptions,
    ) -> Result<DecodeResult, LongformError> {
        let dec = AudioConditioned::new(&self.model, features)?;
        Ok(decode_with_fallback(&dec, &self.vocab, prompt, options)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TranscribeOptions {
    pub decode: DecodeOptions,
    pub condition_on_previous_text: bool,
    pub vad_enabled: bool,
    pub no_speech_threshold: f64,
    pub logprob_threshold: f64,
    /// Detect the language on every window instead of pinning the first.
    pub redetect_language: bool,
}

impl Default for TranscribeOptions {
    fn default() -> Self {
        Self {
            decode: DecodeOptions::default(),
            condition_on_previous_text: true,
            vad_enabled: true,
            no_speech_threshold: 0.6,
            logprob_threshold: -1.0,
            redetect_language: false,
        }
    }
}

impl TranscribeOptions {
    pub fn validate(&self) -> Result<(), LongformError> {
        if !self.no_speech_threshold.is_finite() || !self.logprob_threshold.is_finite() {
            return Err(LongformError::Input("thresholds must be finite".into()));
        }
        self.decode.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub text: String,
    pub tokens: Vec<u32>,
    pub avg_logprob: f64,
    pub no_speech_prob: f64,
    pub temperature: f64,
    pub compression_ratio: f64,
    /// Emitted by the zero-progress guard.
    #[serde(default)]
    pub forced: bool,
}

/// What happened in one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowInfo {
    pub offset: f64,
    pub offset_frames: usize,
    pub silent: bool,
    pub temperature: f64,
    pub low_quality: bool,
    pub forced_advance: bool,
    pub prompt_had_prev_text: bool,
    pub segments: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub language: Option<String>,
    pub duration: f64,
    pub segments: Vec<Segment>,
    pub windows: Vec<WindowInfo>,
}

impl Transcript {
    pub fn text(&self) -> String {
        self.segments
            .iter()
            .map(|s| s.text.trim())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

fn most_likely_language(probs: &[f64]) -> Result<String, LongformError> {
    if probs.len() != LANGUAGES.len() {
        return Err(LongformError::Input(format!(
            "language distribution has {} entries",
            probs.len()
        )));
    }
    let mut best = 0;
    for (i, p) in probs.iter().enumerate() {
        if *p > probs[best] {
            best = i;
        }
    }
    Ok(LANGUAGES[best].to_string())
}

/// Transcribes 16 kHz audio of any length.
pub fn transcribe<M: WindowModel>(
    audio: &AudioBuffer,
    model: &M,
    options: &TranscribeOptions,
) -> Result<Transcript, LongformError> {
    options.validate()?;
    if audio.sample_rate() != SAMPLE_RATE {
        return Err(AudioError::SampleRateMismatch {
            expected: SAMPLE_RATE,
            actual: audio.sample_rate(),
        }
        .into());
    }
    if audio.is_empty() {
        return Err(AudioError::Empty.into());
    }
    let mel = log_mel_spectrogram(audio)?;
    transcribe_mel(&mel, audio.duration(), model, options)
}

/// Runs the window loop over a precomputed spectrogram of `duration` seconds.
pub fn transcribe_mel<M: WindowModel>(
    mel: &MelSpectrogram,
    duration: f64,
    model: &M,
    options: &TranscribeOptions,
) -> Result<Transcript, LongformError> {
    options.validate()?;
    let vocab = model.vocab();
    let sp = vocab.specials().clone();
    let total = mel.n_frames();
    let prev_budget = model.n_text_ctx() / 2;
    let fixed_language = options.decode.task.language.clone();

    let mut language = fixed_language.clone();
    let mut offset = 0usize;
    let mut prev_tokens: Vec<u32> = Vec::new();
    let mut segments = Vec::new();
    let mut windows = Vec::new();

    while offset < total {
        let window_index = windows.len();
        let span = N_FRAMES.min(total - offset);
        let window = mel.slice(offset, span).pad_or_trim(N_FRAMES);
        let features = model.encode(&window)?;

        let detected_here = fixed_language.is_none() && (language.is_none() || options.redetect_language);
        if detected_here {
            language = Some(most_likely_language(&model.detect_language(&features)?)?);
        }

        let spec = TaskSpec {
            language: language.clone(),
            prev_text: None,
            ..options.decode.task.clone()
        };
        let prev: &[u32] = if options.condition_on_previous_text { &prev_tokens } else { &[] };
        let prompt = vocab.build_prompt_with_prev(&spec, prev, prev_budget)?;
        let decode_opts = DecodeOptions {
            task: spec,
            seed: derive_seed(options.decode.seed, window_index as u64),
            ..options.decode.clone()
        };
        let result = model.decode(&features, &prompt, &decode_opts)?;

        let mut info = WindowInfo {
            offset: offset as f64 / FRAME_RATE,
            offset_frames: offset,
            silent: false,
            temperature: result.temperature,
            low_quality: result.low_quality,
            forced_advance: false,
            prompt_had_prev_text: prompt.first() == Some(&sp.prev),
            segments: 0,
        };

        if options.vad_enabled
            && result.no_speech_prob > options.no_speech_threshold
            && result.avg_logprob < options.logprob_threshold
        {
            // Silent window: skip it whole, keep the previous prompt.
            info.silent = true;
            windows.push(info);
            if detected_here && !options.redetect_language {
                language = None;
            }
            offset += span;
            continue;
        }

        let mut full = prompt.clone();
        full.extend_from_slice(&result.tokens);
        let parsed = vocab.parse_transcript(&full)?;

        // Times within the window in frames; `None` end marks the partial.
        let to_frames = |s: f64| (s * 50.0).round() as usize * FRAMES_PER_TIMESTAMP;
        let mut emitted: Vec<(usize, usize, Vec<u32>, String)> = Vec::new();
        let mut partial = None;
        for seg in parsed {
            match seg.end {
                Some(end) if decode_opts.task.timestamps => {
                    emitted.push((to_frames(seg.start), to_frames(end), seg.tokens, seg.text))
                }
                Some(_) => emitted.push((0, span, seg.tokens, seg.text)),
                None => partial = Some((to_frames(seg.start), seg.tokens, seg.text)),
            }
        }
        let mut advance = match (&partial, emitted.last()) {
            (Some((start, _, _)), _) => *start,
            (None, Some(_)) if decode_opts.task.timestamps => emitted.last().unwrap().1,
            _ => span,
        };
        if advance < FRAMES_PER_TIMESTAMP {
            advance = span;
            info.forced_advance = true;
            if let Some((start, tokens, text)) = partial.take() {
                emitted.push((start, span, tokens, text));
            }
        }

        let mut window_tokens = Vec::new();
        for (start, end, tokens, text) in emitted {
            let start_s = (offset + start) as f64 / FRAME_RATE;
            if start_s >= duration {
                continue;
            }
            let end_s = ((offset + end) as f64 / FRAME_RATE).min(duration);
            window_tokens.extend(tokens.iter().copied().filter(|&t| (t as usize) < vocab.n_regular()));
            segments.push(Segment {
                start: start_s,
                end: end_s,
                text,
                tokens,
                avg_logprob: result.avg_logprob,
                no_speech_prob: result.no_speech_prob,
                temperature: result.temperature,
                compression_ratio: result.compression_ratio,
                forced: info.forced_advance,
            });
            info.segments += 1;
        }

        if options.condition_on_previous_text && result.temperature < 0.5 {
            prev_tokens = window_tokens;
        } else {
            prev_tokens.clear();
        }
        windows.push(info);
        offset += advance;
    }

    Ok(Transcript {
        language,
        duration,
        segments,
        windows,
    })
}

/// One canned window output for [`ScriptedModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct WindowScript {
    /// Content tokens (end-of-transcript optional; it is stripped).
    pub tokens: Vec<u32>,
    pub avg_logprob: f64,
    pub no_speech_prob: f64,
    pub temperature: f64,
}

/// Replays scripted decoder outputs window by window (the last script
/// repeats) and records every prompt it receives. Useful for exercising the
/// window loop without a trained model.
#[derive(Debug)]
pub struct ScriptedModel {
    vocab: Vocabulary,
    scripts: Vec<WindowScript>,
    n_text_ctx: usize,
    calls: std::sync::Mutex<Vec<Vec<u32>>>,
    encoded: std::sync::atomic::AtomicUsize,
}

impl ScriptedModel {
    pub fn new(vocab: Vocabulary, scripts: Vec<WindowScript>) -> Self {
        assert!(!scripts.is_empty(), "at least one script");
        Self {
            vocab,
            scripts,
            n_text_ctx: 448,
            calls: Default::default(),
            encoded: Default::default(),
        }
    }

    /// Prompts passed to `decode`, in call order.
    pub fn prompts(&self) -> Vec<Vec<u32>> {
        self.calls.lock().unwrap().clone()
    }
}

impl WindowModel for ScriptedModel {
    type Features = usize;

    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn n_text_ctx(&self) -> usize {
        self.n_text_ctx
    }

    fn encode(&self, mel: &MelSpectrogram) -> Result<usize, LongformError> {
        if mel.n_frames() != N_FRAMES {
            return Err(LongformError::Input("window not padded".into()));
        }
        Ok(self.encoded.fetch_add(1, std::sync::atomic::Ordering::SeqCst))
    }

    fn detect_language(&self, _: &usize) -> Result<Vec<f64>, LongformError> {
        let mut p = vec![0.0; LANGUAGES.len()];
        p[0] = 1.0;
        Ok(p)
    }

    fn decode(&self, window: &usize, prompt: &[u32], _: &DecodeOptions) -> Result<DecodeResult, LongformError> {
        self.calls.lock().unwrap().push(prompt.to_vec());
        let s = &self.scripts[(*window).min(self.scripts.len() - 1)];
        let eot = self.vocab.specials().eot;
        let end = s.tokens.iter().position(|&t| t == eot);
        let tokens = s.tokens[..end.unwrap_or(s.tokens.len())].to_vec();
        let text = self.vocab.decode_text(&tokens);
        Ok(DecodeResult {
            compression_ratio: crate::decode::compression_ratio(&text),
            text,
            sum_logprob: s.avg_logprob * (tokens.len() + 1) as f64,
            tokens,
            avg_logprob: s.avg_logprob,
            no_speech_prob: s.no_speech_prob,
            temperature: s.temperature,
            finished: end.is_some(),
            truncated: end.is_none(),
            low_quality: false,
        })
    }
}
