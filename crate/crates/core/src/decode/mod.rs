//! Single-chunk decoding: greedy, sampling and beam search under the
//! timestamp grammar, plus the temperature fallback loop.

mod rules;
mod search;

use std::io::Write;

use flate2::write::GzEncoder;
use flate2::Compression;
use thiserror::Error;

use crate::model::{AudioFeatures, DecodeCache, ModelError, Whisper};
use crate::vocab::{TaskSpec, VocabError, Vocabulary};

pub use rules::{argmax, log_softmax, log_sum_exp, LogitRules};
pub use search::{beam_decode, greedy_decode};

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Vocab(#[from] VocabError),
    #[error("invalid decode options: {0}")]
    Options(String),
    #[error("invalid prompt: {0}")]
    Prompt(String),
}

/// Anything that maps a token history to next-token logits.
pub trait TokenDecoder {
    type Cache: Clone;

    fn new_cache(&self) -> Result<Self::Cache, DecodeError>;
    /// Appends `tokens` and returns logits for the position after the last one.
    fn step(&self, cache: &mut Self::Cache, tokens: &[u32]) -> Result<Vec<f32>, DecodeError>;
    fn n_text_ctx(&self) -> usize;
    fn vocab_size(&self) -> usize;
}

/// A model bound to one chunk of encoded audio.
pub struct AudioConditioned<'a> {
    model: &'a Whisper,
    template: DecodeCache,
}

impl<'a> AudioConditioned<'a> {
    pub fn new(model: &'a Whisper, audio: &AudioFeatures) -> Result<Self, DecodeError> {
        Ok(Self {
            model,
            template: model.new_cache(audio)?,
        })
    }
}

impl TokenDecoder for AudioConditioned<'_> {
    type Cache = DecodeCache;

    fn new_cache(&self) -> Result<DecodeCache, DecodeError> {
        Ok(self.template.clone())
    }

    fn step(&self, cache: &mut DecodeCache, tokens: &[u32]) -> Result<Vec<f32>, DecodeError> {
        Ok(self.model.decode_step(tokens, cache)?)
    }

    fn n_text_ctx(&self) -> usize {
        self.model.config().n_text_ctx
    }

    fn vocab_size(&self) -> usize {
        self.model.config().vocab_size
    }
}

/// Decoder whose logits are a pure function of the full token history.
/// Handy for scripted and hand-built models.
pub struct FnDecoder<F> {
    f: F,
    n_text_ctx: usize,
    vocab_size: usize,
}

impl<F: Fn(&[u32]) -> Vec<f32>> FnDecoder<F> {
    pub fn new(vocab_size: usize, n_text_ctx: usize, f: F) -> Self {
        Self {
            f,
            n_text_ctx,
            vocab_size,
        }
    }
}

impl<F: Fn(&[u32]) -> Vec<f32>> TokenDecoder for FnDecoder<F> {
    type Cache = Vec<u32>;

    fn new_cache(&self) -> Result<Vec<u32>, DecodeError> {
        Ok(Vec::new())
    }

    fn step(&self, cache: &mut Vec<u32>, tokens: &[u32]) -> Result<Vec<f32>, DecodeError> {
        if cache.len() + tokens.len() > self.n_text_ctx {
            return Err(ModelError::ContextOverflow {
                needed: cache.len() + tokens.len(),
                limit: self.n_text_ctx,
            }
            .into());
        }
        cache.extend_from_slice(tokens);
        let logits = (self.f)(cache);
        assert_eq!(logits.len(), self.vocab_size, "logit function returned wrong length");
        Ok(logits)
    }

    fn n_text_ctx(&self) -> usize {
        self.n_text_ctx
    }

    fn vocab_size(&self) -> usize {
        self.vocab_size
    }
}

pub const DEFAULT_TEMPERATURES: [f64; 6] = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeOptions {
    pub task: TaskSpec,
    pub temperature: f64,
    pub beam_size: usize,
    /// Content-token budget; `None` means half the text context.
    pub max_tokens: Option<usize>,
    /// Latest time in seconds allowed for the first timestamp.
    pub initial_timestamp_max: Option<f64>,
    /// Force a timestamp when total timestamp probability beats every text token.
    pub force_timestamp_rule: bool,
    /// Fallback schedule.
    pub temperatures: Vec<f64>,
    pub logprob_threshold: Option<f64>,
    pub compression_ratio_threshold: Option<f64>,
    pub seed: u64,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        Self {
            task: TaskSpec {
                language: Some("en".into()),
                timestamps: true,
                ..TaskSpec::default()
            },
            temperature: 0.0,
            beam_size: 5,
            max_tokens: None,
            initial_timestamp_max: Some(1.0),
            force_timestamp_rule: true,
            temperatures: DEFAULT_TEMPERATURES.to_vec(),
            logprob_threshold: Some(-1.0),
            compression_ratio_threshold: Some(2.4),
            seed: 0,
        }
    }
}

impl DecodeOptions {
    pub fn validate(&self) -> Result<(), DecodeError> {
        let bad = |m: &str| Err(DecodeError::Options(m.into()));
        if self.beam_size == 0 {
            return bad("beam_size must be at least 1");
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return bad("temperature must be finite and non-negative");
        }
        if let Some(t) = self.initial_timestamp_max {
            if !(t > 0.0 && t <= 30.0) {
                return bad("initial_timestamp_max must lie in (0, 30]");
            }
        }
        if self.temperatures.is_empty()
            || self.temperatures.iter().any(|t| !(*t >= 0.0 && t.is_finite()))
        {
            return bad("temperature schedule must be non-empty and non-negative");
        }
        if self.max_tokens == Some(0) {
            return bad("max_tokens must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeResult {
    /// Content tokens after the prompt, without the final end-of-transcript.
    pub tokens: Vec<u32>,
    pub text: String,
    pub sum_logprob: f64,
    /// `sum_logprob` over the number of chosen tokens (end token included).
    pub avg_logprob: f64,
    pub no_speech_prob: f64,
    pub temperature: f64,
    pub compression_ratio: f64,
    /// Ended with end-of-transcript.
    pub finished: bool,
    /// Stopped by the token budget.
    pub truncated: bool,
    /// No fallback attempt met the quality thresholds.
    pub low_quality: bool,
}

/// UTF-8 byte length over gzip-compressed length; 0 for empty text.
pub fn compression_ratio(text: &str) -> f64 {
    if text.is_empty() {
        return 0.0;
    }
    let mut enc = GzEncoder::new(Vec::new(), Compression::default());
    enc.write_all(text.as_bytes()).expect("writing to memory");
    let compressed = enc.finish().expect("writing to memory");
    text.len() as f64 / compressed.len() as f64
}

/// Mixes a stream index into a base seed.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// True when a result trips either quality threshold.
pub fn needs_fallback(result: &DecodeResult, options: &DecodeOptions) -> bool {
    let low_logprob = options
        .logprob_threshold
        .is_some_and(|t| result.avg_logprob < t);
    let repetitive = options
        .compression_ratio_threshold
        .is_some_and(|t| result.compression_ratio > t);
    low_logprob || repetitive
}

/// Runs `attempt` at each scheduled temperature until a result passes both
/// thresholds. If none does, the last attempt is returned flagged
/// `low_quality`. Attempt `i` gets a seed derived from `options.seed` and `i`.
pub fn run_with_fallback<F>(options: &DecodeOptions, mut attempt: F) -> Result<DecodeResult, DecodeError>
where
    F: FnMut(&DecodeOptions) -> Result<DecodeResult, DecodeError>,
{
    options.validate()?;
    let mut last = None;
    for (i, &t) in options.temperatures.iter().enumerate() {
        let opts = DecodeOptions {
            temperature: t,
            seed: derive_seed(options.seed, i as u64),
            ..options.clone()
        };
        let result = attempt(&opts)?;
        if !needs_fallback(&result, options) {
            return Ok(result);
        }
        last = Some(result);
    }
    let mut result = last.expect("schedule is non-empty");
    result.low_quality = true;
    Ok(result)
}

/// Beam search at temperature 0 (greedy when `beam_size` is 1), sampling
/// above it, escalating through the temperature schedule.
pub fn decode_with_fallback<D: TokenDecoder>(
    model: &D,
    vocab: &Vocabulary,
    prompt: &[u32],
    options: &DecodeOptions,
) -> Result<DecodeResult, DecodeError> {
    run_with_fallback(options, |opts| {
        if opts.temperature == 0.0 && opts.beam_size > 1 {
            beam_decode(model, vocab, prompt, opts)
        } else {
            greedy_decode(model, vocab, prompt, opts)
        }
    })
}
