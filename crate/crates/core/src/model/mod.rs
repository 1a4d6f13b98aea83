//! Encoder-decoder transformer forward pass with an incremental decoding cache.

mod config;
pub mod ops;
mod weights;

use std::sync::Arc;

use thiserror::Error;

use crate::audio::MelSpectrogram;
use crate::vocab::{SpecialTokens, LANGUAGES};

pub use config::{ModelConfig, PRESETS};
pub use weights::{tensor_shapes, ModelWeights, Tensor, MAGIC};

use ops::{add_inplace, attention, conv1d_k3, gelu_inplace, sinusoids, LayerNorm, Linear};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed weight file: {0}")]
    Format(String),
    #[error("missing tensor {0}")]
    MissingTensor(String),
    #[error("tensor {name}: expected shape {expected:?}, found {actual:?}")]
    Shape {
        name: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error("tensor {0} contains non-finite values")]
    NonFinite(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("input shape mismatch: {0}")]
    Input(String),
    #[error("context overflow: {needed} positions exceed limit {limit}")]
    ContextOverflow { needed: usize, limit: usize },
    #[error("token id {0} outside vocabulary")]
    InvalidToken(u32),
    #[error("non-finite activation in {0}")]
    Numeric(&'static str),
}

#[derive(Debug, Clone)]
struct Attention {
    query: Linear,
    key: Linear,
    value: Linear,
    out: Linear,
}

#[derive(Debug, Clone)]
struct Block {
    attn: Attention,
    attn_ln: LayerNorm,
    cross: Option<(Attention, LayerNorm)>,
    mlp_up: Linear,
    mlp_down: Linear,
    mlp_ln: LayerNorm,
}

/// Encoder output: `[n_ctx × width]` audio states.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioFeatures {
    data: Vec<f32>,
    n_ctx: usize,
    width: usize,
}

impl AudioFeatures {
    pub fn new(data: Vec<f32>, n_ctx: usize, width: usize) -> Result<Self, ModelError> {
        if data.len() != n_ctx * width {
            return Err(ModelError::Input(format!(
                "{} values for {n_ctx}×{width} features",
                data.len()
            )));
        }
        Ok(Self { data, n_ctx, width })
    }

    pub fn n_ctx(&self) -> usize {
        self.n_ctx
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }
}

#[derive(Debug)]
struct CrossKv {
    k: Vec<f32>,
    v: Vec<f32>,
}

/// Self-attention keys/values for the tokens seen so far plus the
/// cross-attention keys/values of one audio chunk (shared between clones).
#[derive(Debug, Clone)]
pub struct DecodeCache {
    self_kv: Vec<(Vec<f32>, Vec<f32>)>,
    cross: Arc<Vec<CrossKv>>,
    n_audio: usize,
    len: usize,
}

impl DecodeCache {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Drops the token history, keeping the audio.
    pub fn reset(&mut self) {
        for (k, v) in &mut self.self_kv {
            k.clear();
            v.clear();
        }
        self.len = 0;
    }
}

#[derive(Debug, Clone)]
pub struct Whisper {
    config: ModelConfig,
    conv1: Linear,
    conv2: Linear,
    encoder: Vec<Block>,
    ln_post: LayerNorm,
    token_embedding: Vec<f32>,
    positional: Vec<f32>,
    decoder: Vec<Block>,
    ln: LayerNorm,
    audio_positions: Vec<f32>,
}

fn take_linear(w: &mut ModelWeights, prefix: &str, out_dim: usize, in_dim: usize, bias: bool) -> Linear {
    Linear {
        weight: w.take(&format!("{prefix}.weight")),
        bias: bias.then(|| w.take(&format!("{prefix}.bias"))),
        in_dim,
        out_dim,
    }
}

fn take_ln(w: &mut ModelWeights, prefix: &str) -> LayerNorm {
    LayerNorm {
        gamma: w.take(&format!("{prefix}.weight")),
        beta: w.take(&format!("{prefix}.bias")),
    }
}

fn take_attention(w: &mut ModelWeights, prefix: &str, width: usize) -> Attention {
    Attention {
        query: take_linear(w, &format!("{prefix}.query"), width, width, true),
        key: take_linear(w, &format!("{prefix}.key"), width, width, false),
        value: take_linear(w, &format!("{prefix}.value"), width, width, true),
        out: take_linear(w, &format!("{prefix}.out"), width, width, true),
    }
}

fn take_block(w: &mut ModelWeights, prefix: &str, width: usize, cross: bool) -> Block {
    Block {
        attn: take_attention(w, &format!("{prefix}.attn"), width),
        attn_ln: take_ln(w, &format!("{prefix}.attn_ln")),
        cross: cross.then(|| {
            (
                take_attention(w, &format!("{prefix}.cross_attn"), width),
                take_ln(w, &format!("{prefix}.cross_attn_ln")),
            )
        }),
        mlp_up: take_linear(w, &format!("{prefix}.mlp.0"), 4 * width, width, true),
        mlp_down: take_linear(w, &format!("{prefix}.mlp.2"), width, 4 * width, true),
        mlp_ln: take_ln(w, &format!("{prefix}.mlp_ln")),
    }
}

fn check_finite(x: &[f32], what: &'static str) -> Result<(), ModelError> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(ModelError::Numeric(what))
    }
}

impl Block {
    fn mlp(&self, x: &mut [f32], rows: usize) {
        let h = self.mlp_ln.forward(x);
        let mut h = self.mlp_up.forward(&h, rows);
        gelu_inplace(&mut h);
        add_inplace(x, &self.mlp_down.forward(&h, rows));
    }
}

impl Whisper {
    pub fn new(mut weights: ModelWeights) -> Self {
        let cfg = weights.config().clone();
        let w = cfg.width;
        let conv1 = take_linear(&mut weights, "encoder.conv1", w, cfg.n_mels * 3, true);
        let conv2 = take_linear(&mut weights, "encoder.conv2", w, w * 3, true);
        let encoder = (0..cfg.n_layers)
            .map(|i| take_block(&mut weights, &format!("encoder.blocks.{i}"), w, false))
            .collect();
        let ln_post = take_ln(&mut weights, "encoder.ln_post");
        let token_embedding = weights.take("decoder.token_embedding.weight");
        let positional = weights.take("decoder.positional_embedding");
        let decoder = (0..cfg.n_layers)
            .map(|i| take_block(&mut weights, &format!("decoder.blocks.{i}"), w, true))
            .collect();
        let ln = take_ln(&mut weights, "decoder.ln");
        Self {
            audio_positions: sinusoids(cfg.n_audio_ctx, w),
            config: cfg,
            conv1,
            conv2,
            encoder,
            ln_post,
            token_embedding,
            positional,
            decoder,
            ln,
        }
    }

    pub fn random(config: &ModelConfig, seed: u64) -> Result<Self, ModelError> {
        Ok(Self::new(ModelWeights::random(config, seed)?))
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Special-token layout implied by the vocabulary size.
    pub fn specials(&self) -> Result<SpecialTokens, ModelError> {
        let n = self.config.vocab_size;
        if n <= SpecialTokens::count() {
            return Err(ModelError::Config(format!(
                "vocab_size {n} leaves no room for regular tokens"
            )));
        }
        Ok(SpecialTokens::standard((n - SpecialTokens::count()) as u32))
    }

    /// Encodes exactly one 30 s chunk (`2 * n_audio_ctx` frames).
    pub fn encode(&self, mel: &MelSpectrogram) -> Result<AudioFeatures, ModelError> {
        let want = 2 * self.config.n_audio_ctx;
        if mel.n_frames() != want {
            return Err(ModelError::Input(format!(
                "expected {want} mel frames, got {} (pad or trim first)",
                mel.n_frames()
            )));
        }
        self.encode_frames(mel.data(), mel.n_frames())
    }

    /// Encodes any number of frames up to one chunk; the output has
    /// `ceil(frames / 2)` positions.
    pub fn encode_frames(&self, mel: &[f32], frames: usize) -> Result<AudioFeatures, ModelError> {
        let cfg = &self.config;
        let w = cfg.width;
        if mel.len() != frames * cfg.n_mels {
            return Err(ModelError::Input(format!(
                "mel data holds {} values, expected {frames}×{}",
                mel.len(),
                cfg.n_mels
            )));
        }
        if frames == 0 || frames > 2 * cfg.n_audio_ctx {
            return Err(ModelError::Input(format!(
                "{frames} frames outside 1..={}",
                2 * cfg.n_audio_ctx
            )));
        }
        let (mut x, t) = conv1d_k3(mel, frames, cfg.n_mels, &self.conv1, 1);
        gelu_inplace(&mut x);
        let (mut x, t) = conv1d_k3(&x, t, w, &self.conv2, 2);
        gelu_inplace(&mut x);
        add_inplace(&mut x, &self.audio_positions[..t * w]);
        for block in &self.encoder {
            let h = block.attn_ln.forward(&x);
            let q = block.attn.query.forward(&h, t);
            let k = block.attn.key.forward(&h, t);
            let v = block.attn.value.forward(&h, t);
            let a = attention(&q, t, &k, &v, t, w, cfg.heads, None);
            add_inplace(&mut x, &block.attn.out.forward(&a, t));
            block.mlp(&mut x, t);
        }
        let x = self.ln_post.forward(&x);
        check_finite(&x, "encoder output")?;
        AudioFeatures::new(x, t, w)
    }

    /// Starts a decoding stream over `audio`.
    pub fn new_cache(&self, audio: &AudioFeatures) -> Result<DecodeCache, ModelError> {
        if audio.width != self.config.width {
            return Err(ModelError::Input(format!(
                "audio width {} does not match model width {}",
                audio.width, self.config.width
            )));
        }
        let n = audio.n_ctx;
        let cross = self
            .decoder
            .iter()
            .map(|b| {
                let (attn, _) = b.cross.as_ref().expect("decoder blocks have cross attention");
                CrossKv {
                    k: attn.key.forward(&audio.data, n),
                    v: attn.value.forward(&audio.data, n),
                }
            })
            .collect();
        Ok(DecodeCache {
            self_kv: vec![(Vec::new(), Vec::new()); self.decoder.len()],
            cross: Arc::new(cross),
            n_audio: n,
            len: 0,
        })
    }

    /// Runs `tokens` through the decoder, appending them to `cache`, and
    /// returns logits for every new position as `[tokens × vocab]`.
    pub fn decode_positions(&self, tokens: &[u32], cache: &mut DecodeCache) -> Result<Vec<f32>, ModelError> {
        let h = self.forward_decoder(tokens, cache)?;
        let logits = ops::matmul_bt(&h, tokens.len(), self.config.width, &self.token_embedding, self.config.vocab_size);
        check_finite(&logits, "logits")?;
        Ok(logits)
    }

    /// Logits for the last of the new `tokens`.
    pub fn decode_step(&self, tokens: &[u32], cache: &mut DecodeCache) -> Result<Vec<f32>, ModelError> {
        if tokens.is_empty() {
            return Err(ModelError::Input("decode step needs at least one token".into()));
        }
        let h = self.forward_decoder(tokens, cache)?;
        let w = self.config.width;
        let last = &h[(tokens.len() - 1) * w..];
        let logits = ops::matmul_bt(last, 1, w, &self.token_embedding, self.config.vocab_size);
        check_finite(&logits, "logits")?;
        Ok(logits)
    }

    /// Full recomputation without a persistent cache: `[tokens × vocab]`.
    pub fn decode_all(&self, tokens: &[u32], audio: &AudioFeatures) -> Result<Vec<f32>, ModelError> {
        let mut cache = self.new_cache(audio)?;
        self.decode_positions(tokens, &mut cache)
    }

    fn forward_decoder(&self, tokens: &[u32], cache: &mut DecodeCache) -> Result<Vec<f32>, ModelError> {
        let cfg = &self.config;
        let w = cfg.width;
        let m = tokens.len();
        let offset = cache.len;
        if offset + m > cfg.n_text_ctx {
            return Err(ModelError::ContextOverflow {
                needed: offset + m,
                limit: cfg.n_text_ctx,
            });
        }
        if let Some(&bad) = tokens.iter().find(|&&t| t as usize >= cfg.vocab_size) {
            return Err(ModelError::InvalidToken(bad));
        }
        let mut x = Vec::with_capacity(m * w);
        for (i, &t) in tokens.iter().enumerate() {
            let e = &self.token_embedding[t as usize * w..(t as usize + 1) * w];
            let p = &self.positional[(offset + i) * w..(offset + i + 1) * w];
            x.extend(e.iter().zip(p).map(|(a, b)| a + b));
        }
        let cross = Arc::clone(&cache.cross);
        for ((block, (kc, vc)), ckv) in self.decoder.iter().zip(cache.self_kv.iter_mut()).zip(cross.iter()) {
            let h = block.attn_ln.forward(&x);
            let q = block.attn.query.forward(&h, m);
            kc.extend(block.attn.key.forward(&h, m));
            vc.extend(block.attn.value.forward(&h, m));
            let a = attention(&q, m, kc, vc, offset + m, w, cfg.heads, Some(offset));
            add_inplace(&mut x, &block.attn.out.forward(&a, m));

            let (xattn, xln) = block.cross.as_ref().expect("decoder blocks have cross attention");
            let h = xln.forward(&x);
            let q = xattn.query.forward(&h, m);
            let a = attention(&q, m, &ckv.k, &ckv.v, cache.n_audio, w, cfg.heads, None);
            add_inplace(&mut x, &xattn.out.forward(&a, m));

            block.mlp(&mut x, m);
        }
        cache.len += m;
        Ok(self.ln.forward(&x))
    }

    /// Probability of each language (indexed like `LANGUAGES`) from one
    /// decoder step on start-of-transcript, renormalised over language ids.
    pub fn detect_language(&self, audio: &AudioFeatures) -> Result<Vec<f64>, ModelError> {
        let sp = self.specials()?;
        let mut cache = self.new_cache(audio)?;
        let logits = self.decode_step(&[sp.sot], &mut cache)?;
        let base = sp.language_base as usize;
        Ok(softmax_f64(&logits[base..base + LANGUAGES.len()]))
    }

    /// Softmax probability of `<|nospeech|>` at the position right after
    /// start-of-transcript in `prompt`.
    pub fn no_speech_probability(&self, audio: &AudioFeatures, prompt: &[u32]) -> Result<f64, ModelError> {
        let sp = self.specials()?;
        let sot = prompt
            .iter()
            .position(|&t| t == sp.sot)
            .ok_or_else(|| ModelError::Input("prompt has no start-of-transcript".into()))?;
        let mut cache = self.new_cache(audio)?;
        let logits = self.decode_step(&prompt[..=sot], &mut cache)?;
        Ok(softmax_f64(&logits)[sp.no_speech as usize])
    }
}

/// Softmax computed in f64.
pub fn softmax_f64(logits: &[f32]) -> Vec<f64> {
    let max = logits.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b as f64));
    let exps: Vec<f64> = logits.iter().map(|&l| (l as f64 - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}
