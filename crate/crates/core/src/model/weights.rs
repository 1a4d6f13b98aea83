use std::collections::BTreeMap;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{ModelConfig, ModelError};

pub const MAGIC: &[u8; 8] = b"WSPRWT01";

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self, ModelError> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(ModelError::Format(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Init {
    /// Gaussian with std 1/sqrt(fan_in).
    FanIn(usize),
    Ones,
    Zeros,
}

struct Spec {
    name: String,
    shape: Vec<usize>,
    init: Init,
}

fn linear(out: &mut Vec<Spec>, prefix: &str, rows: usize, cols: usize, bias: bool) {
    out.push(Spec {
        name: format!("{prefix}.weight"),
        shape: vec![rows, cols],
        init: Init::FanIn(cols),
    });
    if bias {
        out.push(Spec {
            name: format!("{prefix}.bias"),
            shape: vec![rows],
            init: Init::Zeros,
        });
    }
}

fn layer_norm(out: &mut Vec<Spec>, prefix: &str, width: usize) {
    out.push(Spec {
        name: format!("{prefix}.weight"),
        shape: vec![width],
        init: Init::Ones,
    });
    out.push(Spec {
        name: format!("{prefix}.bias"),
        shape: vec![width],
        init: Init::Zeros,
    });
}

fn attention(out: &mut Vec<Spec>, prefix: &str, w: usize) {
    linear(out, &format!("{prefix}.query"), w, w, true);
    linear(out, &format!("{prefix}.key"), w, w, false);
    linear(out, &format!("{prefix}.value"), w, w, true);
    linear(out, &format!("{prefix}.out"), w, w, true);
}

fn block(out: &mut Vec<Spec>, prefix: &str, w: usize, cross: bool) {
    attention(out, &format!("{prefix}.attn"), w);
    layer_norm(out, &format!("{prefix}.attn_ln"), w);
    if cross {
        attention(out, &format!("{prefix}.cross_attn"), w);
        layer_norm(out, &format!("{prefix}.cross_attn_ln"), w);
    }
    linear(out, &format!("{prefix}.mlp.0"), 4 * w, w, true);
    linear(out, &format!("{prefix}.mlp.2"), w, 4 * w, true);
    layer_norm(out, &format!("{prefix}.mlp_ln"), w);
}

/// Every tensor of a model in canonical (file) order.
fn specs(cfg: &ModelConfig) -> Vec<Spec> {
    let w = cfg.width;
    let mut out = vec![
        Spec {
            name: "encoder.conv1.weight".into(),
            shape: vec![w, cfg.n_mels, 3],
            init: Init::FanIn(cfg.n_mels * 3),
        },
        Spec {
            name: "encoder.conv1.bias".into(),
            shape: vec![w],
            init: Init::Zeros,
        },
        Spec {
            name: "encoder.conv2.weight".into(),
            shape: vec![w, w, 3],
            init: Init::FanIn(w * 3),
        },
        Spec {
            name: "encoder.conv2.bias".into(),
            shape: vec![w],
            init: Init::Zeros,
        },
    ];
    for i in 0..cfg.n_layers {
        block(&mut out, &format!("encoder.blocks.{i}"), w, false);
    }
    layer_norm(&mut out, "encoder.ln_post", w);
    // Embedding rows are unit-norm in expectation; the same matrix produces
    // the output logits.
    out.push(Spec {
        name: "decoder.token_embedding.weight".into(),
        shape: vec![cfg.vocab_size, w],
        init: Init::FanIn(w),
    });
    out.push(Spec {
        name: "decoder.positional_embedding".into(),
        shape: vec![cfg.n_text_ctx, w],
        init: Init::FanIn(w),
    });
    for i in 0..cfg.n_layers {
        block(&mut out, &format!("decoder.blocks.{i}"), w, true);
    }
    layer_norm(&mut out, "decoder.ln", w);
    out
}

/// Tensor names and shapes a config requires, in file order.
pub fn tensor_shapes(cfg: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    specs(cfg).into_iter().map(|s| (s.name, s.shape)).collect()
}

/// A complete, shape-checked set of named tensors for one config.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    config: ModelConfig,
    tensors: BTreeMap<String, Tensor>,
}

impl ModelWeights {
    /// Validates `tensors` against `config`: every tensor present with the
    /// expected shape, no extras, all values finite.
    pub fn new(config: ModelConfig, tensors: BTreeMap<String, Tensor>) -> Result<Self, ModelError> {
        config.validate()?;
        let expected = tensor_shapes(&config);
        for (name, shape) in &expected {
            let t = tensors
                .get(name)
                .ok_or_else(|| ModelError::MissingTensor(name.clone()))?;
            if t.shape() != shape.as_slice() {
                return Err(ModelError::Shape {
                    name: name.clone(),
                    expected: shape.clone(),
                    actual: t.shape().to_vec(),
                });
            }
            if t.data().iter().any(|v| !v.is_finite()) {
                return Err(ModelError::NonFinite(name.clone()));
            }
        }
        if tensors.len() != expected.len() {
            let extra = tensors
                .keys()
                .find(|k| !expected.iter().any(|(n, _)| n == *k))
                .expect("count mismatch implies an unknown name");
            return Err(ModelError::Format(format!("unexpected tensor {extra}")));
        }
        Ok(Self { config, tensors })
    }

    /// Fan-in scaled Gaussian initialisation; layer-norm gains are one and
    /// all biases zero.
    pub fn random(config: &ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tensors = BTreeMap::new();
        for spec in specs(config) {
            let n: usize = spec.shape.iter().product();
            let data = match spec.init {
                Init::Zeros => vec![0.0; n],
                Init::Ones => vec![1.0; n],
                Init::FanIn(fan_in) => {
                    let dist = Normal::new(0.0, 1.0 / (fan_in as f64).sqrt()).expect("valid std");
                    (0..n).map(|_| dist.sample(&mut rng) as f32).collect()
                }
            };
            tensors.insert(spec.name, Tensor { shape: spec.shape, data });
        }
        Ok(Self {
            config: config.clone(),
            tensors,
        })
    }

    /// Same shapes as `random` but every value zero, including layer-norm gains.
    pub fn zeros(config: &ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let tensors = specs(config)
            .into_iter()
            .map(|s| (s.name, Tensor::zeros(s.shape)))
            .collect();
        Ok(Self {
            config: config.clone(),
            tensors,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    /// Mutable access to a tensor's values; shapes cannot change.
    pub fn data_mut(&mut self, name: &str) -> Option<&mut [f32]> {
        self.tensors.get_mut(name).map(|t| t.data_mut())
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub(crate) fn take(&mut self, name: &str) -> Vec<f32> {
        self.tensors
            .remove(name)
            .unwrap_or_else(|| panic!("validated weights lack {name}"))
            .into_data()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let order = tensor_shapes(&self.config);
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(order.len() as u32).to_le_bytes());
        for (name, _) in &order {
            let t = &self.tensors[name];
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
            for &d in &t.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        w.write_all(&self.to_bytes())?;
        w.flush()?;
        Ok(())
    }

    /// Parses a weight file. Tensors after a truncation point are reported
    /// through the first missing name in file order.
    pub fn from_bytes(bytes: &[u8], config: &ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        if bytes.len() < 8 || &bytes[..8] != MAGIC {
            return Err(ModelError::Format("bad magic, expected WSPRWT01".into()));
        }
        let mut r = Reader { bytes, pos: 8 };
        let count = r.u32().ok_or_else(|| ModelError::Format("missing tensor count".into()))?;
        let mut tensors = BTreeMap::new();
        for _ in 0..count {
            match r.tensor()? {
                Some((name, t)) => {
                    if tensors.insert(name.clone(), t).is_some() {
                        return Err(ModelError::Format(format!("duplicate tensor {name}")));
                    }
                }
                None => break,
            }
        }
        if r.pos != bytes.len() && tensors.len() == count as usize {
            return Err(ModelError::Format("trailing bytes after last tensor".into()));
        }
        Self::new(config.clone(), tensors)
    }

    pub fn load(path: impl AsRef<Path>, config: &ModelConfig) -> Result<Self, ModelError> {
        Self::from_bytes(&std::fs::read(path)?, config)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Option<&[u8]> {
        let end = self.pos.checked_add(n)?;
        let s = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(s)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn u64(&mut self) -> Option<u64> {
        self.take(8).map(|b| u64::from_le_bytes(b.try_into().unwrap()))
    }

    /// `Ok(None)` when the data ends before the tensor is complete.
    fn tensor(&mut self) -> Result<Option<(String, Tensor)>, ModelError> {
        let Some(len) = self.u32() else { return Ok(None) };
        let Some(name) = self.take(len as usize) else { return Ok(None) };
        let name = String::from_utf8(name.to_vec())
            .map_err(|_| ModelError::Format("tensor name is not UTF-8".into()))?;
        let Some(rank) = self.u32() else { return Ok(None) };
        if rank > 8 {
            return Err(ModelError::Format(format!("{name}: rank {rank} too large")));
        }
        let mut shape = Vec::with_capacity(rank as usize);
        for _ in 0..rank {
            let Some(d) = self.u64() else { return Ok(None) };
            shape.push(d as usize);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| ModelError::Format(format!("{name}: shape overflows")))?;
        let Some(raw) = self.take(n) else { return Ok(None) };
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Some((name, Tensor { shape, data })))
    }
}
