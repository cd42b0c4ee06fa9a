//! Pre-layer-norm transformer encoder with an MLM head tied to the token
//! embedding table.
//!
//! All weights live in one flat buffer; [`Layout`] names the slices. The
//! same order is used by the optimizer state and the checkpoint format.

pub(crate) mod backward;
mod checkpoint;
pub(crate) mod forward;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;
use crate::rng;

pub use backward::backward;
pub use checkpoint::{decode_checkpoint, encode_checkpoint, CheckpointMeta, TensorInfo, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use forward::{forward, forward_cached, softmax_position, ForwardCache, ForwardOut};

pub const INIT_STD: f64 = 0.02;
pub const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub max_seq: usize,
    pub vocab_size: usize,
}

impl ModelConfig {
    /// 2 layers, 4 heads, d_model 128, d_ff 512, max_seq 128.
    pub fn desk(vocab_size: usize) -> ModelConfig {
        ModelConfig { n_layers: 2, n_heads: 4, d_model: 128, d_ff: 512, max_seq: 128, vocab_size }
    }

    pub fn validate(&self) -> Result<()> {
        let c = self;
        if c.n_layers == 0 || c.n_heads == 0 || c.d_model == 0 || c.d_ff == 0 || c.vocab_size == 0 {
            return Err(Error::Config("all model dimensions must be positive".into()));
        }
        if c.max_seq < 2 {
            return Err(Error::Config(format!("max_seq must be >= 2, got {}", c.max_seq)));
        }
        if !c.d_model.is_multiple_of(c.n_heads) {
            return Err(Error::Config(format!(
                "d_model {} not divisible by n_heads {}",
                c.d_model, c.n_heads
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerOffsets {
    pub ln1_g: usize,
    pub ln1_b: usize,
    pub wq: usize,
    pub bq: usize,
    pub wk: usize,
    pub bk: usize,
    pub wv: usize,
    pub bv: usize,
    pub wo: usize,
    pub bo: usize,
    pub ln2_g: usize,
    pub ln2_b: usize,
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
}

/// What a tensor is, for initialization and reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorRole {
    Embedding,
    Weight,
    Bias,
    NormGain,
    NormBias,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
    pub role: TensorRole,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> core::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub tok_emb: usize,
    pub pos_emb: usize,
    pub layers: Vec<LayerOffsets>,
    pub lnf_g: usize,
    pub lnf_b: usize,
    pub out_bias: usize,
    pub total: usize,
    pub tensors: Vec<TensorSpec>,
}

impl Layout {
    /// Tensor order: token embedding, positional embedding, then per layer
    /// `ln1.{g,b} q.{w,b} k.{w,b} v.{w,b} o.{w,b} ln2.{g,b} ff1.{w,b}
    /// ff2.{w,b}`, then `lnf.{g,b}` and the output bias. Matrices are
    /// row-major `in × out`.
    pub fn new(c: &ModelConfig) -> Layout {
        let mut tensors = Vec::new();
        let mut next = 0usize;
        let mut push = |name: String, rows: usize, cols: usize, role: TensorRole| {
            let offset = next;
            next += rows * cols;
            tensors.push(TensorSpec { name, rows, cols, offset, role });
            offset
        };
        let (d, f) = (c.d_model, c.d_ff);
        let tok_emb = push("tok_emb".into(), c.vocab_size, d, TensorRole::Embedding);
        let pos_emb = push("pos_emb".into(), c.max_seq, d, TensorRole::Embedding);
        let mut layers = Vec::with_capacity(c.n_layers);
        for l in 0..c.n_layers {
            let n = |s: &str| format!("layer{l}.{s}");
            layers.push(LayerOffsets {
                ln1_g: push(n("ln1.g"), 1, d, TensorRole::NormGain),
                ln1_b: push(n("ln1.b"), 1, d, TensorRole::NormBias),
                wq: push(n("q.w"), d, d, TensorRole::Weight),
                bq: push(n("q.b"), 1, d, TensorRole::Bias),
                wk: push(n("k.w"), d, d, TensorRole::Weight),
                bk: push(n("k.b"), 1, d, TensorRole::Bias),
                wv: push(n("v.w"), d, d, TensorRole::Weight),
                bv: push(n("v.b"), 1, d, TensorRole::Bias),
                wo: push(n("o.w"), d, d, TensorRole::Weight),
                bo: push(n("o.b"), 1, d, TensorRole::Bias),
                ln2_g: push(n("ln2.g"), 1, d, TensorRole::NormGain),
                ln2_b: push(n("ln2.b"), 1, d, TensorRole::NormBias),
                w1: push(n("ff1.w"), d, f, TensorRole::Weight),
                b1: push(n("ff1.b"), 1, f, TensorRole::Bias),
                w2: push(n("ff2.w"), f, d, TensorRole::Weight),
                b2: push(n("ff2.b"), 1, d, TensorRole::Bias),
            });
        }
        let lnf_g = push("lnf.g".into(), 1, d, TensorRole::NormGain);
        let lnf_b = push("lnf.b".into(), 1, d, TensorRole::NormBias);
        let out_bias = push("out.b".into(), 1, c.vocab_size, TensorRole::Bias);
        Layout { tok_emb, pos_emb, layers, lnf_g, lnf_b, out_bias, total: next, tensors }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Params<R> {
    pub config: ModelConfig,
    pub layout: Layout,
    pub data: Vec<R>,
}

impl<R: Real> Params<R> {
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        let data = vec![R::zero(); layout.total];
        Ok(Params { config, layout, data })
    }

    /// Truncated normal (±2σ, σ = 0.02) for embeddings and weight
    /// matrices, zero biases, unit norm gains.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        Self::init_with_std(config, seed, INIT_STD)
    }

    pub fn init_with_std(config: ModelConfig, seed: u64, std: f64) -> Result<Self> {
        let mut p = Self::zeros(config)?;
        let mut rng = rng::stream(seed, "init");
        let normal = if std > 0.0 { Some(Normal::new(0.0, std).expect("positive std")) } else { None };
        for tensor in p.layout.tensors.clone() {
            let slot = &mut p.data[tensor.range()];
            match tensor.role {
                TensorRole::Embedding | TensorRole::Weight => {
                    if let Some(normal) = &normal {
                        for v in slot.iter_mut() {
                            let x = loop {
                                let x: f64 = normal.sample(&mut rng);
                                if x.abs() <= 2.0 * std {
                                    break x;
                                }
                            };
                            *v = R::from_f64_lossy(x);
                        }
                    }
                }
                TensorRole::NormGain => slot.fill(R::one()),
                TensorRole::Bias | TensorRole::NormBias => {}
            }
        }
        Ok(p)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn slice(&self, offset: usize, len: usize) -> &[R] {
        &self.data[offset..offset + len]
    }

    pub fn tensor(&self, name: &str) -> Option<&[R]> {
        self.layout.tensors.iter().find(|t| t.name == name).map(|t| &self.data[t.range()])
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut [R]> {
        let range = self.layout.tensors.iter().find(|t| t.name == name)?.range();
        Some(&mut self.data[range])
    }

    /// Embedding row for token `id`.
    pub fn embedding(&self, id: u32) -> &[R] {
        let d = self.config.d_model;
        self.slice(self.layout.tok_emb + id as usize * d, d)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cast<S: Real>(&self) -> Params<S> {
        Params {
            config: self.config,
            layout: self.layout.clone(),
            data: self.data.iter().map(|v| S::from_f64_lossy(v.to_f64_lossy())).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ModelConfig {
        ModelConfig { n_layers: 1, n_heads: 2, d_model: 8, d_ff: 16, max_seq: 6, vocab_size: 11 }
    }

    #[test]
    fn config_validation() {
        assert!(ModelConfig::desk(300).validate().is_ok());
        let mut c = tiny();
        c.n_heads = 3;
        assert!(c.validate().is_err());
        c = tiny();
        c.max_seq = 1;
        assert!(c.validate().is_err());
        c = tiny();
        c.d_ff = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn layout_is_contiguous() {
        let l = Layout::new(&tiny());
        let mut next = 0;
        for t in &l.tensors {
            assert_eq!(t.offset, next, "{}", t.name);
            next += t.len();
        }
        assert_eq!(next, l.total);
        assert_eq!(l.tensors.len(), 2 + 16 + 3);
    }

    #[test]
    fn init_is_deterministic_and_seed_sensitive() {
        let a = Params::<f32>::init(tiny(), 1).unwrap();
        let b = Params::<f32>::init(tiny(), 1).unwrap();
        let c = Params::<f32>::init(tiny(), 2).unwrap();
        assert_eq!(a.data, b.data);
        assert_ne!(a.data, c.data);
        for t in &a.layout.tensors {
            if matches!(t.role, TensorRole::Weight | TensorRole::Embedding) {
                assert!(a.data[t.range()].iter().all(|v| v.abs() <= 0.04 + 1e-7), "{}", t.name);
            }
        }
        assert!(a.tensor("lnf.g").unwrap().iter().all(|&v| v == 1.0));
        assert!(a.tensor("layer0.q.b").unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_std_gives_zero_weights() {
        let p = Params::<f32>::init_with_std(tiny(), 3, 0.0).unwrap();
        for t in &p.layout.tensors {
            if matches!(t.role, TensorRole::Weight | TensorRole::Embedding) {
                assert!(p.data[t.range()].iter().all(|&v| v == 0.0), "{}", t.name);
            }
        }
    }
}
