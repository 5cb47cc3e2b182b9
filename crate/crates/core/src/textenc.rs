//! Deterministic toy transformer sentence encoder.
//!
//! Text is lowercased, split on anything that is not alphanumeric, and each
//! token is hashed into a fixed closed vocabulary. The forward pass is the
//! classic encoder stack: token embedding plus sinusoidal position code,
//! then per layer multi-head scaled dot-product self-attention and a ReLU
//! feed-forward block, each wrapped in a residual connection followed by
//! layer normalization. Token states are mean-pooled and L2-normalized, so
//! inner products between outputs are cosine similarities.
//!
//! Weights are never trained. Their only contract is to be deterministic
//! for a given seed and to give a non-degenerate similarity geometry.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};

pub const DEFAULT_VOCAB_SIZE: usize = 4096;
pub const DEFAULT_LAYER_NORM_EPS: f64 = 1e-5;

/// A unit of all similarity math: a fixed-dimension real vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    values: Vec<f64>,
    normalized: bool,
}

impl EmbeddingVector {
    /// Wraps raw components without normalizing them.
    pub fn raw(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("embedding has non-finite components"));
        }
        Ok(Self {
            values,
            normalized: false,
        })
    }

    /// L2-normalizes `values`. A zero vector cannot be normalized.
    pub fn normalized(values: Vec<f64>) -> Result<Self> {
        Self::raw(values)?.normalize()
    }

    pub fn normalize(self) -> Result<Self> {
        if self.normalized {
            return Ok(self);
        }
        let norm = linalg::l2_norm(&self.values);
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::domain("cannot normalize a zero-norm embedding"));
        }
        Ok(Self {
            values: self.values.into_iter().map(|v| v / norm).collect(),
            normalized: true,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn norm(&self) -> f64 {
        linalg::l2_norm(&self.values)
    }

    pub fn dot(&self, other: &EmbeddingVector) -> f64 {
        linalg::dot(&self.values, &other.values)
    }

    /// Cosine similarity. For two normalized vectors this is the plain
    /// inner product; zero-norm inputs yield 0.
    pub fn cosine(&self, other: &EmbeddingVector) -> f64 {
        if self.normalized && other.normalized {
            return self.dot(other);
        }
        let denom = self.norm() * other.norm();
        if denom == 0.0 {
            0.0
        } else {
            self.dot(other) / denom
        }
    }
}

/// Anything that maps text to a unit-norm embedding.
pub trait Embedder: Send + Sync {
    fn embed(&self, text: &str) -> Result<EmbeddingVector>;

    fn dim(&self) -> usize;
}

/// Non-empty list of vocabulary ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    tokens: Vec<usize>,
}

impl TokenSequence {
    pub fn new(tokens: Vec<usize>, vocab_size: usize) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::domain("empty token stream"));
        }
        if let Some(&bad) = tokens.iter().find(|&&t| t >= vocab_size) {
            return Err(Error::domain(format!(
                "token id {bad} outside vocabulary of {vocab_size}"
            )));
        }
        Ok(Self { tokens })
    }

    pub fn ids(&self) -> &[usize] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Lowercased alphanumeric words of `text`.
pub fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

// 64-bit FNV-1a; stable across platforms and releases, unlike std's hasher.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

pub fn token_id(word: &str, vocab_size: usize) -> usize {
    (fnv1a(word.as_bytes()) % vocab_size as u64) as usize
}

pub fn tokenize(text: &str, vocab_size: usize) -> Result<TokenSequence> {
    let ids = words(text).iter().map(|w| token_id(w, vocab_size)).collect();
    TokenSequence::new(ids, vocab_size)
}

/// Sinusoidal position code: `sin(pos / 10000^(2i/d))` on even dimensions
/// `2i`, the matching cosine on odd dimensions `2i + 1`.
pub fn positional_encoding(pos: usize, dim: usize, d: usize) -> Result<f64> {
    if dim >= d {
        return Err(Error::domain(format!(
            "dimension {dim} outside model dimension {d}"
        )));
    }
    let i = dim / 2;
    let angle = pos as f64 / 10000f64.powf((2 * i) as f64 / d as f64);
    Ok(if dim % 2 == 0 { angle.sin() } else { angle.cos() })
}

/// `Softmax(Q Kᵀ / √d_k) V`, row-wise softmax.
pub fn attention(q: &Matrix, k: &Matrix, v: &Matrix, d_k: usize) -> Result<Matrix> {
    if q.cols() != d_k || k.cols() != d_k {
        return Err(Error::domain(format!(
            "query/key width {}x{} does not match d_k = {d_k}",
            q.cols(),
            k.cols()
        )));
    }
    if q.rows() != k.rows() || k.rows() != v.rows() {
        return Err(Error::domain(format!(
            "row counts differ: Q {}, K {}, V {}",
            q.rows(),
            k.rows(),
            v.rows()
        )));
    }
    let scale = (d_k as f64).sqrt();
    let mut scores = q.matmul_t(k);
    for r in 0..scores.rows() {
        let row = scores.row_mut(r);
        for s in row.iter_mut() {
            *s /= scale;
        }
        let probs = linalg::softmax(row);
        row.copy_from_slice(&probs);
    }
    Ok(scores.matmul(v))
}

/// `(z − μ) / (σ + ε)` with the population standard deviation.
pub fn layer_norm(z: &[f64], epsilon: f64) -> Result<Vec<f64>> {
    if z.is_empty() {
        return Err(Error::domain("layer_norm of an empty vector"));
    }
    let n = z.len() as f64;
    let mean = z.iter().sum::<f64>() / n;
    let var = z.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let denom = var.sqrt() + epsilon;
    Ok(z.iter().map(|x| (x - mean) / denom).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub heads: usize,
    pub layers: usize,
    pub ffn_dim: usize,
    pub layer_norm_eps: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            vocab_size: DEFAULT_VOCAB_SIZE,
            d_model: 64,
            heads: 4,
            layers: 2,
            ffn_dim: 256,
            layer_norm_eps: DEFAULT_LAYER_NORM_EPS,
        }
    }
}

impl EncoderConfig {
    pub fn head_dim(&self) -> usize {
        self.d_model / self.heads
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerWeights {
    pub w_q: Matrix,
    pub w_k: Matrix,
    pub w_v: Matrix,
    pub w_o: Matrix,
    pub w_1: Matrix,
    pub b_1: Vec<f64>,
    pub w_2: Matrix,
    pub b_2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderWeights {
    pub config: EncoderConfig,
    pub seed: u64,
    pub embedding: Matrix,
    pub layers: Vec<LayerWeights>,
}

impl EncoderWeights {
    /// Seeded uniform initialization in `[−1/√d, 1/√d]`.
    pub fn seeded(config: EncoderConfig, seed: u64) -> Result<Self> {
        if config.heads == 0 || config.d_model % config.heads != 0 {
            return Err(Error::domain(format!(
                "d_model {} not divisible by {} heads",
                config.d_model, config.heads
            )));
        }
        if config.vocab_size == 0 || config.layers == 0 || config.ffn_dim == 0 {
            return Err(Error::domain("encoder sizes must be positive"));
        }
        let d = config.d_model;
        let bound = 1.0 / (d as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut mat = |rows: usize, cols: usize| {
            let data = (0..rows * cols)
                .map(|_| rng.gen_range(-bound..=bound))
                .collect();
            Matrix::from_vec(rows, cols, data)
        };
        let embedding = mat(config.vocab_size, d);
        let layers = (0..config.layers)
            .map(|_| {
                let w_q = mat(d, d);
                let w_k = mat(d, d);
                let w_v = mat(d, d);
                let w_o = mat(d, d);
                let w_1 = mat(d, config.ffn_dim);
                let b_1 = mat(1, config.ffn_dim).as_slice().to_vec();
                let w_2 = mat(config.ffn_dim, d);
                let b_2 = mat(1, d).as_slice().to_vec();
                LayerWeights {
                    w_q,
                    w_k,
                    w_v,
                    w_o,
                    w_1,
                    b_1,
                    w_2,
                    b_2,
                }
            })
            .collect();
        Ok(Self {
            config,
            seed,
            embedding,
            layers,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.embedding.is_finite()
            && self.layers.iter().all(|l| {
                l.w_q.is_finite()
                    && l.w_k.is_finite()
                    && l.w_v.is_finite()
                    && l.w_o.is_finite()
                    && l.w_1.is_finite()
                    && l.w_2.is_finite()
                    && l.b_1.iter().chain(&l.b_2).all(|v| v.is_finite())
            })
    }
}

fn multi_head_attention(z: &Matrix, layer: &LayerWeights, config: &EncoderConfig) -> Result<Matrix> {
    let q = z.matmul(&layer.w_q);
    let k = z.matmul(&layer.w_k);
    let v = z.matmul(&layer.w_v);
    let d_k = config.head_dim();
    let mut concat = Matrix::zeros(z.rows(), config.d_model);
    for h in 0..config.heads {
        let start = h * d_k;
        let head = attention(
            &q.column_block(start, d_k),
            &k.column_block(start, d_k),
            &v.column_block(start, d_k),
            d_k,
        )?;
        for r in 0..z.rows() {
            concat.row_mut(r)[start..start + d_k].copy_from_slice(head.row(r));
        }
    }
    Ok(concat.matmul(&layer.w_o))
}

fn feed_forward(z: &Matrix, layer: &LayerWeights) -> Matrix {
    let mut hidden = z.matmul(&layer.w_1);
    hidden.add_row_bias(&layer.b_1);
    hidden.map_inplace(|x| x.max(0.0));
    let mut out = hidden.matmul(&layer.w_2);
    out.add_row_bias(&layer.b_2);
    out
}

fn residual_norm(z: &Matrix, sublayer: &Matrix, eps: f64) -> Result<Matrix> {
    let mut sum = z.clone();
    sum.add_assign(sublayer);
    for r in 0..sum.rows() {
        let normed = layer_norm(sum.row(r), eps)?;
        sum.row_mut(r).copy_from_slice(&normed);
    }
    Ok(sum)
}

/// Token states after the full encoder stack, one row per token.
pub fn encode_tokens(tokens: &TokenSequence, weights: &EncoderWeights) -> Result<Matrix> {
    let config = &weights.config;
    let d = config.d_model;
    let mut z = Matrix::zeros(tokens.len(), d);
    for (pos, &id) in tokens.ids().iter().enumerate() {
        if id >= config.vocab_size {
            return Err(Error::domain(format!("token id {id} outside vocabulary")));
        }
        let emb = weights.embedding.row(id);
        for (dim, (out, &e)) in z.row_mut(pos).iter_mut().zip(emb).enumerate() {
            *out = e + positional_encoding(pos, dim, d)?;
        }
    }
    for layer in &weights.layers {
        let attn = multi_head_attention(&z, layer, config)?;
        z = residual_norm(&z, &attn, config.layer_norm_eps)?;
        let ffn = feed_forward(&z, layer);
        z = residual_norm(&z, &ffn, config.layer_norm_eps)?;
    }
    Ok(z)
}

/// Mean-pooled, L2-normalized sentence embedding of `text`.
pub fn encode_text(text: &str, weights: &EncoderWeights) -> Result<EmbeddingVector> {
    let tokens = tokenize(text, weights.config.vocab_size)?;
    let states = encode_tokens(&tokens, weights)?;
    let n = states.rows() as f64;
    let mut pooled = vec![0.0; weights.config.d_model];
    for r in 0..states.rows() {
        for (p, s) in pooled.iter_mut().zip(states.row(r)) {
            *p += s;
        }
    }
    for p in &mut pooled {
        *p /= n;
    }
    EmbeddingVector::normalized(pooled)
}

/// Owned encoder handle implementing [`Embedder`].
#[derive(Debug, Clone)]
pub struct TextEncoder {
    weights: EncoderWeights,
}

impl TextEncoder {
    pub fn new(weights: EncoderWeights) -> Self {
        Self { weights }
    }

    /// Default-sized encoder from a seed.
    pub fn seeded(seed: u64) -> Self {
        Self::new(EncoderWeights::seeded(EncoderConfig::default(), seed).expect("default config is valid"))
    }

    pub fn weights(&self) -> &EncoderWeights {
        &self.weights
    }
}

impl Embedder for TextEncoder {
    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        encode_text(text, &self.weights)
    }

    fn dim(&self) -> usize {
        self.weights.config.d_model
    }
}
