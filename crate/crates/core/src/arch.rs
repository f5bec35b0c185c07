//! Architecture configurations, parameter counts and recurrent-state / KV-cache
//! sizes.
//!
//! Two model families are supported: a Llama-style Transformer with grouped-query
//! attention and an xLSTM built from mLSTM blocks. Both alternate a
//! sequence-mix layer with a gated feedforward layer and use untied embedding
//! and unembedding matrices.

use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

/// Vocabulary size used when a configuration does not specify one.
pub const DEFAULT_VOCAB: u64 = 50257;

/// Chunk length of the chunkwise-parallel mLSTM kernels when unspecified.
pub const DEFAULT_CHUNK_SIZE: u64 = 64;

fn default_vocab() -> u64 {
    DEFAULT_VOCAB
}

fn default_chunk_size() -> u64 {
    DEFAULT_CHUNK_SIZE
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArchKind {
    Transformer,
    Xlstm,
}

impl fmt::Display for ArchKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ArchKind::Transformer => f.write_str("transformer"),
            ArchKind::Xlstm => f.write_str("xlstm"),
        }
    }
}

/// Sequence-mix operation whose memory footprint is queried by
/// [`state_size_elements`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SeqMixKind {
    /// Multi-head attention.
    #[serde(rename = "mha")]
    Mha,
    /// Grouped-query attention.
    #[serde(rename = "gqa")]
    Gqa,
    /// Multi-head latent attention. Only its cache size is modelled.
    #[serde(rename = "mla")]
    Mla,
    #[serde(rename = "mlstm")]
    Mlstm,
}

/// One architecture instance.
///
/// `n_head_kv` is only meaningful for Transformers; when absent it defaults to
/// `n_head_q` (plain multi-head attention). `chunk_size` is only used by the
/// xLSTM FLOP and memory-op counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchConfig {
    pub kind: ArchKind,
    pub d_model: u64,
    pub d_ff: u64,
    pub d_qk: u64,
    pub d_hv: u64,
    pub n_head_q: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_head_kv: Option<u64>,
    pub n_layer: u64,
    #[serde(default = "default_vocab")]
    pub n_vocab: u64,
    #[serde(default = "default_chunk_size")]
    pub chunk_size: u64,
}

impl ArchConfig {
    pub fn xlstm(d_model: u64, d_ff: u64, d_qk: u64, d_hv: u64, n_head: u64, n_layer: u64) -> Self {
        ArchConfig {
            kind: ArchKind::Xlstm,
            d_model,
            d_ff,
            d_qk,
            d_hv,
            n_head_q: n_head,
            n_head_kv: None,
            n_layer,
            n_vocab: DEFAULT_VOCAB,
            chunk_size: DEFAULT_CHUNK_SIZE,
        }
    }

    /// Multi-head attention Transformer with `d_qk = d_hv = d_head`.
    pub fn transformer(d_model: u64, d_ff: u64, d_head: u64, n_head: u64, n_layer: u64) -> Self {
        ArchConfig {
            kind: ArchKind::Transformer,
            d_model,
            d_ff,
            d_qk: d_head,
            d_hv: d_head,
            n_head_q: n_head,
            n_head_kv: None,
            n_layer,
            n_vocab: DEFAULT_VOCAB,
            chunk_size: DEFAULT_CHUNK_SIZE,
        }
    }

    pub fn with_kv_heads(mut self, n_head_kv: u64) -> Self {
        self.n_head_kv = Some(n_head_kv);
        self
    }

    pub fn with_vocab(mut self, n_vocab: u64) -> Self {
        self.n_vocab = n_vocab;
        self
    }

    pub fn with_chunk_size(mut self, chunk_size: u64) -> Self {
        self.chunk_size = chunk_size;
        self
    }

    pub fn with_layers(mut self, n_layer: u64) -> Self {
        self.n_layer = n_layer;
        self
    }

    /// Number of key/value heads actually used by the sequence mix.
    pub fn kv_heads(&self) -> u64 {
        match self.kind {
            ArchKind::Transformer => self.n_head_kv.unwrap_or(self.n_head_q),
            ArchKind::Xlstm => self.n_head_q,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let violations = validate_config(self);
        if violations.is_empty() {
            Ok(())
        } else {
            Err(ConfigError { violations })
        }
    }
}

/// A single broken configuration invariant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum ConfigViolation {
    /// A dimension that must be at least one is zero.
    ZeroDimension(&'static str),
    /// `n_head_kv` does not divide `n_head_q`.
    GqaDivisibility { n_head_q: u64, n_head_kv: u64 },
    /// An xLSTM config carries an `n_head_kv` different from `n_head_q`.
    XlstmKvHeads { n_head_q: u64, n_head_kv: u64 },
}

impl fmt::Display for ConfigViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigViolation::ZeroDimension(name) => write!(f, "positive-dimension: {name} must be >= 1"),
            ConfigViolation::GqaDivisibility { n_head_q, n_head_kv } => {
                write!(f, "GQA divisibility: n_head_kv={n_head_kv} does not divide n_head_q={n_head_q}")
            }
            ConfigViolation::XlstmKvHeads { n_head_q, n_head_kv } => {
                write!(f, "xlstm n_head_kv={n_head_kv} must equal n_head_q={n_head_q} if supplied")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid config: {}", display_list(.violations))]
pub struct ConfigError {
    pub violations: Vec<ConfigViolation>,
}

fn display_list(items: &[ConfigViolation]) -> alloc::string::String {
    use core::fmt::Write;
    let mut out = alloc::string::String::new();
    for (i, v) in items.iter().enumerate() {
        if i > 0 {
            out.push_str("; ");
        }
        let _ = write!(out, "{v}");
    }
    out
}

/// Returns every violated invariant of `config`; an empty list means valid.
pub fn validate_config(config: &ArchConfig) -> Vec<ConfigViolation> {
    let mut out = Vec::new();
    let dims = [
        ("d_model", config.d_model),
        ("d_ff", config.d_ff),
        ("d_qk", config.d_qk),
        ("d_hv", config.d_hv),
        ("n_head_q", config.n_head_q),
        ("n_layer", config.n_layer),
        ("n_vocab", config.n_vocab),
        ("chunk_size", config.chunk_size),
    ];
    for (name, value) in dims {
        if value == 0 {
            out.push(ConfigViolation::ZeroDimension(name));
        }
    }
    match (config.kind, config.n_head_kv) {
        (ArchKind::Transformer, Some(0)) => out.push(ConfigViolation::ZeroDimension("n_head_kv")),
        (ArchKind::Transformer, Some(kv)) => {
            if config.n_head_q != 0 && config.n_head_q % kv != 0 {
                out.push(ConfigViolation::GqaDivisibility { n_head_q: config.n_head_q, n_head_kv: kv });
            }
        }
        (ArchKind::Xlstm, Some(kv)) if kv != config.n_head_q => {
            out.push(ConfigViolation::XlstmKvHeads { n_head_q: config.n_head_q, n_head_kv: kv });
        }
        _ => {}
    }
    out
}

/// Exact parameter counts, split by component.
///
/// `seq_mix_per_layer` and `feedforward_per_layer` include the pre-norm of
/// their block; `total` counts both the input embedding and the untied
/// unembedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamBreakdown {
    pub embeddings: u64,
    pub seq_mix_per_layer: u64,
    pub feedforward_per_layer: u64,
    pub n_layer: u64,
    pub output_norm: u64,
    pub unembedding: u64,
    pub total: u64,
}

impl ParamBreakdown {
    /// Parameters excluding the input embedding table.
    pub fn non_embedding(&self) -> u64 {
        self.total - self.embeddings
    }

    /// Total in millions, rounded half-up.
    pub fn millions_rounded(&self) -> u64 {
        (self.total + 500_000) / 1_000_000
    }
}

/// The result of [`count_params`] would not fit in a `u64`.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParamError {
    #[error(transparent)]
    Invalid(#[from] ConfigError),
    #[error("parameter count overflows u64")]
    Overflow,
}

/// Exact parameter count of `config`, including embeddings, norms and gate
/// biases.
pub fn count_params(config: &ArchConfig) -> Result<ParamBreakdown, ParamError> {
    config.validate()?;
    let d = u128::from(config.d_model);
    let d_ff = u128::from(config.d_ff);
    let qk = u128::from(config.d_qk);
    let hv = u128::from(config.d_hv);
    let hq = u128::from(config.n_head_q);
    let hkv = u128::from(config.kv_heads());
    let vocab = u128::from(config.n_vocab);
    let layers = u128::from(config.n_layer);

    let seq_mix = match config.kind {
        ArchKind::Xlstm => {
            let pre_norm = d;
            let qkv = d * hq * (2 * qk + hv);
            let gates = 2 * d * hq + 2 * hq;
            let output_gate = d * hq * hv;
            let head_norm = hq * hv;
            let projection = d * hq * hv;
            pre_norm + qkv + gates + output_gate + head_norm + projection
        }
        ArchKind::Transformer => {
            let pre_norm = d;
            let qkv = d * (qk * hq + (qk + hv) * hkv);
            let projection = d * hq * hv;
            pre_norm + qkv + projection
        }
    };
    let feedforward = d + 3 * d * d_ff;
    let embeddings = vocab * d;
    let unembedding = d * vocab;
    let output_norm = d;
    let total = embeddings + layers * (seq_mix + feedforward) + output_norm + unembedding;

    let narrow = |v: u128| u64::try_from(v).map_err(|_| ParamError::Overflow);
    Ok(ParamBreakdown {
        embeddings: narrow(embeddings)?,
        seq_mix_per_layer: narrow(seq_mix)?,
        feedforward_per_layer: narrow(feedforward)?,
        n_layer: config.n_layer,
        output_norm: narrow(output_norm)?,
        unembedding: narrow(unembedding)?,
        total: narrow(total)?,
    })
}

/// Number of elements in the recurrent state (mLSTM) or KV cache (attention
/// variants) of one layer after `seq_len` tokens.
///
/// Multiply by a byte width to get bytes, and by `n_layer` for the whole model.
pub fn state_size_elements(kind: SeqMixKind, config: &ArchConfig, seq_len: u64) -> Result<f64, ConfigError> {
    config.validate()?;
    let t = seq_len as f64;
    let hv = config.d_hv as f64;
    let qk = config.d_qk as f64;
    Ok(match kind {
        SeqMixKind::Mha => 2.0 * config.n_head_q as f64 * hv * t,
        SeqMixKind::Gqa => 2.0 * config.kv_heads() as f64 * hv * t,
        SeqMixKind::Mla => 4.5 * hv * t,
        SeqMixKind::Mlstm => config.n_head_q as f64 * (hv * qk + qk + 1.0),
    })
}
