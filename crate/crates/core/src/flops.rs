//! Closed-form FLOP counts for training, prefill and generation.
//!
//! Backbone costs (projections, MLPs, norms, unembedding) are counted per token
//! and are the same in every mode. Sequence-mix costs depend on the mode: the
//! mLSTM uses its chunkwise-parallel form for training and prefill and its
//! recurrent form for generation; self-attention is quadratic in prefill and
//! linear in the cache length per generated token.

use serde::{Deserialize, Serialize};

use crate::arch::{ArchConfig, ArchKind, ConfigError};

/// Per-operation FLOP factors.
///
/// Elementwise factors default to 1 (every operation counts as one FLOP),
/// softmax to 5 FLOPs per logit, normalization to 3 FLOPs per element, and
/// causal masking halves the attention work.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostFactors {
    pub f_exp: f64,
    pub f_log: f64,
    pub f_sig: f64,
    pub f_max: f64,
    pub f_abs: f64,
    pub f_swish: f64,
    pub f_softmax: f64,
    pub f_norm: f64,
    pub f_causal: f64,
    pub f_skip: f64,
}

impl Default for CostFactors {
    fn default() -> Self {
        CostFactors {
            f_exp: 1.0,
            f_log: 1.0,
            f_sig: 1.0,
            f_max: 1.0,
            f_abs: 1.0,
            f_swish: 1.0,
            f_softmax: 5.0,
            f_norm: 3.0,
            f_causal: 0.5,
            f_skip: 1.0,
        }
    }
}

impl CostFactors {
    pub fn validate(&self) -> Result<(), FlopError> {
        let all = [
            self.f_exp,
            self.f_log,
            self.f_sig,
            self.f_max,
            self.f_abs,
            self.f_swish,
            self.f_softmax,
            self.f_norm,
            self.f_skip,
        ];
        if all.iter().any(|f| !(f.is_finite() && *f >= 0.0)) {
            return Err(FlopError::InvalidFactors("FLOP factors must be finite and >= 0"));
        }
        if !(self.f_causal > 0.0 && self.f_causal <= 1.0) {
            return Err(FlopError::InvalidFactors("f_causal must lie in (0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FlopError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invalid cost factors: {0}")]
    InvalidFactors(&'static str),
    #[error("invalid workload: {0}")]
    InvalidWorkload(&'static str),
    #[error("sequence length and chunk size must be >= 1 (got T={seq_len}, L={chunk})")]
    NonPositiveLength { seq_len: u64, chunk: u64 },
    #[error("training tokens D={tokens} must be >= context T={context}")]
    TooFewTokens { tokens: f64, context: u64 },
}

/// Which pass a [`Workload`] describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// One forward pass over `B` sequences of length `T`.
    Forward,
    /// Forward pass of a training step; the backward multiplier is applied by
    /// [`training_compute`], not here.
    Train,
    /// Processing a prompt of length `T_p`.
    Prefill,
    /// The `t_g`-th generated token (1-based) after a prompt of length `T_p`.
    GenStep { t_g: u64 },
    /// All `T_g` generated tokens after a prompt of length `T_p`.
    GenSeq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Workload {
    pub batch: u64,
    pub seq_len: u64,
    pub prefill_len: u64,
    pub gen_len: u64,
    pub mode: Mode,
}

impl Workload {
    pub fn forward(batch: u64, seq_len: u64) -> Self {
        Workload { batch, seq_len, prefill_len: 0, gen_len: 0, mode: Mode::Forward }
    }

    pub fn train(batch: u64, seq_len: u64) -> Self {
        Workload { mode: Mode::Train, ..Self::forward(batch, seq_len) }
    }

    pub fn prefill(batch: u64, prefill_len: u64) -> Self {
        Workload { batch, seq_len: prefill_len, prefill_len, gen_len: 0, mode: Mode::Prefill }
    }

    pub fn gen_step(batch: u64, prefill_len: u64, t_g: u64) -> Self {
        Workload { batch, seq_len: prefill_len + t_g, prefill_len, gen_len: t_g, mode: Mode::GenStep { t_g } }
    }

    pub fn gen_seq(batch: u64, prefill_len: u64, gen_len: u64) -> Self {
        Workload { batch, seq_len: prefill_len + gen_len, prefill_len, gen_len, mode: Mode::GenSeq }
    }

    pub fn validate(&self) -> Result<(), FlopError> {
        if self.batch == 0 {
            return Err(FlopError::InvalidWorkload("batch size must be >= 1"));
        }
        match self.mode {
            Mode::GenStep { t_g } => {
                if t_g == 0 || self.gen_len == 0 {
                    return Err(FlopError::InvalidWorkload("generation modes need T_g >= 1 and t_g >= 1"));
                }
                if t_g > self.gen_len {
                    return Err(FlopError::InvalidWorkload("t_g must not exceed T_g"));
                }
            }
            Mode::GenSeq if self.gen_len == 0 => {
                return Err(FlopError::InvalidWorkload("generation modes need T_g >= 1"));
            }
            _ => {}
        }
        Ok(())
    }

    /// Tokens pushed through the backbone.
    pub fn tokens(&self) -> f64 {
        let b = self.batch as f64;
        match self.mode {
            Mode::Forward | Mode::Train => b * self.seq_len as f64,
            Mode::Prefill => b * self.prefill_len as f64,
            Mode::GenStep { .. } => b,
            Mode::GenSeq => b * self.gen_len as f64,
        }
    }

    /// Number of full forward passes; each streams the weights once.
    pub fn passes(&self) -> f64 {
        match self.mode {
            Mode::GenSeq => self.gen_len as f64,
            _ => 1.0,
        }
    }
}

/// FLOPs of a dense linear layer applied to `tokens` rows.
pub fn flops_linear(tokens: f64, d_in: f64, d_out: f64) -> f64 {
    2.0 * tokens * d_in * d_out
}

/// Per-head, per-chunk FLOPs of the chunkwise-parallel mLSTM, split by stage.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MlstmChunkFlops {
    pub gates: f64,
    pub numerator: f64,
    pub denominator: f64,
    pub cumulative_forget_gates: f64,
    pub gate_matrix: f64,
    pub intra_outputs: f64,
    pub inter_outputs: f64,
    pub output_combination: f64,
    /// `2 L d_hv` term of the closed-form chunk total that none of the stage
    /// rows account for. Kept so the stage sum equals the closed form.
    pub unattributed: f64,
}

impl MlstmChunkFlops {
    pub fn total(&self) -> f64 {
        self.gates
            + self.numerator
            + self.denominator
            + self.cumulative_forget_gates
            + self.gate_matrix
            + self.intra_outputs
            + self.inter_outputs
            + self.output_combination
            + self.unattributed
    }
}

/// Stage-wise FLOPs of one head processing one chunk of length `chunk`.
pub fn mlstm_chunk_flops(d_qk: f64, d_hv: f64, chunk: f64, f: &CostFactors) -> MlstmChunkFlops {
    let l = chunk;
    let l2 = l * l;
    let dd = d_qk * d_hv;
    MlstmChunkFlops {
        gates: 2.0 * l + 0.5 * l * (l + 1.0) + l * (1.0 + f.f_exp + f.f_log + f.f_sig) + 3.0 + f.f_max + f.f_exp,
        numerator: 2.0 * dd + 2.0 * l * dd + l * d_qk,
        denominator: 2.0 * d_qk + 2.0 * l * d_qk,
        cumulative_forget_gates: 0.5 * l * (l + 1.0) + l * (f.f_log + f.f_sig),
        gate_matrix: f.f_causal * (l2 * (3.0 + f.f_exp + f.f_max) + l * (1.0 + f.f_max)),
        intra_outputs: f.f_causal * (2.0 * l2 * (d_qk + d_hv) + 3.0 * l2),
        inter_outputs: 2.0 * l * dd + 3.0 * l * d_qk,
        output_combination: 2.0 * l * d_hv + l * (1.0 + f.f_max + f.f_abs + f.f_exp),
        unattributed: 2.0 * l * d_hv,
    }
}

/// Chunkwise-parallel mLSTM FLOPs for one sequence of `seq_len` tokens, over
/// all heads of one layer.
///
/// When `chunk_size` does not divide `seq_len`, the trailing partial chunk is
/// costed with its own length.
pub fn flops_mlstm_chunkwise(config: &ArchConfig, seq_len: u64, factors: &CostFactors) -> Result<f64, FlopError> {
    let chunk = config.chunk_size;
    if seq_len == 0 || chunk == 0 {
        return Err(FlopError::NonPositiveLength { seq_len, chunk });
    }
    let (qk, hv) = (config.d_qk as f64, config.d_hv as f64);
    let full = (seq_len / chunk) as f64;
    let rest = seq_len % chunk;
    let mut per_head = full * mlstm_chunk_flops(qk, hv, chunk as f64, factors).total();
    if rest > 0 {
        per_head += mlstm_chunk_flops(qk, hv, rest as f64, factors).total();
    }
    Ok(config.n_head_q as f64 * per_head)
}

/// Recurrent mLSTM FLOPs for one token over all heads of one layer.
pub fn flops_mlstm_recurrent(config: &ArchConfig, f: &CostFactors) -> f64 {
    let (qk, hv) = (config.d_qk as f64, config.d_hv as f64);
    let gates = 4.0 + 2.0 * f.f_exp + f.f_log + f.f_sig + f.f_max;
    let cell_update = 4.0 * qk * hv;
    let denominator = 6.0 * qk + hv + 1.0 + f.f_abs + f.f_max;
    let output = 2.0 * hv * qk + qk;
    config.n_head_q as f64 * (gates + cell_update + denominator + output)
}

/// Per-key FLOP coefficient of attention summed over query heads.
fn attention_coefficient(config: &ArchConfig, f: &CostFactors) -> f64 {
    2.0 * f.f_causal * config.n_head_q as f64 * (config.d_qk as f64 + config.d_hv as f64 + 0.5 * f.f_softmax)
}

/// Self-attention FLOPs for prefill (or a training forward pass) of one
/// sequence of `seq_len` tokens in one layer.
pub fn flops_attention_prefill(config: &ArchConfig, seq_len: u64, factors: &CostFactors) -> f64 {
    let t = seq_len as f64;
    attention_coefficient(config, factors) * t * t
}

/// Self-attention FLOPs for the `t_g`-th generated token after a prompt of
/// `prefill_len` tokens.
pub fn flops_attention_gen_step(config: &ArchConfig, prefill_len: u64, t_g: u64, factors: &CostFactors) -> f64 {
    attention_coefficient(config, factors) * (prefill_len as f64 + t_g as f64)
}

/// Self-attention FLOPs summed over `gen_len` generated tokens.
pub fn flops_attention_gen_seq(config: &ArchConfig, prefill_len: u64, gen_len: u64, factors: &CostFactors) -> f64 {
    let (tp, tg) = (prefill_len as f64, gen_len as f64);
    attention_coefficient(config, factors) * (tp * tg + 0.5 * tg * (tg + 1.0))
}

/// Model FLOPs, split by component. Every field is already summed over layers
/// and tokens.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FlopBreakdown {
    /// Always zero: embedding lookups are gathers.
    pub embeddings: f64,
    pub norm_and_skip: f64,
    pub qkv: f64,
    /// Input and forget gate projections (xLSTM only).
    pub gates: f64,
    /// mLSTM cell or self-attention.
    pub seq_mix: f64,
    /// Output gate projection and activation (xLSTM only).
    pub output_gate: f64,
    /// Per-head output norm (xLSTM only).
    pub head_norm: f64,
    pub output_projection: f64,
    pub mlp: f64,
    pub activations: f64,
    pub final_norm: f64,
    pub unembedding: f64,
    pub total: f64,
}

impl FlopBreakdown {
    fn finish(mut self) -> Self {
        self.total = self.embeddings
            + self.norm_and_skip
            + self.qkv
            + self.gates
            + self.seq_mix
            + self.output_gate
            + self.head_norm
            + self.output_projection
            + self.mlp
            + self.activations
            + self.final_norm
            + self.unembedding;
        self
    }

    /// Sum of all normalization work (pre-norms with skips, head norm, final norm).
    pub fn norms(&self) -> f64 {
        self.norm_and_skip + self.head_norm + self.final_norm
    }
}

/// Sequence-mix FLOPs of one sequence in one layer for the workload's mode.
pub fn seq_mix_flops_per_sequence(config: &ArchConfig, workload: &Workload, factors: &CostFactors) -> Result<f64, FlopError> {
    Ok(match (config.kind, workload.mode) {
        (ArchKind::Xlstm, Mode::Forward | Mode::Train) if workload.seq_len == 0 => 0.0,
        (ArchKind::Xlstm, Mode::Prefill) if workload.prefill_len == 0 => 0.0,
        (ArchKind::Xlstm, Mode::Forward | Mode::Train) => flops_mlstm_chunkwise(config, workload.seq_len, factors)?,
        (ArchKind::Xlstm, Mode::Prefill) => flops_mlstm_chunkwise(config, workload.prefill_len, factors)?,
        (ArchKind::Xlstm, Mode::GenStep { .. }) => flops_mlstm_recurrent(config, factors),
        (ArchKind::Xlstm, Mode::GenSeq) => workload.gen_len as f64 * flops_mlstm_recurrent(config, factors),
        (ArchKind::Transformer, Mode::Forward | Mode::Train) => flops_attention_prefill(config, workload.seq_len, factors),
        (ArchKind::Transformer, Mode::Prefill) => flops_attention_prefill(config, workload.prefill_len, factors),
        (ArchKind::Transformer, Mode::GenStep { t_g }) => flops_attention_gen_step(config, workload.prefill_len, t_g, factors),
        (ArchKind::Transformer, Mode::GenSeq) => {
            flops_attention_gen_seq(config, workload.prefill_len, workload.gen_len, factors)
        }
    })
}

/// Full-model forward FLOPs for `workload`.
pub fn flops_model_forward(config: &ArchConfig, workload: &Workload, factors: &CostFactors) -> Result<FlopBreakdown, FlopError> {
    config.validate()?;
    factors.validate()?;
    workload.validate()?;

    let tokens = workload.tokens();
    let layers = config.n_layer as f64;
    let d = config.d_model as f64;
    let d_ff = config.d_ff as f64;
    let (qk, hv) = (config.d_qk as f64, config.d_hv as f64);
    let hq = config.n_head_q as f64;
    let hkv = config.kv_heads() as f64;
    let f = factors;

    let per_layer_tokens = tokens * layers;
    let mut out = FlopBreakdown {
        norm_and_skip: per_layer_tokens * 2.0 * d * (f.f_skip + f.f_norm),
        mlp: per_layer_tokens * 6.0 * d * d_ff,
        activations: per_layer_tokens * d_ff * (1.0 + f.f_swish),
        final_norm: tokens * d * f.f_norm,
        unembedding: tokens * 2.0 * d * config.n_vocab as f64,
        output_projection: per_layer_tokens * 2.0 * d * hq * hv,
        ..FlopBreakdown::default()
    };
    match config.kind {
        ArchKind::Xlstm => {
            out.qkv = per_layer_tokens * 2.0 * d * hq * (2.0 * qk + hv);
            out.gates = per_layer_tokens * (2.0 * d * hq + 2.0 * hq);
            out.output_gate = per_layer_tokens * (2.0 * d * hq * hv + hq * hv * f.f_sig);
            out.head_norm = per_layer_tokens * hq * hv * f.f_norm;
        }
        ArchKind::Transformer => {
            out.qkv = per_layer_tokens * 2.0 * d * (qk * hq + qk * hkv + hv * hkv);
        }
    }
    out.seq_mix = workload.batch as f64 * layers * seq_mix_flops_per_sequence(config, workload, factors)?;
    Ok(out.finish())
}

/// Training compute for `tokens` training tokens at context length `context`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingCompute {
    /// Total training FLOPs (forward and backward).
    pub flops: f64,
    /// Number of training sequences, `D / T` (may be fractional).
    pub sequences: f64,
    /// Forward FLOPs of one sequence.
    pub forward_per_sequence: f64,
    /// Ratio of training to forward FLOPs.
    pub backward_multiplier: f64,
}

/// Conventional training-to-forward FLOP ratio (backward pass costs twice the forward).
pub const DEFAULT_BACKWARD_MULTIPLIER: f64 = 3.0;

pub fn training_compute(
    config: &ArchConfig,
    context: u64,
    tokens: f64,
    factors: &CostFactors,
    backward_multiplier: f64,
) -> Result<TrainingCompute, FlopError> {
    if context == 0 {
        return Err(FlopError::NonPositiveLength { seq_len: 0, chunk: config.chunk_size });
    }
    if !(tokens >= context as f64) {
        return Err(FlopError::TooFewTokens { tokens, context });
    }
    let per_sequence = flops_model_forward(config, &Workload::train(1, context), factors)?.total;
    let sequences = tokens / context as f64;
    Ok(TrainingCompute {
        flops: sequences * per_sequence * backward_multiplier,
        sequences,
        forward_per_sequence: per_sequence,
        backward_multiplier,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::count_params;

    fn unit_xlstm() -> ArchConfig {
        ArchConfig::xlstm(1, 1, 1, 1, 1, 1).with_chunk_size(1)
    }

    fn unit_attention() -> ArchConfig {
        ArchConfig::transformer(1, 1, 1, 1, 1)
    }

    #[test]
    fn linear_layer() {
        assert_eq!(flops_linear(1.0, 1.0, 1.0), 2.0);
        assert_eq!(flops_linear(128.0, 1024.0, 4096.0), 1_073_741_824.0);
        assert_eq!(flops_linear(0.0, 512.0, 512.0), 0.0);
    }

    #[test]
    fn chunkwise_unit_dims() {
        let f = CostFactors::default();
        assert_eq!(flops_mlstm_chunkwise(&unit_xlstm(), 1, &f).unwrap(), 44.0);
    }

    #[test]
    fn chunkwise_matches_closed_form_with_unit_factors() {
        // Closed form: n_head * (T L Fc (2(dqk+dhv)+8) + T L + 2 T Fc
        //   + T (4 dqk dhv + 6 dqk + 4 dhv + 13) + T/L (2 dqk dhv + 2 dqk + 5)).
        let f = CostFactors::default();
        let cfg = ArchConfig::xlstm(1024, 2752, 128, 256, 4, 24).with_chunk_size(64);
        let (t, l, qk, hv, h, fc) = (8192.0, 64.0, 128.0, 256.0, 4.0, 0.5);
        let closed = h
            * (t * l * fc * (2.0 * (qk + hv) + 8.0) + t * l + 2.0 * t * fc + t * (4.0 * qk * hv + 6.0 * qk + 4.0 * hv + 13.0)
                + t / l * (2.0 * qk * hv + 2.0 * qk + 5.0));
        assert_eq!(flops_mlstm_chunkwise(&cfg, 8192, &f).unwrap(), closed);
    }

    #[test]
    fn chunkwise_linear_in_t_and_heads() {
        let f = CostFactors::default();
        let cfg = ArchConfig::xlstm(512, 1408, 64, 128, 4, 10).with_chunk_size(64);
        let one = flops_mlstm_chunkwise(&cfg, 1024, &f).unwrap();
        assert_eq!(flops_mlstm_chunkwise(&cfg, 2048, &f).unwrap(), 2.0 * one);
        let mut two_heads = cfg.clone();
        two_heads.n_head_q = 8;
        assert_eq!(flops_mlstm_chunkwise(&two_heads, 1024, &f).unwrap(), 2.0 * one);
    }

    #[test]
    fn chunkwise_partial_chunk_costed_separately() {
        let f = CostFactors::default();
        let cfg = ArchConfig::xlstm(512, 1408, 64, 128, 4, 10).with_chunk_size(64);
        let full = flops_mlstm_chunkwise(&cfg, 128, &f).unwrap();
        let partial = 4.0 * mlstm_chunk_flops(64.0, 128.0, 16.0, &f).total();
        assert_eq!(flops_mlstm_chunkwise(&cfg, 144, &f).unwrap(), full + partial);
    }

    #[test]
    fn chunkwise_rejects_empty() {
        let f = CostFactors::default();
        assert!(matches!(flops_mlstm_chunkwise(&unit_xlstm(), 0, &f), Err(FlopError::NonPositiveLength { .. })));
    }

    #[test]
    fn recurrent_counts() {
        let f = CostFactors::default();
        assert_eq!(flops_mlstm_recurrent(&unit_xlstm(), &f), 26.0);
        let cfg = ArchConfig::xlstm(4096, 10944, 256, 512, 8, 32);
        assert_eq!(flops_mlstm_recurrent(&cfg, &f), 6_309_984.0);
    }

    #[test]
    fn attention_counts() {
        let f = CostFactors::default();
        assert_eq!(flops_attention_prefill(&unit_attention(), 1, &f), 4.5);
        let cfg = ArchConfig::transformer(64, 1, 64, 1, 1);
        assert_eq!(flops_attention_prefill(&cfg, 1024, &f), 136_839_168.0);
        assert_eq!(flops_attention_prefill(&cfg, 2048, &f), 4.0 * 136_839_168.0);
        assert_eq!(flops_attention_gen_step(&unit_attention(), 4, 1, &f), 22.5);
        assert_eq!(flops_attention_gen_step(&unit_attention(), 0, 1, &f), 4.5);
        assert_eq!(flops_attention_gen_seq(&unit_attention(), 4, 3, &f), 81.0);
    }

    #[test]
    fn workload_validation() {
        let cfg = unit_attention();
        let f = CostFactors::default();
        let bad = [
            Workload::forward(0, 8),
            Workload::gen_seq(1, 4, 0),
            Workload { mode: Mode::GenStep { t_g: 5 }, ..Workload::gen_seq(1, 4, 3) },
            Workload::gen_step(1, 4, 0),
        ];
        for w in bad {
            assert!(matches!(flops_model_forward(&cfg, &w, &f), Err(FlopError::InvalidWorkload(_))), "{w:?}");
        }
    }

    #[test]
    fn bad_factors_rejected() {
        let f = CostFactors { f_causal: 0.0, ..CostFactors::default() };
        assert!(flops_model_forward(&unit_attention(), &Workload::forward(1, 1), &f).is_err());
        let f = CostFactors { f_exp: -1.0, ..CostFactors::default() };
        assert!(f.validate().is_err());
    }

    #[test]
    fn training_compute_near_six_nd_without_attention_and_norms() {
        let f = CostFactors::default();
        let cfg = ArchConfig::transformer(8192, 28672, 128, 64, 80);
        let ctx = 2048;
        let d_tokens = 1.0e12;
        let tc = training_compute(&cfg, ctx, d_tokens, &f, 3.0).unwrap();
        let fwd = flops_model_forward(&cfg, &Workload::train(1, ctx), &f).unwrap();
        let stripped = (fwd.total - fwd.seq_mix - fwd.norms()) * tc.sequences * 3.0;
        let p = count_params(&cfg).unwrap();
        let n_noemb = (p.total - p.embeddings - p.n_layer * 2 * cfg.d_model - p.output_norm) as f64;
        let six_nd = 6.0 * n_noemb * d_tokens;
        assert!(((stripped - six_nd) / six_nd).abs() < 0.01);
        assert_eq!(training_compute(&cfg, ctx, 2.0 * d_tokens, &f, 3.0).unwrap().flops, 2.0 * tc.flops);
        let single = training_compute(&cfg, ctx, d_tokens, &f, 1.0).unwrap();
        assert_eq!(single.flops, fwd.total * d_tokens / ctx as f64);
    }

    #[test]
    fn training_compute_needs_a_full_sequence() {
        let f = CostFactors::default();
        assert!(matches!(
            training_compute(&unit_xlstm(), 8, 4.0, &f, 3.0),
            Err(FlopError::TooFewTokens { .. })
        ));
    }
}
