//! Memory-operation (bytes loaded and stored) counts.
//!
//! Activation traffic scales with the number of tokens in a pass. Weights are
//! streamed once per forward pass, independent of the token count, unless a
//! per-sequence reload factor is set.

use serde::{Deserialize, Serialize};

use crate::arch::{ArchConfig, ArchKind};
use crate::flops::{FlopError, Mode, Workload};

/// Bytes per weight element, by weight class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightWidths {
    pub emb: f64,
    pub norm: f64,
    pub qkv: f64,
    #[serde(rename = "if")]
    pub if_gates: f64,
    pub o: f64,
    pub out: f64,
    pub ff: f64,
}

impl WeightWidths {
    pub fn uniform(bytes: f64) -> Self {
        WeightWidths { emb: bytes, norm: bytes, qkv: bytes, if_gates: bytes, o: bytes, out: bytes, ff: bytes }
    }
}

impl Default for WeightWidths {
    fn default() -> Self {
        Self::uniform(2.0)
    }
}

/// Bytes per element for every tensor class. Defaults to 16-bit everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ByteWidths {
    pub qkv: f64,
    #[serde(rename = "if")]
    pub if_gates: f64,
    #[serde(rename = "Cmn")]
    pub cmn: f64,
    pub act: f64,
    pub act_norm: f64,
    pub act_ff: f64,
    pub weights: WeightWidths,
    /// Extra full weight reads per additional sequence in the batch. Weight
    /// traffic is multiplied by `1 + k (B - 1)`; 0 means perfect reuse.
    pub weight_reload_per_sequence: f64,
}

impl ByteWidths {
    pub fn uniform(bytes: f64) -> Self {
        ByteWidths {
            qkv: bytes,
            if_gates: bytes,
            cmn: bytes,
            act: bytes,
            act_norm: bytes,
            act_ff: bytes,
            weights: WeightWidths::uniform(bytes),
            weight_reload_per_sequence: 0.0,
        }
    }

    /// Drop all normalization traffic.
    pub fn without_norms(mut self) -> Self {
        self.act_norm = 0.0;
        self.weights.norm = 0.0;
        self
    }

    pub fn validate(&self) -> Result<(), FlopError> {
        let w = &self.weights;
        let all = [
            self.qkv,
            self.if_gates,
            self.cmn,
            self.act,
            self.act_norm,
            self.act_ff,
            w.emb,
            w.norm,
            w.qkv,
            w.if_gates,
            w.o,
            w.out,
            w.ff,
            self.weight_reload_per_sequence,
        ];
        if all.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
            return Err(FlopError::InvalidFactors("byte widths must be finite and >= 0"));
        }
        Ok(())
    }
}

impl Default for ByteWidths {
    fn default() -> Self {
        Self::uniform(2.0)
    }
}

/// Bytes split into loads and stores.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LoadStore {
    pub load: f64,
    pub store: f64,
}

impl LoadStore {
    pub fn total(&self) -> f64 {
        self.load + self.store
    }

    fn scale(self, k: f64) -> Self {
        LoadStore { load: self.load * k, store: self.store * k }
    }

    fn add(self, other: Self) -> Self {
        LoadStore { load: self.load + other.load, store: self.store + other.store }
    }
}

/// Bytes moved by a dense linear layer over `tokens` rows: activations in and
/// out plus one read of the weight matrix.
pub fn bytes_linear(tokens: f64, d_in: f64, d_out: f64, act_bytes: f64, weight_bytes: f64) -> f64 {
    tokens * (d_in + d_out) * act_bytes + d_in * d_out * weight_bytes
}

/// One head, one chunk of length `l`: both kernels of the chunkwise form.
fn mlstm_chunk_traffic(qk: f64, hv: f64, l: f64, w: &ByteWidths) -> LoadStore {
    let state = qk * hv + qk + 1.0;
    let inter = LoadStore { load: l * (qk + hv) * w.qkv + 2.0 * l * w.if_gates, store: state * w.cmn };
    let intra = LoadStore {
        load: l * (2.0 * qk + hv) * w.qkv + 2.0 * l * w.if_gates + state * w.cmn,
        store: l * hv * w.qkv + 2.0 * l * w.cmn,
    };
    inter.add(intra)
}

/// Chunkwise mLSTM traffic for one sequence in one layer, over all heads.
pub fn bytes_mlstm_chunkwise(config: &ArchConfig, seq_len: u64, widths: &ByteWidths) -> Result<LoadStore, FlopError> {
    let chunk = config.chunk_size;
    if seq_len == 0 || chunk == 0 {
        return Err(FlopError::NonPositiveLength { seq_len, chunk });
    }
    let (qk, hv) = (config.d_qk as f64, config.d_hv as f64);
    let mut per_head = mlstm_chunk_traffic(qk, hv, chunk as f64, widths).scale((seq_len / chunk) as f64);
    let rest = seq_len % chunk;
    if rest > 0 {
        per_head = per_head.add(mlstm_chunk_traffic(qk, hv, rest as f64, widths));
    }
    Ok(per_head.scale(config.n_head_q as f64))
}

/// Recurrent mLSTM traffic for one token in one layer, over all heads.
pub fn bytes_mlstm_recurrent(config: &ArchConfig, w: &ByteWidths) -> LoadStore {
    let (qk, hv) = (config.d_qk as f64, config.d_hv as f64);
    let per_head = LoadStore {
        load: (2.0 * qk + hv) * w.qkv + 2.0 * w.if_gates + qk * hv * w.cmn,
        store: hv * w.qkv + qk * hv * w.cmn,
    };
    per_head.scale(config.n_head_q as f64)
}

/// FlashAttention traffic for `queries` query positions against `keys` cached
/// key/value positions.
fn attention_traffic(config: &ArchConfig, queries: f64, keys: f64, w: &ByteWidths) -> LoadStore {
    let (qk, hv) = (config.d_qk as f64, config.d_hv as f64);
    let (hq, hkv) = (config.n_head_q as f64, config.kv_heads() as f64);
    LoadStore {
        load: (queries * qk * hq + keys * (qk + hv) * hkv) * w.qkv,
        store: queries * hv * hq * w.qkv,
    }
}

/// Attention traffic for prefill (or training) of one `seq_len`-token sequence.
pub fn bytes_attention_prefill(config: &ArchConfig, seq_len: u64, widths: &ByteWidths) -> LoadStore {
    let t = seq_len as f64;
    attention_traffic(config, t, t, widths)
}

/// Attention traffic for the `t_g`-th generated token after `prefill_len` prompt tokens.
pub fn bytes_attention_gen_step(config: &ArchConfig, prefill_len: u64, t_g: u64, widths: &ByteWidths) -> LoadStore {
    attention_traffic(config, 1.0, prefill_len as f64 + t_g as f64, widths)
}

/// Attention traffic summed over `gen_len` generated tokens.
pub fn bytes_attention_gen_seq(config: &ArchConfig, prefill_len: u64, gen_len: u64, widths: &ByteWidths) -> LoadStore {
    let (tp, tg) = (prefill_len as f64, gen_len as f64);
    attention_traffic(config, tg, tp * tg + 0.5 * tg * (tg + 1.0), widths)
}

/// Bytes of one model component, split into token-dependent activation
/// traffic and weight streaming.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Traffic {
    pub activations: f64,
    pub weights: f64,
}

impl Traffic {
    pub fn total(&self) -> f64 {
        self.activations + self.weights
    }

    fn add(self, o: Self) -> Self {
        Traffic { activations: self.activations + o.activations, weights: self.weights + o.weights }
    }
}

/// Model memory traffic by component, summed over layers, tokens and passes.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MemopBreakdown {
    /// Row gathers from the embedding table: `tokens * d_model * bytes_act`.
    pub embeddings: Traffic,
    pub pre_norms: Traffic,
    pub qkv: Traffic,
    pub gates: Traffic,
    pub seq_mix: Traffic,
    pub seq_mix_load_store: LoadStore,
    pub output_gate: Traffic,
    pub head_norm: Traffic,
    pub output_projection: Traffic,
    pub mlp: Traffic,
    pub final_norm: Traffic,
    pub unembedding: Traffic,
    pub total: Traffic,
}

impl MemopBreakdown {
    pub fn total_bytes(&self) -> f64 {
        self.total.total()
    }

    fn finish(mut self) -> Self {
        self.total = [
            self.embeddings,
            self.pre_norms,
            self.qkv,
            self.gates,
            self.seq_mix,
            self.output_gate,
            self.head_norm,
            self.output_projection,
            self.mlp,
            self.final_norm,
            self.unembedding,
        ]
        .into_iter()
        .fold(Traffic::default(), Traffic::add);
        self
    }
}

/// Sequence-mix traffic of one sequence in one layer for the workload's mode.
pub fn seq_mix_bytes_per_sequence(config: &ArchConfig, workload: &Workload, widths: &ByteWidths) -> Result<LoadStore, FlopError> {
    let empty = LoadStore::default();
    Ok(match (config.kind, workload.mode) {
        (ArchKind::Xlstm, Mode::Forward | Mode::Train) if workload.seq_len == 0 => empty,
        (ArchKind::Xlstm, Mode::Prefill) if workload.prefill_len == 0 => empty,
        (ArchKind::Xlstm, Mode::Forward | Mode::Train) => bytes_mlstm_chunkwise(config, workload.seq_len, widths)?,
        (ArchKind::Xlstm, Mode::Prefill) => bytes_mlstm_chunkwise(config, workload.prefill_len, widths)?,
        (ArchKind::Xlstm, Mode::GenStep { .. }) => bytes_mlstm_recurrent(config, widths),
        (ArchKind::Xlstm, Mode::GenSeq) => bytes_mlstm_recurrent(config, widths).scale(workload.gen_len as f64),
        (ArchKind::Transformer, Mode::Forward | Mode::Train) => bytes_attention_prefill(config, workload.seq_len, widths),
        (ArchKind::Transformer, Mode::Prefill) => bytes_attention_prefill(config, workload.prefill_len, widths),
        (ArchKind::Transformer, Mode::GenStep { t_g }) => bytes_attention_gen_step(config, workload.prefill_len, t_g, widths),
        (ArchKind::Transformer, Mode::GenSeq) => {
            bytes_attention_gen_seq(config, workload.prefill_len, workload.gen_len, widths)
        }
    })
}

/// Full-model memory traffic for `workload`.
pub fn bytes_model(config: &ArchConfig, workload: &Workload, widths: &ByteWidths) -> Result<MemopBreakdown, FlopError> {
    config.validate()?;
    widths.validate()?;
    workload.validate()?;

    let bt = workload.tokens();
    let layers = config.n_layer as f64;
    let d = config.d_model as f64;
    let d_ff = config.d_ff as f64;
    let (qk, hv) = (config.d_qk as f64, config.d_hv as f64);
    let hq = config.n_head_q as f64;
    let hkv = config.kv_heads() as f64;
    let vocab = config.n_vocab as f64;
    let w = widths;
    let ww = &widths.weights;
    let weight_scale = workload.passes() * (1.0 + w.weight_reload_per_sequence * (workload.batch as f64 - 1.0));

    let per_layer = |activations: f64, weights: f64| Traffic {
        activations: layers * activations,
        weights: layers * weights * weight_scale,
    };
    let once = |activations: f64, weights: f64| Traffic { activations, weights: weights * weight_scale };

    let mut out = MemopBreakdown {
        embeddings: once(bt * d * w.act, 0.0),
        pre_norms: per_layer(2.0 * bt * d * w.act_norm, 2.0 * d * ww.norm),
        output_projection: per_layer(bt * (d + hq * hv) * w.act, d * hq * hv * ww.out),
        mlp: per_layer(3.0 * bt * (d + d_ff) * w.act_ff, 3.0 * d * d_ff * ww.ff),
        final_norm: once(bt * d * w.act_norm, d * ww.norm),
        unembedding: once(bt * (d + vocab) * w.act, d * vocab * ww.emb),
        ..MemopBreakdown::default()
    };
    match config.kind {
        ArchKind::Xlstm => {
            let proj = hq * (2.0 * qk + hv);
            out.qkv = per_layer(bt * (d + proj) * w.qkv, d * proj * ww.qkv);
            out.gates = per_layer(2.0 * bt * (d + hq) * w.if_gates, (2.0 * d * hq + 2.0 * hq) * ww.if_gates);
            out.output_gate = per_layer(bt * (d + hq * hv) * w.act, d * hq * hv * ww.o);
            out.head_norm = per_layer(bt * hq * hv * w.act_norm, hq * hv * ww.norm);
        }
        ArchKind::Transformer => {
            let proj = qk * hq + (qk + hv) * hkv;
            out.qkv = per_layer(bt * (d + proj) * w.qkv, d * proj * ww.qkv);
        }
    }
    let mix = seq_mix_bytes_per_sequence(config, workload, widths)?.scale(workload.batch as f64 * layers);
    out.seq_mix = Traffic { activations: mix.total(), weights: 0.0 };
    out.seq_mix_load_store = mix;
    Ok(out.finish())
}
