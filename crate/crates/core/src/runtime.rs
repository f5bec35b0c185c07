//! Roofline runtime model with fitted effective rates.
//!
//! Prefill (time to first token) is modelled as compute-bound,
//! `t = FLOPs / alpha_eff + eps`; a generation step as memory-bound,
//! `t = bytes / beta_eff + eps`, optionally plus a constant per sequence in
//! the batch.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::arch::ArchConfig;
use crate::flops::{flops_model_forward, CostFactors, FlopError, Workload};
use crate::linalg::lstsq;
use crate::memops::{bytes_model, ByteWidths};
use crate::math;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcceleratorSpec {
    pub name: String,
    pub year: u32,
    /// Peak dense bfloat16 FLOPs/s.
    pub alpha_acc: f64,
    /// Peak memory bandwidth in bytes/s.
    pub beta_acc: f64,
    /// Interconnect bandwidth in bytes/s. Stored for reference only.
    pub gamma_comm: f64,
}

impl AcceleratorSpec {
    /// FLOPs per byte at which the roofline turns from memory- to compute-bound.
    pub fn ridge_intensity(&self) -> f64 {
        self.alpha_acc / self.beta_acc
    }

    pub fn validate(&self) -> Result<(), RuntimeError> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if ok(self.alpha_acc) && ok(self.beta_acc) && ok(self.gamma_comm) {
            Ok(())
        } else {
            Err(RuntimeError::InvalidSpec(self.name.clone()))
        }
    }
}

/// Datasheet rates of the built-in accelerators (dense, no sparsity).
pub const BUILTIN_ACCELERATORS: [(&str, u32, f64, f64, f64); 4] = [
    ("V100 SXM2", 2017, 120e12, 0.9e12, 0.3e12),
    ("A100 SXM", 2020, 312e12, 2.039e12, 0.6e12),
    ("H100 SXM", 2022, 989e12, 3.35e12, 0.9e12),
    ("B200 HGX", 2025, 2250e12, 7.7e12, 1.8e12),
];

pub fn builtin_accelerators() -> Vec<AcceleratorSpec> {
    BUILTIN_ACCELERATORS
        .iter()
        .map(|&(name, year, alpha_acc, beta_acc, gamma_comm)| AcceleratorSpec {
            name: name.to_string(),
            year,
            alpha_acc,
            beta_acc,
            gamma_comm,
        })
        .collect()
}

/// Looks up an accelerator by full name or by its first word ("H100"),
/// ignoring ASCII case.
pub fn find_accelerator<'a>(registry: &'a [AcceleratorSpec], name: &str) -> Option<&'a AcceleratorSpec> {
    registry.iter().find(|a| a.name.eq_ignore_ascii_case(name)).or_else(|| {
        registry
            .iter()
            .find(|a| a.name.split_whitespace().next().is_some_and(|short| short.eq_ignore_ascii_case(name)))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    ComputeBound,
    MemoryBound,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RuntimeError {
    #[error("arithmetic intensity is undefined for zero bytes")]
    UndefinedIntensity,
    #[error("insufficient data: {0}")]
    InsufficientData(&'static str),
    #[error("fitted rate is not positive (slope {slope}); measurements are inconsistent with the model")]
    NegativeRate { slope: f64 },
    #[error("a {fit:?} fit cannot predict a {wanted:?} quantity")]
    ModeMismatch { fit: Regime, wanted: Regime },
    #[error("invalid accelerator spec: {0}")]
    InvalidSpec(String),
    #[error("invalid measurement: {0}")]
    InvalidMeasurement(&'static str),
    #[error(transparent)]
    Cost(#[from] FlopError),
}

pub fn time_flops(flops: f64, rate_eff: f64, epsilon: f64) -> f64 {
    flops / rate_eff + epsilon
}

pub fn time_mem(bytes: f64, rate_eff: f64, epsilon: f64) -> f64 {
    bytes / rate_eff + epsilon
}

pub fn arithmetic_intensity(flops: f64, bytes: f64) -> Result<f64, RuntimeError> {
    if bytes > 0.0 {
        Ok(flops / bytes)
    } else {
        Err(RuntimeError::UndefinedIntensity)
    }
}

/// Compute-bound when the intensity reaches the ridge point (inclusive).
pub fn classify_regime(intensity: f64, accel: &AcceleratorSpec) -> Regime {
    if intensity >= accel.ridge_intensity() {
        Regime::ComputeBound
    } else {
        Regime::MemoryBound
    }
}

/// Runtime with perfect overlap (lower) and with none (upper).
pub fn runtime_bounds(t_flops: f64, t_mem: f64) -> (f64, f64) {
    (t_flops.max(t_mem), t_flops + t_mem)
}

/// Roofline attainable FLOPs/s at `intensity`.
pub fn attainable_flops_rate(intensity: f64, accel: &AcceleratorSpec) -> f64 {
    accel.alpha_acc.min(accel.beta_acc * intensity)
}

/// Per-operation roofline diagnosis at peak rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RooflinePoint {
    pub intensity: f64,
    pub ridge_intensity: f64,
    pub regime: Regime,
    pub attainable_flops_per_s: f64,
    pub t_flops: f64,
    pub t_mem: f64,
    pub lower: f64,
    pub upper: f64,
}

pub fn roofline(flops: f64, bytes: f64, accel: &AcceleratorSpec) -> Result<RooflinePoint, RuntimeError> {
    accel.validate()?;
    let intensity = arithmetic_intensity(flops, bytes)?;
    let t_flops = time_flops(flops, accel.alpha_acc, 0.0);
    let t_mem = time_mem(bytes, accel.beta_acc, 0.0);
    let (lower, upper) = runtime_bounds(t_flops, t_mem);
    Ok(RooflinePoint {
        intensity,
        ridge_intensity: accel.ridge_intensity(),
        regime: classify_regime(intensity, accel),
        attainable_flops_per_s: attainable_flops_rate(intensity, accel),
        t_flops,
        t_mem,
        lower,
        upper,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Ttft,
    StepTime,
}

impl Metric {
    pub fn regime(self) -> Regime {
        match self {
            Metric::Ttft => Regime::ComputeBound,
            Metric::StepTime => Regime::MemoryBound,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyMeasurement {
    pub config_id: String,
    pub metric: Metric,
    #[serde(rename = "B")]
    pub batch: u64,
    #[serde(rename = "T_p")]
    pub prefill_len: u64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuntimeFit {
    pub regime: Regime,
    /// FLOPs/s for compute-bound fits, bytes/s for memory-bound fits.
    pub rate_eff: f64,
    pub epsilon: f64,
    /// Seconds per sequence in the batch, when fitted.
    pub batch_const: Option<f64>,
    pub residual_rms: f64,
    pub n_samples: usize,
    /// The unconstrained intercept was negative and the fit was redone with
    /// `epsilon = 0`.
    pub epsilon_clamped: bool,
}

/// A measurement reduced to what the linear model needs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuntimeSample {
    /// FLOPs or bytes.
    pub cost: f64,
    pub batch: f64,
    pub seconds: f64,
}

/// Least-squares fit of `seconds = cost / rate + eps (+ batch_const * batch)`.
pub fn fit_runtime_samples(samples: &[RuntimeSample], regime: Regime, batch_term: bool) -> Result<RuntimeFit, RuntimeError> {
    if samples.len() < 3 {
        return Err(RuntimeError::InsufficientData("at least 3 measurements are needed"));
    }
    if samples.iter().any(|s| !(s.seconds.is_finite() && s.seconds > 0.0 && s.cost.is_finite() && s.cost >= 0.0)) {
        return Err(RuntimeError::InvalidMeasurement("times must be > 0 and costs finite and >= 0"));
    }
    let first = samples[0].cost;
    if samples.iter().all(|s| s.cost == first) {
        return Err(RuntimeError::InsufficientData("measurements must span at least 2 distinct costs"));
    }
    let y: Vec<f64> = samples.iter().map(|s| s.seconds).collect();
    let design = |intercept: bool| -> Vec<Vec<f64>> {
        samples
            .iter()
            .map(|s| {
                let mut row = vec![s.cost];
                if intercept {
                    row.push(1.0);
                }
                if batch_term {
                    row.push(s.batch);
                }
                row
            })
            .collect()
    };
    let rank_error = RuntimeError::InsufficientData("measurements do not determine all model terms");
    let mut sol = lstsq(&design(true), &y).ok_or(rank_error.clone())?;
    let mut epsilon = sol.x[1];
    let mut clamped = false;
    if epsilon < 0.0 {
        sol = lstsq(&design(false), &y).ok_or(rank_error)?;
        epsilon = 0.0;
        clamped = true;
    }
    let slope = sol.x[0];
    if !(slope > 0.0) {
        return Err(RuntimeError::NegativeRate { slope });
    }
    let batch_const = batch_term.then(|| *sol.x.last().expect("batch column"));
    Ok(RuntimeFit {
        regime,
        rate_eff: 1.0 / slope,
        epsilon,
        batch_const,
        residual_rms: math::sqrt(sol.residual_ss / samples.len() as f64),
        n_samples: samples.len(),
        epsilon_clamped: clamped,
    })
}

/// Fits measured latencies of one metric. `cost_fn` maps a measurement to its
/// FLOPs (TTFT) or bytes (step time).
pub fn fit_runtime<F>(
    measurements: &[LatencyMeasurement],
    mut cost_fn: F,
    metric: Metric,
    batch_term: bool,
) -> Result<RuntimeFit, RuntimeError>
where
    F: FnMut(&LatencyMeasurement) -> Result<f64, RuntimeError>,
{
    let mut samples = Vec::with_capacity(measurements.len());
    for m in measurements.iter().filter(|m| m.metric == metric) {
        samples.push(RuntimeSample { cost: cost_fn(m)?, batch: m.batch as f64, seconds: m.seconds });
    }
    fit_runtime_samples(&samples, metric.regime(), batch_term)
}

fn require(fit: &RuntimeFit, wanted: Regime) -> Result<(), RuntimeError> {
    if fit.regime == wanted {
        Ok(())
    } else {
        Err(RuntimeError::ModeMismatch { fit: fit.regime, wanted })
    }
}

/// Prefill FLOPs of `batch` prompts of length `prefill_len`.
pub fn ttft_cost(config: &ArchConfig, batch: u64, prefill_len: u64, factors: &CostFactors) -> Result<f64, RuntimeError> {
    Ok(flops_model_forward(config, &Workload::prefill(batch, prefill_len), factors)?.total)
}

/// Bytes moved by the first generation step after a prompt of `prefill_len`.
pub fn step_time_cost(config: &ArchConfig, batch: u64, prefill_len: u64, widths: &ByteWidths) -> Result<f64, RuntimeError> {
    Ok(bytes_model(config, &Workload::gen_step(batch, prefill_len, 1), widths)?.total_bytes())
}

pub fn predict_ttft(
    config: &ArchConfig,
    batch: u64,
    prefill_len: u64,
    fit: &RuntimeFit,
    factors: &CostFactors,
) -> Result<f64, RuntimeError> {
    require(fit, Regime::ComputeBound)?;
    let flops = ttft_cost(config, batch, prefill_len, factors)?;
    Ok(time_flops(flops, fit.rate_eff, fit.epsilon) + fit.batch_const.unwrap_or(0.0) * batch as f64)
}

pub fn predict_step_time(
    config: &ArchConfig,
    batch: u64,
    prefill_len: u64,
    fit: &RuntimeFit,
    widths: &ByteWidths,
) -> Result<f64, RuntimeError> {
    require(fit, Regime::MemoryBound)?;
    let bytes = step_time_cost(config, batch, prefill_len, widths)?;
    Ok(time_mem(bytes, fit.rate_eff, fit.epsilon) + fit.batch_const.unwrap_or(0.0) * batch as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Utilization {
    pub fraction: f64,
    /// The fitted rate is above the accelerator peak.
    pub exceeds_peak: bool,
}

/// Fitted effective rate as a fraction of the matching accelerator peak.
pub fn hardware_utilization(fit: &RuntimeFit, accel: &AcceleratorSpec) -> Utilization {
    let peak = match fit.regime {
        Regime::ComputeBound => accel.alpha_acc,
        Regime::MemoryBound => accel.beta_acc,
    };
    let fraction = fit.rate_eff / peak;
    Utilization { fraction, exceeds_peak: fraction > 1.0 }
}
