//! Analytic cost accounting and scaling-law fitting for Transformer and xLSTM
//! language models.
//!
//! The crate is split along the flow of a scaling study:
//!
//! - [`arch`]: architecture configurations, exact parameter counts and
//!   memory-state / KV-cache sizes.
//! - [`flops`] and [`memops`]: closed-form FLOP and memory-operation counts for
//!   training, prefill and autoregressive generation.
//! - [`fit`]: the parametric loss surface, IsoFLOP parabolas, power laws,
//!   fixed-ratio overtraining fits and Pareto frontiers.
//! - [`runtime`]: a roofline runtime model with fitted effective rates, used to
//!   predict time-to-first-token and step time.
//! - [`planner`]: compute-optimal allocation and experiment grids built on top of
//!   fitted laws.
//!
//! Everything here is pure computation. The crate is `no_std` and only needs
//! `alloc`; file formats and the command-line tool live in the `flopscale`
//! crate.

#![no_std]

extern crate alloc;

pub mod arch;
pub mod fit;
pub mod flops;
mod linalg;
mod math;
pub mod memops;
pub mod planner;
pub mod runtime;

pub use arch::{count_params, state_size_elements, validate_config, ArchConfig, ArchKind, ParamBreakdown, SeqMixKind};
pub use fit::{LossSurfaceFit, ParabolaFit, PowerLawFit, RunRecord};
pub use flops::{CostFactors, Mode, Workload};
pub use memops::ByteWidths;
pub use runtime::{AcceleratorSpec, RuntimeFit};
